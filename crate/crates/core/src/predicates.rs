//! Exact-sign geometric predicates (adaptive precision, from the `robust` crate).

use robust::Coord3D;

use crate::geometry::Vec3;

#[inline]
fn c(p: &Vec3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Positive when `(a, b, c, d)` is a positively oriented tetrahedron, i.e. `d`
/// lies on the side of plane `abc` from which `a, b, c` appear clockwise.
/// Only the sign is meaningful; it is always exact.
#[inline]
pub fn orient3d(a: &Vec3, b: &Vec3, cc: &Vec3, d: &Vec3) -> f64 {
    robust::orient3d(c(a), c(b), c(cc), c(d))
}

/// Positive when `e` lies strictly inside the circumsphere of the positively
/// oriented tetrahedron `(a, b, c, d)`. Only the sign is meaningful.
#[inline]
pub fn insphere(a: &Vec3, b: &Vec3, cc: &Vec3, d: &Vec3, e: &Vec3) -> f64 {
    robust::insphere(c(a), c(b), c(cc), c(d), c(e))
}
