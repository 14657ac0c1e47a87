//! Mesh connectivity statistics and mask-based segmentation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::raster::{render, RenderSettings};
use crate::scene::{Face, Scene};

/// Neighbour-count bins: 0, 1, 2, 3 and 4 or more.
pub const NEIGHBOR_BINS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectivityReport {
    pub faces: usize,
    pub vertices: usize,
    /// Faces by number of edge-adjacent faces; the last bin counts 4 or more.
    pub neighbor_histogram: [usize; NEIGHBOR_BINS],
    pub mean_neighbors: f64,
    pub isolated_fraction: f64,
    /// Number of vertices by valence (incident faces), over referenced vertices.
    pub valence_histogram: BTreeMap<usize, usize>,
    pub mean_valence: f64,
    pub median_valence: f64,
    pub vertex_face_ratio: f64,
}

/// Counts, for each face, the other faces sharing one of its edges.
pub fn face_neighbor_counts(faces: &[Face]) -> Vec<usize> {
    let mut by_edge: HashMap<(u32, u32), u32> = HashMap::with_capacity(faces.len() * 3 / 2);
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *by_edge.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    faces
        .iter()
        .map(|f| {
            (0..3)
                .map(|k| {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    by_edge[&(a.min(b), a.max(b))] as usize - 1
                })
                .sum()
        })
        .collect()
}

pub fn connectivity_report(scene: &Scene) -> ConnectivityReport {
    let faces = &scene.topology.faces;
    let m = faces.len();
    let counts = face_neighbor_counts(faces);
    let mut hist = [0usize; NEIGHBOR_BINS];
    for &c in &counts {
        hist[c.min(NEIGHBOR_BINS - 1)] += 1;
    }
    let mut valence = vec![0usize; scene.num_vertices()];
    for f in faces {
        for &i in f {
            valence[i as usize] += 1;
        }
    }
    let mut used: Vec<usize> = valence.iter().copied().filter(|&v| v > 0).collect();
    used.sort_unstable();
    let mut vh = BTreeMap::new();
    for &v in &used {
        *vh.entry(v).or_insert(0) += 1;
    }
    let median = match used.len() {
        0 => 0.0,
        n if n % 2 == 1 => used[n / 2] as f64,
        n => (used[n / 2 - 1] + used[n / 2]) as f64 / 2.0,
    };
    let mf = m.max(1) as f64;
    ConnectivityReport {
        faces: m,
        vertices: scene.num_vertices(),
        neighbor_histogram: hist,
        mean_neighbors: counts.iter().sum::<usize>() as f64 / mf,
        isolated_fraction: hist[0] as f64 / mf,
        valence_histogram: vh,
        mean_valence: used.iter().sum::<usize>() as f64 / used.len().max(1) as f64,
        median_valence: median,
        vertex_face_ratio: if m == 0 { 0.0 } else { scene.num_vertices() as f64 / m as f64 },
    }
}

/// Faces selected by masks, with the sub-mesh they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    /// Sorted indices into the input scene's faces.
    pub faces: Vec<u32>,
    /// Selected faces over their own compacted vertex set.
    pub mesh: Scene,
}

/// Renders each camera fully opaque and collects the front-most face of
/// every pixel where its mask is set.
pub fn segment_by_masks(
    scene: &Scene,
    cameras: &[&CameraModel],
    masks: &[&[bool]],
    settings: &RenderSettings,
) -> Result<Segmentation> {
    if cameras.len() != masks.len() {
        return Err(Error::shape(format!("{} masks", cameras.len()), format!("{} masks", masks.len())));
    }
    let mut set = BTreeSet::new();
    for (cam, mask) in cameras.iter().zip(masks) {
        let n = (cam.width * cam.height) as usize;
        if mask.len() != n {
            return Err(Error::shape(format!("{}x{} mask", cam.width, cam.height), mask.len()));
        }
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let out = render(scene, cam, 1.0, settings)?;
        for (p, &m) in out.primary_face.iter().zip(mask.iter()) {
            if let (true, Some(f)) = (m, p) {
                set.insert(*f);
            }
        }
    }
    let faces: Vec<u32> = set.into_iter().collect();
    let mut mesh = scene.clone();
    mesh.topology.faces = faces.iter().map(|&f| scene.topology.faces[f as usize]).collect();
    mesh.compact_vertices();
    Ok(Segmentation { faces, mesh })
}
