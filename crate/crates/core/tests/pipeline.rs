use meshsplat::io::checkpoint::{decode_checkpoint, encode_checkpoint};
use meshsplat::io::{export_mesh, load_manifest, load_mesh, MeshFormat};
use meshsplat::synth::{self, SynthKind, SynthOptions};
use meshsplat::training::{Stage, TrainConfig, Trainer};

fn small_dataset(dir: &std::path::Path) -> meshsplat::io::Dataset {
    let opts = SynthOptions { supersample: 2, points: 150, ..SynthOptions::new(SynthKind::SpherePlane, 6, 32, 24) };
    synth::generate(&opts, dir).unwrap();
    load_manifest(&dir.join("scene.json")).unwrap().1
}

fn config() -> TrainConfig {
    TrainConfig { densify_interval: 12, ..TrainConfig { max_faces: 4000, ..TrainConfig::default() }.scaled_to(60) }
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());

    let mut full = Trainer::new(&data, config()).unwrap();
    full.run(|_, _| Ok(())).unwrap();
    assert_eq!(full.state.stage, Stage::Mesh);

    let mut first = Trainer::new(&data, config()).unwrap();
    for _ in 0..17 {
        first.step().unwrap();
    }
    let bytes = encode_checkpoint(&first.state, &first.config);
    drop(first);
    let (state, cfg) = decode_checkpoint(&bytes).unwrap();
    let mut resumed = Trainer::resume(&data, cfg, state).unwrap();
    resumed.run(|_, _| Ok(())).unwrap();

    assert_eq!(encode_checkpoint(&full.state, &full.config), encode_checkpoint(&resumed.state, &resumed.config));
}

/// Minimal binary little-endian PLY reader written against the format description.
fn read_binary_ply(bytes: &[u8]) -> (Vec<[f32; 3]>, Vec<[u8; 3]>, Vec<Vec<i32>>) {
    let end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    let header = std::str::from_utf8(&bytes[..end]).unwrap();
    assert!(header.starts_with("ply\nformat binary_little_endian 1.0\n"));
    let count = |elem: &str| -> usize {
        header.lines().find_map(|l| l.strip_prefix(&format!("element {elem} "))).unwrap().trim().parse().unwrap()
    };
    let (nv, nf) = (count("vertex"), count("face"));
    let mut at = end;
    let f32_at = |at: &mut usize| {
        let v = f32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
        *at += 4;
        v
    };
    let mut pos = Vec::new();
    let mut col = Vec::new();
    for _ in 0..nv {
        pos.push([f32_at(&mut at), f32_at(&mut at), f32_at(&mut at)]);
        col.push([bytes[at], bytes[at + 1], bytes[at + 2]]);
        at += 3;
    }
    let mut faces = Vec::new();
    for _ in 0..nf {
        let k = bytes[at] as usize;
        at += 1;
        faces.push((0..k).map(|i| i32::from_le_bytes(bytes[at + 4 * i..at + 4 * i + 4].try_into().unwrap())).collect());
        at += 4 * k;
    }
    assert_eq!(at, bytes.len());
    (pos, col, faces)
}

#[test]
fn exported_ply_parses_with_an_independent_reader() {
    let dir = tempfile::tempdir().unwrap();
    let gt = synth::ground_truth(SynthKind::TwoSpheres);
    let path = dir.path().join("gt.ply");
    export_mesh(&gt.scene, &path, MeshFormat::Ply).unwrap();
    let (pos, _, faces) = read_binary_ply(&std::fs::read(&path).unwrap());
    assert_eq!(pos.len(), gt.scene.num_vertices());
    for (p, q) in pos.iter().zip(&gt.scene.vertices.positions) {
        for a in 0..3 {
            assert_eq!(p[a], q[a] as f32);
        }
    }
    let expect: Vec<Vec<i32>> = gt.scene.topology.faces.iter().map(|f| f.iter().map(|&i| i as i32).collect()).collect();
    assert_eq!(faces, expect);

    let back = load_mesh(&path).unwrap();
    assert_eq!(back.topology.faces, gt.scene.topology.faces);
}
