//! Regression pins for the deterministic phantom pipeline.

use sha2::{Digest, Sha256};
use smean::io::{export_slice_pgm, parse_config, Payload, SliceSpec, VolumeFile};

const CONFIG: &str = r#"
dimension = 3
semi_axes = [1.0, 0.8, 0.6]
volume_nodes = [33]

[[bumps]]
center = [0.1, -0.05, 0.05]
radius = 0.35
"#;

/// Recorded from the first verified run.
const PHANTOM_SLICE_SHA256: &str = "df68341a112cd865db327a5ef117aef7067d528fdf853c709dea99254e29780a";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn phantom_slice_is_a_bright_disk() {
    let setup = parse_config(CONFIG).unwrap().setup().unwrap();
    let truth = setup.truth();
    let k = 16;
    let pgm = export_slice_pgm(
        &truth,
        SliceSpec { axis: 2, index: k },
        Some((0.0, setup.phantom.sup_bound())),
    )
    .unwrap();
    let header = b"P5\n33 33\n255\n";
    assert!(pgm.starts_with(header));
    let px = &pgm[header.len()..];
    // brightest pixel sits next to the bump center, the corners are dark
    let brightest = (0..px.len()).max_by_key(|&i| px[i]).unwrap();
    let (row, col) = (brightest / 33, brightest % 33);
    let node = setup.grid.point(row * 33 * 33 + col * 33 + k);
    assert!((node[0] - 0.1).abs() < 0.1 && (node[1] + 0.05).abs() < 0.1, "{node:?}");
    assert!(px[brightest] > 200);
    assert_eq!([px[0], px[32], px[33 * 32], px[33 * 33 - 1]], [0, 0, 0, 0]);
    assert_eq!(hex(&Sha256::digest(&pgm)), PHANTOM_SLICE_SHA256);
}

#[test]
fn phantom_volume_survives_the_file_system() {
    let setup = parse_config(CONFIG).unwrap().setup().unwrap();
    let file = VolumeFile::from_image(&setup.truth(), Payload::Phantom, Some(&setup.geometry));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phantom.vol");
    file.write_path(&path).unwrap();
    let back = VolumeFile::read_path(&path).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.to_image().unwrap(), setup.truth());
}
