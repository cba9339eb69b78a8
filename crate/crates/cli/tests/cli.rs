use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn smean(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smean"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
dimension = 2
semi_axes = [1.0, 0.7]
direction_order = 64
radial_samples = 128
volume_nodes = [33]
output_dir = "run"

[[bumps]]
center = [0.2, -0.1]
radius = 0.25
"#;

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

#[test]
fn verify_four_dimensional_hilbert_rows_pass() {
    let dir = workspace(SMALL);
    let o = smean(dir.path(), &["verify", "--n", "4", "--out", "v.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("v.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("name,params,error,tolerance,pass"));
    let hilbert: Vec<&str> = lines.filter(|l| l.starts_with("hilbert")).collect();
    assert!(!hilbert.is_empty());
    assert!(hilbert.iter().all(|l| l.ends_with(",true")), "{hilbert:?}");
}

#[test]
fn verify_rejects_unknown_dimension() {
    let dir = workspace(SMALL);
    let o = smean(dir.path(), &["verify", "--n", "11"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("n = 11"));
}

#[test]
fn full_pipeline_and_metrics() {
    let dir = workspace(SMALL);
    let p = dir.path();
    for args in [
        &["--config", "run.toml", "phantom", "--pgm", "run/phantom.pgm"][..],
        &["--config", "run.toml", "forward"],
        &[
            "--config",
            "run.toml",
            "--threads",
            "2",
            "reconstruct",
            "--means",
            "run/means.vol",
            "--metrics",
            "run/m.csv",
        ],
    ] {
        let o = smean(p, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let pgm = fs::read(p.join("run/phantom.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n33 33\n255\n"));

    let same = smean(p, &["metrics", "run/phantom.vol", "run/phantom.vol"]);
    assert!(same.status.success(), "{}", stderr(&same));
    let text = String::from_utf8(same.stdout).unwrap();
    for metric in ["rel_l2", "rel_linf", "rel_l2_full", "rel_linf_full", "rel_l2_core"] {
        assert!(text.contains(&format!("{metric},0.0\n")), "{text}");
    }

    let o = smean(
        p,
        &[
            "metrics",
            "run/phantom.vol",
            "run/reconstruction.vol",
            "--out",
            "cmp.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = fs::read_to_string(p.join("cmp.csv")).unwrap();
    assert_eq!(cmp, fs::read_to_string(p.join("run/m.csv")).unwrap());
    let rel_l2: f64 = cmp.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(rel_l2 > 0.0 && rel_l2 < 0.2, "{rel_l2}");
}

#[test]
fn errors_exit_nonzero_with_constraint() {
    let dir = workspace("dimension = 3\nsemi_axes = [1.0, 1.0, 1.0]\npipeline = \"even\"\n");
    let o = smean(dir.path(), &["--config", "run.toml", "phantom"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("parity mismatch"), "{}", stderr(&o));

    let o = smean(dir.path(), &["forward"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--config"));

    fs::write(dir.path().join("junk.vol"), b"NOTAVOLUME\n").unwrap();
    let o = smean(dir.path(), &["metrics", "junk.vol", "junk.vol"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}
