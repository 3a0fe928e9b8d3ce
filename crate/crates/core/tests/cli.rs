use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cloud-ksvd");

const SMALL: &[&str] = &[
    "--override",
    "synthetic_q=120",
    "--override",
    "synthetic_m=8",
    "--override",
    "synthetic_atoms=12",
    "--override",
    "atoms=12",
    "--override",
    "sparsity=2",
    "--override",
    "td=3",
];

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    cli(&args)
}

#[test]
fn run_writes_metrics_and_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), &["--seed", "3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "iteration,node,mse,l2_error,psnr,ssim,dict_divergence"
    );
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[1..]
        .iter()
        .enumerate()
        .all(|(i, l)| l.starts_with(&format!("{i},all,"))));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("rows = 4"));
    for name in [
        "node_metrics.csv",
        "dictionary_node0.txt",
        "dictionary_node3.txt",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
        assert!(manifest.contains(name));
    }
}

#[test]
fn image_run_emits_images() {
    let dir = tempfile::tempdir().unwrap();
    let image = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/face.pgm");
    let image_arg = format!("image={}", image.display());
    let out = cli(&[
        "run",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        &image_arg,
        "--override",
        "alpha=3",
        "--override",
        "td=1",
        "--override",
        "noise_variance=0.001",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["noisy.pgm", "recovered.pgm", "difference.pgm", "clean.pgm"] {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert!(bytes.starts_with(b"P5\n50 50\n255\n"), "{name}");
    }
}

#[test]
fn same_seed_same_bytes_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str, seed: &str| {
        let path = dir.path().join(sub);
        assert!(run_small(&path, &["--seed", seed]).status.success());
        std::fs::read(path.join("metrics.csv")).unwrap()
    };
    let (a, b, c) = (read("a", "8"), read("b", "8"), read("c", "9"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--override", "bogus=1"],
        vec!["run", "--override", "td=zero"],
        vec!["run", "--override", "sweep.td=1,2"],
        vec!["run", "--config", "/definitely/not/here.cfg"],
    ] {
        let mut args = args;
        args.extend(["--out", dir.path().to_str().unwrap()]);
        let out = cli(&args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "run",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "image=/definitely/not/here.pgm",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn config_file_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.cfg");
    std::fs::write(
        &cfg,
        "# tiny sweep\nsynthetic_m = 6\nsynthetic_atoms = 8\nsynthetic_q = 60\natoms = 8\n\
         sparsity = 2\ntd = 2\nsweep.tc = 1,3\nsweep.nodes = 2,3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = cli(&[
        "grid",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for cell in [
        "tc=1_nodes=2",
        "tc=1_nodes=3",
        "tc=3_nodes=2",
        "tc=3_nodes=3",
    ] {
        assert!(out_dir.join(cell).join("metrics.csv").exists(), "{cell}");
    }
    let summary = std::fs::read_to_string(out_dir.join("grid.csv")).unwrap();
    assert!(summary.starts_with("cell,tc,nodes,mse,psnr,ssim,dict_divergence,train_seconds\n"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn consensus_demo_accepts_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "consensus-demo",
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "td=2",
        "--override",
        "synthetic_q=200",
        "--override",
        "sweep.tp=2",
        "--override",
        "sweep.tc=1,2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.contains("final dict_divergence"))
            .count(),
        2
    );
    let manifest = std::fs::read_to_string(dir.path().join("tp=2_tc=1/manifest.txt")).unwrap();
    assert!(manifest.contains("topology = ring"));
}
