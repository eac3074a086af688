use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sonocaustics::io::{self, FieldData};
use sonocaustics::RealGrid;
use tempfile::TempDir;

const SMALL: &str = r#"
[array]
columns = 4
rows = 4

[plane]
extent_mm = 60.0
resolution_px = 16

[optimizer]
steps = 20

[twin]
steps = 3
snapshot_every = 2

[metrics]
separations_mm = [1.0, -4.0]
frame_counts = [1, 3]
harness_extent_mm = 60.0
harness_resolution_px = 24
harness_steps = 5

[paths]
target = "target.pgm"
out_dir = "out"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sonocaustics"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn pgm(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.push(f(x, y));
        }
    }
    bytes
}

/// Workspace with the small config and a dark-centered square target.
fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    let square = pgm(32, 32, |x, y| if (8..24).contains(&x) && (8..24).contains(&y) { 0 } else { 255 });
    fs::write(dir.path().join("target.pgm"), square).unwrap();
    dir
}

fn read_real(path: &Path) -> RealGrid {
    match io::decode_scf(&fs::read(path).unwrap()).unwrap() {
        FieldData::Real(g) => g,
        FieldData::Complex(_) => panic!("expected a real field"),
    }
}

fn manifest(dir: &Path, command: &str) -> Vec<(String, String)> {
    fs::read_to_string(dir.join(format!("out/manifest-{command}.txt")))
        .unwrap()
        .lines()
        .map(|l| {
            let (h, f) = l.split_once("  ").unwrap();
            (h.to_string(), f.to_string())
        })
        .collect()
}

#[test]
fn prepare_inverts_and_records_provenance() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    let t = read_real(&dir.path().join("out/target.scf"));
    assert_eq!(t.dims(), (16, 16));
    assert!((t.get(8, 8) - 1.0).abs() < 1e-9, "dark center becomes 1");
    assert!(t.get(0, 0).abs() < 1e-9, "white border becomes 0");
    let prov = fs::read_to_string(dir.path().join("out/target.provenance.toml")).unwrap();
    assert!(prov.contains("source_sha256"));
    let names: Vec<String> = manifest(dir.path(), "prepare").into_iter().map(|(_, f)| f).collect();
    assert!(names.iter().any(|f| f.ends_with("target.scf")));
    assert!(names.contains(&"target.provenance.toml".to_string()));
}

#[test]
fn prepare_uniform_images() {
    for (value, expected) in [(255u8, 0.0), (0u8, 1.0)] {
        let dir = workspace(SMALL);
        fs::write(dir.path().join("target.pgm"), pgm(20, 20, |_, _| value)).unwrap();
        ok(dir.path(), &["prepare", "--config", "run.toml"]);
        let t = read_real(&dir.path().join("out/target.scf"));
        assert!(t.as_slice().iter().all(|&v| (v - expected).abs() < 1e-12));
    }
}

#[test]
fn prepare_checkerboard_halves() {
    let config = SMALL.replace("resolution_px = 16", "resolution_px = 192");
    let dir = workspace(&config);
    let board = pgm(384, 384, |x, y| if (x / 48 + y / 48) % 2 == 0 { 255 } else { 0 });
    fs::write(dir.path().join("target.pgm"), board).unwrap();
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    let t = read_real(&dir.path().join("out/target.scf"));
    assert_eq!(t.dims(), (192, 192));
    for cy in 0..8 {
        for cx in 0..8 {
            let want = ((cx + cy) % 2) as f64;
            let got = *t.get(cx * 24 + 12, cy * 24 + 12);
            assert!((got - want).abs() < 1e-9, "cell ({cx},{cy}) = {got}");
        }
    }
}

#[test]
fn prepare_png_and_color_policy() {
    let dir = workspace(SMALL);
    let gray = image::GrayImage::from_fn(10, 10, |_, _| image::Luma([0u8]));
    gray.save(dir.path().join("gray.png")).unwrap();
    let color = image::RgbImage::from_fn(10, 10, |_, _| image::Rgb([10u8, 200, 30]));
    color.save(dir.path().join("color.png")).unwrap();

    let cfg = SMALL.replace("target.pgm", "gray.png");
    fs::write(dir.path().join("run.toml"), &cfg).unwrap();
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    let t = read_real(&dir.path().join("out/target.scf"));
    assert!(t.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));

    fs::write(dir.path().join("run.toml"), SMALL.replace("target.pgm", "color.png")).unwrap();
    assert_eq!(run(dir.path(), &["prepare", "--config", "run.toml"]).status.code(), Some(1));
    let converting = SMALL.replace("target.pgm", "color.png").replace("out_dir = \"out\"", "out_dir = \"out\"\nconvert_color = true");
    fs::write(dir.path().join("run.toml"), converting).unwrap();
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
}

#[test]
fn optimize_is_deterministic_and_seeded() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml", "--seed", "3"]);
    let first = manifest(dir.path(), "optimize");
    let loss = fs::read_to_string(dir.path().join("out/loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("step,loss"));
    assert_eq!(loss.lines().count(), 21);
    ok(dir.path(), &["optimize", "--config", "run.toml", "--seed", "3"]);
    assert_eq!(manifest(dir.path(), "optimize"), first);
    let plan = fs::read_to_string(dir.path().join("out/plan.txt")).unwrap();
    ok(dir.path(), &["optimize", "--config", "run.toml", "--seed", "4"]);
    assert_ne!(fs::read_to_string(dir.path().join("out/plan.txt")).unwrap(), plan);
}

#[test]
fn effective_config_reproduces_outputs() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml", "--steps", "7", "--frames", "2"]);
    let first = manifest(dir.path(), "optimize");
    let effective = dir.path().join("out/config-optimize.toml");
    fs::copy(&effective, dir.path().join("effective.toml")).unwrap();
    ok(dir.path(), &["optimize", "--config", "effective.toml"]);
    assert_eq!(manifest(dir.path(), "optimize"), first);
    let plan = io::parse_plan(&fs::read_to_string(dir.path().join("out/plan.txt")).unwrap()).unwrap();
    assert_eq!((plan.frames(), plan.transducers()), (2, 16));
}

#[test]
fn inputs_are_not_modified() {
    let dir = workspace(SMALL);
    let before = (
        fs::read(dir.path().join("run.toml")).unwrap(),
        fs::read(dir.path().join("target.pgm")).unwrap(),
    );
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml"]);
    let target = fs::read(dir.path().join("out/target.scf")).unwrap();
    let plan = fs::read(dir.path().join("out/plan.txt")).unwrap();
    ok(dir.path(), &["render", "--config", "run.toml"]);
    ok(dir.path(), &["twin", "--config", "run.toml"]);
    ok(dir.path(), &["export", "--config", "run.toml"]);
    assert_eq!(fs::read(dir.path().join("run.toml")).unwrap(), before.0);
    assert_eq!(fs::read(dir.path().join("target.pgm")).unwrap(), before.1);
    assert_eq!(fs::read(dir.path().join("out/target.scf")).unwrap(), target);
    assert_eq!(fs::read(dir.path().join("out/plan.txt")).unwrap(), plan);
}

#[test]
fn render_stages_are_consistent() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml"]);
    ok(dir.path(), &["render", "--config", "run.toml"]);
    let first = manifest(dir.path(), "render");
    for stage in ["amplitude", "height", "caustic"] {
        assert_eq!(read_real(&dir.path().join(format!("out/{stage}.scf"))).dims(), (16, 16));
    }
    for img in ["raw.pgm", "rectified.pgm", "caustic.pgm"] {
        assert!(dir.path().join("out").join(img).is_file());
    }
    ok(dir.path(), &["render", "--config", "run.toml"]);
    assert_eq!(manifest(dir.path(), "render"), first);
}

#[test]
fn render_flat_surface_is_uniform() {
    let cfg = SMALL.replace("[twin]", "[plant]\ncoupling_m_per_pa2 = 0.0\n\n[twin]");
    let dir = workspace(&cfg);
    fs::create_dir_all(dir.path().join("out")).unwrap();
    let zeros = sonocaustics::PhasePlan::zeros(1, 16).unwrap();
    fs::write(dir.path().join("out/plan.txt"), io::format_plan(&zeros)).unwrap();
    ok(dir.path(), &["render", "--config", "run.toml"]);
    let c = read_real(&dir.path().join("out/caustic.scf"));
    for y in 1..15 {
        for x in 1..15 {
            assert!((c.get(x, y) - 4.0).abs() < 0.04);
        }
    }
}

#[test]
fn twin_outputs() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml"]);
    ok(dir.path(), &["twin", "--config", "run.toml"]);
    let csv = fs::read_to_string(dir.path().join("out/twin.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,l_dt,weber"));
    assert_eq!(csv.lines().count(), 4);
    let report = fs::read_to_string(dir.path().join("out/contrast.csv")).unwrap();
    let values: Vec<&str> = report.lines().last().unwrap().split(',').collect();
    assert_eq!(values.len(), 4);
    assert!(values.iter().all(|v| v.parse::<f64>().is_ok()), "{report}");
    assert!(dir.path().join("out/snapshots/c_img_00000.pgm").is_file());
    assert!(dir.path().join("out/snapshots/c_img_00002.pgm").is_file());

    ok(dir.path(), &["twin", "--config", "run.toml", "--steps", "0"]);
    assert_eq!(fs::read_to_string(dir.path().join("out/twin.csv")).unwrap(), "step,l_dt,weber\n");
    assert_eq!(
        fs::read_to_string(dir.path().join("out/twin_plan.txt")).unwrap(),
        fs::read_to_string(dir.path().join("out/plan.txt")).unwrap()
    );
}

#[test]
fn export_writes_levels_and_roundtrips() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml", "--frames", "2"]);
    ok(dir.path(), &["export", "--config", "run.toml"]);
    let text = fs::read_to_string(dir.path().join("out/phases_device.txt")).unwrap();
    assert!(text.starts_with("phaseplan frames=2 transducers=16 levels=32\n"));
    let parsed = io::parse_discrete_plan(&text).unwrap();
    assert_eq!(io::format_discrete_plan(&parsed), text);

    let cfg = SMALL.to_string() + "\n[export]\nlevels = 1\n";
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    assert_eq!(run(dir.path(), &["export", "--config", "run.toml"]).status.code(), Some(1));
}

#[test]
fn animate_emits_frames_in_order() {
    let dir = workspace(SMALL);
    let (a, b) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"));
    fs::write(&a, pgm(16, 16, |x, _| if x < 8 { 0 } else { 255 })).unwrap();
    fs::write(&b, pgm(16, 16, |_, y| if y < 8 { 0 } else { 255 })).unwrap();
    let cfg = SMALL.to_string() + "\n[animation]\ntargets = [\"b.pgm\", \"a.pgm\"]\nframes = 2\n";
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    ok(dir.path(), &["animate", "--config", "run.toml", "--steps", "5"]);
    let index = fs::read_to_string(dir.path().join("out/animation.csv")).unwrap();
    let rows: Vec<&str> = index.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,") && rows[0].contains("b.pgm"));
    assert!(rows[1].starts_with("1,") && rows[1].contains("a.pgm"));
    let frames: Vec<PathBuf> = fs::read_dir(dir.path().join("out/frames"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with("_caustic.pgm"))
        .collect();
    assert_eq!(frames.len(), 2);
    let plan = io::parse_plan(&fs::read_to_string(dir.path().join("out/frames/0001_plan.txt")).unwrap()).unwrap();
    assert_eq!(plan.frames(), 2);
}

#[test]
fn animate_reports_failing_frame() {
    let dir = workspace(SMALL);
    let cfg = SMALL.to_string() + "\n[animation]\ntargets = [\"target.pgm\", \"missing.pgm\"]\n";
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = run(dir.path(), &["animate", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame 1"));
}

#[test]
fn calib_recovers_homography() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["calib", "--config", "run.toml"]);
    let h = io::parse_homography(&fs::read_to_string(dir.path().join("out/homography.txt")).unwrap()).unwrap();
    let truth = sonocaustics::CaptureConfig::oblique(16, 16).unwrap().homography;
    for p in [[0.0, 0.0], [15.0, 0.0], [15.0, 15.0], [0.0, 15.0], [7.0, 4.0]] {
        let (a, b) = (h.apply(p), truth.apply(p));
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }
}

#[test]
fn metrics_table_shape() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["metrics", "--config", "run.toml"]);
    let csv = fs::read_to_string(dir.path().join("out/harness.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# mask_threshold=0.5"));
    assert_eq!(lines.next(), Some("separation_mm,frames,weber_before,weber_after,distinguishable"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,1,"));
    assert!(rows[3].starts_with("-4,3,"));
    let scenes = fs::read_dir(dir.path().join("out/scenes")).unwrap().count();
    assert_eq!(scenes, 4);
}

#[test]
fn exit_codes() {
    let dir = workspace(SMALL);
    assert_eq!(run(dir.path(), &["optimize", "--config", "missing.toml"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["frobnicate", "--config", "run.toml"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["optimize"]).status.code(), Some(1));
    fs::write(dir.path().join("bad.toml"), "[plane]\nextent = 3\n").unwrap();
    let out = run(dir.path(), &["optimize", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extent"));
    // no prepared target yet
    assert_eq!(run(dir.path(), &["optimize", "--config", "run.toml"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));

    // An all-white picture prepares to an all-zero target, which the twin's
    // cosine loss cannot score.
    fs::write(dir.path().join("target.pgm"), pgm(16, 16, |_, _| 255)).unwrap();
    ok(dir.path(), &["prepare", "--config", "run.toml"]);
    ok(dir.path(), &["optimize", "--config", "run.toml"]);
    assert_eq!(run(dir.path(), &["twin", "--config", "run.toml"]).status.code(), Some(2));
}
