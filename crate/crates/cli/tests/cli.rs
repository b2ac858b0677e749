use std::fs;
use std::path::Path;
use std::process::Command;

use vesselmesh::deform::{chamfer_points, make_icosphere};
use vesselmesh::mesh::{integrity_report, read_obj};
use vesselmesh::skeleton::read_tree;
use vesselmesh::volume::{load_volume, VolumeKind};
use vesselmesh::Vec3;

struct Output {
    ok: bool,
    stdout: String,
    stderr: String,
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_vesselmesh"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    Output {
        ok: out.status.success(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert!(o.ok, "{args:?} failed: {}", o.stderr);
    o
}

fn assert_one_line_error(o: &Output) {
    assert!(!o.ok);
    let lines: Vec<&str> = o.stderr.lines().filter(|l| l.starts_with("error: ")).collect();
    assert_eq!(lines.len(), 1, "{}", o.stderr);
}

fn synth(dir: &Path, kind: &str, out: &str) {
    let spec = format!("{out}.spec");
    fs::write(dir.join(&spec), format!("kind = {kind}\n")).unwrap();
    run_ok(dir, &["synth", &spec, out]);
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_four_parseable_files() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "straight-tube", "a");
    let out = d.path().join("a");
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "mask.vmv", "mesh.obj", "tree.vmtree"]);
    let mask = load_volume(out.join("mask.vmv"), None, VolumeKind::BinaryMask).unwrap();
    assert!(mask.count_nonzero() > 0);
    assert!(integrity_report(&read_obj(out.join("mesh.obj")).unwrap()).watertight);
    assert!(read_tree(out.join("tree.vmtree")).unwrap().len() >= 2);
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["config"]["kind"], "straight-tube");
    assert!(m["duration_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn synth_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "bifurcation", "a");
    synth(d.path(), "bifurcation", "b");
    for f in ["mask.vmv", "mesh.obj", "tree.vmtree"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        let b = fs::read(d.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn synth_malformed_key_names_key_and_line() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("s.spec"), "kind = straight-tube\nradius = wide\n").unwrap();
    let o = run(d.path(), &["synth", "s.spec", "out"]);
    assert_one_line_error(&o);
    assert!(o.stderr.contains("line 2") && o.stderr.contains("radius"), "{}", o.stderr);
}

fn face_components(path: &Path) -> (bool, usize) {
    let m = read_obj(path).unwrap();
    let r = integrity_report(&m);
    (r.watertight, r.components)
}

#[test]
fn annotate_tube_and_bifurcation() {
    let d = tempfile::tempdir().unwrap();
    for kind in ["straight-tube", "bifurcation"] {
        synth(d.path(), kind, kind);
        let mask = format!("{kind}/mask.vmv");
        let out = format!("{kind}.obj");
        let o = run_ok(d.path(), &["--threads", "1", "annotate", &mask, "--out", &out]);
        assert!(o.stdout.contains("watertight=true"), "{}", o.stdout);
        assert_eq!(face_components(&d.path().join(&out)), (true, 1), "{kind}");
        assert!(d.path().join(format!("{out}.manifest.json")).exists());
    }
}

#[test]
fn annotate_uses_supplied_tree_and_flags() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "straight-tube", "t");
    fs::write(d.path().join("a.cfg"), "sigma_angular = 3\nray_step = 0.1\n").unwrap();
    run_ok(
        d.path(),
        &[
            "annotate", "t/mask.vmv", "--tree", "t/tree.vmtree", "--config", "a.cfg", "--sigma-angular", "0.5", "--out", "m.obj",
        ],
    );
    let m = manifest(&d.path().join("m.obj.manifest.json"));
    // Flag beats file beats default.
    assert_eq!(m["config"]["sigma_angular"], "0.5");
    assert_eq!(m["config"]["ray_step"], "0.1");
    assert_eq!(m["config"]["sigma_longitudinal"], "2");
    assert_eq!(face_components(&d.path().join("m.obj")), (true, 1));
}

#[test]
fn annotate_empty_mask_fails_in_skeleton_stage() {
    let d = tempfile::tempdir().unwrap();
    let mut bytes = b"VMV1 4 4 4 1 1 1 0 0 0 u8\n".to_vec();
    bytes.extend([0u8; 64]);
    fs::write(d.path().join("empty.vmv"), bytes).unwrap();
    let o = run(d.path(), &["annotate", "empty.vmv", "--out", "m.obj"]);
    assert_one_line_error(&o);
    assert!(o.stderr.contains("skeleton: empty mask"), "{}", o.stderr);
}

fn write_points(path: &Path, pts: &[Vec3]) {
    let text: String = pts.iter().map(|p| format!("{} {} {}\n", p.x, p.y, p.z)).collect();
    fs::write(path, text).unwrap();
}

fn history_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,total,cd,lap,nc,eg"));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn fit_sphere_fixed_point() {
    let d = tempfile::tempdir().unwrap();
    let sphere = make_icosphere(2, 5.0, Vec3::zeros());
    // With no unpooling the first block samples faces with the run seed.
    write_points(&d.path().join("sphere.xyz"), &chamfer_points(&sphere.mesh, 7));
    fs::write(d.path().join("f.cfg"), "iters_stage1 = 60\niters_stage2 = 40\nunpool_at =\nlambda2 = 1\n").unwrap();
    run_ok(
        d.path(),
        &[
            "--seed", "7", "fit", "--target", "sphere.xyz", "--config", "f.cfg", "--radius", "5", "--center", "0,0,0", "--lambda2",
            "0", "--lambda3", "0", "--lambda4", "0", "--out", "fit.obj", "--history", "h.csv",
        ],
    );
    let rows = history_rows(&d.path().join("h.csv"));
    assert_eq!(rows.len(), 100);
    assert!(rows.last().unwrap()[2] <= 1e-3, "{:?}", rows.last());
    let m = manifest(&d.path().join("fit.obj.manifest.json"));
    assert_eq!(m["config"]["lambda2"], "0");
    assert_eq!(m["config"]["seed"], "7");
}

#[test]
fn fit_tube_history_has_one_row_per_iteration() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "straight-tube", "t");
    fs::write(d.path().join("f.cfg"), "iters_stage1 = 30\niters_stage2 = 12\nunpool_at = 15\nlr = 0.01\n").unwrap();
    run_ok(d.path(), &["fit", "--target", "t/mesh.obj", "--config", "f.cfg", "--out", "fit.obj", "--history", "h.csv"]);
    let rows = history_rows(&d.path().join("h.csv"));
    assert_eq!(rows.len(), 42);
    assert!(rows.iter().enumerate().all(|(k, r)| r[0] == k as f64 && r.len() == 6));
    assert!(integrity_report(&read_obj(d.path().join("fit.obj")).unwrap()).watertight);
}

#[test]
fn fit_mask_target() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "straight-tube", "t");
    run_ok(
        d.path(),
        &["fit", "--target", "t/mask.vmv", "--iters-stage1", "10", "--iters-stage2", "5", "--unpool-at", "5", "--out", "f.ply", "--history", "h.csv"],
    );
    assert_eq!(history_rows(&d.path().join("h.csv")).len(), 15);
}

#[test]
fn fit_bad_config_key_is_named() {
    let d = tempfile::tempdir().unwrap();
    write_points(&d.path().join("p.xyz"), &make_icosphere(1, 1.0, Vec3::zeros()).mesh.vertices);
    fs::write(d.path().join("f.cfg"), "lr = 0.01\nlearning_rate = 3\n").unwrap();
    let o = run(d.path(), &["fit", "--target", "p.xyz", "--config", "f.cfg", "--out", "f.obj", "--history", "h.csv"]);
    assert_one_line_error(&o);
    assert!(o.stderr.contains("learning_rate"), "{}", o.stderr);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dice,hd_mm,assd_mm,cd_mm2,smooth,nos,precision,recall,f1,accuracy"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn eval_pairings() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "straight-tube", "t");
    fs::write(d.path().join("wide.spec"), "kind = straight-tube\nmargin = 9\n").unwrap();
    run_ok(d.path(), &["synth", "wide.spec", "w"]);
    run_ok(d.path(), &["eval", "t/mesh.obj", "t/mask.vmv", "--out", "m.csv"]);
    run_ok(d.path(), &["eval", "t/mask.vmv", "t/mask.vmv", "--out", "m.csv"]);
    run_ok(d.path(), &["eval", "t/mesh.obj", "w/mask.vmv", "--out", "m.csv"]);
    write_points(&d.path().join("p.xyz"), &load_volume(d.path().join("t/mask.vmv"), None, VolumeKind::BinaryMask).unwrap().surface_points());
    run_ok(d.path(), &["eval", "p.xyz", "t/mask.vmv", "--out", "m.csv"]);
    let rows = csv_rows(&d.path().join("m.csv"));
    assert_eq!(rows.len(), 4);
    let num = |s: &str| s.parse::<f64>().unwrap();
    assert!(num(&rows[0][0]) >= 0.95, "{:?}", rows[0]);
    assert_eq!((num(&rows[1][0]), rows[1][5].as_str()), (1.0, "1"));
    // Different grid extent: still compared in world coordinates.
    assert!(num(&rows[2][0]) >= 0.95, "{:?}", rows[2]);
    assert!(num(&rows[2][1]) <= 1.0, "{:?}", rows[2]);
    // Points: no Dice, Smooth or NoS.
    assert_eq!((rows[3][0].as_str(), rows[3][4].as_str(), rows[3][5].as_str()), ("", "", ""));
    assert_eq!(num(&rows[3][6]), 1.0);

    let o = run(d.path(), &["eval", "t/mesh.obj", "t/mesh.obj", "--out", "m.csv"]);
    assert_one_line_error(&o);
    assert!(o.stderr.contains("unsupported pairing mesh-vs-mesh"), "{}", o.stderr);
}

#[test]
fn annotate_and_fit_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "bifurcation", "b");
    fs::write(d.path().join("f.cfg"), "iters_stage1 = 20\niters_stage2 = 10\nunpool_at = 10\nmode = gcn\nhidden = 16\n").unwrap();
    for run_id in ["1", "2"] {
        let mesh = format!("a{run_id}.obj");
        run_ok(d.path(), &["--seed", "5", "--threads", "1", "annotate", "b/mask.vmv", "--out", &mesh]);
        let fit = format!("f{run_id}.obj");
        let hist = format!("h{run_id}.csv");
        run_ok(d.path(), &["--seed", "5", "--threads", "1", "fit", "--target", "b/mesh.obj", "--config", "f.cfg", "--out", &fit, "--history", &hist]);
    }
    for (a, b) in [("a1.obj", "a2.obj"), ("f1.obj", "f2.obj"), ("h1.csv", "h2.csv")] {
        assert!(fs::read(d.path().join(a)).unwrap() == fs::read(d.path().join(b)).unwrap(), "{a} vs {b}");
    }
}

#[test]
fn skeletonize_writes_tree_and_centerlines() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "bifurcation", "b");
    let o = run_ok(d.path(), &["skeletonize", "b/mask.vmv", "--out", "t.vmtree", "--centerlines", "cl"]);
    assert!(o.stdout.contains("leaves=2"), "{}", o.stdout);
    let tree = read_tree(d.path().join("t.vmtree")).unwrap();
    assert_eq!(tree.leaves().len(), 2);
    for b in 0..2 {
        let cl = vesselmesh::centerline::read_centerline(d.path().join(format!("cl/branch_{b:03}.vmcl"))).unwrap();
        assert!(cl.len() > 10);
    }
}

#[test]
fn custom_manifest_path_and_bad_threads() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("s.spec"), "kind = arc-tube\n").unwrap();
    run_ok(d.path(), &["--manifest", "run.json", "synth", "s.spec", "o"]);
    assert!(d.path().join("run.json").exists());
    assert!(!d.path().join("o/manifest.json").exists());
    assert_one_line_error(&run(d.path(), &["--threads", "0", "synth", "s.spec", "o"]));
}
