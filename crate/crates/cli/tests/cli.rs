use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;
use tdip::io::{result_to_container, stream_from_container, Container};
use tdip::metrics::RSNR_CAP_DB;
use tdip::recon::ReconResult;
use tdip_cli::commands::{read_result, read_stream, read_truth};

fn tdip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdip"))
        .args(args)
        .env_remove("TDIP_OUT_DIR")
        .env_remove("TDIP_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tdip(args);
    assert!(
        out.status.success(),
        "tdip {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_sim(dir: &Path) -> PathBuf {
    let out = dir.join("sim");
    ok(&["simulate", "--out-dir", p(&out), "--size", "16", "--phases", "6", "--coils", "2"]);
    out
}

#[test]
fn default_simulation_is_desk_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--out-dir", p(&out)]);
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    for line in ["n_image = 64", "frames = 20", "coils = 4", "spokes = 20", "mode = \"continuous\"", "m_omega = 128"] {
        assert!(manifest.lines().any(|l| l.trim() == line), "manifest lacks `{line}`:\n{manifest}");
    }
    let (stream, coils) = read_stream(&out.join("stream.tddr")).unwrap();
    assert_eq!((stream.len(), stream.coils, coils.count()), (20, 4, 4));
    assert_eq!(read_truth(&out.join("truth.tddr")).unwrap().len(), 20);
    assert!(out.join("config.toml").exists());
}

#[test]
fn retrospective_flags_give_the_phase_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&[
        "simulate", "--out-dir", p(&out), "--size", "16", "--coils", "1", "--mode", "retrospective", "--phases", "23",
        "--spokes-per-phase", "13",
    ]);
    let (stream, _) = read_stream(&out.join("stream.tddr")).unwrap();
    assert_eq!((stream.len(), stream.spokes_per_frame), (23 * 13, 13));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["simulate", "--out-dir", p(&out), "--size", "16", "--phases", "4", "--sigma", "0.5", "--seed", seed]);
        std::fs::read(out.join("stream.tddr")).unwrap()
    };
    let a = run("a", "3");
    assert!(a == run("b", "3"));
    assert!(a != run("c", "4"));
}

#[test]
fn backprojection_of_a_zero_stream_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_sim(dir.path());
    let path = sim.join("stream.tddr");
    let mut c = Container::read(&path).unwrap();
    let zeroed = {
        let mut s = stream_from_container(&c).unwrap();
        for spoke in &mut s.spokes {
            spoke.samples.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        }
        s
    };
    c.arrays.retain(|a| !a.name.starts_with("spoke_"));
    tdip::io::stream_to_container(&zeroed, &mut c).unwrap();
    c.write(&path).unwrap();

    let out = dir.path().join("bp");
    ok(&["reconstruct", "--method", "bp", "--stream", p(&path), "--out-dir", p(&out)]);
    let r = read_result(&out.join("result.tddr")).unwrap();
    assert_eq!(r.series.len(), 6);
    assert!(r.series.frames.iter().flatten().all(|v| v.norm() == 0.0));
}

#[test]
fn evaluating_the_truth_caps_every_frame() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_sim(dir.path());
    let truth = read_truth(&sim.join("truth.tddr")).unwrap();
    let result = ReconResult {
        method: "oracle".into(),
        series: truth,
        loss_trace: vec![],
        config: String::new(),
        seeds: vec![],
        wall_clock_s: 0.0,
    };
    let rpath = dir.path().join("oracle.tddr");
    result_to_container(&result).unwrap().write(&rpath).unwrap();
    let out = dir.path().join("eval");
    ok(&["evaluate", "--truth", p(&sim.join("truth.tddr")), "--result", p(&rpath), "--out-dir", p(&out)]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let db: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(db, RSNR_CAP_DB);
    }
    let text = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(text.contains("column = 8"), "{text}");
    for img in ["truth_yt.pgm", "result_yt.pgm", "result_tstd.pgm"] {
        assert!(std::fs::read(out.join(img)).unwrap().starts_with(b"P5\n"));
    }
    // the y-t image is n wide and K tall
    assert!(std::fs::read(out.join("truth_yt.pgm")).unwrap().starts_with(b"P5\n16 6\n"));
}

#[test]
fn dip_checkpoint_feeds_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_sim(dir.path());
    let out = dir.path().join("dip");
    ok(&[
        "reconstruct", "--method", "dip", "--n", "3", "--iterations", "40", "--stream", p(&sim.join("stream.tddr")),
        "--out-dir", p(&out), "--set", "generator.latent_hw=4", "--set", "generator.channels=8",
    ]);
    let r = read_result(&out.join("result.tddr")).unwrap();
    assert_eq!(r.loss_trace.len(), 40);
    let config = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(config.contains("iterations = 40") && config.contains("n = 3"), "{config}");

    for kind in ["scalar", "perturbed", "fine-interpolation", "extrapolation"] {
        let sc = dir.path().join(kind);
        let text = ok(&["scenario", "--checkpoint", p(&out.join("checkpoint.tddr")), "--kind", kind, "--out-dir", p(&sc)]);
        assert!(text.contains(&format!("kind = {kind}")), "{text}");
        assert!(sc.join(format!("scenario_{kind}.pgm")).exists());
    }
    let bad = tdip(&["scenario", "--checkpoint", p(&out.join("checkpoint.tddr")), "--kind", "sideways"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_emits_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_sim(dir.path());
    let out = dir.path().join("sweep");
    ok(&[
        "sweep", "--stream", p(&sim.join("stream.tddr")), "--truth", p(&sim.join("truth.tddr")), "--sizes", "1", "2", "4",
        "8", "16", "--iterations", "5", "--set", "generator.channels=4", "--set", "dip.n=3", "--out-dir", p(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let sizes: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["1", "2", "4", "8", "16"]);
    let bad = tdip(&["sweep", "--stream", p(&sim.join("stream.tddr")), "--truth", p(&sim.join("truth.tddr")), "--sizes", "3"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_sim(dir.path());
    let stream = sim.join("stream.tddr");
    let code = |args: &[&str]| tdip(args).status.code();
    assert_eq!(code(&["reconstruct", "--method", "sense", "--stream", p(&stream)]), Some(2));
    assert_eq!(code(&["simulate", "--set", "phantom.radius=1", "--out-dir", p(&dir.path().join("x"))]), Some(2));
    assert_eq!(code(&["simulate", "--preset", "fetal", "--out-dir", p(&dir.path().join("x"))]), Some(2));
    assert_eq!(code(&["reconstruct", "--method", "bp", "--stream", p(&dir.path().join("missing"))]), Some(3));
    // a phantom container is not a stream
    assert_eq!(code(&["reconstruct", "--method", "bp", "--stream", p(&sim.join("truth.tddr"))]), Some(3));
    std::fs::write(dir.path().join("junk"), b"not a container").unwrap();
    assert_eq!(code(&["reconstruct", "--method", "bp", "--stream", p(&dir.path().join("junk"))]), Some(3));
    let diverge = tdip(&[
        "reconstruct", "--method", "dip", "--stream", p(&stream), "--n", "3", "--iterations", "20", "--lr", "1e300",
        "--set", "generator.latent_hw=4", "--set", "generator.channels=4", "--out-dir", p(&dir.path().join("d")),
    ]);
    assert_eq!(diverge.status.code(), Some(4), "{}", String::from_utf8_lossy(&diverge.stderr));
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_env");
    let status = Command::new(env!("CARGO_BIN_EXE_tdip"))
        .args(["simulate", "--size", "16", "--phases", "3"])
        .env("TDIP_OUT_DIR", &out)
        .env("TDIP_THREADS", "2")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let config = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(config.contains("threads = 2"), "{config}");
    // flags beat the environment
    let flag_out = dir.path().join("from_flag");
    let status = Command::new(env!("CARGO_BIN_EXE_tdip"))
        .args(["simulate", "--size", "16", "--phases", "3", "--out-dir", p(&flag_out)])
        .env("TDIP_OUT_DIR", &out)
        .output()
        .unwrap()
        .status;
    assert!(status.success() && flag_out.join("stream.tddr").exists());
}

#[test]
fn injected_fault_is_reported_by_name() {
    let out = tdip(&["selftest", "--inject-fault", "nudft"]);
    assert_eq!(out.status.code(), Some(4));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let failures: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failures.len(), 1, "{stdout}");
    assert!(failures[0].contains("nudft"), "{}", failures[0]);
}
