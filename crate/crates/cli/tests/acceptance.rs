//! Acceptance suite: one PASS/FAIL line per criterion, run on the desk
//! protocol (64×64, 20 frames, 4 coils, `n = 5`, 3,000 iterations).
//!
//! Exits 0 after reporting unless `TDIP_ACCEPTANCE_STRICT=1`, in which case
//! any FAIL line makes it exit 1.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use tdip::forward::GOLDEN_ANGLE;
use tdip::latents::ScenarioKind;
use tdip::metrics::{evaluate_series, sweep_latent_size};
use tdip::phantom::FrameSeries;
use tdip::recon::{bp_reconstruct, cs_reconstruct, dip_infer, dip_reconstruct, CsConfig, DipConfig, LatentPlan};
use tdip::selftest::{golden_angle_check, run_selftest, Check, SelftestOptions};
use tdip_cli::commands::{scenario_on_model, simulate_data};
use tdip_cli::config::RunConfig;

struct Outcome {
    passed: bool,
    detail: String,
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, title: &str, seconds: f64, budget: f64, o: Outcome) {
        let passed = o.passed && seconds <= budget;
        if !passed {
            self.failures += 1;
        }
        let over = if seconds > budget {
            format!(", over the {budget:.0} s budget")
        } else {
            String::new()
        };
        println!(
            "{} {id:>2} {title}: {} [{seconds:.1} s{over}]",
            if passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
}

fn group<'a>(checks: &'a [Check], name: &str) -> Vec<&'a Check> {
    checks.iter().filter(|c| c.group == name).collect()
}

fn summarize(checks: &[&Check]) -> (Outcome, f64) {
    let seconds = checks.iter().map(|c| c.seconds).sum();
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.line()).collect();
    let worst = checks
        .iter()
        .map(|c| format!("{} {:.1e}/{:.0e}", c.name, c.error, c.tolerance))
        .collect::<Vec<_>>()
        .join("; ");
    let detail = if failed.is_empty() {
        worst
    } else {
        format!("failed: {}", failed.join(" | "))
    };
    (
        Outcome {
            passed: failed.is_empty(),
            detail,
        },
        seconds,
    )
}

fn mean_db(truth: &FrameSeries, estimate: &FrameSeries) -> f64 {
    evaluate_series(truth, estimate).expect("matching series").mean_db
}

/// Two full CLI invocations in reference mode on a small problem.
fn reference_runs(root: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_tdip");
    let run = |name: &str| -> Result<Vec<Vec<u8>>, String> {
        let dir = root.join(name);
        let dir_s = dir.to_str().unwrap();
        let steps: [&[&str]; 2] = [
            &["simulate", "--size", "32", "--phases", "8", "--sigma", "0.5", "--seed", "11"],
            &[
                "reconstruct", "--method", "dip", "--stream", &format!("{dir_s}/stream.tddr"), "--n", "3", "--iterations",
                "150", "--seed", "11", "--set", "generator.latent_hw=4", "--set", "generator.channels=16",
            ],
        ];
        for args in steps {
            let out = Command::new(bin)
                .args(args)
                .args(["--reference", "--out-dir", dir_s])
                .env_remove("TDIP_OUT_DIR")
                .env_remove("TDIP_THREADS")
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(String::from_utf8_lossy(&out.stderr).into_owned());
            }
        }
        ["stream.tddr", "result.tddr", "checkpoint.tddr"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    match (run("first"), run("second")) {
        (Ok(a), Ok(b)) => {
            let traces = |files: &[Vec<u8>]| {
                let c = tdip::io::Container::from_bytes(&files[1]).unwrap();
                c.f64s("loss_trace").unwrap().1.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            };
            let same_trace = traces(&a) == traces(&b);
            let same_files = a == b;
            Outcome {
                passed: same_trace && same_files,
                detail: format!(
                    "loss traces {} ({} values), stream/result/checkpoint containers {}",
                    if same_trace { "bit-identical" } else { "differ" },
                    traces(&a).len(),
                    if same_files { "byte-identical" } else { "differ" }
                ),
            }
        }
        (Err(e), _) | (_, Err(e)) => Outcome {
            passed: false,
            detail: format!("run failed: {e}"),
        },
    }
}

fn main() {
    let strict = std::env::var("TDIP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut report = Report { failures: 0 };
    println!("acceptance: desk protocol, 64x64, K=20, C=4, n=5");

    // 1, 2, 4: operator, gradient and RSNR checks
    let selftest = run_selftest(&SelftestOptions::default()).expect("selftest runs");
    let mut ops = group(&selftest.checks, "adjoint");
    ops.extend(group(&selftest.checks, "gridding"));
    let (o, s) = summarize(&ops);
    report.line(1, "operator correctness", s, 60.0, o);
    let (o, s) = summarize(&group(&selftest.checks, "gradient"));
    report.line(2, "gradient correctness", s, 180.0, o);

    // 3: golden-angle distinctness
    let check = golden_angle_check(1600, GOLDEN_ANGLE, 1e-9);
    let gap = 1e-9 / check.error;
    report.line(
        3,
        "golden-angle distinctness",
        check.seconds,
        1.0,
        Outcome {
            passed: check.passed,
            detail: format!("1600 spokes at 111.25 deg, min separation mod pi {gap:.3e} rad (need > 1e-9)"),
        },
    );
    let irrational = golden_angle_check(1600, PI * 2.0 / (1.0 + 5f64.sqrt()), 1e-9);
    println!(
        "INFO  3 same check with the irrational increment 180/phi deg: min separation {:.3e} rad, {}",
        1e-9 / irrational.error,
        if irrational.passed { "distinct" } else { "not distinct" }
    );

    let (o, s) = summarize(&group(&selftest.checks, "rsnr"));
    report.line(4, "RSNR oracle", s, 10.0, o);

    // 5: method ordering under the shared protocol
    let cfg = RunConfig::desk();
    let sim = simulate_data(&cfg).expect("simulation");
    let (truth, coils, stream) = (&sim.truth, &sim.coils, &sim.stream);
    let dip_cfg = cfg.dip_config(truth.n_image).expect("desk config");

    let start = Instant::now();
    let (model, dip) = dip_reconstruct(stream, coils, &dip_cfg).expect("dip");
    let dip_seconds = start.elapsed().as_secs_f64();
    let dip_db = mean_db(truth, &dip.series);
    let bp_db = mean_db(truth, &bp_reconstruct(stream, coils, dip_cfg.n).expect("bp").series);
    // CS gets the best of a small lambda grid scored against the truth
    let cs_scores: Vec<(f64, f64)> = [200.0, 600.0, 2000.0]
        .iter()
        .map(|&lambda| {
            let out = cs_reconstruct(stream, coils, cfg.cs.n, &CsConfig { lambda, ..cfg.cs_config() }).expect("cs");
            (lambda, mean_db(truth, &out.result.series))
        })
        .collect();
    let (cs_lambda, cs_db) = cs_scores.iter().copied().fold((0.0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
    let cs_grid = cs_scores.iter().map(|(l, db)| format!("{l}: {db:.2}")).collect::<Vec<_>>().join(", ");
    report.line(
        5,
        "method ordering",
        start.elapsed().as_secs_f64(),
        45.0 * 60.0,
        Outcome {
            passed: dip_db >= cs_db - 0.5 && dip_db >= bp_db + 3.0,
            detail: format!(
                "DIP {dip_db:.2} dB, CS {cs_db:.2} dB (best lambda {cs_lambda} of {cs_grid}), BP {bp_db:.2} dB; need DIP >= CS - 0.5 and >= BP + 3"
            ),
        },
    );

    // 6: interpolated vs independent latents
    let start = Instant::now();
    let indep_cfg = DipConfig {
        latents: LatentPlan::IndependentPerFrame,
        ..dip_cfg.clone()
    };
    let (_, indep) = dip_reconstruct(stream, coils, &indep_cfg).expect("independent dip");
    let indep_db = mean_db(truth, &indep.series);
    report.line(
        6,
        "smoothness ablation",
        start.elapsed().as_secs_f64(),
        45.0 * 60.0,
        Outcome {
            passed: dip_db - indep_db > 2.0,
            detail: format!(
                "interpolated {dip_db:.2} dB, independent {indep_db:.2} dB, gap {:.2} dB (need > 2)",
                dip_db - indep_db
            ),
        },
    );

    // 7: latent-size sweep; the 8x8 cell is the run from criterion 5 and
    // 64x64 (no upsampling) stands in for the largest size
    let start = Instant::now();
    let rows = sweep_latent_size(&[1, 2, 4, 16, 64], stream, coils, truth, &dip_cfg, cfg.threads).expect("sweep");
    let db = |size: usize| {
        if size == 8 {
            dip_db
        } else {
            rows.iter().find(|r| r.size == size).unwrap().report.mean_db
        }
    };
    let mid_best = [2, 4, 8, 16].map(db).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let table = [1, 2, 4, 8, 16, 64].map(|s| format!("{s}x{s} {:.2}", db(s))).join(", ");
    report.line(
        7,
        "latent-size sweep",
        start.elapsed().as_secs_f64() + dip_seconds,
        2.0 * 3600.0,
        Outcome {
            passed: db(8) > db(64) && db(1) < mid_best,
            detail: format!("{table} dB; need 8x8 > 64x64 and 1x1 < best of 2..16"),
        },
    );

    // 8: scalar and perturbed latent scenarios on the trained 8x8 model
    let start = Instant::now();
    let (scalar, _) = scenario_on_model(&model, &ScenarioKind::Scalar, cfg.seed).expect("scalar scenario");
    let (perturbed, _) =
        scenario_on_model(&model, &ScenarioKind::Perturbed { energy_ratio: 0.10 }, cfg.seed).expect("perturbed scenario");
    let ratio = scalar.temporal_std / scalar.reference_std;
    let deviation = perturbed.deviation.expect("one frame per training frame");
    report.line(
        8,
        "latent scenarios",
        start.elapsed().as_secs_f64(),
        f64::INFINITY,
        Outcome {
            passed: ratio < 0.05 && deviation < 0.10,
            detail: format!(
                "scalar temporal std {:.3e} = {:.2}% of the 8x8 run's {:.3e} (need < 5%); perturbed deviation {:.2}% (need < 10%)",
                scalar.temporal_std,
                100.0 * ratio,
                scalar.reference_std,
                100.0 * deviation
            ),
        },
    );

    // 9: frames between the training times against the analytic phantom
    let start = Instant::now();
    let phantom = cfg.phantom_config();
    let half_times: Vec<f64> = (0..truth.len() - 1).map(|k| k as f64 + 0.5).collect();
    let latents = half_times
        .iter()
        .map(|&t| model.latents.latent_at(t))
        .collect::<Result<Vec<_>, _>>()
        .expect("half-integer latents");
    let half = dip_infer(&model.params, &latents).expect("inference");
    let half_truth = FrameSeries::new(truth.n_image, half_times.iter().map(|&t| phantom.frame_at(t)).collect()).unwrap();
    let half_db = mean_db(&half_truth, &half);
    report.line(
        9,
        "sub-frame inference",
        start.elapsed().as_secs_f64(),
        f64::INFINITY,
        Outcome {
            passed: (half_db - dip_db).abs() <= 2.0,
            detail: format!("half-integer t {half_db:.2} dB, integer t {dip_db:.2} dB (need within 2 dB)"),
        },
    );

    // 10: reproducibility through the binary
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("temp dir");
    let outcome = reference_runs(tmp.path());
    report.line(10, "reproducibility", start.elapsed().as_secs_f64(), f64::INFINITY, outcome);

    println!("acceptance: {} of 10 criteria failed", report.failures);
    if strict && report.failures > 0 {
        std::process::exit(1);
    }
}
