use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdip_cli::commands::{self, Method};
use tdip_cli::config::RunConfig;
use tdip_cli::error::CliError;
use toml::Value;

#[derive(Parser)]
#[command(name = "tdip", version, about = "Time-dependent deep image prior for golden-angle radial cine MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// desk, retro, dynamic, retro-desk or dynamic-desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, env = "TDIP_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "TDIP_THREADS")]
    threads: Option<usize>,
    /// Force single-threaded execution.
    #[arg(long)]
    reference: bool,
    /// Override any config key, e.g. `--set dip.lr=0.002`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Phantom, coil maps and golden-angle spoke stream.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// continuous or retrospective.
        #[arg(long)]
        mode: Option<String>,
        /// Cardiac phases (the phantom's frame count).
        #[arg(long, alias = "frames")]
        phases: Option<usize>,
        #[arg(long)]
        spokes_per_phase: Option<usize>,
        #[arg(long)]
        coils: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Image side in pixels.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Run one reconstruction engine on a simulated stream.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// dip, cs, bp or ov.
        #[arg(long)]
        method: String,
        #[arg(long)]
        stream: PathBuf,
        /// Spokes per frame window.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// RSNR against the ground truth, y–t cross-sections and temporal-std map.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        result: PathBuf,
        /// Cross-section column; defaults to the grid center.
        #[arg(long)]
        column: Option<usize>,
    },
    /// Render a trained model under a latent scenario.
    Scenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// fine-interpolation, extrapolation, fresh-random, perturbed, scalar
        /// or independent-per-frame.
        #[arg(long)]
        kind: String,
    },
    /// Train one model per latent size and tabulate RSNR.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Adjoint, gridding, gradient and RSNR checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn parse_set(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("`--set {raw}` is not KEY=VALUE")))?;
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((key.trim().to_string(), parsed))
}

fn resolve(common: &Common, mut extra: Vec<(&str, Option<Value>)>) -> Result<RunConfig, CliError> {
    let mut overrides = common.set.iter().map(|s| parse_set(s)).collect::<Result<Vec<_>, _>>()?;
    extra.push(("seed", common.seed.map(|v| Value::Integer(v as i64))));
    extra.push(("out_dir", common.out_dir.as_ref().map(|p| Value::String(p.display().to_string()))));
    extra.push(("threads", common.threads.map(|v| Value::Integer(v as i64))));
    if common.reference {
        extra.push(("threads", Some(Value::Integer(1))));
    }
    overrides.extend(extra.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    RunConfig::resolve(common.config.as_deref(), common.preset.as_deref(), &overrides)
}

fn int(v: Option<usize>) -> Option<Value> {
    v.map(|v| Value::Integer(v as i64))
}

fn float(v: Option<f64>) -> Option<Value> {
    v.map(Value::Float)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            common,
            mode,
            phases,
            spokes_per_phase,
            coils,
            sigma,
            size,
        } => {
            let cfg = resolve(
                &common,
                vec![
                    ("simulation.mode", mode.map(Value::String)),
                    ("phantom.frames", int(phases)),
                    ("simulation.spokes_per_phase", int(spokes_per_phase)),
                    ("simulation.coils", int(coils)),
                    ("simulation.sigma", float(sigma)),
                    ("phantom.n_image", int(size)),
                ],
            )?;
            let sim = commands::simulate(&cfg)?;
            println!(
                "simulated {} frames of {}x{}, {} spokes, {} coils -> {}",
                sim.truth.len(),
                sim.truth.n_image,
                sim.truth.n_image,
                sim.stream.len(),
                sim.coils.count(),
                cfg.out_dir.display()
            );
        }
        Command::Reconstruct {
            common,
            method,
            stream,
            n,
            iterations,
            lr,
            lambda,
        } => {
            let method = Method::parse(&method)?;
            let cfg = resolve(
                &common,
                vec![
                    ("dip.n", int(n)),
                    ("cs.n", int(n)),
                    ("dip.iterations", int(iterations)),
                    ("dip.lr", float(lr)),
                    ("cs.lambda", float(lambda)),
                ],
            )?;
            let result = commands::reconstruct(&cfg, method, &stream)?;
            let last = result.loss_trace.last().map(|l| format!(", final loss {l:.4e}")).unwrap_or_default();
            println!(
                "{}: {} frames in {:.1} s{last} -> {}",
                result.method,
                result.series.len(),
                result.wall_clock_s,
                cfg.out_dir.display()
            );
        }
        Command::Evaluate {
            common,
            truth,
            result,
            column,
        } => {
            let cfg = resolve(&common, vec![])?;
            let report = commands::evaluate(&cfg, &truth, &result, column)?;
            print!("{}", tdip::metrics::report_table(&report));
        }
        Command::Scenario { common, checkpoint, kind } => {
            let cfg = resolve(&common, vec![])?;
            print!("{}", commands::scenario(&cfg, &checkpoint, &kind)?.text());
        }
        Command::Sweep {
            common,
            stream,
            truth,
            sizes,
            iterations,
        } => {
            let cfg = resolve(&common, vec![("dip.iterations", int(iterations))])?;
            print!("{}", tdip::metrics::sweep_table(&commands::sweep(&cfg, &stream, &truth, &sizes)?));
        }
        Command::Selftest { seed, inject_fault } => {
            let report = commands::selftest(inject_fault.as_deref(), seed)?;
            for c in &report.checks {
                println!("{}", c.line());
            }
            let failed = report.failures().count();
            if failed > 0 {
                return Err(CliError::Checks(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tdip: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
