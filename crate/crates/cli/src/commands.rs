//! One function per subcommand. Each writes its outputs plus the resolved
//! `config.toml` into the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use tdip::forward::{CoilMaps, GridConfig, GridContext, SpokeStream};
use tdip::io::{
    checkpoint_from_container, checkpoint_to_container, coils_from_container, coils_to_container, dump_grayscale,
    expect_kind, result_from_container, result_to_container, series_from_container, series_to_container,
    stream_from_container, stream_to_container, Container, Window, KIND_KEY,
};
use tdip::latents::ScenarioKind;
use tdip::metrics::{
    cross_section, evaluate_series, relative_magnitude_deviation, report_csv, report_table, sweep_csv, sweep_latent_size,
    sweep_table, temporal_std, MetricReport, SweepRow,
};
use tdip::phantom::{make_cine_phantom, make_coil_maps, simulate_stream, FrameSeries};
use tdip::recon::{bp_reconstruct, cs_reconstruct, dip_reconstruct, dip_scenario, ov_reconstruct, DipModel, ReconResult};
use tdip::selftest::{run_selftest, Operator, SelftestOptions, SelftestReport};

use crate::config::RunConfig;
use crate::error::CliError;

pub const PHANTOM_KIND: &str = "phantom";
pub const STREAM_KIND: &str = "stream";

pub const TRUTH_FILE: &str = "truth.tddr";
pub const STREAM_FILE: &str = "stream.tddr";
pub const RESULT_FILE: &str = "result.tddr";
pub const CHECKPOINT_FILE: &str = "checkpoint.tddr";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dip,
    Cs,
    Bp,
    Ov,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        Ok(match name {
            "dip" => Method::Dip,
            "cs" => Method::Cs,
            "bp" => Method::Bp,
            "ov" => Method::Ov,
            other => return Err(CliError::Config(format!("unknown method `{other}` (expected dip, cs, bp or ov)"))),
        })
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Seeds of the coil maps and the acquisition noise.
pub fn simulation_seeds(cfg: &RunConfig) -> (u64, u64) {
    (cfg.seed, cfg.seed.wrapping_add(1))
}

pub struct Simulated {
    pub truth: FrameSeries,
    pub coils: CoilMaps,
    pub stream: SpokeStream,
}

/// Phantom, coil maps and spoke stream for `cfg`, without touching disk.
pub fn simulate_data(cfg: &RunConfig) -> Result<Simulated, CliError> {
    let phantom = cfg.phantom_config();
    let truth = make_cine_phantom(&phantom)?;
    let (coil_seed, noise_seed) = simulation_seeds(cfg);
    let coils = make_coil_maps(cfg.simulation.coils, phantom.n_image, coil_seed)?;
    let ctx = GridContext::new(phantom.n_image, GridConfig::standard())?;
    let stream = simulate_stream(
        &truth,
        &cfg.trajectory_config(),
        Arc::new(coils.clone()),
        ctx,
        cfg.simulation.sigma,
        cfg.simulation_mode(),
        noise_seed,
    )?;
    Ok(Simulated { truth, coils, stream })
}

/// Writes `truth.tddr` (frames and coil maps), `stream.tddr` (spokes and
/// coil maps) and `manifest.txt`.
pub fn simulate(cfg: &RunConfig) -> Result<Simulated, CliError> {
    let dir = prepare_out(cfg)?;
    let sim = simulate_data(cfg)?;

    let mut truth = Container::new();
    truth.set_meta(KIND_KEY, PHANTOM_KIND)?;
    series_to_container(&sim.truth, "truth", &mut truth)?;
    coils_to_container(&sim.coils, &mut truth)?;
    truth.write(&dir.join(TRUTH_FILE))?;

    let mut stream = Container::new();
    stream.set_meta(KIND_KEY, STREAM_KIND)?;
    stream.set_meta("config", cfg.provenance())?;
    stream_to_container(&sim.stream, &mut stream)?;
    coils_to_container(&sim.coils, &mut stream)?;
    stream.write(&dir.join(STREAM_FILE))?;

    write_text(&dir.join("manifest.txt"), &manifest(cfg, &sim))?;
    Ok(sim)
}

fn manifest(cfg: &RunConfig, sim: &Simulated) -> String {
    let (coil_seed, noise_seed) = simulation_seeds(cfg);
    let t = &sim.stream.trajectory;
    let mut out = cfg.to_toml();
    out.push_str("\n[derived]\n");
    let _ = writeln!(out, "n_image = {}", t.n_image);
    let _ = writeln!(out, "frames = {}", sim.truth.len());
    let _ = writeln!(out, "coils = {}", sim.coils.count());
    let _ = writeln!(out, "spokes = {}", sim.stream.len());
    let _ = writeln!(out, "spokes_per_frame = {}", sim.stream.spokes_per_frame);
    let _ = writeln!(out, "m_omega = {}", t.m_omega);
    let _ = writeln!(out, "theta0_rad = {:?}", t.theta0);
    let _ = writeln!(out, "dtheta_rad = {:?}", t.dtheta);
    let _ = writeln!(out, "coil_seed = {coil_seed}");
    let _ = writeln!(out, "noise_seed = {noise_seed}");
    let _ = writeln!(out, "phantom = {:?}", format!("{:?}", cfg.phantom_config()));
    out
}

pub fn read_stream(path: &Path) -> Result<(SpokeStream, CoilMaps), CliError> {
    let c = Container::read(path)?;
    expect_kind(&c, STREAM_KIND)?;
    Ok((stream_from_container(&c)?, coils_from_container(&c)?))
}

pub fn read_truth(path: &Path) -> Result<FrameSeries, CliError> {
    let c = Container::read(path)?;
    expect_kind(&c, PHANTOM_KIND)?;
    Ok(series_from_container(&c, "truth")?)
}

pub fn read_result(path: &Path) -> Result<ReconResult, CliError> {
    Ok(result_from_container(&Container::read(path)?)?)
}

/// Runs one engine on in-memory data. DIP also returns its trained model.
pub fn run_engine(
    cfg: &RunConfig,
    method: Method,
    stream: &SpokeStream,
    coils: &CoilMaps,
) -> Result<(ReconResult, Option<DipModel>), CliError> {
    Ok(match method {
        Method::Dip => {
            let (model, result) = dip_reconstruct(stream, coils, &cfg.dip_config(stream.trajectory.n_image)?)?;
            (result, Some(model))
        }
        Method::Cs => (cs_reconstruct(stream, coils, cfg.cs.n, &cfg.cs_config())?.result, None),
        Method::Bp => (bp_reconstruct(stream, coils, cfg.dip.n)?, None),
        Method::Ov => (ov_reconstruct(stream, coils)?, None),
    })
}

/// Writes `result.tddr`, plus `checkpoint.tddr` for DIP.
pub fn reconstruct(cfg: &RunConfig, method: Method, stream_path: &Path) -> Result<ReconResult, CliError> {
    let (stream, coils) = read_stream(stream_path)?;
    let dir = prepare_out(cfg)?;
    let (result, model) = run_engine(cfg, method, &stream, &coils)?;
    result_to_container(&result)?.write(&dir.join(RESULT_FILE))?;
    if let Some(model) = model {
        checkpoint_to_container(&model, &cfg.provenance())?.write(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(result)
}

pub fn resolve_column(cfg: &RunConfig, flag: Option<usize>, n_image: usize) -> usize {
    match (flag, cfg.metrics.column) {
        (Some(c), _) => c,
        (None, c) if c >= 0 => c as usize,
        _ => n_image / 2,
    }
}

/// RSNR table (`metrics.txt`, `metrics.csv`), y–t cross-sections of truth
/// and result and the result's temporal-std map, all as P5 graymaps.
pub fn evaluate(cfg: &RunConfig, truth_path: &Path, result_path: &Path, column: Option<usize>) -> Result<MetricReport, CliError> {
    let truth = read_truth(truth_path)?;
    let result = read_result(result_path)?;
    let dir = prepare_out(cfg)?;
    let report = evaluate_series(&truth, &result.series)?;
    let n = truth.n_image;
    let column = resolve_column(cfg, column, n);

    let mut table = format!("method = {}\ncolumn = {column}\n\n", result.method);
    table.push_str(&report_table(&report));
    write_text(&dir.join("metrics.txt"), &table)?;
    write_text(&dir.join("metrics.csv"), &report_csv(&report))?;

    for (name, series) in [("truth", &truth), ("result", &result.series)] {
        let yt = cross_section(series, column)?;
        dump_grayscale(&yt, n, series.len(), &dir.join(format!("{name}_yt.pgm")), Window::Auto)?;
    }
    let tstd = temporal_std(&result.series)?;
    dump_grayscale(&tstd.map, n, n, &dir.join("result_tstd.pgm"), Window::Auto)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSummary {
    pub kind: String,
    pub frames: usize,
    pub temporal_std: f64,
    /// Temporal std of the model's own frames at the training times.
    pub reference_std: f64,
    /// Relative magnitude deviation from the training-time frames, when the
    /// scenario renders one frame per training frame.
    pub deviation: Option<f64>,
}

impl ScenarioSummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "kind = {}\nframes = {}\ntemporal_std = {:.6e}\nreference_std = {:.6e}\nstd_ratio = {:.6}\n",
            self.kind,
            self.frames,
            self.temporal_std,
            self.reference_std,
            self.temporal_std / self.reference_std
        );
        if let Some(d) = self.deviation {
            let _ = writeln!(s, "deviation = {d:.6}");
        }
        s
    }
}

/// Renders the checkpoint's model for `kind` next to its training-time
/// frames and compares the two.
pub fn scenario_on_model(model: &DipModel, kind: &ScenarioKind, seed: u64) -> Result<(ScenarioSummary, FrameSeries), CliError> {
    let run = dip_scenario(model, kind, seed)?;
    let reference = tdip::recon::dip_infer(&model.params, &model.latents.frame_latents()?)?;
    let deviation = (run.series.len() == reference.len())
        .then(|| relative_magnitude_deviation(&run.series, &reference))
        .transpose()?;
    let summary = ScenarioSummary {
        kind: kind.name().to_string(),
        frames: run.series.len(),
        temporal_std: temporal_std(&run.series)?.mean,
        reference_std: temporal_std(&reference)?.mean,
        deviation,
    };
    Ok((summary, run.series))
}

/// Writes `scenario_<kind>.pgm`, the frames side by side, and
/// `scenario_<kind>.txt`.
pub fn scenario(cfg: &RunConfig, checkpoint: &Path, kind_name: &str) -> Result<ScenarioSummary, CliError> {
    let kind = ScenarioKind::parse(kind_name).map_err(|e| CliError::Config(e.to_string()))?;
    let (model, _) = checkpoint_from_container(&Container::read(checkpoint)?)?;
    let dir = prepare_out(cfg)?;
    let (summary, series) = scenario_on_model(&model, &kind, cfg.seed)?;
    let (n, k) = (series.n_image, series.len());
    let mut strip = vec![0.0; n * n * k];
    for (f, frame) in series.frames.iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                strip[r * n * k + f * n + c] = frame[r * n + c].norm();
            }
        }
    }
    let stem = format!("scenario_{}", summary.kind);
    dump_grayscale(&strip, n * k, n, &dir.join(format!("{stem}.pgm")), Window::Auto)?;
    write_text(&dir.join(format!("{stem}.txt")), &summary.text())?;
    Ok(summary)
}

/// Latent-size sweep over the stream, scored against the truth; writes
/// `sweep.txt` and `sweep.csv`.
pub fn sweep(cfg: &RunConfig, stream_path: &Path, truth_path: &Path, sizes: &[usize]) -> Result<Vec<SweepRow>, CliError> {
    if sizes.is_empty() {
        return Err(CliError::Config("no latent sizes given".into()));
    }
    let (stream, coils) = read_stream(stream_path)?;
    let truth = read_truth(truth_path)?;
    let base = cfg.dip_config(truth.n_image)?;
    for &s in sizes {
        if s == 0 || truth.n_image % s != 0 || !(truth.n_image / s).is_power_of_two() {
            return Err(CliError::Config(format!(
                "latent size {s} does not divide the {}-pixel grid by a power of two",
                truth.n_image
            )));
        }
    }
    let dir = prepare_out(cfg)?;
    let rows = sweep_latent_size(sizes, &stream, &coils, &truth, &base, cfg.threads)?;
    write_text(&dir.join("sweep.txt"), &sweep_table(&rows))?;
    write_text(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

pub fn selftest(inject: Option<&str>, seed: u64) -> Result<SelftestReport, CliError> {
    let flip_adjoint = inject
        .map(|name| {
            Operator::parse(name).ok_or_else(|| CliError::Config(format!("unknown operator `{name}` (nudft, nufft or system)")))
        })
        .transpose()?;
    Ok(run_selftest(&SelftestOptions { flip_adjoint, seed })?)
}
