//! Regressed SNR, y–t cross-sections and temporal variation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forward::{CoilMaps, SpokeStream};
use crate::generator::GeneratorConfig;
use crate::phantom::FrameSeries;
use crate::recon::{dip_reconstruct, DipConfig};

/// Score reported when the affine fit is exact.
pub const RSNR_CAP_DB: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rsnr {
    pub db: f64,
    pub a: f64,
    pub b: f64,
    /// The estimate was constant, so only the offset `b` was fitted.
    pub offset_only: bool,
}

fn check_pair(reference: &[f64], estimate: &[f64]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::shape(format!(
            "reference has {} pixels, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::invalid("cannot score empty images"));
    }
    if reference.iter().chain(estimate).any(|v| !v.is_finite()) {
        return Err(Error::invalid("images must be finite"));
    }
    Ok(())
}

fn residual_norm(reference: &[f64], estimate: &[f64], a: f64, b: f64) -> f64 {
    reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - a * e - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn score(reference: &[f64], residual: f64) -> f64 {
    let norm = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if residual <= 1e-12 * norm {
        RSNR_CAP_DB
    } else {
        (20.0 * (norm / residual).log10()).min(RSNR_CAP_DB)
    }
}

/// RSNR of real images (typically magnitudes): the least-squares affine
/// fit `reference ≈ a·estimate + b`, then `20 log10(‖ref‖ / ‖residual‖)`.
pub fn rsnr_real(reference: &[f64], estimate: &[f64]) -> Result<Rsnr> {
    check_pair(reference, estimate)?;
    let n = reference.len() as f64;
    let mr = reference.iter().sum::<f64>() / n;
    let me = estimate.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (r, e) in reference.iter().zip(estimate) {
        cov += (r - mr) * (e - me);
        var += (e - me) * (e - me);
    }
    let spread = estimate.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let offset_only = var <= (1e-14 * spread).powi(2) * n;
    let (a, b) = if offset_only { (0.0, mr) } else {
        let a = cov / var;
        (a, mr - a * me)
    };
    let db = score(reference, residual_norm(reference, estimate, a, b));
    Ok(Rsnr { db, a, b, offset_only })
}

/// RSNR on the magnitudes of two complex images.
pub fn rsnr(reference: &[num_complex::Complex64], estimate: &[num_complex::Complex64]) -> Result<Rsnr> {
    let r: Vec<f64> = reference.iter().map(|v| v.norm()).collect();
    let e: Vec<f64> = estimate.iter().map(|v| v.norm()).collect();
    rsnr_real(&r, &e)
}

/// Independent check of [`rsnr_real`]: a `points × points` grid over
/// `(a, b)`, re-centred and narrowed around the best cell `rounds` times.
pub fn rsnr_grid_search(reference: &[f64], estimate: &[f64], points: usize, rounds: usize) -> Result<Rsnr> {
    check_pair(reference, estimate)?;
    if points < 3 {
        return Err(Error::invalid("grid search needs at least 3 points per axis"));
    }
    let n = reference.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
    };
    let (sr, se) = (std(reference), std(estimate));
    // |a*| ≤ std(ref)/std(est) and |b*| ≤ |mean ref| + |a*|·|mean est|.
    let a_half = if se > 0.0 { 2.0 * sr / se + 1e-12 } else { 1.0 };
    let b_half = 2.0 * (mean(reference).abs() + a_half * mean(estimate).abs()) + 1e-12;
    let (mut ac, mut bc, mut ah, mut bh) = (0.0, 0.0, a_half, b_half);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..rounds.max(1) {
        let step = |half: f64| 2.0 * half / (points - 1) as f64;
        let (da, db) = (step(ah), step(bh));
        for i in 0..points {
            let a = ac - ah + i as f64 * da;
            for j in 0..points {
                let b = bc - bh + j as f64 * db;
                let res = residual_norm(reference, estimate, a, b);
                if res < best.0 {
                    best = (res, a, b);
                }
            }
        }
        (ac, bc, ah, bh) = (best.1, best.2, 2.0 * da, 2.0 * db);
    }
    Ok(Rsnr {
        db: score(reference, best.0),
        a: best.1,
        b: best.2,
        offset_only: se == 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_frame: Vec<Rsnr>,
    pub mean_db: f64,
}

/// Frame-by-frame RSNR of `estimate` against `truth`.
pub fn evaluate_series(truth: &FrameSeries, estimate: &FrameSeries) -> Result<MetricReport> {
    if truth.n_image != estimate.n_image || truth.len() != estimate.len() {
        return Err(Error::shape(format!(
            "truth is {} frames of {}², estimate {} frames of {}²",
            truth.len(),
            truth.n_image,
            estimate.len(),
            estimate.n_image
        )));
    }
    let per_frame = truth
        .frames
        .iter()
        .zip(&estimate.frames)
        .map(|(t, e)| rsnr(t, e))
        .collect::<Result<Vec<_>>>()?;
    let mean_db = per_frame.iter().map(|r| r.db).sum::<f64>() / per_frame.len().max(1) as f64;
    Ok(MetricReport { per_frame, mean_db })
}

/// `K × n_image` magnitude image: row `t` holds column `column` of frame `t`.
pub fn cross_section(series: &FrameSeries, column: usize) -> Result<Vec<f64>> {
    let n = series.n_image;
    if column >= n {
        return Err(Error::invalid(format!("column {column} outside 0..{n}")));
    }
    Ok(series
        .frames
        .iter()
        .flat_map(|f| (0..n).map(move |r| f[r * n + column].norm()))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalStd {
    pub map: Vec<f64>,
    pub mean: f64,
}

/// Population standard deviation of each pixel's magnitude over time.
pub fn temporal_std(series: &FrameSeries) -> Result<TemporalStd> {
    let k = series.len();
    if k < 2 {
        return Err(Error::invalid(format!("temporal std needs at least 2 frames, got {k}")));
    }
    let px = series.n_image * series.n_image;
    let map: Vec<f64> = (0..px)
        .map(|i| {
            let mags: Vec<f64> = series.frames.iter().map(|f| f[i].norm()).collect();
            let m = mags.iter().sum::<f64>() / k as f64;
            (mags.iter().map(|v| (v - m).powi(2)).sum::<f64>() / k as f64).sqrt()
        })
        .collect();
    let mean = map.iter().sum::<f64>() / px as f64;
    Ok(TemporalStd { map, mean })
}

/// `Σ | |a| − |b| | / Σ |b|` over every pixel of every frame.
pub fn relative_magnitude_deviation(a: &FrameSeries, b: &FrameSeries) -> Result<f64> {
    if a.n_image != b.n_image || a.len() != b.len() {
        return Err(Error::shape("series differ in size or length"));
    }
    let (mut diff, mut base) = (0.0, 0.0);
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (x, y) in fa.iter().zip(fb) {
            diff += (x.norm() - y.norm()).abs();
            base += y.norm();
        }
    }
    if base == 0.0 {
        return Err(Error::invalid("reference series is identically zero"));
    }
    Ok(diff / base)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub report: MetricReport,
    pub seconds: f64,
}

/// Trains one model per latent side length under an otherwise shared
/// protocol and scores its frames. The generator keeps the base channel
/// count and gains or loses upsampling stages so that its output matches
/// the truth grid. Cells run on up to `threads` threads; each is
/// deterministic on its own.
pub fn sweep_latent_size(
    sizes: &[usize],
    stream: &SpokeStream,
    coils: &CoilMaps,
    truth: &FrameSeries,
    base: &DipConfig,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    let configs = sizes
        .iter()
        .map(|&size| {
            let generator = GeneratorConfig {
                latent_ch: base.generator.latent_ch,
                ..GeneratorConfig::for_output(size, truth.n_image, base.generator.channels)?
            };
            Ok(DipConfig {
                generator,
                ..base.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let run = |cfg: &DipConfig| -> Result<SweepRow> {
        let start = Instant::now();
        let (_, result) = dip_reconstruct(stream, coils, cfg)?;
        Ok(SweepRow {
            size: cfg.generator.latent_hw,
            report: evaluate_series(truth, &result.series)?,
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    let threads = threads.clamp(1, configs.len().max(1));
    if threads == 1 {
        return configs.iter().map(run).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<SweepRow>>> = configs.iter().map(|_| None).collect();
    let done = Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let row = run(cfg);
                done.lock().expect("sweep worker panicked")[i] = Some(row);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every cell ran")).collect()
}

/// Aligned text table: latent size, mean RSNR, worst and best frame.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{:>9}  {:>10}  {:>10}  {:>10}  {:>8}\n", "latent", "mean dB", "min dB", "max dB", "time s");
    for r in rows {
        let (lo, hi) = frame_range(&r.report);
        out.push_str(&format!(
            "{:>9}  {:>10.2}  {:>10.2}  {:>10.2}  {:>8.1}\n",
            format!("{0}x{0}", r.size),
            r.report.mean_db,
            lo,
            hi,
            r.seconds
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("latent_size,mean_db,min_db,max_db,seconds\n");
    for r in rows {
        let (lo, hi) = frame_range(&r.report);
        out.push_str(&format!("{},{},{},{},{}\n", r.size, r.report.mean_db, lo, hi, r.seconds));
    }
    out
}

fn frame_range(report: &MetricReport) -> (f64, f64) {
    report
        .per_frame
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.db), hi.max(r.db)))
}

/// Per-frame table with the fitted affine coefficients.
pub fn report_table(report: &MetricReport) -> String {
    let mut out = format!("{:>5}  {:>9}  {:>10}  {:>10}\n", "frame", "rsnr dB", "a", "b");
    for (k, r) in report.per_frame.iter().enumerate() {
        let flag = if r.offset_only { "  offset-only" } else { "" };
        out.push_str(&format!("{k:>5}  {:>9.2}  {:>10.4}  {:>10.4}{flag}\n", r.db, r.a, r.b));
    }
    out.push_str(&format!("{:>5}  {:>9.2}\n", "mean", report.mean_db));
    out
}

pub fn report_csv(report: &MetricReport) -> String {
    let mut out = String::from("frame,rsnr_db,a,b,offset_only\n");
    for (k, r) in report.per_frame.iter().enumerate() {
        out.push_str(&format!("{k},{},{},{},{}\n", r.db, r.a, r.b, r.offset_only));
    }
    out
}
