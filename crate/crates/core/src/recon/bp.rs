use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use super::{prepare, ReconResult};
use crate::error::Result;
use crate::forward::{density_weights, CoilMaps, GridContext, SpokeStream, SystemOperator, SystemWindow};
use crate::phantom::FrameSeries;

/// Ramp-weighted adjoint over one window, coil-combined as
/// `Σ conj(C_c)·b_c / Σ |C_c|²`.
pub(crate) fn backproject(
    stream: &SpokeStream,
    window: &SystemWindow,
    coils: &Arc<CoilMaps>,
    ctx: &Arc<GridContext>,
) -> Result<Vec<Complex64>> {
    let op = SystemOperator::new(window, coils.clone(), ctx.clone())?;
    let weights = density_weights(&stream.trajectory);
    let y: Vec<Vec<Complex64>> = (0..coils.count())
        .map(|c| {
            let mut v = stream.gather(&window.members, c);
            for (s, w) in v.iter_mut().zip(weights.iter().cycle()) {
                *s *= w;
            }
            v
        })
        .collect();
    let mut x = op.adjoint(&y)?;
    let norm: Vec<f64> = coils.rss().iter().map(|r| r * r).collect();
    for (v, s) in x.iter_mut().zip(&norm) {
        *v /= s.max(1e-12);
    }
    Ok(x)
}

/// One backprojected frame per frame index, each from its `n`-spoke window.
pub fn bp_reconstruct(stream: &SpokeStream, coils: &CoilMaps, n: usize) -> Result<ReconResult> {
    let start = Instant::now();
    let ctx = prepare(stream, coils)?;
    let coils = Arc::new(coils.clone());
    let frames = (0..stream.frame_count())
        .map(|k| backproject(stream, &stream.frame_window(k, n)?, &coils, &ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconResult {
        method: "bp".into(),
        series: FrameSeries::new(coils.n_image, frames)?,
        loss_trace: Vec::new(),
        config: format!("method = \"bp\"\nn = {n}\n"),
        seeds: Vec::new(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Backprojection of every spoke at once: a static image, repeated for each
/// frame index so it can be scored like the dynamic methods.
pub fn ov_reconstruct(stream: &SpokeStream, coils: &CoilMaps) -> Result<ReconResult> {
    let start = Instant::now();
    let ctx = prepare(stream, coils)?;
    let coils = Arc::new(coils.clone());
    let window = SystemWindow::new(0, (0..stream.len()).collect(), &stream.trajectory);
    let image = backproject(stream, &window, &coils, &ctx)?;
    Ok(ReconResult {
        method: "ov".into(),
        series: FrameSeries::new(coils.n_image, vec![image; stream.frame_count()])?,
        loss_trace: Vec::new(),
        config: "method = \"ov\"\n".into(),
        seeds: Vec::new(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}
