use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tv::tv1d_prox;
use super::{prepare, ReconResult};
use crate::error::{Error, Result};
use crate::forward::{CoilMaps, SpokeStream, SystemOperator, SystemWindow};
use crate::phantom::FrameSeries;

#[derive(Clone, Debug, PartialEq)]
pub struct CsConfig {
    pub lambda: f64,
    pub iterations: usize,
    /// FISTA momentum; plain proximal gradient when off.
    pub accelerated: bool,
    pub power_iterations: usize,
    /// Multiplies the estimated Lipschitz constant.
    pub safety: f64,
    /// Consecutive objective increases tolerated before aborting.
    pub patience: usize,
    pub seed: u64,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self {
            lambda: 200.0,
            iterations: 150,
            accelerated: true,
            power_iterations: 20,
            safety: 1.05,
            patience: 50,
            seed: 0,
        }
    }
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("CS needs at least one iteration"));
        }
        if self.power_iterations == 0 || !(self.safety >= 1.0) {
            return Err(Error::invalid("power iterations must be positive and safety at least 1"));
        }
        Ok(())
    }

    pub fn describe(&self, n: usize) -> String {
        format!(
            "method = \"cs\"\nn = {n}\nlambda = {}\niterations = {}\naccelerated = {}\npower_iterations = {}\nsafety = {}\npatience = {}\nseed = {}\n",
            self.lambda, self.iterations, self.accelerated, self.power_iterations, self.safety, self.patience, self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsOutcome {
    pub result: ReconResult,
    /// Full objective after each iteration.
    pub objective: Vec<f64>,
    pub lipschitz: f64,
    pub bins: Vec<Vec<usize>>,
    /// Bin solved for each output frame.
    pub frame_bin: Vec<usize>,
}

/// Disjoint spoke bins: the stream's own frames when it has several spokes
/// per frame, otherwise consecutive runs of `n` spokes with the remainder
/// folded into the last bin.
pub fn cs_bins(stream: &SpokeStream, n: usize) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("bin size must be positive"));
    }
    let k = stream.len();
    if stream.spokes_per_frame > 1 {
        let s = stream.spokes_per_frame;
        let bins = (0..stream.frame_count()).map(|f| (f * s..(f + 1) * s).collect()).collect();
        return Ok((bins, (0..stream.frame_count()).collect()));
    }
    if n > k {
        return Err(Error::invalid(format!("bin of {n} spokes exceeds the {k} available")));
    }
    let count = k / n;
    let bins = (0..count)
        .map(|f| {
            let end = if f + 1 == count { k } else { (f + 1) * n };
            (f * n..end).collect()
        })
        .collect();
    let frame_bin = (0..k).map(|i| (i / n).min(count - 1)).collect();
    Ok((bins, frame_bin))
}

struct Problem {
    ops: Vec<SystemOperator>,
    data: Vec<Vec<Vec<Complex64>>>,
    px: usize,
}

impl Problem {
    fn residual(&self, x: &[Vec<Complex64>]) -> Result<Vec<Vec<Vec<Complex64>>>> {
        self.ops
            .iter()
            .zip(x)
            .zip(&self.data)
            .map(|((op, xf), yf)| {
                let mut r = op.apply(xf)?;
                for (rc, yc) in r.iter_mut().zip(yf) {
                    rc.iter_mut().zip(yc).for_each(|(a, b)| *a -= b);
                }
                Ok(r)
            })
            .collect()
    }

    fn fidelity(r: &[Vec<Vec<Complex64>>]) -> f64 {
        r.iter().flatten().flatten().map(|v| v.norm_sqr()).sum()
    }

    /// `2 Aᴴ r`, bin by bin.
    fn gradient(&self, r: &[Vec<Vec<Complex64>>]) -> Result<Vec<Vec<Complex64>>> {
        self.ops
            .iter()
            .zip(r)
            .map(|(op, rf)| Ok(op.adjoint(rf)?.into_iter().map(|v| 2.0 * v).collect()))
            .collect()
    }

    /// Largest eigenvalue of `2 AᴴA` over all bins, by power iteration.
    fn lipschitz(&self, iterations: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for op in &self.ops {
            let mut v: Vec<Complex64> = (0..self.px)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut estimate = 0.0;
            for _ in 0..iterations {
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                v.iter_mut().for_each(|z| *z /= norm);
                let w = op.adjoint(&op.apply(&v)?)?;
                estimate = w.iter().zip(&v).map(|(a, b)| (b.conj() * a).re).sum::<f64>();
                v = w;
            }
            best = best.max(2.0 * estimate);
        }
        Ok(best)
    }
}

fn tv_norm(x: &[Vec<Complex64>]) -> f64 {
    x.windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (b.re - a.re).abs() + (b.im - a.im).abs())
                .sum::<f64>()
        })
        .sum()
}

/// Per-pixel temporal TV prox on the real and imaginary parts.
fn prox_frames(z: &mut [Vec<Complex64>], threshold: f64) {
    let frames = z.len();
    if frames < 2 || threshold == 0.0 {
        return;
    }
    let px = z[0].len();
    let (mut line, mut out) = (vec![0.0; frames], vec![0.0; frames]);
    for i in 0..px {
        for part in 0..2 {
            let get = |v: &Complex64| if part == 0 { v.re } else { v.im };
            for f in 0..frames {
                line[f] = get(&z[f][i]);
            }
            tv1d_prox(&line, threshold, &mut out);
            for f in 0..frames {
                if part == 0 {
                    z[f][i].re = out[f];
                } else {
                    z[f][i].im = out[f];
                }
            }
        }
    }
}

/// Temporal-TV regularized least squares over disjoint spoke bins, solved
/// by proximal gradient with step `1/L`.
pub fn cs_reconstruct(stream: &SpokeStream, coils: &CoilMaps, n: usize, cfg: &CsConfig) -> Result<CsOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let ctx = prepare(stream, coils)?;
    let (bins, frame_bin) = cs_bins(stream, n)?;
    let coil_maps = Arc::new(coils.clone());
    let px = coils.n_image * coils.n_image;
    let mut ops = Vec::with_capacity(bins.len());
    let mut data = Vec::with_capacity(bins.len());
    for (f, members) in bins.iter().enumerate() {
        let window = SystemWindow::new(f, members.clone(), &stream.trajectory);
        ops.push(SystemOperator::new(&window, coil_maps.clone(), ctx.clone())?);
        data.push((0..coils.count()).map(|c| stream.gather(members, c)).collect());
    }
    let problem = Problem { ops, data, px };
    let lipschitz = problem.lipschitz(cfg.power_iterations, cfg.seed)? * cfg.safety;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid(format!("degenerate Lipschitz estimate {lipschitz}")));
    }
    let step = 1.0 / lipschitz;

    let zero = vec![vec![Complex64::new(0.0, 0.0); px]; bins.len()];
    let mut x = zero.clone();
    let mut y = zero;
    let mut t = 1.0f64;
    let mut r_x = problem.residual(&x)?;
    let mut previous = Problem::fidelity(&r_x);
    let mut increases = 0;
    let mut loss_trace = Vec::with_capacity(cfg.iterations);
    let mut objective = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (point, r_point) = if cfg.accelerated {
            let r = problem.residual(&y)?;
            (&y, r)
        } else {
            (&x, std::mem::take(&mut r_x))
        };
        let grad = problem.gradient(&r_point)?;
        let mut next: Vec<Vec<Complex64>> = point
            .iter()
            .zip(&grad)
            .map(|(p, g)| p.iter().zip(g).map(|(a, b)| a - step * b).collect())
            .collect();
        prox_frames(&mut next, cfg.lambda * step);
        r_x = problem.residual(&next)?;
        let fid = Problem::fidelity(&r_x);
        let obj = fid + cfg.lambda * tv_norm(&next);
        if !obj.is_finite() {
            return Err(Error::NonFinite {
                iteration: it as u64 + 1,
                name: "cs objective".into(),
            });
        }
        increases = if obj > previous { increases + 1 } else { 0 };
        if increases >= cfg.patience {
            return Err(Error::Diverged {
                iteration: it + 1,
                reason: format!("objective rose for {increases} consecutive iterations"),
            });
        }
        previous = obj;
        loss_trace.push(fid);
        objective.push(obj);
        if cfg.accelerated {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let momentum = (t - 1.0) / t_next;
            y = next
                .iter()
                .zip(&x)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + momentum * (u - v)).collect())
                .collect();
            t = t_next;
        }
        x = next;
    }
    let frames = frame_bin.iter().map(|&b| x[b].clone()).collect();
    let result = ReconResult {
        method: "cs".into(),
        series: FrameSeries::new(coils.n_image, frames)?,
        loss_trace,
        config: cfg.describe(n),
        seeds: vec![("cs.power".into(), cfg.seed)],
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok(CsOutcome {
        result,
        objective,
        lipschitz,
        bins,
        frame_bin,
    })
}
