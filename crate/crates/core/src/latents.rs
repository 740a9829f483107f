//! Latent inputs of the generator over time.
//!
//! A schedule holds `A` random anchor images placed at equi-spaced times
//! over `[0, K-1]`; the latent at time `t` is the linear blend of the two
//! anchors around it. Two anchors give the plain endpoint interpolation,
//! more anchors give the chunked schedule used for acyclic motion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LatentAnchors {
    pub anchors: Vec<Tensor>,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("length from shape")
}

/// `count` independent `U[lo, hi)` latent images of the given shape.
pub fn sample_anchors(count: usize, shape: &[usize], lo: f64, hi: f64, seed: u64) -> Result<LatentAnchors> {
    if count < 2 {
        return Err(Error::invalid(format!("need at least two anchors, got {count}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("latent range [{lo}, {hi}) is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = (0..count).map(|_| uniform_tensor(&mut rng, shape, lo, hi)).collect();
    Ok(LatentAnchors {
        anchors,
        lo,
        hi,
        seed,
    })
}

/// Piecewise-linear map `t ↦ z_t` over `[0, frames - 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSchedule {
    pub anchors: LatentAnchors,
    pub frames: usize,
    times: Vec<f64>,
}

impl LatentSchedule {
    pub fn new(anchors: LatentAnchors, frames: usize) -> Result<Self> {
        if anchors.anchors.len() < 2 {
            return Err(Error::invalid("a schedule needs at least two anchors"));
        }
        if frames < 2 {
            return Err(Error::invalid(format!("a schedule needs at least two frames, got {frames}")));
        }
        let shape = anchors.anchors[0].shape();
        if anchors.anchors.iter().any(|a| a.shape() != shape) {
            return Err(Error::shape("anchors differ in shape"));
        }
        let count = anchors.anchors.len();
        let times = (0..count).map(|i| anchor_time(i, count, frames)).collect();
        Ok(Self {
            anchors,
            frames,
            times,
        })
    }

    pub fn anchor_times(&self) -> &[f64] {
        &self.times
    }

    pub fn end_time(&self) -> f64 {
        (self.frames - 1) as f64
    }

    pub fn latent_shape(&self) -> &[usize] {
        self.anchors.anchors[0].shape()
    }

    /// Chunk index and blend weight for `t`, without range checks.
    fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.times.len() - 2;
        let chunk = self.times[1..=last].iter().take_while(|&&b| b <= t).count();
        let (t0, t1) = (self.times[chunk], self.times[chunk + 1]);
        (chunk, (t - t0) / (t1 - t0))
    }

    fn blend(&self, chunk: usize, alpha: f64) -> Tensor {
        let a = &self.anchors.anchors[chunk];
        let b = &self.anchors.anchors[chunk + 1];
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (1.0 - alpha) * x + alpha * y)
            .collect();
        Tensor::new(a.shape().to_vec(), data).expect("anchor shape")
    }

    /// Latent at time `t ∈ [0, K-1]`, fractional `t` included.
    pub fn latent_at(&self, t: f64) -> Result<Tensor> {
        if !(t >= 0.0 && t <= self.end_time()) {
            return Err(Error::invalid(format!(
                "time {t} outside the schedule range [0, {}]",
                self.end_time()
            )));
        }
        let (chunk, alpha) = self.locate(t);
        Ok(self.blend(chunk, alpha))
    }

    /// Linear continuation past either end using the nearest segment's slope.
    pub fn extrapolate(&self, t: f64) -> Result<Tensor> {
        if !t.is_finite() {
            return Err(Error::invalid("extrapolation time must be finite"));
        }
        if t > self.end_time() {
            let chunk = self.times.len() - 2;
            let alpha = (t - self.times[chunk]) / (self.times[chunk + 1] - self.times[chunk]);
            Ok(self.blend(chunk, alpha))
        } else if t < 0.0 {
            Ok(self.blend(0, t / self.times[1]))
        } else {
            self.latent_at(t)
        }
    }
}

fn anchor_time(i: usize, count: usize, frames: usize) -> f64 {
    if i + 1 == count {
        (frames - 1) as f64
    } else {
        i as f64 * (frames - 1) as f64 / (count - 1) as f64
    }
}

/// Anchor count for a schedule of `segments` linear pieces.
pub fn anchors_for_segments(segments: usize) -> usize {
    segments + 1
}

/// Latent manipulations applied at inference (and the per-frame control
/// used in training ablations).
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioKind {
    /// Times `0, step, 2·step, …` up to `K-1`.
    FineInterpolation { step: f64 },
    /// Times from `K-1` to `K-1 + extra` in unit steps, continued linearly.
    Extrapolation { extra: usize },
    /// Fresh anchors of the same shape and range, unrelated to training.
    FreshRandom,
    /// Uniform noise added at each integer frame with
    /// `‖δ‖² / ‖z‖² = energy_ratio`.
    Perturbed { energy_ratio: f64 },
    /// One latent value per frame, interpolated between two scalars.
    Scalar,
    /// Independent draws for every integer frame.
    IndependentPerFrame,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "fine-interpolation" | "fine" => ScenarioKind::FineInterpolation { step: 0.5 },
            "extrapolation" => ScenarioKind::Extrapolation { extra: 5 },
            "fresh-random" | "fresh" => ScenarioKind::FreshRandom,
            "perturbed" => ScenarioKind::Perturbed { energy_ratio: 0.10 },
            "scalar" => ScenarioKind::Scalar,
            "independent-per-frame" | "independent" => ScenarioKind::IndependentPerFrame,
            other => {
                return Err(Error::invalid(format!(
                    "unknown scenario `{other}` (expected fine-interpolation, extrapolation, \
                     fresh-random, perturbed, scalar, independent-per-frame)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::FineInterpolation { .. } => "fine-interpolation",
            ScenarioKind::Extrapolation { .. } => "extrapolation",
            ScenarioKind::FreshRandom => "fresh-random",
            ScenarioKind::Perturbed { .. } => "perturbed",
            ScenarioKind::Scalar => "scalar",
            ScenarioKind::IndependentPerFrame => "independent-per-frame",
        }
    }
}

/// A latent paired with the time it stands for.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedLatent {
    pub t: f64,
    pub z: Tensor,
}

/// Builds the latent sequence of a scenario from a trained schedule.
pub fn scenario_latents(kind: &ScenarioKind, schedule: &LatentSchedule, seed: u64) -> Result<Vec<TimedLatent>> {
    let frames = schedule.frames;
    let end = schedule.end_time();
    let integer_times = || (0..frames).map(|k| k as f64);
    let lo = schedule.anchors.lo;
    let hi = schedule.anchors.hi;
    let shape = schedule.latent_shape().to_vec();
    match kind {
        ScenarioKind::FineInterpolation { step } => {
            if !(*step > 0.0) {
                return Err(Error::invalid(format!("interpolation step must be positive, got {step}")));
            }
            let count = (end / step).floor() as usize;
            (0..=count)
                .map(|i| {
                    let t = (i as f64 * step).min(end);
                    Ok(TimedLatent { t, z: schedule.latent_at(t)? })
                })
                .collect()
        }
        ScenarioKind::Extrapolation { extra } => (0..=*extra)
            .map(|i| {
                let t = end + i as f64;
                Ok(TimedLatent { t, z: schedule.extrapolate(t)? })
            })
            .collect(),
        ScenarioKind::FreshRandom => {
            let anchors = sample_anchors(schedule.anchors.anchors.len(), &shape, lo, hi, seed)?;
            let fresh = LatentSchedule::new(anchors, frames)?;
            integer_times()
                .map(|t| Ok(TimedLatent { t, z: fresh.latent_at(t)? }))
                .collect()
        }
        ScenarioKind::Perturbed { energy_ratio } => {
            if !(*energy_ratio >= 0.0) {
                return Err(Error::invalid("perturbation energy ratio must be non-negative"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            integer_times()
                .map(|t| {
                    let z = schedule.latent_at(t)?;
                    let noise = uniform_tensor(&mut rng, &shape, -1.0, 1.0);
                    let noise_sq = noise.norm_sq();
                    let scale = if noise_sq > 0.0 {
                        (energy_ratio * z.norm_sq() / noise_sq).sqrt()
                    } else {
                        0.0
                    };
                    let data = z
                        .data()
                        .iter()
                        .zip(noise.data())
                        .map(|(a, b)| a + scale * b)
                        .collect();
                    Ok(TimedLatent { t, z: Tensor::new(shape.clone(), data)? })
                })
                .collect()
        }
        ScenarioKind::Scalar => {
            let mut scalar_shape = shape.clone();
            let n = scalar_shape.len();
            scalar_shape[n - 2..].fill(1);
            let anchors = sample_anchors(2, &scalar_shape, lo, hi, seed)?;
            let scalar = LatentSchedule::new(anchors, frames)?;
            integer_times()
                .map(|t| Ok(TimedLatent { t, z: scalar.latent_at(t)? }))
                .collect()
        }
        ScenarioKind::IndependentPerFrame => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(integer_times()
                .map(|t| TimedLatent { t, z: uniform_tensor(&mut rng, &shape, lo, hi) })
                .collect())
        }
    }
}

/// Repeats a `[ch, 1, 1]` latent over a `[ch, h, w]` grid.
pub fn broadcast_spatial(z: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let [ch, 1, 1] = z.shape()[..] else {
        return Err(Error::shape(format!("expected a [ch, 1, 1] latent, got {:?}", z.shape())));
    };
    let [ch2, h, w] = shape[..] else {
        return Err(Error::shape(format!("target latent shape {shape:?} is not [ch, h, w]")));
    };
    if ch != ch2 {
        return Err(Error::shape(format!("latent has {ch} channels, target {ch2}")));
    }
    let data = z.data().iter().flat_map(|&v| std::iter::repeat_n(v, h * w)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Lag-1 autocorrelation of a latent sequence, pooled over all entries.
pub fn lag1_correlation(seq: &[Tensor]) -> f64 {
    let values: Vec<&[f64]> = seq.iter().map(Tensor::data).collect();
    let count = values.iter().map(|v| v.len()).sum::<usize>() as f64;
    let mean = values.iter().flat_map(|v| v.iter()).sum::<f64>() / count;
    let var: f64 = values.iter().flat_map(|v| v.iter()).map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = values
        .windows(2)
        .map(|w| w[0].iter().zip(w[1]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>())
        .sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(count: usize, frames: usize) -> LatentSchedule {
        let anchors = sample_anchors(count, &[1, 4, 4], 0.0, 0.1, 5).unwrap();
        LatentSchedule::new(anchors, frames).unwrap()
    }

    #[test]
    fn broadcast_repeats_each_channel() {
        let z = Tensor::new(vec![2, 1, 1], vec![0.5, -1.0]).unwrap();
        let b = broadcast_spatial(&z, &[2, 2, 3]).unwrap();
        assert_eq!(b.data(), &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0]);
        assert!(broadcast_spatial(&z, &[3, 2, 2]).is_err());
        assert!(broadcast_spatial(&b, &[2, 2, 3]).is_err());
    }

    #[test]
    fn sampling_rules() {
        assert!(sample_anchors(1, &[1, 2, 2], 0.0, 1.0, 0).is_err());
        assert!(sample_anchors(2, &[1, 2, 2], 1.0, 1.0, 0).is_err());
        let a = sample_anchors(3, &[1, 8, 8], 0.0, 0.1, 9).unwrap();
        let b = sample_anchors(3, &[1, 8, 8], 0.0, 0.1, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.anchors.iter().flat_map(|t| t.data()).all(|&v| (0.0..0.1).contains(&v)));
        let fetal = sample_anchors(anchors_for_segments(14), &[1, 8, 8], 0.0, 10.0, 1).unwrap();
        assert_eq!(fetal.anchors.len(), 15);
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = schedule(2, 20);
        assert_eq!(s.latent_at(0.0).unwrap(), s.anchors.anchors[0]);
        assert_eq!(s.latent_at(19.0).unwrap(), s.anchors.anchors[1]);
        let mid = s.latent_at(9.5).unwrap();
        for ((m, a), b) in mid.data().iter().zip(s.anchors.anchors[0].data()).zip(s.anchors.anchors[1].data()) {
            assert!((m - 0.5 * (a + b)).abs() < 1e-15);
        }
        assert!(s.latent_at(-0.1).is_err());
        assert!(s.latent_at(19.5).is_err());
    }

    #[test]
    fn anchors_hit_exactly() {
        let s = schedule(6, 31);
        for (i, &t) in s.anchor_times().iter().enumerate() {
            assert_eq!(s.latent_at(t).unwrap(), s.anchors.anchors[i], "anchor {i}");
        }
    }

    #[test]
    fn continuous_across_chunk_boundaries() {
        let s = schedule(4, 31);
        for &t in &s.anchor_times()[1..3] {
            let below = s.latent_at(t - 1e-9).unwrap();
            let above = s.latent_at(t + 1e-9).unwrap();
            let diff = below.data().iter().zip(above.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-11, "jump {diff} at {t}");
        }
    }

    #[test]
    fn extrapolation_is_continuous_at_end() {
        let s = schedule(3, 20);
        let seq = scenario_latents(&ScenarioKind::Extrapolation { extra: 3 }, &s, 0).unwrap();
        assert_eq!(seq[0].t, 19.0);
        assert_eq!(seq[0].z, s.latent_at(19.0).unwrap());
        assert_eq!(seq.len(), 4);
    }

    #[test]
    fn perturbation_energy() {
        let s = schedule(2, 20);
        let clean = scenario_latents(&ScenarioKind::Perturbed { energy_ratio: 0.0 }, &s, 1).unwrap();
        for item in &clean {
            assert_eq!(item.z, s.latent_at(item.t).unwrap());
        }
        let noisy = scenario_latents(&ScenarioKind::Perturbed { energy_ratio: 0.10 }, &s, 1).unwrap();
        for item in &noisy {
            let z = s.latent_at(item.t).unwrap();
            let delta: f64 = item.z.data().iter().zip(z.data()).map(|(a, b)| (a - b).powi(2)).sum();
            let ratio = delta / z.norm_sq();
            assert!((ratio - 0.10).abs() < 0.001, "ratio {ratio}");
        }
    }

    #[test]
    fn scalar_and_fine_shapes() {
        let s = schedule(2, 10);
        let scalar = scenario_latents(&ScenarioKind::Scalar, &s, 2).unwrap();
        assert_eq!(scalar.len(), 10);
        assert_eq!(scalar[3].z.shape(), &[1, 1, 1]);
        let fine = scenario_latents(&ScenarioKind::FineInterpolation { step: 0.5 }, &s, 0).unwrap();
        assert_eq!(fine.len(), 19);
        assert_eq!(fine[1].t, 0.5);
        assert!(ScenarioKind::parse("warp").is_err());
        assert_eq!(ScenarioKind::parse("scalar").unwrap(), ScenarioKind::Scalar);
    }

    #[test]
    fn smoothness_contrast() {
        let anchors = sample_anchors(2, &[1, 8, 8], 0.0, 0.1, 3).unwrap();
        let s = LatentSchedule::new(anchors, 40).unwrap();
        let smooth: Vec<Tensor> = (0..40).map(|k| s.latent_at(k as f64).unwrap()).collect();
        let rough: Vec<Tensor> = scenario_latents(&ScenarioKind::IndependentPerFrame, &s, 4)
            .unwrap()
            .into_iter()
            .map(|l| l.z)
            .collect();
        assert!(lag1_correlation(&smooth) > 0.9);
        assert!(lag1_correlation(&rough).abs() < 0.1);
    }
}
