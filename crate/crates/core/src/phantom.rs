//! Analytic cine phantom, synthetic coil maps and k-space simulation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::forward::{
    spoke_angle, CoilMaps, GridContext, Spoke, SpokeStream, SystemOperator, SystemWindow,
    TrajectoryConfig,
};

/// A sequence of complex `n_image × n_image` frames, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeries {
    pub n_image: usize,
    pub dt: f64,
    pub frames: Vec<Vec<Complex64>>,
}

impl FrameSeries {
    pub fn new(n_image: usize, frames: Vec<Vec<Complex64>>) -> Result<Self> {
        let series = Self {
            n_image,
            dt: 1.0,
            frames,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn zeros(n_image: usize, count: usize) -> Self {
        Self {
            n_image,
            dt: 1.0,
            frames: vec![vec![Complex64::new(0.0, 0.0); n_image * n_image]; count],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::invalid("a frame series needs at least one frame"));
        }
        let px = self.n_image * self.n_image;
        for (k, f) in self.frames.iter().enumerate() {
            if f.len() != px {
                return Err(Error::shape(format!("frame {k} has {} pixels, expected {px}", f.len())));
            }
            if f.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::invalid(format!("frame {k} is not finite")));
            }
        }
        Ok(())
    }

    pub fn magnitude(&self, k: usize) -> Vec<f64> {
        self.frames[k].iter().map(|v| v.norm()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    pub value: f64,
}

/// Geometry is in normalized units: the field of view spans `[-1, 1)` on
/// both axes, `x` along columns and `y` along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomConfig {
    pub n_image: usize,
    pub frames: usize,
    pub heart_center: [f64; 2],
    pub outer_radius: f64,
    pub inner_radius: f64,
    /// Fractional change of the inner radius at full contraction.
    pub depth: f64,
    pub beats: f64,
    /// Peak phase excursion of the beat, in radians.
    pub jitter: f64,
    pub blood: f64,
    pub myocardium: f64,
    pub background: Vec<Ellipse>,
    /// Peak magnitude of the smooth phase map, in units of π.
    pub phase_roll: f64,
    /// Edge transition width in pixels.
    pub edge: f64,
    pub noise_sigma: f64,
}

impl PhantomConfig {
    pub fn desk() -> Self {
        Self {
            n_image: 64,
            frames: 20,
            heart_center: [0.12, -0.08],
            outer_radius: 0.42,
            inner_radius: 0.3,
            depth: 0.4,
            beats: 2.0,
            jitter: 0.0,
            blood: 1.0,
            myocardium: 0.45,
            background: vec![
                Ellipse {
                    center: [0.0, 0.0],
                    axes: [0.92, 0.78],
                    value: 0.25,
                },
                Ellipse {
                    center: [-0.5, 0.1],
                    axes: [0.22, 0.4],
                    value: -0.15,
                },
                Ellipse {
                    center: [0.05, 0.55],
                    axes: [0.3, 0.1],
                    value: 0.35,
                },
            ],
            phase_roll: 0.4,
            edge: 1.5,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_image < 2 || self.n_image % 2 != 0 {
            return Err(Error::invalid(format!("image side must be even, got {}", self.n_image)));
        }
        if self.frames == 0 {
            return Err(Error::invalid("phantom needs at least one frame"));
        }
        if !(self.depth >= 0.0 && self.depth < 1.0) {
            return Err(Error::invalid(format!("contraction depth {} outside [0, 1)", self.depth)));
        }
        if !(self.inner_radius > 0.0 && self.outer_radius > self.inner_radius) {
            return Err(Error::invalid(format!(
                "radii must satisfy 0 < inner ({}) < outer ({})",
                self.inner_radius, self.outer_radius
            )));
        }
        if self.jitter < 0.0 || (self.jitter > 0.0 && self.jitter >= self.depth) {
            return Err(Error::invalid(format!(
                "jitter {} must be below the contraction depth {}",
                self.jitter, self.depth
            )));
        }
        if self.background.iter().any(|e| !(e.axes[0] > 0.0 && e.axes[1] > 0.0)) {
            return Err(Error::invalid("background ellipse axes must be positive"));
        }
        if !(self.edge > 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("edge width must be positive and noise non-negative"));
        }
        Ok(())
    }

    /// Cycle-to-cycle irregularity: a slow phase wander that breaks exact
    /// periodicity.
    fn jitter_at(&self, t: f64) -> f64 {
        let u = t / self.frames as f64;
        self.jitter * ((2.0 * PI * 0.71 * u + 0.4).sin() + 0.5 * (2.0 * PI * 1.93 * u).sin()) / 1.5
    }

    /// Inner radius of the ring at time `t`.
    pub fn inner_radius_at(&self, t: f64) -> f64 {
        let phase = 2.0 * PI * self.beats * t / self.frames as f64 + self.jitter_at(t);
        self.inner_radius * (1.0 - self.depth * (0.5 + 0.5 * phase.cos()))
    }

    fn coords(&self, i: usize) -> (f64, f64) {
        let half = (self.n_image / 2) as f64;
        let (r, c) = (i / self.n_image, i % self.n_image);
        ((c as f64 - half) / half, (r as f64 - half) / half)
    }

    /// Frame at any real `t`.
    pub fn frame_at(&self, t: f64) -> Vec<Complex64> {
        let w = self.edge * 2.0 / self.n_image as f64;
        let inner = self.inner_radius_at(t);
        (0..self.n_image * self.n_image)
            .map(|i| {
                let (x, y) = self.coords(i);
                let bg: f64 = self
                    .background
                    .iter()
                    .map(|e| {
                        let (dx, dy) = ((x - e.center[0]) / e.axes[0], (y - e.center[1]) / e.axes[1]);
                        let rho = (dx * dx + dy * dy).sqrt();
                        e.value * soft_inside((rho - 1.0) * e.axes[0].min(e.axes[1]), w)
                    })
                    .sum();
                let d = ((x - self.heart_center[0]).powi(2) + (y - self.heart_center[1]).powi(2)).sqrt();
                let outer = soft_inside(d - self.outer_radius, w);
                let pool = soft_inside(d - inner, w);
                let mag = bg * (1.0 - outer) + self.myocardium * (outer - pool) + self.blood * pool;
                let phi = self.phase_roll * PI * (0.35 * x - 0.25 * y + 0.2 * (x * x - y * y));
                Complex64::from_polar(mag, phi)
            })
            .collect()
    }
}

/// Smoothstep indicator of `d < 0` over a transition of width `w`.
fn soft_inside(d: f64, w: f64) -> f64 {
    let s = (0.5 - d / w).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Frames at `t = 0, 1, …, K-1`.
pub fn make_cine_phantom(cfg: &PhantomConfig) -> Result<FrameSeries> {
    cfg.validate()?;
    FrameSeries::new(
        cfg.n_image,
        (0..cfg.frames).map(|k| cfg.frame_at(k as f64)).collect(),
    )
}

/// Gaussian bumps centred just outside the field of view at evenly spaced
/// angles, each with a gentle linear phase ramp. One coil gives all ones.
pub fn make_coil_maps(count: usize, n_image: usize, seed: u64) -> Result<CoilMaps> {
    if count == 0 {
        return Err(Error::invalid("need at least one coil"));
    }
    if n_image == 0 {
        return Err(Error::invalid("image side must be positive"));
    }
    if count == 1 {
        return Ok(CoilMaps::unit(n_image));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0.0..2.0 * PI / count as f64);
    let spread = 0.85;
    let half = (n_image / 2) as f64;
    let maps = (0..count)
        .map(|c| {
            let a = offset + 2.0 * PI * c as f64 / count as f64;
            let centre = [1.1 * a.cos(), 1.1 * a.sin()];
            let ramp = [rng.random_range(-0.5..0.5) * PI, rng.random_range(-0.5..0.5) * PI];
            let phase0 = rng.random_range(-PI..PI);
            (0..n_image * n_image)
                .map(|i| {
                    let x = ((i % n_image) as f64 - half) / half;
                    let y = ((i / n_image) as f64 - half) / half;
                    let d2 = (x - centre[0]).powi(2) + (y - centre[1]).powi(2);
                    let mag = (-d2 / (2.0 * spread * spread)).exp();
                    Complex64::from_polar(mag, phase0 + ramp[0] * x + ramp[1] * y)
                })
                .collect()
        })
        .collect();
    Ok(CoilMaps { n_image, maps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimulationMode {
    /// One spoke per frame index; spoke `k` sees frame `k`.
    Continuous,
    /// Frame `p` is held still while its `spokes_per_phase` spokes are read.
    Retrospective { spokes_per_phase: usize },
}

/// Golden-angle spokes of `series` for every coil, plus complex white noise
/// of standard deviation `sigma` per sample.
pub fn simulate_stream(
    series: &FrameSeries,
    traj: &TrajectoryConfig,
    coils: Arc<CoilMaps>,
    ctx: Arc<GridContext>,
    sigma: f64,
    mode: SimulationMode,
    seed: u64,
) -> Result<SpokeStream> {
    series.validate()?;
    traj.validate()?;
    if series.n_image != traj.n_image || coils.n_image != traj.n_image {
        return Err(Error::shape(format!(
            "series {}², coils {}², trajectory {}² disagree",
            series.n_image, coils.n_image, traj.n_image
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be non-negative, got {sigma}")));
    }
    let per_frame = match mode {
        SimulationMode::Continuous => 1,
        SimulationMode::Retrospective { spokes_per_phase } if spokes_per_phase > 0 => spokes_per_phase,
        SimulationMode::Retrospective { .. } => {
            return Err(Error::invalid("spokes per phase must be positive"))
        }
    };
    let noise = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma / 2f64.sqrt()).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spokes = Vec::with_capacity(series.len() * per_frame);
    for (p, frame) in series.frames.iter().enumerate() {
        for s in 0..per_frame {
            let k = p * per_frame + s;
            let window = SystemWindow::new(k, vec![k], traj);
            let op = SystemOperator::new(&window, coils.clone(), ctx.clone())?;
            let mut samples: Vec<Complex64> = op.apply(frame)?.into_iter().flatten().collect();
            if let Some(dist) = &noise {
                for v in &mut samples {
                    *v += Complex64::new(rng.sample(dist), rng.sample(dist));
                }
            }
            spokes.push(Spoke {
                index: k,
                angle: spoke_angle(k, traj),
                samples,
            });
        }
    }
    Ok(SpokeStream {
        trajectory: traj.clone(),
        coils: coils.count(),
        spokes_per_frame: per_frame,
        spokes,
    })
}
