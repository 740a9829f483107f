use std::sync::Arc;

use num_complex::Complex64;

use super::nufft::{GridContext, Nufft};
use super::trajectory::{radial_coords, spoke_angle, window_indices, KPoint, TrajectoryConfig};
use crate::error::{Error, Result};

/// Receive-coil sensitivities, one complex `n_image²` map per coil.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps {
    pub n_image: usize,
    pub maps: Vec<Vec<Complex64>>,
}

impl CoilMaps {
    /// A single all-ones map.
    pub fn unit(n_image: usize) -> Self {
        Self {
            n_image,
            maps: vec![vec![Complex64::new(1.0, 0.0); n_image * n_image]],
        }
    }

    pub fn count(&self) -> usize {
        self.maps.len()
    }

    pub fn validate(&self) -> Result<()> {
        let px = self.n_image * self.n_image;
        if self.maps.is_empty() {
            return Err(Error::invalid("at least one coil map is required"));
        }
        for (c, m) in self.maps.iter().enumerate() {
            if m.len() != px {
                return Err(Error::shape(format!(
                    "coil map {c} has {} pixels, expected {px}",
                    m.len()
                )));
            }
            if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::invalid(format!("coil map {c} is not finite")));
            }
        }
        Ok(())
    }

    /// Root-sum-of-squares magnitude per pixel.
    pub fn rss(&self) -> Vec<f64> {
        (0..self.n_image * self.n_image)
            .map(|i| self.maps.iter().map(|m| m[i].norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }
}

/// One radial readout. `samples` is coil-major: coil `c` occupies
/// `c * m_omega .. (c + 1) * m_omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spoke {
    pub index: usize,
    pub angle: f64,
    pub samples: Vec<Complex64>,
}

/// Time-ordered measurements. Frame `f` owns spokes
/// `f * spokes_per_frame .. (f + 1) * spokes_per_frame`; a continuous
/// acquisition has one spoke per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SpokeStream {
    pub trajectory: TrajectoryConfig,
    pub coils: usize,
    pub spokes_per_frame: usize,
    pub spokes: Vec<Spoke>,
}

impl SpokeStream {
    pub fn len(&self) -> usize {
        self.spokes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spokes.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.spokes.len() / self.spokes_per_frame.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        if self.coils == 0 || self.spokes_per_frame == 0 {
            return Err(Error::invalid("coil count and spokes per frame must be positive"));
        }
        if self.spokes.len() % self.spokes_per_frame != 0 {
            return Err(Error::invalid(format!(
                "{} spokes do not split into frames of {}",
                self.spokes.len(),
                self.spokes_per_frame
            )));
        }
        let m = self.trajectory.m_omega;
        for (k, s) in self.spokes.iter().enumerate() {
            if s.index != k {
                return Err(Error::invalid(format!("spoke {k} carries index {}", s.index)));
            }
            if s.samples.len() != m * self.coils {
                return Err(Error::shape(format!(
                    "spoke {k} has {} samples, expected {}",
                    s.samples.len(),
                    m * self.coils
                )));
            }
            let expected = spoke_angle(k, &self.trajectory);
            if (s.angle - expected).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "spoke {k} angle {} differs from trajectory angle {expected}",
                    s.angle
                )));
            }
        }
        Ok(())
    }

    /// Measurements of coil `c` over the spokes in `members`.
    pub fn gather(&self, members: &[usize], coil: usize) -> Vec<Complex64> {
        let m = self.trajectory.m_omega;
        members
            .iter()
            .flat_map(|&k| self.spokes[k].samples[coil * m..(coil + 1) * m].iter().copied())
            .collect()
    }

    /// Spoke-sharing window for frame `frame`: the `n` nearest spokes for a
    /// continuous stream, or the frame's own spokes when frames hold several.
    pub fn frame_window(&self, frame: usize, n: usize) -> Result<SystemWindow> {
        let members = if self.spokes_per_frame == 1 {
            window_indices(frame, n, self.spokes.len())?
        } else {
            if frame >= self.frame_count() {
                return Err(Error::invalid(format!(
                    "frame {frame} outside 0..{}",
                    self.frame_count()
                )));
            }
            let s = self.spokes_per_frame;
            (frame * s..(frame + 1) * s).collect()
        };
        Ok(SystemWindow::new(frame, members, &self.trajectory))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemWindow {
    pub center: usize,
    pub members: Vec<usize>,
    pub coords: Vec<Vec<KPoint>>,
}

impl SystemWindow {
    pub fn new(center: usize, members: Vec<usize>, traj: &TrajectoryConfig) -> Self {
        let coords = members
            .iter()
            .map(|&k| radial_coords(spoke_angle(k, traj), traj))
            .collect();
        Self {
            center,
            members,
            coords,
        }
    }

    pub fn flat_coords(&self) -> Vec<KPoint> {
        self.coords.iter().flatten().copied().collect()
    }
}

/// `x ↦ (H (C_c ⊙ x))_c` for one window: per coil, the gridded transform
/// of the coil-weighted image over all member spokes, concatenated.
#[derive(Clone, Debug)]
pub struct SystemOperator {
    nufft: Arc<Nufft>,
    coils: Arc<CoilMaps>,
}

impl SystemOperator {
    pub fn new(window: &SystemWindow, coils: Arc<CoilMaps>, ctx: Arc<GridContext>) -> Result<Self> {
        coils.validate()?;
        if coils.n_image != ctx.n_image() {
            return Err(Error::shape(format!(
                "coil maps are {}², grid expects {}²",
                coils.n_image,
                ctx.n_image()
            )));
        }
        if window.members.len() != window.coords.len() {
            return Err(Error::invalid("window members and coordinate lists disagree"));
        }
        let nufft = Arc::new(Nufft::new(&window.flat_coords(), ctx)?);
        Ok(Self { nufft, coils })
    }

    pub fn nufft(&self) -> &Arc<Nufft> {
        &self.nufft
    }

    pub fn coils(&self) -> &CoilMaps {
        &self.coils
    }

    pub fn samples_per_coil(&self) -> usize {
        self.nufft.samples()
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        if x.len() != self.coils.n_image * self.coils.n_image {
            return Err(Error::shape("image size does not match the coil maps"));
        }
        self.coils
            .maps
            .iter()
            .map(|map| {
                let weighted: Vec<Complex64> = x.iter().zip(map).map(|(a, b)| a * b).collect();
                self.nufft.forward(&weighted)
            })
            .collect()
    }

    /// `Σ_c conj(C_c) ⊙ Hᴴ y_c`.
    pub fn adjoint(&self, y: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
        if y.len() != self.coils.count() {
            return Err(Error::shape(format!(
                "{} coil vectors for {} coils",
                y.len(),
                self.coils.count()
            )));
        }
        let mut x = vec![Complex64::new(0.0, 0.0); self.coils.n_image * self.coils.n_image];
        for (yc, map) in y.iter().zip(&self.coils.maps) {
            let back = self.nufft.backward(yc)?;
            for ((acc, b), c) in x.iter_mut().zip(&back).zip(map) {
                *acc += c.conj() * b;
            }
        }
        Ok(x)
    }
}

/// Per-coil measurements of `x` over the spokes of `window`.
pub fn apply_system(
    x: &[Complex64],
    window: &SystemWindow,
    coils: &CoilMaps,
    ctx: Arc<GridContext>,
) -> Result<Vec<Vec<Complex64>>> {
    SystemOperator::new(window, Arc::new(coils.clone()), ctx)?.apply(x)
}
