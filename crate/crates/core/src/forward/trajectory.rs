use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Golden-angle increment, 111.25 degrees.
pub const GOLDEN_ANGLE: f64 = 111.25 * PI / 180.0;

/// A k-space location in radians per pixel, `(kx, ky)`.
pub type KPoint = [f64; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub theta0: f64,
    pub dtheta: f64,
    /// Spoke period; metadata only, spoke timestamps are their indices.
    pub dt: f64,
    /// Readout samples per spoke, always `2 * n_image`.
    pub m_omega: usize,
    pub n_image: usize,
}

impl TrajectoryConfig {
    pub fn golden(n_image: usize) -> Self {
        Self {
            theta0: 0.0,
            dtheta: GOLDEN_ANGLE,
            dt: 1.0,
            m_omega: 2 * n_image,
            n_image,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_image < 2 || self.n_image % 2 != 0 {
            return Err(Error::invalid(format!(
                "image side must be even and at least 2, got {}",
                self.n_image
            )));
        }
        if self.m_omega != 2 * self.n_image {
            return Err(Error::invalid(format!(
                "readout length {} must be twice the image side {}",
                self.m_omega, self.n_image
            )));
        }
        if !self.theta0.is_finite() || !self.dtheta.is_finite() {
            return Err(Error::invalid("trajectory angles must be finite"));
        }
        Ok(())
    }

    /// Radial frequency of readout sample `m`.
    pub fn omega(&self, m: usize) -> f64 {
        PI * (m as f64 - (self.m_omega / 2) as f64) / self.n_image as f64
    }
}

/// Orientation of spoke `k`, in `[0, 2π)`.
pub fn spoke_angle(k: usize, cfg: &TrajectoryConfig) -> f64 {
    (cfg.theta0 + k as f64 * cfg.dtheta).rem_euclid(2.0 * PI)
}

/// Readout locations of one spoke. Sample `m_omega / 2` is the k-space
/// origin; spacing along the spoke is `π / n_image`.
pub fn radial_coords(angle: f64, cfg: &TrajectoryConfig) -> Vec<KPoint> {
    let (s, c) = angle.sin_cos();
    (0..cfg.m_omega)
        .map(|m| {
            let w = cfg.omega(m);
            [w * c, w * s]
        })
        .collect()
}

/// Ramp density compensation `|ω_m|`, with the DC weight floored at a
/// quarter of the smallest nonzero radius.
pub fn density_weights(cfg: &TrajectoryConfig) -> Vec<f64> {
    let floor = PI / cfg.n_image as f64 / 4.0;
    (0..cfg.m_omega)
        .map(|m| {
            let w = cfg.omega(m).abs();
            if w == 0.0 {
                floor
            } else {
                w
            }
        })
        .collect()
}

/// Spoke indices shared by the frame centred on `k0`: the `n` nearest
/// spokes, shifted to one side near either end of the acquisition.
pub fn window_indices(k0: usize, n: usize, total: usize) -> Result<Vec<usize>> {
    if n % 2 == 0 {
        return Err(Error::invalid(format!("window size must be odd, got {n}")));
    }
    if n > total {
        return Err(Error::invalid(format!(
            "window of {n} spokes exceeds the {total} available"
        )));
    }
    if k0 >= total {
        return Err(Error::invalid(format!("window centre {k0} outside 0..{total}")));
    }
    let half = (n - 1) / 2;
    let start = k0.saturating_sub(half).min(total - n);
    Ok((start..start + n).collect())
}
