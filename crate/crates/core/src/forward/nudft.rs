use std::f64::consts::PI;

use num_complex::Complex64;

use super::trajectory::KPoint;
use crate::diffcore::LinearMap;
use crate::error::{Error, Result};

/// Frequencies of exactly `±π` name the same Fourier sample, so both ends
/// are accepted; anything further out is an error.
pub(crate) fn check_coords(coords: &[KPoint]) -> Result<()> {
    for (p, k) in coords.iter().enumerate() {
        for &v in k {
            if !v.is_finite() || v < -PI || v > PI {
                return Err(Error::invalid(format!(
                    "k-space coordinate {p} = ({}, {}) outside [-π, π]",
                    k[0], k[1]
                )));
            }
        }
    }
    Ok(())
}

/// Centered pixel offset of index `i` on an `n`-wide grid.
pub(crate) fn centered(i: usize, n: usize) -> f64 {
    i as f64 - (n / 2) as f64
}

/// Exact type-2 nonuniform DFT on an `n × n` grid with centered pixel
/// indices; image rows run along `ky`, columns along `kx`.
///
/// The phase factors separate per axis, so each sample costs `O(n²)` complex
/// multiply-adds with only `O(n)` trigonometric evaluations.
#[derive(Clone, Debug)]
pub struct Nudft {
    n_image: usize,
    coords: Vec<KPoint>,
    /// `exp(-j kx ξ₁)` per sample and column.
    ex: Vec<Complex64>,
    /// `exp(-j ky ξ₂)` per sample and row.
    ey: Vec<Complex64>,
}

impl Nudft {
    pub fn new(coords: &[KPoint], n_image: usize) -> Result<Self> {
        check_coords(coords)?;
        if n_image == 0 {
            return Err(Error::invalid("image side must be positive"));
        }
        let mut ex = Vec::with_capacity(coords.len() * n_image);
        let mut ey = Vec::with_capacity(coords.len() * n_image);
        for k in coords {
            ex.extend((0..n_image).map(|i| Complex64::from_polar(1.0, -k[0] * centered(i, n_image))));
            ey.extend((0..n_image).map(|i| Complex64::from_polar(1.0, -k[1] * centered(i, n_image))));
        }
        Ok(Self {
            n_image,
            coords: coords.to_vec(),
            ex,
            ey,
        })
    }

    pub fn coords(&self) -> &[KPoint] {
        &self.coords
    }

    pub fn n_image(&self) -> usize {
        self.n_image
    }

    pub fn forward(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n_image;
        if x.len() != n * n {
            return Err(Error::shape(format!("image has {} pixels, expected {}", x.len(), n * n)));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.coords.len()];
        for (p, out) in y.iter_mut().enumerate() {
            let ex = &self.ex[p * n..(p + 1) * n];
            let ey = &self.ey[p * n..(p + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (row, &wy) in x.chunks_exact(n).zip(ey) {
                let inner: Complex64 = row.iter().zip(ex).map(|(v, w)| v * w).sum();
                acc += wy * inner;
            }
            *out = acc;
        }
        Ok(y)
    }

    pub fn backward(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n_image;
        if y.len() != self.coords.len() {
            return Err(Error::shape(format!(
                "measurement vector has {} samples, expected {}",
                y.len(),
                self.coords.len()
            )));
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n * n];
        for (p, &yp) in y.iter().enumerate() {
            let ex = &self.ex[p * n..(p + 1) * n];
            let ey = &self.ey[p * n..(p + 1) * n];
            for (row, wy) in x.chunks_exact_mut(n).zip(ey) {
                let a = wy.conj() * yp;
                for (v, w) in row.iter_mut().zip(ex) {
                    *v += a * w.conj();
                }
            }
        }
        Ok(x)
    }
}

impl LinearMap for Nudft {
    fn input_len(&self) -> usize {
        self.n_image * self.n_image
    }

    fn output_len(&self) -> usize {
        self.coords.len()
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.forward(x).expect("input length checked by the tape")
    }

    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.backward(y).expect("gradient length matches output")
    }

    fn name(&self) -> &str {
        "nudft"
    }
}

/// `y_p = Σ_ξ x[ξ] exp(-j (kx_p ξ₁ + ky_p ξ₂))`.
pub fn nudft_apply(x: &[Complex64], coords: &[KPoint], n_image: usize) -> Result<Vec<Complex64>> {
    Nudft::new(coords, n_image)?.forward(x)
}

/// `x[ξ] = Σ_p y_p exp(+j (kx_p ξ₁ + ky_p ξ₂))`.
pub fn nudft_adjoint(y: &[Complex64], coords: &[KPoint], n_image: usize) -> Result<Vec<Complex64>> {
    Nudft::new(coords, n_image)?.backward(y)
}
