use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major real tensor.
///
/// Complex images are stored planar as two channels, `[re, im]`, each
/// `height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Planar `[2, h, w]` tensor from a row-major complex image.
    pub fn from_complex(values: &[Complex64], height: usize, width: usize) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "complex image of {} values does not fill {height}x{width}",
                values.len()
            )));
        }
        let plane = values.len();
        let mut data = vec![0.0; 2 * plane];
        for (i, v) in values.iter().enumerate() {
            data[i] = v.re;
            data[plane + i] = v.im;
        }
        Ok(Self {
            shape: vec![2, height, width],
            data,
        })
    }

    /// Planar `[2, len]` tensor from a complex vector.
    pub fn from_complex_vec(values: &[Complex64]) -> Self {
        let n = values.len();
        let mut data = vec![0.0; 2 * n];
        for (i, v) in values.iter().enumerate() {
            data[i] = v.re;
            data[n + i] = v.im;
        }
        Self {
            shape: vec![2, n],
            data,
        }
    }

    /// Reads a planar two-channel tensor back as complex values.
    pub fn to_complex(&self) -> Result<Vec<Complex64>> {
        if self.shape.first() != Some(&2) {
            return Err(Error::shape(format!(
                "expected a 2-channel complex tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(planar_to_complex(&self.data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Interprets the tensor as `channels × height × width`.
    pub(crate) fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a channels×height×width tensor, got {:?}",
                self.shape
            ))),
        }
    }
}

pub(crate) fn planar_to_complex(data: &[f64]) -> Vec<Complex64> {
    let n = data.len() / 2;
    (0..n).map(|i| Complex64::new(data[i], data[n + i])).collect()
}

pub(crate) fn complex_to_planar(values: &[Complex64], out: &mut [f64]) {
    let n = values.len();
    for (i, v) in values.iter().enumerate() {
        out[i] = v.re;
        out[n + i] = v.im;
    }
}
