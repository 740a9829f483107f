use std::path::Path;

use super::container::write_atomic;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    Explicit { lo: f64, hi: f64 },
    /// 1st and 99th percentiles of the input.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrayInfo {
    pub lo: f64,
    pub hi: f64,
    /// The window collapsed to a point; every pixel was written mid-gray.
    pub degenerate: bool,
}

/// Linear-interpolated percentile, `p` in `[0, 1]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Maps `values` to 8-bit gray through `window`, rounding half up.
pub fn to_gray(values: &[f64], window: Window) -> Result<(Vec<u8>, GrayInfo)> {
    if values.is_empty() {
        return Err(Error::invalid("cannot render an empty image"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot render non-finite values"));
    }
    let (lo, hi) = match window {
        Window::Explicit { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("bad display window ({lo}, {hi})")));
            }
            (lo, hi)
        }
        Window::Auto => (percentile(values, 0.01), percentile(values, 0.99)),
    };
    if hi <= lo {
        return Ok((vec![128; values.len()], GrayInfo { lo, hi, degenerate: true }));
    }
    let pixels = values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    Ok((pixels, GrayInfo { lo, hi, degenerate: false }))
}

/// Binary P5 graymap of a row-major `height × width` image.
pub fn dump_grayscale(values: &[f64], width: usize, height: usize, path: &Path, window: Window) -> Result<GrayInfo> {
    if width * height != values.len() {
        return Err(Error::shape(format!(
            "{} values do not form a {width}x{height} image",
            values.len()
        )));
    }
    let (pixels, info) = to_gray(values, window)?;
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(&pixels);
    write_atomic(path, &bytes)?;
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_and_ends() {
        let w = Window::Explicit { lo: 0.0, hi: 1.0 };
        assert_eq!(to_gray(&[0.5; 4], w).unwrap().0, vec![128; 4]);
        assert_eq!(to_gray(&[0.0, 1.0, -3.0, 9.0], w).unwrap().0, vec![0, 255, 0, 255]);
    }

    #[test]
    fn ramp_is_monotone() {
        let ramp: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
        let (px, info) = to_gray(&ramp, Window::Auto).unwrap();
        assert!(px.windows(2).all(|w| w[0] <= w[1]));
        assert!(!info.degenerate);
        assert!((info.lo - percentile(&ramp, 0.01)).abs() < 1e-12);
    }

    #[test]
    fn constant_auto_is_flagged() {
        let (px, info) = to_gray(&[2.0; 9], Window::Auto).unwrap();
        assert!(info.degenerate);
        assert!(px.iter().all(|&p| p == 128));
        assert!(to_gray(&[f64::NAN], Window::Auto).is_err());
    }

    #[test]
    fn percentiles() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(percentile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(percentile(&[4.0], 0.99), 4.0);
    }

    #[test]
    fn file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        dump_grayscale(&[0.0, 1.0, 0.5, 0.25, 0.75, 1.0], 3, 2, &path, Window::Explicit { lo: 0.0, hi: 1.0 }).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 128, 64, 191, 255]);
        assert!(dump_grayscale(&[0.0; 5], 3, 2, &path, Window::Auto).is_err());
    }
}
