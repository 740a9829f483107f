//! Golden-angle radial sampling and the Fourier measurement operators.
//!
//! Pixel offsets are centered, `ξ ∈ [-n/2, n/2)`, so the k-space origin is
//! the image sum. The exact [`Nudft`] is the reference; [`Nufft`] is the
//! Kaiser–Bessel gridded fast path used for training and simulation.

mod nudft;
mod nufft;
mod system;
mod trajectory;

pub use nudft::{nudft_adjoint, nudft_apply, Nudft};
pub use nufft::{nufft_adjoint, nufft_apply, GridConfig, GridContext, Nufft};
pub use system::{apply_system, CoilMaps, Spoke, SpokeStream, SystemOperator, SystemWindow};
pub use trajectory::{
    density_weights, radial_coords, spoke_angle, window_indices, KPoint, TrajectoryConfig,
    GOLDEN_ANGLE,
};

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use num_complex::Complex64;

    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dc_sample_is_image_sum() {
        let x = vec![c(0.5, -0.25); 16];
        let y = nudft_apply(&x, &[[0.0, 0.0]], 4).unwrap();
        assert!((y[0] - c(8.0, -4.0)).norm() < 1e-14);
    }

    #[test]
    fn centered_impulse_is_flat() {
        let n = 8;
        let mut x = vec![c(0.0, 0.0); n * n];
        x[(n / 2) * n + n / 2] = c(1.0, 0.0);
        let cfg = TrajectoryConfig::golden(n);
        let coords = radial_coords(0.83, &cfg);
        for v in nudft_apply(&x, &coords, n).unwrap() {
            assert!((v - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn adjoint_of_dc_sample_is_ones() {
        let x = nudft_adjoint(&[c(1.0, 0.0)], &[[0.0, 0.0]], 4).unwrap();
        assert!(x.iter().all(|v| *v == c(1.0, 0.0)));
        let z = nudft_adjoint(&[c(0.0, 0.0); 3], &[[0.1, 0.2], [0.0, 0.0], [-1.0, 3.0]], 4).unwrap();
        assert!(z.iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn rejects_out_of_range_coords() {
        let x = vec![c(1.0, 0.0); 16];
        assert!(nudft_apply(&x, &[[3.5, 0.0]], 4).is_err());
        assert!(nudft_apply(&x, &[[0.0, f64::NAN]], 4).is_err());
        assert!(nudft_apply(&x, &[[-PI, PI]], 4).is_ok());
        assert!(nufft_apply(&x, &[[0.0, -3.2]], 4, &GridConfig::standard()).is_err());
    }

    #[test]
    fn gridded_single_spoke_matches_system_with_unit_coil() {
        let n = 16;
        let cfg = TrajectoryConfig::golden(n);
        let x: Vec<Complex64> = (0..n * n).map(|i| c((i % 7) as f64, (i % 3) as f64 - 1.0)).collect();
        let window = SystemWindow::new(3, vec![3], &cfg);
        let ctx = GridContext::new(n, GridConfig::standard()).unwrap();
        let sys = apply_system(&x, &window, &CoilMaps::unit(n), ctx).unwrap();
        let direct = nufft_apply(&x, &window.coords[0], n, &GridConfig::standard()).unwrap();
        assert_eq!(sys.len(), 1);
        assert_eq!(sys[0], direct);
        let zero = apply_system(
            &vec![c(0.0, 0.0); n * n],
            &window,
            &CoilMaps::unit(n),
            GridContext::new(n, GridConfig::standard()).unwrap(),
        )
        .unwrap();
        assert!(zero[0].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn gridded_is_linear() {
        let n = 16;
        let cfg = TrajectoryConfig::golden(n);
        let coords = radial_coords(1.1, &cfg);
        let x: Vec<Complex64> = (0..n * n).map(|i| c((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let x2: Vec<Complex64> = x.iter().map(|v| v * 2.0).collect();
        let a = nufft_apply(&x, &coords, n, &GridConfig::standard()).unwrap();
        let b = nufft_apply(&x2, &coords, n, &GridConfig::standard()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u * 2.0 - v).norm() <= 1e-12 * v.norm().max(1.0));
        }
    }
}
