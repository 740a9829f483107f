use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use tdip::forward::{
    nudft_adjoint, nudft_apply, nufft_adjoint, nufft_apply, radial_coords, spoke_angle,
    CoilMaps, GridConfig, GridContext, SystemOperator, SystemWindow, TrajectoryConfig,
};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn golden_coords(cfg: &TrajectoryConfig, spokes: std::ops::Range<usize>) -> Vec<[f64; 2]> {
    spokes
        .flat_map(|k| radial_coords(spoke_angle(k, cfg), cfg))
        .collect()
}

#[test]
fn nudft_adjoint_dot_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 12;
    let cfg = TrajectoryConfig::golden(n);
    for trial in 0..20 {
        let coords = golden_coords(&cfg, trial..trial + 3);
        let x = random_vec(&mut rng, n * n);
        let y = random_vec(&mut rng, coords.len());
        let lhs = inner(&nudft_apply(&x, &coords, n).unwrap(), &y);
        let rhs = inner(&x, &nudft_adjoint(&y, &coords, n).unwrap());
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm(), "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn gridded_adjoint_dot_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 32;
    let cfg = TrajectoryConfig::golden(n);
    let grid = GridConfig::standard();
    for trial in 0..20 {
        let coords = golden_coords(&cfg, trial..trial + 4);
        let x = random_vec(&mut rng, n * n);
        let y = random_vec(&mut rng, coords.len());
        let lhs = inner(&nufft_apply(&x, &coords, n, &grid).unwrap(), &y);
        let rhs = inner(&x, &nufft_adjoint(&y, &coords, n, &grid).unwrap());
        assert!((lhs - rhs).norm() < 1e-6 * lhs.norm(), "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn gridded_matches_exact_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 64;
    let cfg = TrajectoryConfig::golden(n);
    let coords = golden_coords(&cfg, 0..5);
    let x = random_vec(&mut rng, n * n);
    let exact = nudft_apply(&x, &coords, n).unwrap();
    let fast = nufft_apply(&x, &coords, n, &GridConfig::standard()).unwrap();
    let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = exact
        .iter()
        .zip(&fast)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale;
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn fourier_slice_on_axis_spoke() {
    // Oracle: project the image onto the x axis, zero-pad to the readout
    // length and take an ordinary FFT.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 8;
    let m = 2 * n;
    let cfg = TrajectoryConfig::golden(n);
    let x = random_vec(&mut rng, n * n);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    for c in 0..n {
        let proj: Complex64 = (0..n).map(|r| x[r * n + c]).sum();
        let offset = c as isize - (n / 2) as isize;
        padded[offset.rem_euclid(m as isize) as usize] = proj;
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut padded);
    let spoke = nudft_apply(&x, &radial_coords(0.0, &cfg), n).unwrap();
    let scale = padded.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (i, v) in spoke.iter().enumerate() {
        let bin = (i as isize - n as isize).rem_euclid(m as isize) as usize;
        assert!((v - padded[bin]).norm() < 1e-10 * scale, "sample {i}");
    }
}

#[test]
fn rotation_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 8;
    let half = (n / 2) as isize;
    let cfg = TrajectoryConfig::golden(n);
    // Leave the unpaired -n/2 row and column empty so rotation stays on-grid.
    let mut x = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 1..n {
        for c in 1..n {
            x[r * n + c] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    // (ξ₁, ξ₂) ↦ (ξ₂, -ξ₁): a quarter turn clockwise.
    let mut rotated = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            let (x1, x2) = (c as isize - half, r as isize - half);
            let (y1, y2) = (x2, -x1);
            if y1 >= -half && y1 < half && y2 >= -half && y2 < half {
                rotated[((y2 + half) * n as isize + y1 + half) as usize] = x[r * n + c];
            }
        }
    }
    for theta in [0.0, 0.4, 1.3, 2.9] {
        let a = nudft_apply(&rotated, &radial_coords(theta, &cfg), n).unwrap();
        let b = nudft_apply(&x, &radial_coords(theta + PI / 2.0, &cfg), n).unwrap();
        let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).norm() < 1e-10 * scale);
        }
    }
}

#[test]
fn multicoil_system_adjoint_dot_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let n = 16;
    let cfg = TrajectoryConfig::golden(n);
    let coils = Arc::new(CoilMaps {
        n_image: n,
        maps: (0..3).map(|_| random_vec(&mut rng, n * n)).collect(),
    });
    let ctx = GridContext::new(n, GridConfig::standard()).unwrap();
    for trial in 0..10 {
        let window = SystemWindow::new(trial + 2, (trial..trial + 5).collect(), &cfg);
        let op = SystemOperator::new(&window, coils.clone(), ctx.clone()).unwrap();
        let x = random_vec(&mut rng, n * n);
        let y: Vec<Vec<Complex64>> = (0..3).map(|_| random_vec(&mut rng, 5 * 2 * n)).collect();
        let ax = op.apply(&x).unwrap();
        let lhs: Complex64 = ax.iter().zip(&y).map(|(a, b)| inner(a, b)).sum();
        let rhs = inner(&x, &op.adjoint(&y).unwrap());
        assert!((lhs - rhs).norm() < 1e-6 * lhs.norm(), "trial {trial}");
    }
}
