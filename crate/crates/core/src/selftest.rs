//! Numerical self-checks: adjoint dot tests, gridding accuracy, finite
//! difference gradient checks, the RSNR oracle and the golden-angle
//! property. The CLI `selftest` command and the acceptance suite both run
//! these.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{
    record_add, record_batchnorm2d, record_complex_pixmul, record_conv2d, record_l2_loss,
    record_linear, record_relu, record_sum, record_upsample_nn2x, NodeId, Tape, Tensor,
};
use crate::error::Result;
use crate::forward::{
    nudft_adjoint, nudft_apply, radial_coords, spoke_angle, CoilMaps, GridConfig, GridContext,
    KPoint, Nudft, Nufft, SystemOperator, SystemWindow, TrajectoryConfig,
};
use crate::generator::{generate_from_nodes, init_generator, GeneratorConfig};
use crate::metrics::{rsnr_grid_search, rsnr_real};

/// One named check with its measured error and threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub group: &'static str,
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

impl Check {
    fn new(group: &'static str, name: impl Into<String>, error: f64, tolerance: f64, start: Instant) -> Self {
        Self {
            group,
            name: name.into(),
            error,
            tolerance,
            passed: error.is_finite() && error < tolerance,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<9} {:<36} err {:.3e} (tol {:.0e}, {:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.group,
            self.name,
            self.error,
            self.tolerance,
            self.seconds
        )
    }
}

/// Operators whose adjoint can be sabotaged to prove the checks bite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    Nudft,
    Nufft,
    System,
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Operator::Nudft => "nudft",
            Operator::Nufft => "nufft",
            Operator::System => "system",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [Operator::Nudft, Operator::Nufft, Operator::System]
            .into_iter()
            .find(|o| o.name() == name)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SelftestOptions {
    /// Negate this operator's adjoint before the dot test.
    pub flip_adjoint: Option<Operator>,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> Result<SelftestReport> {
    let mut checks = adjoint_checks(opts)?;
    checks.push(gridding_check(opts.seed)?);
    checks.extend(primitive_gradient_checks(opts.seed)?);
    checks.push(composed_gradient_check(opts.seed, 20)?);
    checks.extend(rsnr_checks(opts.seed, 50)?);
    Ok(SelftestReport { checks })
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("length matches shape")
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn spoke_coords(cfg: &TrajectoryConfig, first: usize, count: usize) -> Vec<KPoint> {
    (first..first + count)
        .flat_map(|k| radial_coords(spoke_angle(k, cfg), cfg))
        .collect()
}

/// Relative mismatch of `<A x, y>` against `<x, Aᴴ y>`, worst over trials.
fn dot_test(
    trials: usize,
    rng: &mut ChaCha8Rng,
    mut pair: impl FnMut(usize, &mut ChaCha8Rng) -> Result<(Complex64, Complex64)>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let (lhs, rhs) = pair(trial, rng)?;
        worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn adjoint_checks(opts: &SelftestOptions) -> Result<Vec<Check>> {
    let sign = |op: Operator| if opts.flip_adjoint == Some(op) { -1.0 } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xad01);
    let mut out = Vec::new();

    let start = Instant::now();
    let n = 16;
    let cfg = TrajectoryConfig::golden(n);
    let err = dot_test(20, &mut rng, |trial, rng| {
        let coords = spoke_coords(&cfg, 3 * trial, 3);
        let x = random_complex(rng, n * n);
        let y = random_complex(rng, coords.len());
        let back = nudft_adjoint(&y, &coords, n)?;
        Ok((inner(&nudft_apply(&x, &coords, n)?, &y), sign(Operator::Nudft) * inner(&x, &back)))
    })?;
    out.push(Check::new("adjoint", "nudft <Ax,y> = <x,A^H y>", err, 1e-12, start));

    let start = Instant::now();
    let n = 32;
    let cfg = TrajectoryConfig::golden(n);
    let ctx = GridContext::new(n, GridConfig::standard())?;
    let err = dot_test(20, &mut rng, |trial, rng| {
        let op = Nufft::new(&spoke_coords(&cfg, 5 * trial, 5), ctx.clone())?;
        let x = random_complex(rng, n * n);
        let y = random_complex(rng, op.samples());
        let back = op.backward(&y)?;
        Ok((inner(&op.forward(&x)?, &y), sign(Operator::Nufft) * inner(&x, &back)))
    })?;
    out.push(Check::new("adjoint", "gridded nufft <Ax,y> = <x,A^H y>", err, 1e-6, start));

    let start = Instant::now();
    let coils = Arc::new(CoilMaps {
        n_image: n,
        maps: (0..4).map(|_| random_complex(&mut rng, n * n)).collect(),
    });
    let err = dot_test(20, &mut rng, |trial, rng| {
        let window = SystemWindow::new(trial + 2, (trial..trial + 5).collect(), &cfg);
        let op = SystemOperator::new(&window, coils.clone(), ctx.clone())?;
        let x = random_complex(rng, n * n);
        let y: Vec<Vec<Complex64>> = (0..coils.count()).map(|_| random_complex(rng, op.samples_per_coil())).collect();
        let ax = op.apply(&x)?;
        let lhs = ax.iter().zip(&y).map(|(a, b)| inner(a, b)).sum();
        let back = op.adjoint(&y)?;
        Ok((lhs, sign(Operator::System) * inner(&x, &back)))
    })?;
    out.push(Check::new("adjoint", "multi-coil system <Ax,y> = <x,A^H y>", err, 1e-6, start));
    Ok(out)
}

/// Max sample error of the gridded transform relative to the largest exact
/// sample, on a random 64×64 image.
fn gridding_check(seed: u64) -> Result<Check> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x961d);
    let n = 64;
    let cfg = TrajectoryConfig::golden(n);
    let coords = spoke_coords(&cfg, 0, 13);
    let x = random_complex(&mut rng, n * n);
    let exact = nudft_apply(&x, &coords, n)?;
    let fast = Nufft::with_config(&coords, n, GridConfig::standard())?.forward(&x)?;
    let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = exact.iter().zip(&fast).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
    Ok(Check::new("gridding", "gridded vs exact transform", err, 1e-3, start))
}

/// A scalar function of some input tensors, recorded on a fresh tape.
pub trait Objective {
    fn record(&self, tape: &mut Tape, inputs: &[NodeId]) -> Result<NodeId>;
}

impl<F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>> Objective for F {
    fn record(&self, tape: &mut Tape, inputs: &[NodeId]) -> Result<NodeId> {
        self(tape, inputs)
    }
}

fn evaluate(f: &dyn Objective, inputs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f.record(&mut tape, &nodes)?;
    Ok(tape.value(loss).data()[0])
}

/// Compares reverse-mode gradients with central differences at up to
/// `coords` random entries of every input. The error of one input is
/// `‖fd − ad‖ / max(‖fd‖, ‖ad‖)` over its sampled entries; the worst input
/// is returned.
pub fn gradient_error(
    f: &dyn Objective,
    inputs: &[Tensor],
    coords: usize,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f.record(&mut tape, &nodes)?;
    let grads = tape.backward(loss)?;
    let mut per_input = Vec::with_capacity(nodes.len());
    for (k, node) in nodes.iter().enumerate() {
        let analytic = grads.get_or_zeros(&tape, *node);
        let len = inputs[k].len();
        let picks: Vec<usize> = if len <= coords {
            (0..len).collect()
        } else {
            (0..coords).map(|_| rng.random_range(0..len)).collect()
        };
        let (mut diff, mut fd_norm, mut ad_norm) = (0.0, 0.0, 0.0);
        for &i in &picks {
            let mut probe = inputs.to_vec();
            let base = probe[k].data()[i];
            let h = step * base.abs().max(1.0);
            probe[k].data_mut()[i] = base + h;
            let up = evaluate(f, &probe)?;
            probe[k].data_mut()[i] = base - h;
            let down = evaluate(f, &probe)?;
            let fd = (up - down) / (2.0 * h);
            let ad = analytic.data()[i];
            diff += (fd - ad).powi(2);
            fd_norm += fd * fd;
            ad_norm += ad * ad;
        }
        per_input.push((diff.sqrt(), f64::max(fd_norm, ad_norm).sqrt()));
    }
    // Inputs whose true gradient vanishes (a bias feeding a normalization)
    // are measured against a floor tied to the largest gradient seen.
    let floor = 1e-4 * per_input.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(per_input
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|(diff, scale)| diff / scale.max(floor))
        .fold(0.0, f64::max))
}

fn primitive_gradient_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9ad1);
    let mut checks = Vec::new();
    let tol = 1e-4;
    let step = 1e-5;
    let coords = 40;
    // Each primitive is scored through `‖op(x) − target‖²` with a random target.
    let target = |rng: &mut ChaCha8Rng, shape: &[usize]| Arc::new(random_tensor(rng, shape));
    let mut run = |name: &str, f: &dyn Objective, inputs: Vec<Tensor>, rng: &mut ChaCha8Rng| -> Result<()> {
        let start = Instant::now();
        let err = gradient_error(f, &inputs, coords, step, rng)?;
        checks.push(Check::new("gradient", name, err, tol, start));
        Ok(())
    };

    let t = target(&mut rng, &[4, 6, 5]);
    let inputs = vec![random_tensor(&mut rng, &[3, 6, 5]), random_tensor(&mut rng, &[4, 3, 3, 3]), random_tensor(&mut rng, &[4])];
    run("conv2d", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_conv2d(tape, n[0], n[1], n[2], 1)?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let t = target(&mut rng, &[3, 4, 4]);
    let inputs = vec![random_tensor(&mut rng, &[3, 4, 4]), random_tensor(&mut rng, &[3]), random_tensor(&mut rng, &[3])];
    run("batchnorm", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_batchnorm2d(tape, n[0], n[1], n[2], 1e-5)?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let t = target(&mut rng, &[2, 5, 5]);
    let inputs = vec![random_tensor(&mut rng, &[2, 5, 5])];
    run("relu", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_relu(tape, n[0])?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let t = target(&mut rng, &[2, 6, 8]);
    let inputs = vec![random_tensor(&mut rng, &[2, 3, 4])];
    run("upsample", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_upsample_nn2x(tape, n[0])?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let t = target(&mut rng, &[2, 4, 4]);
    let coil = Arc::new(random_tensor(&mut rng, &[2, 4, 4]));
    let inputs = vec![random_tensor(&mut rng, &[2, 4, 4])];
    run("complex pixmul", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_complex_pixmul(tape, n[0], coil.clone())?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let n_img = 8;
    let coords_k = spoke_coords(&TrajectoryConfig::golden(n_img), 0, 2);
    let t = target(&mut rng, &[2, coords_k.len()]);
    let exact = Arc::new(Nudft::new(&coords_k, n_img)?);
    let inputs = vec![random_tensor(&mut rng, &[2, n_img, n_img])];
    run("nudft layer", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_linear(tape, n[0], exact.clone())?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let t = target(&mut rng, &[2, coords_k.len()]);
    let gridded = Arc::new(Nufft::with_config(&coords_k, n_img, GridConfig::standard())?);
    let inputs = vec![random_tensor(&mut rng, &[2, n_img, n_img])];
    run("nufft layer", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_linear(tape, n[0], gridded.clone())?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let t = target(&mut rng, &[3, 4]);
    let inputs = vec![random_tensor(&mut rng, &[3, 4]), random_tensor(&mut rng, &[3, 4])];
    run("add + l2", &move |tape: &mut Tape, n: &[NodeId]| {
        let y = record_add(tape, &[n[0], n[1], n[0]])?;
        record_l2_loss(tape, y, t.clone())
    }, inputs, &mut rng)?;

    let inputs = vec![random_tensor(&mut rng, &[2, 3, 3])];
    run("sum", &|tape: &mut Tape, n: &[NodeId]| {
        let y = record_relu(tape, n[0])?;
        let z = record_upsample_nn2x(tape, y)?;
        record_sum(tape, z)
    }, inputs, &mut rng)?;
    Ok(checks)
}

/// Generator → coil product → gridded NuFFT → squared error on a 16×16
/// grid, with every generator tensor (and the latent) randomised per trial.
fn composed_gradient_check(seed: u64, trials: usize) -> Result<Check> {
    let start = Instant::now();
    let n = 16;
    let config = GeneratorConfig {
        latent_ch: 1,
        ..GeneratorConfig::for_output(2, n, 4)?
    };
    let traj = TrajectoryConfig::golden(n);
    let ctx = GridContext::new(n, GridConfig::standard())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut params = init_generator(&config, seed + trial as u64)?;
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        let z = random_tensor(&mut rng, &config.latent_shape());
        let coil = Arc::new(Tensor::from_complex(&random_complex(&mut rng, n * n), n, n)?);
        let op = Arc::new(Nufft::new(&spoke_coords(&traj, 4 * trial, 4), ctx.clone())?);
        let config = config.clone();
        // Inputs are the generator tensors followed by the latent.
        let measure = move |tape: &mut Tape, nodes: &[NodeId]| -> Result<NodeId> {
            let (latent, weights) = nodes.split_last().expect("latent present");
            let image = generate_from_nodes(tape, &config, weights, *latent)?;
            let coil_img = record_complex_pixmul(tape, image, coil.clone())?;
            record_linear(tape, coil_img, op.clone())
        };
        let mut inputs = params.tensors().to_vec();
        inputs.push(z);
        // The target sits at unit distance from the prediction, keeping the
        // loss small next to its gradient so differencing stays accurate.
        let mut tape = Tape::new();
        let nodes: Vec<NodeId> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let pred = measure(&mut tape, &nodes)?;
        let mut target = tape.value(pred).clone();
        for v in target.data_mut() {
            *v += rng.random_range(-1.0..1.0);
        }
        let target = Arc::new(target);
        let f = move |tape: &mut Tape, nodes: &[NodeId]| -> Result<NodeId> {
            let k = measure(tape, nodes)?;
            record_l2_loss(tape, k, target.clone())
        };
        worst = worst.max(gradient_error(&f, &inputs, 3, 1e-6, &mut rng)?);
    }
    Ok(Check::new("gradient", format!("generator+nufft+loss ({trials} trials)"), worst, 1e-3, start))
}

fn rsnr_checks(seed: u64, pairs: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    let start = Instant::now();
    let mut worst_grid: f64 = 0.0;
    let mut worst_invariance: f64 = 0.0;
    for _ in 0..pairs {
        let reference: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let noise = rng.random_range(0.05..1.0);
        let estimate: Vec<f64> = reference
            .iter()
            .map(|r| 1.7 * r + 0.3 + noise * rng.random_range(-1.0..1.0))
            .collect();
        let closed = rsnr_real(&reference, &estimate)?;
        let grid = rsnr_grid_search(&reference, &estimate, 201, 6)?;
        worst_grid = worst_grid.max((closed.db - grid.db).abs());
        let c = rng.random_range(0.1..10.0);
        let offset = rng.random_range(-5.0..5.0);
        let moved: Vec<f64> = estimate.iter().map(|e| c * e + offset).collect();
        worst_invariance = worst_invariance.max((rsnr_real(&reference, &moved)?.db - closed.db).abs());
    }
    Ok(vec![
        Check::new("rsnr", format!("closed form vs grid search ({pairs} pairs)"), worst_grid, 0.01, start),
        Check::new("rsnr", "scale and offset invariance (dB)", worst_invariance, 1e-9, start),
    ])
}

/// Smallest circular separation mod π between any two of the first
/// `count` spokes with increment `dtheta`.
pub fn min_spoke_separation(count: usize, dtheta: f64) -> f64 {
    let cfg = TrajectoryConfig {
        dtheta,
        ..TrajectoryConfig::golden(2)
    };
    let mut angles: Vec<f64> = (0..count).map(|k| spoke_angle(k, &cfg).rem_euclid(PI)).collect();
    angles.sort_by(f64::total_cmp);
    let wrap = angles[0] + PI - angles[count - 1];
    angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::min)
}

/// Pairwise distinctness mod π of `count` spokes, within `tol` radians.
/// The reported error is `tol / separation`, so it passes below 1.
pub fn golden_angle_check(count: usize, dtheta: f64, tol: f64) -> Check {
    let start = Instant::now();
    let gap = min_spoke_separation(count, dtheta);
    Check::new(
        "golden",
        format!("{count} spokes at {:.6} deg distinct mod pi", dtheta.to_degrees()),
        tol / gap,
        1.0,
        start,
    )
}
