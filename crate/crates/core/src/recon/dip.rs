use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{prepare, ReconResult};
use crate::diffcore::{
    adam_step, record_add, record_complex_pixmul, record_l2_loss, record_linear, AdamState,
    LinearMap, Tape, Tensor,
};
use crate::error::{Error, Result};
use crate::forward::{CoilMaps, Nufft, SpokeStream};
use crate::generator::{generate, init_generator, GeneratorConfig, GeneratorParams};
use crate::latents::{broadcast_spatial, sample_anchors, scenario_latents, LatentSchedule, ScenarioKind};
use crate::phantom::FrameSeries;

/// Step decay of the learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub every: usize,
    pub factor: f64,
}

/// How training latents are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentPlan {
    /// Piecewise-linear interpolation between `anchors` equi-spaced draws.
    Interpolated { anchors: usize },
    /// An unrelated draw for every frame index.
    IndependentPerFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DipConfig {
    pub iterations: usize,
    pub lr: f64,
    pub schedule: Option<LrSchedule>,
    /// Frames per iteration.
    pub batch: usize,
    /// Spokes per frame window (odd).
    pub n: usize,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub latents: LatentPlan,
    pub latent_lo: f64,
    pub latent_hi: f64,
}

impl DipConfig {
    /// Retrospective protocol at desk scale: `n = 13`, `U(0, 0.1)` latents
    /// between two endpoints, halving the rate every 2,000 iterations.
    pub fn retro() -> Self {
        Self {
            iterations: 10_000,
            lr: 1e-3,
            schedule: Some(LrSchedule {
                every: 2_000,
                factor: 0.5,
            }),
            batch: 1,
            n: 13,
            seed: 0,
            generator: GeneratorConfig::desk(),
            latents: LatentPlan::Interpolated { anchors: 2 },
            latent_lo: 0.0,
            latent_hi: 0.1,
        }
    }

    /// Dynamic protocol: `n = 5`, `U(0, 10)` latents over 14 segments, no
    /// rate schedule.
    pub fn dynamic() -> Self {
        Self {
            iterations: 20_000,
            schedule: None,
            n: 5,
            latents: LatentPlan::Interpolated { anchors: 15 },
            latent_lo: 0.0,
            latent_hi: 10.0,
            ..Self::retro()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.n % 2 == 0 {
            return Err(Error::invalid(format!("window size must be odd, got {}", self.n)));
        }
        if let Some(s) = self.schedule {
            if s.every == 0 || !(s.factor > 0.0) {
                return Err(Error::invalid("learning-rate schedule needs a positive period and factor"));
            }
        }
        if let LatentPlan::Interpolated { anchors } = self.latents {
            if anchors < 2 {
                return Err(Error::invalid("interpolated latents need at least two anchors"));
            }
        }
        self.generator.validate()
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        match self.schedule {
            Some(s) => self.lr * s.factor.powi((iteration / s.every) as i32),
            None => self.lr,
        }
    }

    pub fn init_seed(&self) -> u64 {
        self.seed
    }

    pub fn latent_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "method = \"dip\"\niterations = {}\nlr = {}\nbatch = {}\nn = {}\nseed = {}\n",
            self.iterations, self.lr, self.batch, self.n, self.seed
        );
        match self.schedule {
            Some(sch) => s.push_str(&format!("lr_every = {}\nlr_factor = {}\n", sch.every, sch.factor)),
            None => s.push_str("lr_every = 0\nlr_factor = 1\n"),
        }
        let g = &self.generator;
        s.push_str(&format!(
            "latent_hw = {}\nlatent_ch = {}\nstages = {}\nchannels = {}\n",
            g.latent_hw, g.latent_ch, g.stages, g.channels
        ));
        match self.latents {
            LatentPlan::Interpolated { anchors } => s.push_str(&format!("latents = \"interpolated\"\nanchors = {anchors}\n")),
            LatentPlan::IndependentPerFrame => s.push_str("latents = \"independent\"\n"),
        }
        s.push_str(&format!("latent_lo = {}\nlatent_hi = {}\n", self.latent_lo, self.latent_hi));
        s
    }
}

/// The latent inputs a trained generator was fitted against.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentModel {
    Schedule(LatentSchedule),
    PerFrame(Vec<Tensor>),
}

impl LatentModel {
    pub fn frames(&self) -> usize {
        match self {
            LatentModel::Schedule(s) => s.frames,
            LatentModel::PerFrame(z) => z.len(),
        }
    }

    pub fn latent_at(&self, t: f64) -> Result<Tensor> {
        match self {
            LatentModel::Schedule(s) => s.latent_at(t),
            LatentModel::PerFrame(z) => {
                if t.fract() != 0.0 || t < 0.0 || t as usize >= z.len() {
                    return Err(Error::invalid(format!(
                        "per-frame latents exist only at integer times 0..{}, got {t}",
                        z.len()
                    )));
                }
                Ok(z[t as usize].clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DipModel {
    pub params: GeneratorParams,
    pub latents: LatentModel,
    pub loss_trace: Vec<f64>,
}

impl LatentModel {
    /// The latents `cfg` trains against for a `frames`-frame stream.
    pub fn for_config(cfg: &DipConfig, frames: usize) -> Result<Self> {
        build_latents(cfg, frames)
    }

    /// Latents at the integer frame times.
    pub fn frame_latents(&self) -> Result<Vec<Tensor>> {
        (0..self.frames()).map(|k| self.latent_at(k as f64)).collect()
    }
}

fn build_latents(cfg: &DipConfig, frames: usize) -> Result<LatentModel> {
    let shape = cfg.generator.latent_shape();
    match cfg.latents {
        LatentPlan::Interpolated { anchors } => {
            let a = sample_anchors(anchors, &shape, cfg.latent_lo, cfg.latent_hi, cfg.latent_seed())?;
            Ok(LatentModel::Schedule(LatentSchedule::new(a, frames)?))
        }
        LatentPlan::IndependentPerFrame => {
            let a = sample_anchors(frames.max(2), &shape, cfg.latent_lo, cfg.latent_hi, cfg.latent_seed())?;
            Ok(LatentModel::PerFrame(a.anchors.into_iter().take(frames).collect()))
        }
    }
}

struct FrameData {
    op: Arc<dyn LinearMap>,
    targets: Vec<Arc<Tensor>>,
}

pub fn dip_train(stream: &SpokeStream, coils: &CoilMaps, cfg: &DipConfig) -> Result<DipModel> {
    dip_train_with(stream, coils, cfg, |_, _, _| {})
}

/// Fits the generator; `observe(iteration, loss, params)` sees every
/// iteration, after its update.
pub fn dip_train_with(
    stream: &SpokeStream,
    coils: &CoilMaps,
    cfg: &DipConfig,
    mut observe: impl FnMut(usize, f64, &GeneratorParams),
) -> Result<DipModel> {
    cfg.validate()?;
    let ctx = prepare(stream, coils)?;
    let n_image = coils.n_image;
    if cfg.generator.output_hw() != n_image {
        return Err(Error::shape(format!(
            "generator produces {}², the grid is {}²",
            cfg.generator.output_hw(),
            n_image
        )));
    }
    let frames = stream.frame_count();
    if stream.spokes_per_frame == 1 && stream.len() < cfg.n {
        return Err(Error::invalid(format!(
            "{} spokes cannot fill a window of {}",
            stream.len(),
            cfg.n
        )));
    }
    if frames < 2 {
        return Err(Error::invalid("training needs at least two frames"));
    }

    let coil_planes: Vec<Arc<Tensor>> = coils
        .maps
        .iter()
        .map(|m| Tensor::from_complex(m, n_image, n_image).map(Arc::new))
        .collect::<Result<_>>()?;
    let data: Vec<FrameData> = (0..frames)
        .map(|k| {
            let window = stream.frame_window(k, cfg.n)?;
            let op: Arc<dyn LinearMap> = Arc::new(Nufft::new(&window.flat_coords(), ctx.clone())?);
            let targets = (0..coils.count())
                .map(|c| Arc::new(Tensor::from_complex_vec(&stream.gather(&window.members, c))))
                .collect();
            Ok(FrameData { op, targets })
        })
        .collect::<Result<_>>()?;

    let latents = build_latents(cfg, frames)?;
    let frame_latents: Vec<Tensor> = (0..frames)
        .map(|k| latents.latent_at(k as f64))
        .collect::<Result<_>>()?;
    let mut params = init_generator(&cfg.generator, cfg.init_seed())?;
    let names = params.names().to_vec();
    let mut adam = AdamState::new(params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed());
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        let mut registrations = Vec::new();
        for _ in 0..cfg.batch.min(frames) {
            if order.is_empty() {
                order = (0..frames).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            let k = order.pop().expect("refilled");
            let g = generate(&mut tape, &params, &frame_latents[k])?;
            for (plane, target) in coil_planes.iter().zip(&data[k].targets) {
                let weighted = record_complex_pixmul(&mut tape, g.image, plane.clone())?;
                let predicted = record_linear(&mut tape, weighted, data[k].op.clone())?;
                terms.push(record_l2_loss(&mut tape, predicted, target.clone())?);
            }
            registrations.push(g.params);
        }
        let loss = record_add(&mut tape, &terms)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite {
                iteration: it as u64 + 1,
                name: "loss".into(),
            });
        }
        let grads = tape.backward(loss)?;
        let mut summed: Vec<Tensor> = registrations[0].iter().map(|&id| grads.get_or_zeros(&tape, id)).collect();
        for reg in &registrations[1..] {
            for (acc, &id) in summed.iter_mut().zip(reg) {
                if let Some(g) = grads.get(id) {
                    acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                }
            }
        }
        adam_step(params.tensors_mut(), &names, &summed, &mut adam, cfg.lr_at(it))?;
        trace.push(value);
        observe(it, value, &params);
    }
    Ok(DipModel {
        params,
        latents,
        loss_trace: trace,
    })
}

/// `g_φ(z_t)` for each requested time.
pub fn dip_infer(params: &GeneratorParams, latents: &[Tensor]) -> Result<FrameSeries> {
    let n = params.config().output_hw();
    let frames = latents
        .iter()
        .map(|z| params.render(z)?.to_complex())
        .collect::<Result<Vec<_>>>()?;
    FrameSeries::new(n, frames)
}

/// Trains, then renders one frame per frame index.
pub fn dip_reconstruct(stream: &SpokeStream, coils: &CoilMaps, cfg: &DipConfig) -> Result<(DipModel, ReconResult)> {
    let start = Instant::now();
    let model = dip_train(stream, coils, cfg)?;
    let latents = (0..model.latents.frames())
        .map(|k| model.latents.latent_at(k as f64))
        .collect::<Result<Vec<_>>>()?;
    let series = dip_infer(&model.params, &latents)?;
    let result = ReconResult {
        method: "dip".into(),
        series,
        loss_trace: model.loss_trace.clone(),
        config: cfg.describe(),
        seeds: vec![
            ("dip.init".into(), cfg.init_seed()),
            ("dip.latents".into(), cfg.latent_seed()),
            ("dip.shuffle".into(), cfg.shuffle_seed()),
        ],
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, result))
}

/// Frames a trained model renders for one latent scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRun {
    pub kind: ScenarioKind,
    pub times: Vec<f64>,
    pub series: FrameSeries,
}

/// Renders `kind` through a model trained on an interpolated schedule.
/// Scalar latents are repeated over the trained latent grid.
pub fn dip_scenario(model: &DipModel, kind: &ScenarioKind, seed: u64) -> Result<ScenarioRun> {
    let LatentModel::Schedule(schedule) = &model.latents else {
        return Err(Error::invalid("scenarios need a model trained on interpolated latents"));
    };
    let timed = scenario_latents(kind, schedule, seed)?;
    let shape = model.params.config().latent_shape();
    let latents = timed
        .iter()
        .map(|tl| match kind {
            ScenarioKind::Scalar => broadcast_spatial(&tl.z, &shape),
            _ => Ok(tl.z.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioRun {
        kind: kind.clone(),
        times: timed.iter().map(|tl| tl.t).collect(),
        series: dip_infer(&model.params, &latents)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{GridConfig, GridContext, TrajectoryConfig};
    use crate::phantom::{make_cine_phantom, make_coil_maps, simulate_stream, PhantomConfig, SimulationMode};

    fn tiny(frames: usize, coils: usize) -> (CoilMaps, SpokeStream, DipConfig) {
        let n = 16;
        let series = make_cine_phantom(&PhantomConfig {
            n_image: n,
            frames,
            ..PhantomConfig::desk()
        })
        .unwrap();
        let maps = make_coil_maps(coils, n, 1).unwrap();
        let ctx = GridContext::new(n, GridConfig::standard()).unwrap();
        let stream = simulate_stream(&series, &TrajectoryConfig::golden(n), Arc::new(maps.clone()), ctx, 0.0, SimulationMode::Continuous, 0).unwrap();
        let cfg = DipConfig {
            iterations: 30,
            lr: 1e-2,
            n: 3,
            generator: GeneratorConfig {
                latent_hw: 4,
                latent_ch: 1,
                stages: 2,
                channels: 4,
            },
            ..DipConfig::retro()
        };
        (maps, stream, cfg)
    }

    #[test]
    fn schedule_and_validation() {
        let cfg = DipConfig::retro();
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(1999), 1e-3);
        assert_eq!(cfg.lr_at(2000), 5e-4);
        assert_eq!(cfg.lr_at(9999), 1e-3 / 16.0);
        assert_eq!(DipConfig::dynamic().lr_at(19_999), 1e-3);
        assert!(DipConfig { n: 4, ..cfg.clone() }.validate().is_err());
        assert!(DipConfig { batch: 0, ..cfg.clone() }.validate().is_err());
        assert!(DipConfig { lr: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn trains_deterministically() {
        let (coils, stream, cfg) = tiny(8, 2);
        let a = dip_train(&stream, &coils, &cfg).unwrap();
        let b = dip_train(&stream, &coils, &cfg).unwrap();
        assert_eq!(a.loss_trace.len(), 30);
        assert!(a.loss_trace.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
        assert!(a.loss_trace[29] < a.loss_trace[0]);
    }

    #[test]
    fn batches_and_per_frame_latents() {
        let (coils, stream, cfg) = tiny(6, 1);
        let cfg = DipConfig {
            batch: 3,
            latents: LatentPlan::IndependentPerFrame,
            iterations: 4,
            ..cfg
        };
        let model = dip_train(&stream, &coils, &cfg).unwrap();
        assert!(matches!(model.latents, LatentModel::PerFrame(ref z) if z.len() == 6));
        assert!(model.latents.latent_at(2.5).is_err());
    }

    #[test]
    fn rejects_mismatched_generator() {
        let (coils, stream, cfg) = tiny(6, 1);
        let bad = DipConfig {
            generator: GeneratorConfig { stages: 1, ..cfg.generator.clone() },
            ..cfg.clone()
        };
        assert!(dip_train(&stream, &coils, &bad).is_err());
        let wide = DipConfig { n: 9, ..cfg };
        assert!(dip_train(&stream, &coils, &wide).is_err());
    }

    #[test]
    fn inference_at_anchor_and_half_times() {
        let (coils, stream, cfg) = tiny(8, 1);
        let (model, result) = dip_reconstruct(&stream, &coils, &DipConfig { iterations: 3, ..cfg }).unwrap();
        assert_eq!(result.series.len(), 8);
        let z0 = match &model.latents {
            LatentModel::Schedule(s) => s.anchors.anchors[0].clone(),
            _ => unreachable!(),
        };
        let direct = model.params.render(&z0).unwrap().to_complex().unwrap();
        assert_eq!(result.series.frames[0], direct);
        let mid = model.latents.latent_at(5.5).unwrap();
        let (a, b) = (model.latents.latent_at(5.0).unwrap(), model.latents.latent_at(6.0).unwrap());
        for ((m, x), y) in mid.data().iter().zip(a.data()).zip(b.data()) {
            assert!((m - 0.5 * (x + y)).abs() < 1e-15);
        }
    }
}
