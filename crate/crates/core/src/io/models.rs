//! Containers for trained generators, latent schedules and reconstruction
//! results.

use super::{expect_kind, lift, meta, series_from_container, series_to_container, ArrayData, Container, KIND_KEY};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::generator::{GeneratorConfig, GeneratorParams};
use crate::latents::{LatentAnchors, LatentSchedule};
use crate::recon::{DipModel, LatentModel, ReconResult};

pub const CHECKPOINT_KIND: &str = "checkpoint";
pub const RESULT_KIND: &str = "result";

fn push_tensor(c: &mut Container, name: &str, t: &Tensor) -> Result<()> {
    c.push(name, t.shape(), ArrayData::F64(t.data().to_vec()))?;
    Ok(())
}

fn read_tensor(c: &Container, name: &str) -> Result<Tensor> {
    let (shape, data) = lift(c.f64s(name))?;
    Tensor::new(shape.to_vec(), data.to_vec())
}

/// Tensors as `param.<name>` in enumeration order, architecture in metadata.
pub fn generator_to_container(params: &GeneratorParams, c: &mut Container) -> Result<()> {
    let cfg = params.config();
    c.set_meta("generator.latent_hw", cfg.latent_hw)?;
    c.set_meta("generator.latent_ch", cfg.latent_ch)?;
    c.set_meta("generator.stages", cfg.stages)?;
    c.set_meta("generator.channels", cfg.channels)?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        push_tensor(c, &format!("param.{name}"), t)?;
    }
    Ok(())
}

pub fn generator_from_container(c: &Container) -> Result<GeneratorParams> {
    let config = GeneratorConfig {
        latent_hw: meta(c, "generator.latent_hw")?,
        latent_ch: meta(c, "generator.latent_ch")?,
        stages: meta(c, "generator.stages")?,
        channels: meta(c, "generator.channels")?,
    };
    let named = c
        .arrays
        .iter()
        .filter_map(|a| a.name.strip_prefix("param.").map(|n| (n, &a.name)))
        .map(|(short, full)| Ok((short.to_string(), read_tensor(c, full)?)))
        .collect::<Result<Vec<_>>>()?;
    GeneratorParams::from_named(config, named)
}

/// Either the anchors `[A, ...]` of an interpolated schedule or one latent
/// per frame `[K, ...]`.
pub fn latents_to_container(model: &LatentModel, c: &mut Container) -> Result<()> {
    let (kind, stack) = match model {
        LatentModel::Schedule(s) => {
            c.set_meta("latents.frames", s.frames)?;
            c.set_meta("latents.lo", s.anchors.lo)?;
            c.set_meta("latents.hi", s.anchors.hi)?;
            c.set_meta("latents.seed", s.anchors.seed)?;
            ("schedule", &s.anchors.anchors)
        }
        LatentModel::PerFrame(z) => ("per_frame", z),
    };
    c.set_meta("latents.kind", kind)?;
    let first = stack.first().ok_or_else(|| Error::invalid("no latents to store"))?;
    let mut shape = vec![stack.len()];
    shape.extend_from_slice(first.shape());
    let data = stack.iter().flat_map(|t| t.data().iter().copied()).collect();
    c.push("latents", &shape, ArrayData::F64(data))?;
    Ok(())
}

pub fn latents_from_container(c: &Container) -> Result<LatentModel> {
    let (shape, data) = lift(c.f64s("latents"))?;
    if shape.len() < 2 || shape[0] == 0 {
        return Err(Error::shape(format!("latents have shape {shape:?}")));
    }
    let each: usize = shape[1..].iter().product();
    let stack = data
        .chunks(each)
        .map(|d| Tensor::new(shape[1..].to_vec(), d.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let kind: String = meta(c, "latents.kind")?;
    match kind.as_str() {
        "schedule" => {
            let anchors = LatentAnchors {
                anchors: stack,
                lo: meta(c, "latents.lo")?,
                hi: meta(c, "latents.hi")?,
                seed: meta(c, "latents.seed")?,
            };
            Ok(LatentModel::Schedule(LatentSchedule::new(anchors, meta(c, "latents.frames")?)?))
        }
        "per_frame" => Ok(LatentModel::PerFrame(stack)),
        other => Err(Error::invalid(format!("unknown latent kind `{other}`"))),
    }
}

/// A trained model: generator, latents, loss trace and the settings that
/// produced it.
pub fn checkpoint_to_container(model: &DipModel, config_text: &str) -> Result<Container> {
    let mut c = Container::new();
    c.set_meta(KIND_KEY, CHECKPOINT_KIND)?;
    c.set_meta("config", config_text)?;
    generator_to_container(&model.params, &mut c)?;
    latents_to_container(&model.latents, &mut c)?;
    c.push("loss_trace", &[model.loss_trace.len()], ArrayData::F64(model.loss_trace.clone()))?;
    Ok(c)
}

pub fn checkpoint_from_container(c: &Container) -> Result<(DipModel, String)> {
    expect_kind(c, CHECKPOINT_KIND)?;
    let model = DipModel {
        params: generator_from_container(c)?,
        latents: latents_from_container(c)?,
        loss_trace: lift(c.f64s("loss_trace"))?.1.to_vec(),
    };
    Ok((model, meta(c, "config")?))
}

/// Frames, loss trace, resolved config and seeds. Wall-clock time is left
/// out so that identical runs give identical files.
pub fn result_to_container(r: &ReconResult) -> Result<Container> {
    let mut c = Container::new();
    c.set_meta(KIND_KEY, RESULT_KIND)?;
    c.set_meta("method", &r.method)?;
    c.set_meta("config", &r.config)?;
    c.set_meta("seeds", r.seeds.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join(","))?;
    for (name, seed) in &r.seeds {
        c.set_meta(&format!("seed.{name}"), seed)?;
    }
    series_to_container(&r.series, "frames", &mut c)?;
    c.push("loss_trace", &[r.loss_trace.len()], ArrayData::F64(r.loss_trace.clone()))?;
    Ok(c)
}

pub fn result_from_container(c: &Container) -> Result<ReconResult> {
    expect_kind(c, RESULT_KIND)?;
    let names: String = meta(c, "seeds")?;
    let seeds = names
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|name| Ok((name.to_string(), meta(c, &format!("seed.{name}"))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconResult {
        method: meta(c, "method")?,
        series: series_from_container(c, "frames")?,
        loss_trace: lift(c.f64s("loss_trace"))?.1.to_vec(),
        config: meta(c, "config")?,
        seeds,
        wall_clock_s: 0.0,
    })
}
