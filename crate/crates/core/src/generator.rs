//! The convolutional generator `g_φ`: latent image in, 2-channel complex
//! image out.
//!
//! Layer sequence, with every convolution 3×3, stride 1, zero padding 1:
//!
//! ```text
//! (conv + BN + ReLU) ×2                      at latent size
//! per stage: NN upsample ×2, (conv + BN + ReLU) ×2
//! conv → 2 channels                          (no BN, no ReLU)
//! ```
//!
//! Parameters are enumerated layer by layer as `conv{i}.weight`,
//! `conv{i}.bias`, `bn{i}.gamma`, `bn{i}.beta`; the final layer has no
//! batch-norm entries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{
    record_batchnorm2d, record_conv2d, record_relu, record_upsample_nn2x, NodeId, Tape, Tensor,
};
use crate::error::{Error, Result};

pub const OUT_CHANNELS: usize = 2;
pub const KERNEL: usize = 3;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub latent_hw: usize,
    pub latent_ch: usize,
    pub stages: usize,
    pub channels: usize,
}

impl Default for GeneratorConfig {
    /// The full-size network: 8×8×1 input, four upsampling stages, 128
    /// filters per layer, 128×128×2 output.
    fn default() -> Self {
        Self {
            latent_hw: 8,
            latent_ch: 1,
            stages: 4,
            channels: 128,
        }
    }
}

impl GeneratorConfig {
    /// 8×8 input, three stages, 32 filters: a 64×64 output that trains on a CPU.
    pub fn desk() -> Self {
        Self {
            stages: 3,
            channels: 32,
            ..Self::default()
        }
    }

    /// A configuration whose output side is `output_hw` for the given
    /// latent side (both powers of two).
    pub fn for_output(latent_hw: usize, output_hw: usize, channels: usize) -> Result<Self> {
        if latent_hw == 0 || output_hw % latent_hw != 0 || !(output_hw / latent_hw).is_power_of_two() {
            return Err(Error::invalid(format!(
                "output side {output_hw} is not latent side {latent_hw} times a power of two"
            )));
        }
        Ok(Self {
            latent_hw,
            latent_ch: 1,
            stages: (output_hw / latent_hw).trailing_zeros() as usize,
            channels,
        })
    }

    pub fn output_hw(&self) -> usize {
        self.latent_hw << self.stages
    }

    pub fn conv_layers(&self) -> usize {
        2 * self.stages + 3
    }

    pub fn latent_shape(&self) -> Vec<usize> {
        vec![self.latent_ch, self.latent_hw, self.latent_hw]
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_hw == 0 || self.latent_ch == 0 || self.channels == 0 {
            return Err(Error::invalid(format!("degenerate generator config {self:?}")));
        }
        if self.stages > 12 {
            return Err(Error::invalid(format!("{} upsampling stages is too many", self.stages)));
        }
        Ok(())
    }

    fn layer_io(&self, layer: usize) -> (usize, usize) {
        let last = self.conv_layers() - 1;
        let input = if layer == 0 { self.latent_ch } else { self.channels };
        let output = if layer == last { OUT_CHANNELS } else { self.channels };
        (input, output)
    }

    /// Whether an upsampling step precedes conv layer `layer`.
    fn upsample_before(&self, layer: usize) -> bool {
        layer >= 2 && layer < self.conv_layers() - 1 && layer % 2 == 0
    }
}

/// The trainable weights `φ`, in the fixed enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    config: GeneratorConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

fn expected_layout(config: &GeneratorConfig) -> Vec<(String, Vec<usize>)> {
    let last = config.conv_layers() - 1;
    let mut out = Vec::new();
    for layer in 0..=last {
        let (i, o) = config.layer_io(layer);
        out.push((format!("conv{layer}.weight"), vec![o, i, KERNEL, KERNEL]));
        out.push((format!("conv{layer}.bias"), vec![o]));
        if layer != last {
            out.push((format!("bn{layer}.gamma"), vec![o]));
            out.push((format!("bn{layer}.beta"), vec![o]));
        }
    }
    out
}

/// Fan-in scaled normal weights (`std = √(2 / (in·3·3))`), zero biases,
/// unit gamma, zero beta; fully determined by `seed`.
pub fn init_generator(config: &GeneratorConfig, seed: u64) -> Result<GeneratorParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape) in expected_layout(config) {
        let tensor = if name.ends_with(".weight") {
            let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let len = shape.iter().product();
            let data = (0..len).map(|_| normal.sample(&mut rng)).collect();
            Tensor::new(shape, data)?
        } else if name.ends_with(".gamma") {
            Tensor::filled(shape, 1.0)
        } else {
            Tensor::zeros(shape)
        };
        names.push(name);
        tensors.push(tensor);
    }
    Ok(GeneratorParams {
        config: config.clone(),
        names,
        tensors,
    })
}

impl GeneratorParams {
    /// Rebuilds parameters from named tensors, e.g. a checkpoint.
    pub fn from_named(config: GeneratorConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = expected_layout(&config);
        if layout.len() != named.len() {
            return Err(Error::shape(format!(
                "generator needs {} tensors, got {}",
                layout.len(),
                named.len()
            )));
        }
        for ((name, shape), (got_name, t)) in layout.iter().zip(&named) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::shape(format!(
                    "expected {name} {shape:?}, got {got_name} {:?}",
                    t.shape()
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(Self {
            config,
            names,
            tensors,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Evaluates `g_φ(z)` without keeping the tape.
    pub fn render(&self, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = generate(&mut tape, self, z)?;
        Ok(tape.value(out.image).clone())
    }
}

/// Nodes produced by [`generate`].
#[derive(Clone, Debug)]
pub struct Generated {
    /// `[2, h, w]` planar complex image.
    pub image: NodeId,
    /// Parameter nodes in enumeration order.
    pub params: Vec<NodeId>,
    pub latent: NodeId,
}

/// Records the generator on `tape`, registering `params` as trainable
/// leaves and `z` as a constant input.
pub fn generate(tape: &mut Tape, params: &GeneratorParams, z: &Tensor) -> Result<Generated> {
    let config = &params.config;
    if z.shape() != config.latent_shape().as_slice() {
        return Err(Error::shape(format!(
            "latent has shape {:?}, generator expects {:?}",
            z.shape(),
            config.latent_shape()
        )));
    }
    let nodes: Vec<NodeId> = params.tensors.iter().map(|t| tape.param(t.clone())).collect();
    let latent = tape.leaf(z.clone());
    let image = generate_from_nodes(tape, config, &nodes, latent)?;
    Ok(Generated {
        image,
        params: nodes,
        latent,
    })
}

/// The layer chain over tensors already on the tape, in enumeration order.
pub fn generate_from_nodes(
    tape: &mut Tape,
    config: &GeneratorConfig,
    params: &[NodeId],
    latent: NodeId,
) -> Result<NodeId> {
    let expected = expected_layout(config).len();
    if params.len() != expected {
        return Err(Error::shape(format!(
            "generator needs {expected} parameter tensors, got {}",
            params.len()
        )));
    }
    let last = config.conv_layers() - 1;
    let mut h = latent;
    let mut slot = 0;
    for layer in 0..=last {
        if config.upsample_before(layer) {
            h = record_upsample_nn2x(tape, h)?;
        }
        h = record_conv2d(tape, h, params[slot], params[slot + 1], KERNEL / 2)?;
        slot += 2;
        if layer != last {
            h = record_batchnorm2d(tape, h, params[slot], params[slot + 1], BN_EPS)?;
            h = record_relu(tape, h)?;
            slot += 2;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_table_shapes() {
        let cfg = GeneratorConfig::default();
        assert_eq!(cfg.output_hw(), 128);
        let p = init_generator(&cfg, 1).unwrap();
        assert_eq!(p.get("conv0.weight").unwrap().shape(), &[128, 1, 3, 3]);
        assert_eq!(p.get("conv1.weight").unwrap().shape(), &[128, 128, 3, 3]);
        assert_eq!(p.get("conv10.weight").unwrap().shape(), &[2, 128, 3, 3]);
        assert!(p.get("bn10.gamma").is_none());
        assert_eq!(cfg.conv_layers(), 11);
    }

    #[test]
    fn upsampling_schedule() {
        let cfg = GeneratorConfig::default();
        let ups: Vec<usize> = (0..cfg.conv_layers()).filter(|&l| cfg.upsample_before(l)).collect();
        assert_eq!(ups, vec![2, 4, 6, 8]);
    }

    #[test]
    fn desk_output_and_determinism() {
        let cfg = GeneratorConfig {
            channels: 4,
            ..GeneratorConfig::desk()
        };
        let a = init_generator(&cfg, 42).unwrap();
        let b = init_generator(&cfg, 42).unwrap();
        let c = init_generator(&cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let z = Tensor::filled(cfg.latent_shape(), 0.05);
        let out = a.render(&z).unwrap();
        assert_eq!(out.shape(), &[2, 64, 64]);
        assert!(a.render(&Tensor::zeros(vec![1, 4, 4])).is_err());
    }

    #[test]
    fn first_layer_std() {
        let cfg = GeneratorConfig {
            channels: 1112,
            stages: 0,
            ..GeneratorConfig::default()
        };
        let p = init_generator(&cfg, 7).unwrap();
        let w = p.get("conv0.weight").unwrap().data();
        assert!(w.len() >= 10_000);
        let sample = &w[..10_000];
        let mean = sample.iter().sum::<f64>() / 1e4;
        let std = (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1e4).sqrt();
        let target = (2.0f64 / 9.0).sqrt();
        assert!((std - target).abs() < 0.1 * target, "std {std} vs {target}");
    }

    #[test]
    fn zero_latent_gives_constant_channels() {
        let cfg = GeneratorConfig {
            channels: 6,
            ..GeneratorConfig::desk()
        };
        let p = init_generator(&cfg, 3).unwrap();
        let out = p.render(&Tensor::zeros(cfg.latent_shape())).unwrap();
        for ch in out.data().chunks(64 * 64) {
            assert!(ch.iter().all(|&v| v == ch[0]));
        }
    }

    #[test]
    fn checkpoint_roundtrip_checks_layout() {
        let cfg = GeneratorConfig {
            channels: 3,
            stages: 1,
            ..GeneratorConfig::default()
        };
        let p = init_generator(&cfg, 9).unwrap();
        let named: Vec<_> = p.names().iter().cloned().zip(p.tensors().iter().cloned()).collect();
        let q = GeneratorParams::from_named(cfg.clone(), named.clone()).unwrap();
        assert_eq!(p, q);
        let mut broken = named;
        broken.swap(0, 1);
        assert!(GeneratorParams::from_named(cfg, broken).is_err());
    }

    #[test]
    fn for_output_picks_stages() {
        assert_eq!(GeneratorConfig::for_output(1, 64, 8).unwrap().stages, 6);
        assert_eq!(GeneratorConfig::for_output(64, 64, 8).unwrap().stages, 0);
        assert!(GeneratorConfig::for_output(3, 64, 8).is_err());
    }
}
