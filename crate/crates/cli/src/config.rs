//! Run configuration: a preset, then the config file, then command-line
//! overrides, merged as TOML tables and checked for unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use tdip::forward::TrajectoryConfig;
use tdip::generator::GeneratorConfig;
use tdip::phantom::{PhantomConfig, SimulationMode};
use tdip::recon::{CsConfig, DipConfig, LatentPlan, LrSchedule};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub phantom: PhantomSection,
    pub trajectory: TrajectorySection,
    pub simulation: SimulationSection,
    pub generator: GeneratorSection,
    pub latents: LatentSection,
    pub dip: DipSection,
    pub cs: CsSection,
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    pub n_image: usize,
    pub frames: usize,
    pub beats: f64,
    pub depth: f64,
    pub jitter: f64,
    pub phase_roll: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub theta0_deg: f64,
    pub dtheta_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// "continuous" or "retrospective".
    pub mode: String,
    /// Spokes per phase in retrospective mode; phases are the phantom frames.
    pub spokes_per_phase: usize,
    pub coils: usize,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub latent_hw: usize,
    pub latent_ch: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSection {
    /// "interpolated" or "independent".
    pub plan: String,
    pub anchors: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipSection {
    pub iterations: usize,
    pub lr: f64,
    /// Multiply the rate by `lr_factor` every `lr_every` iterations; 0 disables.
    pub lr_every: usize,
    pub lr_factor: f64,
    pub batch: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsSection {
    pub lambda: f64,
    pub iterations: usize,
    pub accelerated: bool,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// Cross-section column; negative selects the grid center.
    pub column: i64,
}

pub const PRESETS: [&str; 5] = ["desk", "retro", "dynamic", "retro-desk", "dynamic-desk"];

impl RunConfig {
    /// The default: 64×64, 20 frames, 4 coils, one spoke per frame, `n = 5`,
    /// two `U(0, 0.1)` anchors and 3,000 iterations at 3e-3, halved after
    /// 2,000. This is the protocol the acceptance suite runs every engine
    /// under.
    pub fn desk() -> Self {
        Self {
            preset: "desk".into(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            threads: 1,
            phantom: PhantomSection {
                n_image: 64,
                frames: 20,
                beats: 2.0,
                depth: 0.4,
                jitter: 0.0,
                phase_roll: 0.4,
            },
            trajectory: TrajectorySection {
                theta0_deg: 0.0,
                dtheta_deg: 111.25,
            },
            simulation: SimulationSection {
                mode: "continuous".into(),
                spokes_per_phase: 13,
                coils: 4,
                sigma: 0.0,
            },
            generator: GeneratorSection {
                latent_hw: 8,
                latent_ch: 1,
                channels: 32,
            },
            latents: LatentSection {
                plan: "interpolated".into(),
                anchors: 2,
                lo: 0.0,
                hi: 0.1,
            },
            dip: DipSection {
                iterations: 3000,
                lr: 3e-3,
                lr_every: 2000,
                lr_factor: 0.5,
                batch: 1,
                n: 5,
            },
            cs: CsSection {
                lambda: CsConfig::default().lambda,
                iterations: CsConfig::default().iterations,
                accelerated: true,
                n: 5,
            },
            metrics: MetricsSection { column: -1 },
        }
    }

    /// Retrospective protocol at full size: 128×128, 23 phases of 13
    /// spokes, the 128-filter generator, `n = 13`, `U(0, 0.1)` latents
    /// between two endpoints, 10,000 iterations at 1e-3 halved every 2,000.
    pub fn retro() -> Self {
        let paper = DipConfig::retro();
        let schedule = paper.schedule.expect("retro halves its rate");
        let base = Self::desk();
        Self {
            preset: "retro".into(),
            phantom: PhantomSection {
                n_image: 128,
                frames: 23,
                ..base.phantom.clone()
            },
            simulation: SimulationSection {
                mode: "retrospective".into(),
                spokes_per_phase: 13,
                ..base.simulation.clone()
            },
            generator: GeneratorSection {
                channels: GeneratorConfig::default().channels,
                ..base.generator.clone()
            },
            latents: LatentSection {
                plan: "interpolated".into(),
                anchors: 2,
                lo: paper.latent_lo,
                hi: paper.latent_hi,
            },
            dip: DipSection {
                iterations: paper.iterations,
                lr: paper.lr,
                lr_every: schedule.every,
                lr_factor: schedule.factor,
                batch: paper.batch,
                n: paper.n,
            },
            cs: CsSection { n: 13, ..base.cs.clone() },
            ..base
        }
    }

    /// Dynamic protocol at full size: 128×128, continuous acquisition over
    /// 100 frames, `n = 5`, `U(0, 10)` latents over 14 segments, 20,000
    /// iterations at 1e-3 without decay.
    pub fn dynamic() -> Self {
        let paper = DipConfig::dynamic();
        let LatentPlan::Interpolated { anchors } = paper.latents else {
            unreachable!("the dynamic protocol interpolates")
        };
        let base = Self::desk();
        Self {
            preset: "dynamic".into(),
            phantom: PhantomSection {
                n_image: 128,
                frames: 100,
                ..base.phantom.clone()
            },
            generator: GeneratorSection {
                channels: GeneratorConfig::default().channels,
                ..base.generator.clone()
            },
            latents: LatentSection {
                plan: "interpolated".into(),
                anchors,
                lo: paper.latent_lo,
                hi: paper.latent_hi,
            },
            dip: DipSection {
                iterations: paper.iterations,
                lr: paper.lr,
                lr_every: 0,
                lr_factor: 0.5,
                batch: paper.batch,
                n: paper.n,
            },
            ..base
        }
    }

    /// `retro` on the 64×64 grid with the 32-filter generator and a fifth
    /// of the iterations, halving every 600.
    pub fn retro_desk() -> Self {
        let full = Self::retro();
        let desk = Self::desk();
        Self {
            preset: "retro-desk".into(),
            phantom: PhantomSection {
                n_image: desk.phantom.n_image,
                ..full.phantom
            },
            generator: desk.generator,
            dip: DipSection {
                iterations: full.dip.iterations / 5,
                lr_every: full.dip.lr_every / 5,
                ..full.dip
            },
            ..full
        }
    }

    /// `dynamic` on the desk grid and frame count with the 32-filter
    /// generator and 3,000 iterations.
    pub fn dynamic_desk() -> Self {
        let full = Self::dynamic();
        let desk = Self::desk();
        Self {
            preset: "dynamic-desk".into(),
            phantom: desk.phantom,
            generator: desk.generator,
            dip: DipSection {
                iterations: desk.dip.iterations,
                ..full.dip
            },
            ..full
        }
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "desk" => Ok(Self::desk()),
            "retro" => Ok(Self::retro()),
            "dynamic" => Ok(Self::dynamic()),
            "retro-desk" => Ok(Self::retro_desk()),
            "dynamic-desk" => Ok(Self::dynamic_desk()),
            other => Err(CliError::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Preset, then `file`, then `overrides` (dotted keys), later ones
    /// winning. Unknown keys and ill-typed values are config errors.
    pub fn resolve(file: Option<&Path>, preset: Option<&str>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let file_table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        let name = match (preset, file_table.get("preset")) {
            (Some(p), _) => p.to_string(),
            (None, Some(Value::String(p))) => p.clone(),
            (None, Some(other)) => return Err(CliError::Config(format!("preset must be a string, got {other}"))),
            (None, None) => "desk".to_string(),
        };
        let mut table = Value::try_from(Self::preset(&name)?)
            .map_err(|e| CliError::Config(e.to_string()))?
            .as_table()
            .cloned()
            .expect("config serializes to a table");
        merge(&mut table, file_table);
        for (key, value) in overrides {
            set_dotted(&mut table, key, value.clone())?;
        }
        table.insert("preset".into(), Value::String(name));
        let config: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !["continuous", "retrospective"].contains(&self.simulation.mode.as_str()) {
            return bad(format!("simulation.mode must be continuous or retrospective, got `{}`", self.simulation.mode));
        }
        if !["interpolated", "independent"].contains(&self.latents.plan.as_str()) {
            return bad(format!("latents.plan must be interpolated or independent, got `{}`", self.latents.plan));
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        self.phantom_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.trajectory_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// The settings that determine numerical output, i.e. everything but
    /// the output directory and thread count. Stored inside containers.
    pub fn provenance(&self) -> String {
        let mut table = Table::try_from(self).expect("config is serializable");
        table.remove("out_dir");
        table.remove("threads");
        toml::to_string(&table).expect("table is serializable")
    }

    pub fn phantom_config(&self) -> PhantomConfig {
        PhantomConfig {
            n_image: self.phantom.n_image,
            frames: self.phantom.frames,
            beats: self.phantom.beats,
            depth: self.phantom.depth,
            jitter: self.phantom.jitter,
            phase_roll: self.phantom.phase_roll,
            ..PhantomConfig::desk()
        }
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            theta0: self.trajectory.theta0_deg * PI / 180.0,
            dtheta: self.trajectory.dtheta_deg * PI / 180.0,
            ..TrajectoryConfig::golden(self.phantom.n_image)
        }
    }

    pub fn simulation_mode(&self) -> SimulationMode {
        match self.simulation.mode.as_str() {
            "retrospective" => SimulationMode::Retrospective {
                spokes_per_phase: self.simulation.spokes_per_phase,
            },
            _ => SimulationMode::Continuous,
        }
    }

    /// Engine settings for a stream on an `n_image` grid.
    pub fn dip_config(&self, n_image: usize) -> Result<DipConfig, CliError> {
        let g = &self.generator;
        let generator = GeneratorConfig {
            latent_ch: g.latent_ch,
            ..GeneratorConfig::for_output(g.latent_hw, n_image, g.channels).map_err(|e| CliError::Config(e.to_string()))?
        };
        let cfg = DipConfig {
            iterations: self.dip.iterations,
            lr: self.dip.lr,
            schedule: (self.dip.lr_every > 0).then_some(LrSchedule {
                every: self.dip.lr_every,
                factor: self.dip.lr_factor,
            }),
            batch: self.dip.batch,
            n: self.dip.n,
            seed: self.seed,
            generator,
            latents: match self.latents.plan.as_str() {
                "independent" => LatentPlan::IndependentPerFrame,
                _ => LatentPlan::Interpolated {
                    anchors: self.latents.anchors,
                },
            },
            latent_lo: self.latents.lo,
            latent_hi: self.latents.hi,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn cs_config(&self) -> CsConfig {
        CsConfig {
            lambda: self.cs.lambda,
            iterations: self.cs.iterations,
            accelerated: self.cs.accelerated,
            seed: self.seed,
            ..CsConfig::default()
        }
    }
}

fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        cur = match cur.entry(p).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("`{p}` in `{key}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
