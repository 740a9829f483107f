//! The `TDDR1` container format, P5 graymaps, and the mappings between
//! containers and the pipeline's data types.

mod container;
mod graymap;
mod models;

use std::str::FromStr;

use num_complex::Complex64;

pub use container::{ArrayData, Container, NamedArray, MAGIC};
pub use graymap::{dump_grayscale, percentile, to_gray, GrayInfo, Window};
pub use models::{
    checkpoint_from_container, checkpoint_to_container, generator_from_container,
    generator_to_container, latents_from_container, latents_to_container, result_from_container,
    result_to_container, CHECKPOINT_KIND, RESULT_KIND,
};

use crate::error::{Error, FormatError, Result};
use crate::forward::{CoilMaps, Spoke, SpokeStream, TrajectoryConfig};
use crate::phantom::FrameSeries;

/// Which kind of artifact a container holds.
pub const KIND_KEY: &str = "kind";

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Format {
        path: Default::default(),
        kind: FormatError::BadMeta {
            key: key.to_string(),
            reason: reason.into(),
        },
    }
}

pub(crate) fn lift<T>(r: std::result::Result<T, FormatError>) -> Result<T> {
    r.map_err(|kind| Error::Format {
        path: Default::default(),
        kind,
    })
}

pub(crate) fn meta<T: FromStr>(c: &Container, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    lift(c.meta_parse(key))
}

pub fn expect_kind(c: &Container, kind: &str) -> Result<()> {
    let found = lift(c.meta(KIND_KEY))?;
    if found != kind {
        return Err(bad(KIND_KEY, format!("expected `{kind}`, found `{found}`")));
    }
    Ok(())
}

/// Complex frames stacked as `[K, n, n]`.
pub fn series_to_container(series: &FrameSeries, name: &str, c: &mut Container) -> Result<()> {
    let n = series.n_image;
    let data: Vec<Complex64> = series.frames.iter().flatten().copied().collect();
    c.push(name, &[series.len(), n, n], ArrayData::C128(data))?;
    c.set_meta(&format!("{name}.dt"), series.dt)?;
    Ok(())
}

pub fn series_from_container(c: &Container, name: &str) -> Result<FrameSeries> {
    let (shape, data) = lift(c.c128s(name))?;
    let [k, n, n2] = shape[..] else {
        return Err(Error::shape(format!("`{name}` has shape {shape:?}, expected [K, n, n]")));
    };
    if n != n2 || k == 0 {
        return Err(Error::shape(format!("`{name}` has shape {shape:?}, expected [K, n, n]")));
    }
    let mut series = FrameSeries::new(n, data.chunks(n * n).map(<[Complex64]>::to_vec).collect())?;
    series.dt = meta(c, &format!("{name}.dt"))?;
    Ok(series)
}

pub fn coils_to_container(coils: &CoilMaps, c: &mut Container) -> Result<()> {
    let n = coils.n_image;
    let data: Vec<Complex64> = coils.maps.iter().flatten().copied().collect();
    c.push("coil_maps", &[coils.count(), n, n], ArrayData::C128(data))?;
    Ok(())
}

pub fn coils_from_container(c: &Container) -> Result<CoilMaps> {
    let (shape, data) = lift(c.c128s("coil_maps"))?;
    let [count, n, n2] = shape[..] else {
        return Err(Error::shape(format!("coil maps have shape {shape:?}")));
    };
    if n != n2 || count == 0 {
        return Err(Error::shape(format!("coil maps have shape {shape:?}")));
    }
    let coils = CoilMaps {
        n_image: n,
        maps: data.chunks(n * n).map(<[Complex64]>::to_vec).collect(),
    };
    coils.validate()?;
    Ok(coils)
}

fn trajectory_to_container(t: &TrajectoryConfig, c: &mut Container) -> Result<()> {
    c.set_meta("trajectory.theta0", t.theta0)?;
    c.set_meta("trajectory.dtheta", t.dtheta)?;
    c.set_meta("trajectory.dt", t.dt)?;
    c.set_meta("trajectory.m_omega", t.m_omega)?;
    c.set_meta("trajectory.n_image", t.n_image)?;
    Ok(())
}

fn trajectory_from_container(c: &Container) -> Result<TrajectoryConfig> {
    let t = TrajectoryConfig {
        theta0: meta(c, "trajectory.theta0")?,
        dtheta: meta(c, "trajectory.dtheta")?,
        dt: meta(c, "trajectory.dt")?,
        m_omega: meta(c, "trajectory.m_omega")?,
        n_image: meta(c, "trajectory.n_image")?,
    };
    t.validate()?;
    Ok(t)
}

/// Per-spoke angles `[K]` and samples `[K, C, m_omega]`.
pub fn stream_to_container(stream: &SpokeStream, c: &mut Container) -> Result<()> {
    trajectory_to_container(&stream.trajectory, c)?;
    c.set_meta("stream.coils", stream.coils)?;
    c.set_meta("stream.spokes_per_frame", stream.spokes_per_frame)?;
    let k = stream.len();
    let angles = stream.spokes.iter().map(|s| s.angle).collect();
    c.push("spoke_angles", &[k], ArrayData::F64(angles))?;
    let samples = stream.spokes.iter().flat_map(|s| s.samples.iter().copied()).collect();
    c.push(
        "spoke_samples",
        &[k, stream.coils, stream.trajectory.m_omega],
        ArrayData::C128(samples),
    )?;
    Ok(())
}

pub fn stream_from_container(c: &Container) -> Result<SpokeStream> {
    let trajectory = trajectory_from_container(c)?;
    let coils: usize = meta(c, "stream.coils")?;
    let spokes_per_frame = meta(c, "stream.spokes_per_frame")?;
    let (_, angles) = lift(c.f64s("spoke_angles"))?;
    let (shape, samples) = lift(c.c128s("spoke_samples"))?;
    if shape != [angles.len(), coils, trajectory.m_omega] {
        return Err(Error::shape(format!(
            "spoke samples have shape {shape:?}, expected [{}, {coils}, {}]",
            angles.len(),
            trajectory.m_omega
        )));
    }
    let per_spoke = coils * trajectory.m_omega;
    let spokes = angles
        .iter()
        .enumerate()
        .map(|(k, &angle)| Spoke {
            index: k,
            angle,
            samples: samples[k * per_spoke..(k + 1) * per_spoke].to_vec(),
        })
        .collect();
    let stream = SpokeStream {
        trajectory,
        coils,
        spokes_per_frame,
        spokes,
    };
    stream.validate()?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::forward::{GridConfig, GridContext};
    use crate::phantom::{make_cine_phantom, make_coil_maps, simulate_stream, PhantomConfig, SimulationMode};

    #[test]
    fn artifacts_round_trip() {
        let n = 16;
        let series = make_cine_phantom(&PhantomConfig {
            n_image: n,
            frames: 6,
            ..PhantomConfig::desk()
        })
        .unwrap();
        let coils = Arc::new(make_coil_maps(3, n, 2).unwrap());
        let traj = TrajectoryConfig {
            theta0: 0.1,
            ..TrajectoryConfig::golden(n)
        };
        let ctx = GridContext::new(n, GridConfig::standard()).unwrap();
        let stream = simulate_stream(&series, &traj, coils.clone(), ctx, 0.3, SimulationMode::Continuous, 4).unwrap();

        let mut c = Container::new();
        c.set_meta(KIND_KEY, "bundle").unwrap();
        series_to_container(&series, "truth", &mut c).unwrap();
        coils_to_container(&coils, &mut c).unwrap();
        stream_to_container(&stream, &mut c).unwrap();
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        expect_kind(&back, "bundle").unwrap();
        assert!(expect_kind(&back, "result").is_err());
        assert_eq!(series_from_container(&back, "truth").unwrap(), series);
        assert_eq!(coils_from_container(&back).unwrap(), *coils);
        assert_eq!(stream_from_container(&back).unwrap(), stream);
        assert!(series_from_container(&back, "coil_maps").is_err());
    }
}
