//! Reconstruction engines: the time-dependent deep image prior, temporal-TV
//! compressed sensing, density-compensated backprojection and the all-spoke
//! overlap image. All consume a [`SpokeStream`] plus [`CoilMaps`] and emit a
//! [`ReconResult`].

mod bp;
mod cs;
mod dip;
mod tv;

use std::sync::Arc;

pub use bp::{bp_reconstruct, ov_reconstruct};
pub use cs::{cs_bins, cs_reconstruct, CsConfig, CsOutcome};
pub use dip::{
    dip_infer, dip_reconstruct, dip_scenario, dip_train, dip_train_with, DipConfig, DipModel,
    LatentModel, LatentPlan, LrSchedule, ScenarioRun,
};
pub use tv::tv1d_prox;

use crate::error::{Error, Result};
use crate::forward::{CoilMaps, GridConfig, GridContext, SpokeStream};
use crate::phantom::FrameSeries;

#[derive(Clone, Debug, PartialEq)]
pub struct ReconResult {
    pub method: String,
    pub series: FrameSeries,
    /// Data-fidelity value per iteration; empty for the direct methods.
    pub loss_trace: Vec<f64>,
    /// Resolved settings as `key = value` lines.
    pub config: String,
    pub seeds: Vec<(String, u64)>,
    pub wall_clock_s: f64,
}

/// Checks that a stream and coil set can be reconstructed together and
/// builds the shared gridding context.
pub(crate) fn prepare(stream: &SpokeStream, coils: &CoilMaps) -> Result<Arc<GridContext>> {
    stream.validate()?;
    coils.validate()?;
    if stream.is_empty() {
        return Err(Error::invalid("the spoke stream is empty"));
    }
    if coils.n_image != stream.trajectory.n_image {
        return Err(Error::shape(format!(
            "coil maps are {}², trajectory grid is {}²",
            coils.n_image, stream.trajectory.n_image
        )));
    }
    if coils.count() != stream.coils {
        return Err(Error::shape(format!(
            "stream has {} coils, {} maps given",
            stream.coils,
            coils.count()
        )));
    }
    GridContext::new(coils.n_image, GridConfig::standard())
}
