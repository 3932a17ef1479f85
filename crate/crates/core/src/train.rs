//! The full annealing loop over an observation stream.

use crate::error::{OdaError, Result};
use crate::model::{LevelRecord, Observation, OdaModel, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub stop: StopReason,
    pub levels: usize,
    pub observations: u64,
}

/// Runs perturb / converge / merge / remove-idle / cool until a stopping
/// criterion fires or the stream ends. `on_level` sees the model right after
/// each level closes (before the next perturbation is visible to callers,
/// the record is already appended).
pub fn train_with<I, F>(model: &mut OdaModel, stream: I, mut on_level: F) -> Result<TrainOutcome>
where
    I: IntoIterator<Item = Observation>,
    F: FnMut(&OdaModel, &LevelRecord),
{
    let start_levels = model.history.len();
    let start_obs = model.obs_count_total;
    for obs in stream {
        let step = model.observe(&obs.x, obs.c.as_deref())?;
        if let Some(record) = &step.completed {
            on_level(model, record);
        }
        if let Some(stop) = step.stop {
            return Ok(TrainOutcome {
                stop,
                levels: model.history.len() - start_levels,
                observations: model.obs_count_total - start_obs,
            });
        }
    }
    if model.history.len() == start_levels {
        return Err(OdaError::StreamExhausted("the first level converged"));
    }
    model.finish(StopReason::StreamEnded);
    Ok(TrainOutcome {
        stop: StopReason::StreamEnded,
        levels: model.history.len() - start_levels,
        observations: model.obs_count_total - start_obs,
    })
}

pub fn train<I>(model: &mut OdaModel, stream: I) -> Result<TrainOutcome>
where
    I: IntoIterator<Item = Observation>,
{
    train_with(model, stream, |_, _| {})
}
