//! Checkpoint directories: a JSON state file plus four weight files
//! (current, best, Adam first and second moments).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::nn::weights::{read_weights, write_weights};
use crate::nn::{AdamConfig, AdamState, ParamStore};
use crate::trainer::{LearningCurve, StopReason, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

const STATE_FILE: &str = "checkpoint.json";
const WEIGHT_FILES: [&str; 4] = ["params.txt", "best.txt", "adam_m.txt", "adam_v.txt"];

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub params: ParamStore<f32>,
    pub best_params: ParamStore<f32>,
    pub adam: AdamState<f32>,
    pub curve: LearningCurve,
    pub split_seed: u64,
    /// Completed optimisation steps.
    pub iteration: usize,
    pub stale_validations: usize,
    pub stopped: Option<StopReason>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct State {
    version: u32,
    spec: ModelSpec,
    config: TrainConfig,
    curve: LearningCurve,
    split_seed: u64,
    iteration: usize,
    stale_validations: usize,
    stopped: Option<StopReason>,
    adam_step: u64,
    adam: AdamConfig,
}

impl Checkpoint {
    /// Writes the checkpoint into directory `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let state = State {
            version: self.version,
            spec: self.spec,
            config: self.config.clone(),
            curve: self.curve.clone(),
            split_seed: self.split_seed,
            iteration: self.iteration,
            stale_validations: self.stale_validations,
            stopped: self.stopped,
            adam_step: self.adam.step,
            adam: self.adam.config,
        };
        let path = dir.join(STATE_FILE);
        let text = serde_json::to_string_pretty(&state).map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let stores = [&self.params, &self.best_params, &self.adam.first, &self.adam.second];
        for (name, store) in WEIGHT_FILES.iter().zip(stores) {
            write_weights(store, &dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(STATE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let st: State = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if st.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                &path,
                format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", st.version),
            ));
        }
        let [params, best_params, first, second] = WEIGHT_FILES.map(|n| read_weights(&dir.join(n)));
        let (params, best_params, first, second) = (params?, best_params?, first?, second?);
        for other in [&best_params, &first, &second] {
            params.expect_congruent(other, "checkpoint weight files")?;
        }
        let ck = Checkpoint {
            version: st.version,
            spec: st.spec,
            config: st.config,
            params,
            best_params,
            adam: AdamState {
                step: st.adam_step,
                first,
                second,
                config: st.adam,
            },
            curve: st.curve,
            split_seed: st.split_seed,
            iteration: st.iteration,
            stale_validations: st.stale_validations,
            stopped: st.stopped,
        };
        // Rebuild once to confirm the weights fit the recorded architecture.
        ck.network()?;
        Ok(ck)
    }
}
