//! Per-subcommand run configurations. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datapipe::{SplitFractions, StripDims, Subset};
use crate::evalstat::{McNemarMode, VesselOrderTable};
use crate::flowmap::{Projection, DISPLAY_OVERLAP};
use crate::model::{ChannelGrowth, ModelSpec};
use crate::phantom::PhantomConfig;
use crate::trainer::TrainConfig;

fn one() -> usize {
    1
}

fn test_subset() -> Subset {
    Subset::Test
}

fn display_overlap() -> usize {
    DISPLAY_OVERLAP
}

fn doubling() -> ChannelGrowth {
    ChannelGrowth::Doubling
}

fn exact() -> McNemarMode {
    McNemarMode::Exact
}

fn square_side() -> usize {
    16
}

fn square_count() -> usize {
    8
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomRun {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub phantom: PhantomConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    /// Run directory of a `phantom` run.
    pub corpus: PathBuf,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub fractions: SplitFractions,
    #[serde(default)]
    pub strip: StripDims,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BakeoffRun {
    pub corpus: PathBuf,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub fractions: SplitFractions,
    #[serde(default)]
    pub strip: StripDims,
    #[serde(default = "doubling")]
    pub growth: ChannelGrowth,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeamChoice {
    #[default]
    Metric,
    Feathered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferRun {
    /// Run directory of a `train` run.
    pub train_run: PathBuf,
    pub corpus: PathBuf,
    #[serde(default = "test_subset")]
    pub subset: Subset,
    /// Defaults to the training strip size.
    pub strip: Option<StripDims>,
    #[serde(default)]
    pub seams: SeamChoice,
    #[serde(default = "display_overlap")]
    pub overlap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    pub volume: PathBuf,
    /// Structure volume whose retina band bounds the projection.
    pub band_from: PathBuf,
    /// Defaults to max for flow volumes and average otherwise.
    pub projection: Option<Projection>,
    #[serde(default)]
    pub sixteen_bit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectRun {
    pub maps: Vec<MapSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub corpus: PathBuf,
    /// Run directory of an `infer` run.
    pub infer_run: PathBuf,
    #[serde(default = "square_side")]
    pub square_side: usize,
    #[serde(default = "square_count")]
    pub square_count: usize,
    #[serde(default)]
    pub square_seed: u64,
    #[serde(default = "exact")]
    pub mcnemar: McNemarMode,
    /// Footprint fraction a map must cover for a vessel to count as seen.
    #[serde(default = "half")]
    pub min_vessel_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRun {
    /// Paired outcome table (`unit,truth,rater_a,rater_b`).
    pub paired: PathBuf,
    #[serde(default = "exact")]
    pub mcnemar: McNemarMode,
    pub vessel_table: Option<VesselOrderTable>,
    /// Also report the clinical second-order vessel row.
    #[serde(default)]
    pub clinical_reference: bool,
}
