//! Evaluation: fidelity metrics, agreement metrics and paired rater tests.

pub mod metrics;
pub mod paired;
pub mod vessels;

pub use metrics::{dice, mse, otsu_binarize, pearson, psnr, ConfusionCounts};
pub use paired::{
    fisher_exact, gss_predictive, mcnemar, mcnemar_counts, McNemarMode, McNemarResult,
    PairedOutcomes, PairedUnit, Predictive, PredictiveComparison, ScoreTest,
};
pub use vessels::{sample_squares, vessel_order_report, Square, VesselOrderReport, VesselOrderTable};
