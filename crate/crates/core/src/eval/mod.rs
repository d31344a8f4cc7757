//! Metrics and evaluation tracks: detection, model identification, and
//! perturbation robustness sweeps, with report and plot emission.

mod metrics;
mod plot;
mod report;
mod sweep;
mod tracks;

pub use metrics::{auc, balanced_accuracy, best_threshold};
pub use plot::{render_line_chart, render_scatter};
pub use report::{GroupMetrics, MetricsReport, Track};
pub use sweep::{curve_to_text, robustness_sweep, SweepKind, SweepPoint};
pub use tracks::{detection_track, model_id_track, DetectorScorer, NetScorer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("group {0} has no examples")]
    EmptyGroup(String),
    #[error(transparent)]
    Image(#[from] crate::imgproc::ImgError),
}
