//! Turning raw application logs into model inputs: signal scores, effort
//! times and consideration flags.

mod consideration;
mod edit_distance;
mod effort;
mod signal;

pub use consideration::{
    build_consideration_sets, ClickRecord, ConsiderationOptions, ConsiderationOutcome, Era,
    ExcludedJob, JobClicks,
};
pub use edit_distance::{
    levenshtein, min_worker_edit_distance, normalized_edit_distance, normalized_edit_distance_with,
    Granularity,
};
pub use effort::{validate_effort, EffortRejection};
pub use signal::{aggregate_signal, CriteriaVector, COPY_PASTE_THRESHOLD};
