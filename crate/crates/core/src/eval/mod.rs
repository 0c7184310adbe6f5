//! Frame metrics, per-speaker macro averages, paired significance tests and
//! deterministic report files.

mod metrics;
mod report;
mod ttest;

pub use metrics::{f1_score, frame_metrics, per_speaker_average, FrameMetrics, MacroMetrics};
pub use report::{
    canonical_json, compare_reports, emit_report, read_report, write_json, ComparisonResult, EvalReport,
    SpeakerScore, ALPHA,
};
pub use ttest::{inc_beta, ln_gamma, paired_one_tailed_ttest, student_t_upper, TTest, P_BOUND};
