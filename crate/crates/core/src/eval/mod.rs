//! AUC/ROC metrics, test-set evaluation, the family cross matrix, and the
//! ablation studies.

mod detector;
mod metrics;
mod report;
mod studies;

pub use detector::chroma_contrast_detector;
pub use metrics::{auc, roc_points, RocCurve};
pub use report::{
    cross_matrix, evaluate, report_csv, report_row, roc_csv, score_samples, scores_csv, EvalReport, ScoredSample,
    REPORT_HEADER,
};
pub use studies::{ablate_decoder, augmentation_study, StudyResult, StudyRow};
