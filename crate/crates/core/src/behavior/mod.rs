//! Behavioral analytics over dispute conversations and buyer timelines.

pub mod churn;
pub mod conversation;
pub mod errors;
pub mod politeness;

pub use churn::{buyer_outcomes, individual_ratio, pre_post, soft_churn, ChurnReport, ChurnRow};
pub use conversation::{
    first_message_correlation, pearson_with_p, position_bin, trajectories, CorrelationReport, CorrelationRow,
    TrajectoryReport, TrajectoryRow, MIN_SUPPORT, SIGNIFICANCE,
};
pub use errors::{error_analysis, AppealGroup, ErrorAnalysisReport, TermRatio, MIN_TERM_FREQUENCY};
pub use politeness::{detect_politeness, labeled_corpus, LabeledMessage, PolitenessVector, Strategy};
