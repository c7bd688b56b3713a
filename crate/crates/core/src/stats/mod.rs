//! Visual Turing test analysis: detection performance, agreement and lead times.

mod binomial;
mod kappa;
mod leadtime;
mod normality;
mod ranksum;
mod reader;
mod responses;

pub use binomial::binomial_test;
pub use kappa::{
    cohen_kappa, pairwise_kappa, pairwise_kappa_summary, Agreement, Kappa, KappaSubset, KappaSummary, PairKappa,
    RELIABILITY_THRESHOLD,
};
pub use leadtime::{group_lead_times, leadtime_analysis, GroupStats, LeadTimeReport, ReaderLeadTime, ReaderTimes};
pub use normality::{kolmogorov_q, ks_normality, ks_statistic, NormalityResult};
pub use ranksum::{midranks, rank_sum_exact, rank_sum_test, RankSumResult, EXACT_MAX_TOTAL};
pub use reader::{analyze_readers, from_counts, reader_performance, ConfusionCounts, ReaderPerformance};
pub use responses::{
    check_records, read_responses_csv, write_responses_csv, Choice, ResponseRecord, Truth, CSV_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("invalid binomial arguments: {successes} successes of {n} at p0={p0}")]
    InvalidCounts { successes: u64, n: u64, p0: f64 },
    #[error("invalid choice {0:?}; expected one of definitely_real, maybe_real, maybe_synthetic, definitely_synthetic")]
    InvalidChoice(String),
    #[error("duplicate response for reader {reader_id}, item {item_id}")]
    DuplicateResponse { reader_id: String, item_id: String },
    #[error("invalid lead time {value} for reader {reader_id}, item {item_id}")]
    InvalidLeadTime { reader_id: String, item_id: String, value: f64 },
    #[error("unexpected response header: {0}")]
    BadHeader(String),
    #[error("response file: {0}")]
    Csv(#[from] csv::Error),
    #[error("label sequences differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least two readers, got {0}")]
    TooFewReaders(usize),
    #[error("reader {reader_id} has not answered {} item(s)", missing.len())]
    IncompleteResponses { reader_id: String, missing: Vec<String> },
    #[error("reader {0} saw only one ground-truth class")]
    SingleClassTruth(String),
    #[error("records mix readers {first} and {other}")]
    MixedReaders { first: String, other: String },
    #[error("empty sample")]
    EmptyGroup,
    #[error("reader {0} has an empty lead-time group")]
    EmptyLeadTimeGroup(String),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("exact rank-sum enumeration limited to {EXACT_MAX_TOTAL} values, got {0}")]
    TooLargeForExact(usize),
}
