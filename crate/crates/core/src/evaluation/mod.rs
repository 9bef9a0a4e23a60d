//! Chunk-level scoring, error analysis and significance testing.

mod chunks;
mod errors;
mod profiles;
mod report;
pub mod wilcoxon;

pub use chunks::{conll_f1, extract_chunks, Chunk, Prf};
pub use errors::{
    compare_systems, error_breakdown, evaluate, Comparison, ErrorCounts, EvalReport, Stopwords, WordDifferential,
    WordErrors, DEFAULT_STOPWORDS,
};
pub use profiles::{accumulate_fc_profiles, compare_profiles, FcProfiles, ProfileComparison, WordTest};
pub use report::{
    json_line, load_predictions, read_predictions, render_comparison, render_report, save_predictions,
    write_predictions,
};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_with, Method, WilcoxonResult};
