//! Reference-distance correlation, leave-one-dyad-out regression, error
//! statistics and a two-component PCA of the embeddings.

mod pca;
mod regression;
mod report;
mod stats;

pub use pca::{pca2, Pca2};
pub use regression::{dyad_folds, lodo_regression, r_squared, KernelRidge, LodoResult, RegressorConfig};
pub use report::{
    embed_corpus, evaluate, evaluate_embeddings, reference_distance, EvalOptions, EvalReport, Group, PcaPoint,
    Prediction, RefKind, ReferenceSet,
};
pub(crate) use report::{csv_err, finish as finish_csv};
pub use stats::{correlation_p_value, ln_gamma, mae_stats, pearson, reg_inc_beta, student_t_two_sided, MaeStats};
