mod normal;
mod rank;
mod resample;
mod roc;

pub use normal::{inverse_normal_cdf, normal_cdf, z_for_level};
pub use rank::{average_ranks, correlation_matrix, mean_off_diagonal, spearman};
pub use resample::{resample_test, PermutationTestResult};
pub use roc::{auc, delong_ci, roc_curve, AucEstimate, RocCurve, RocPoint};
