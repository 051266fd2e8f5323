//! Gradient-boosted regression trees with logistic loss, used as the
//! high-capacity consistency model.

mod bins;
mod fit;
mod grid;
mod model;

pub use fit::{fit_gbt, fit_gbt_traced, log_loss, GbtConfig, GbtFit, HESSIAN_FLOOR};
pub use grid::{accuracy, grid_search, GridCell, GridResult, GridSpec, SelectionMetric, GRID_TRAIN_FRACTION};
pub use model::{sigmoid, BoostedModel};
