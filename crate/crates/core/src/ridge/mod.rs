//! Ridge regression on feature tables: splits, the spectral solver,
//! cross-validated penalty selection, label transforms, and persisted models.

mod cv;
mod metrics;
mod model;
mod solver;
mod split;
mod transform;

pub use cv::{default_lambda_grid, fit_cv_fold, log_grid, tune_lambda, CvOptions, CvReport};
pub use metrics::{r_squared, weight_similarity};
pub use model::{RidgeModel, RidgeOptions};
pub use solver::{fit_ridge, RidgeFit, RidgePath, Standardization};
pub use split::{holdout_split, kfold_assign};
pub use transform::LabelTransform;
