//! Random convolutional features for gridded imagery.
//!
//! Images are encoded once by a frozen bank of whitened random patches
//! (convolution, bias, ReLU, average pooling). Each downstream task is then a
//! cross-validated ridge regression on the resulting feature table. The crate
//! also carries the spatial-extrapolation experiments, a Gaussian RBF
//! interpolation baseline, a two-sensor block ridge, and label
//! super-resolution from un-pooled activation maps.

pub mod error;
pub mod featurize;
pub mod grid;
pub mod image;
pub mod multisensor;
pub mod ridge;
pub mod rng;
pub mod spatial;
pub mod superres;
pub mod synth;

mod io;

pub use error::{Error, Result};
pub use featurize::{
    build_bank, featurize_corpus, featurize_image, ActivationMap, BankConfig, FeatureTable,
    PatchBank, Precision,
};
pub use grid::{build_grid, sample_cells, Bounds, CellId, Grid};
pub use image::{coarsen, Image};
pub use ridge::{LabelTransform, RidgeModel};
