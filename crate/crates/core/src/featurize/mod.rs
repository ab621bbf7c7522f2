//! Random convolutional featurization.

mod bank;
mod conv;
mod table;

pub use bank::{
    build_bank, fit_whitening, sample_patches, BankConfig, PatchBank, RawPatches, Regularizer,
    Whitening, BIAS,
};
pub use conv::{
    activation_map, featurize_corpus, featurize_image, featurize_indexed, map_extent,
    ActivationMap,
};
pub(crate) use conv::{check_image, preactivation_blocks};
pub use table::{FeatureTable, Precision};

/// Bytes of an 8-bit image of the given size divided by the bytes of its
/// `k` single-precision features.
pub fn compression_ratio(height: usize, width: usize, bands: usize, k: usize) -> f64 {
    (height * width * bands) as f64 / (k * 4) as f64
}
