//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use subtype_core::datamatrix::zscore;
use subtype_core::synth::generate;
use subtype_core::SynthConfig;

/// Standardized synthetic expression matrix with its truth labels.
pub fn fixture(n_samples: usize, n_features: usize) -> (Array2<f64>, Vec<usize>) {
    let cfg = SynthConfig {
        n_samples,
        n_features,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).expect("valid synthetic config");
    let z = zscore(&data.matrix).expect("no missing values");
    (z.values, data.labels)
}
