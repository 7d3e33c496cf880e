//! Two-dimensional views of sample rows: PCA and exact t-SNE, plus TSV and
//! SVG export of the resulting coordinates.

mod pca;
mod svg;
mod tsne;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsv;

pub use pca::{pca, PcaFit};
pub use svg::scatter_svg;
pub use tsne::{
    conditional_probabilities, joint_probabilities, kl_divergence, tsne, TsneConfig, TsneFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `n × components` coordinates.
    pub coords: Array2<f64>,
    pub method: ProjectionMethod,
    /// PCA only: variance along each component, non-increasing.
    pub explained_variance: Option<Vec<f64>>,
}

impl Projection {
    /// `sample_id, dim1, dim2, cluster_or_label`.
    pub fn save(&self, path: &Path, sample_ids: &[String], groups: &[String]) -> Result<()> {
        let n = self.coords.nrows();
        if sample_ids.len() != n || groups.len() != n || self.coords.ncols() < 2 {
            return Err(Error::invalid("projection export needs n ids, n groups and 2 dims"));
        }
        let rows = (0..n).map(|i| {
            vec![
                sample_ids[i].clone(),
                self.coords[[i, 0]].to_string(),
                self.coords[[i, 1]].to_string(),
                groups[i].clone(),
            ]
        });
        tsv::write_table(path, &["sample_id", "dim1", "dim2", "cluster_or_label"], rows)
    }
}
