//! Differential expression, gene-set overrepresentation and survival
//! analysis, plus the special functions their p-values need.

mod deg;
mod enrich;
pub mod special;
mod survival;

pub use deg::{benjamini_hochberg, deg, save_volcano, welch_t_test, DegResult, DegStatus, DegThresholds, WelchTest};
pub use enrich::{enrich, hypergeometric_sf, load_gmt, parse_gmt, EnrichmentResult, GeneSet};
pub use special::{lgamma, regularized_beta, regularized_gamma_p, regularized_gamma_q};
pub use survival::{km_by_group, km_curve, logrank, save_km, KmCurve, LogRankResult, SurvivalRecord};
