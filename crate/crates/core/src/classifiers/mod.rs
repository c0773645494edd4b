//! The two learner families used throughout: one-vs-rest ridge regression
//! with automatic regularisation selection, and extremely randomised trees.

mod forest;
mod ridge;

use ndarray::Array2;

pub use forest::{forest_fit, ForestConfig, ForestModel, Node, SplitCandidate, Tree};
pub use ridge::{alpha_grid, ridge_fit, ridge_fit_alpha, AlphaSelection, RidgeConfig, RidgeModel};

use crate::error::{Error, Result};
use crate::matrix::ProbMatrix;

/// Row-wise softmax of decision scores, max-subtracted for stability.
pub fn scores_to_probs(scores: &Array2<f64>) -> ProbMatrix {
    let mut probs = scores.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - max).exp());
        let total = row.sum();
        row.mapv_inplace(|p| p / total);
    }
    probs
}

/// Shared argument checks for the fit routines.
pub(crate) fn check_labels(n_rows: usize, y: &[usize], n_classes: usize) -> Result<()> {
    if y.len() != n_rows {
        return Err(Error::DimensionMismatch(format!(
            "{n_rows} rows but {} labels",
            y.len()
        )));
    }
    if n_rows < 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least 2 training rows, got {n_rows}"
        )));
    }
    if let Some(&bad) = y.iter().find(|&&k| k >= n_classes) {
        return Err(Error::DimensionMismatch(format!(
            "label {bad} outside 0..{n_classes}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::argmax_rows;
    use ndarray::array;

    #[test]
    fn softmax_cases() {
        let p = scores_to_probs(&array![[0.0, 0.0], [1000.0, 0.0], [-1.0, 3.0]]);
        assert_eq!(p.row(0).to_vec(), vec![0.5, 0.5]);
        assert!((p[[1, 0]] - 1.0).abs() < 1e-12 && p[[1, 1]] < 1e-300 + 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_eq!(argmax_rows(&p), vec![0, 0, 1]);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
