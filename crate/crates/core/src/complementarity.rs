//! Feature-level and prediction-level complementarity of two base models,
//! and the oracle bound on what combining their predictions can achieve.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::subsample_indices;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Ridge added to the whitening step of the canonical correlation analysis.
pub const CCA_EPSILON: f64 = 1e-6;

/// Columns per tile in the cross-correlation sweep.
const TILE: usize = 256;

/// Centres each column and scales it to unit norm. Constant columns become
/// zero; the second value counts them.
fn unit_columns(x: ArrayView2<f64>) -> (Array2<f64>, usize) {
    let mut out = x.to_owned();
    let mut constant = 0;
    for mut col in out.columns_mut() {
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 * (1.0 + mean.abs()) * (col.len() as f64).sqrt() {
            col.mapv_inplace(|v| v / norm);
        } else {
            col.fill(0.0);
            constant += 1;
        }
    }
    (out, constant)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossCorrelation {
    /// Median over `h` columns of the largest `|r|` against any `q` column.
    pub median_max: f64,
    /// Per-`h`-column maxima.
    #[serde(skip)]
    pub max_per_column: Vec<f64>,
    pub constant_h: usize,
    pub constant_q: usize,
}

/// For every column of `h`, the largest absolute Pearson correlation with
/// any column of `q`; returns the median of those maxima. Columns with zero
/// variance correlate 0 with everything and are counted.
pub fn median_max_cross_correlation(h: &FeatureMatrix, q: &FeatureMatrix) -> Result<CrossCorrelation> {
    if h.nrows() != q.nrows() {
        return Err(Error::DimensionMismatch(format!("{} vs {} rows", h.nrows(), q.nrows())));
    }
    if h.nrows() < 3 {
        return Err(Error::InvalidDataset(format!(
            "cross-correlation needs at least 3 rows, got {}",
            h.nrows()
        )));
    }
    if h.ncols() == 0 || q.ncols() == 0 {
        return Err(Error::DimensionMismatch("empty feature matrix".into()));
    }
    let (hz, constant_h) = unit_columns(h.view());
    let (qz, constant_q) = unit_columns(q.view());
    let h_tiles: Vec<usize> = (0..hz.ncols()).step_by(TILE).collect();
    let maxima: Vec<Vec<f64>> = h_tiles
        .par_iter()
        .map(|&h0| {
            let h_block = hz.slice(s![.., h0..(h0 + TILE).min(hz.ncols())]);
            let mut best = vec![0.0f64; h_block.ncols()];
            for q0 in (0..qz.ncols()).step_by(TILE) {
                let q_block = qz.slice(s![.., q0..(q0 + TILE).min(qz.ncols())]);
                let r = h_block.t().dot(&q_block);
                for (b, row) in best.iter_mut().zip(r.rows()) {
                    for v in row {
                        *b = b.max(v.abs().min(1.0));
                    }
                }
            }
            best
        })
        .collect();
    let max_per_column: Vec<f64> = maxima.into_iter().flatten().collect();
    let mut sorted = max_per_column.clone();
    Ok(CrossCorrelation {
        median_max: median(&mut sorted),
        max_per_column,
        constant_h,
        constant_q,
    })
}

/// Left singular vectors and singular values of a centred matrix, keeping
/// only numerically non-zero directions. Uses whichever Gram matrix is
/// smaller.
fn thin_svd(z: &Array2<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = z.dim();
    let zm = DMatrix::from_fn(n, d, |i, j| z[[i, j]]);
    let (vecs, vals, left) = if d <= n {
        let eig = SymmetricEigen::new(zm.transpose() * &zm);
        (eig.eigenvectors, eig.eigenvalues, false)
    } else {
        let eig = SymmetricEigen::new(&zm * zm.transpose());
        (eig.eigenvectors, eig.eigenvalues, true)
    };
    let top = vals.iter().copied().fold(0.0f64, f64::max);
    let tol = top * 1e-12 * n.max(d) as f64;
    let keep: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > tol && vals[j] > 0.0).collect();
    let s: Vec<f64> = keep.iter().map(|&j| vals[j].sqrt()).collect();
    let mut u = DMatrix::zeros(n, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        if left {
            u.set_column(c, &vecs.column(j));
        } else {
            let col = (&zm * vecs.column(j)) / s[c];
            u.set_column(c, &col);
        }
    }
    (u, s)
}

/// Canonical correlations between the column spaces of `h` and `q`, in
/// descending order. Both matrices are standardised; the whitening adds
/// [`CCA_EPSILON`] to the scatter matrices so the result stays defined when
/// there are more columns than rows. Returns
/// `min(max_components, d_h, d_q, n / 2)` values, zero-padded past the
/// joint rank.
pub fn canonical_correlations(h: &FeatureMatrix, q: &FeatureMatrix, max_components: usize) -> Result<Vec<f64>> {
    if h.nrows() != q.nrows() {
        return Err(Error::DimensionMismatch(format!("{} vs {} rows", h.nrows(), q.nrows())));
    }
    let n = h.nrows();
    if n < 4 {
        return Err(Error::InvalidDataset(format!("canonical correlation needs at least 4 rows, got {n}")));
    }
    let r = max_components.min(h.ncols()).min(q.ncols()).min(n / 2);
    let (hz, _) = unit_columns(h.view());
    let (qz, _) = unit_columns(q.view());
    // Unit-norm columns carry the same information as unit-variance ones;
    // rescale so the scatter matrices are the usual unnormalised sums.
    let scale = (n as f64).sqrt();
    let (u_h, s_h) = thin_svd(&(hz * scale));
    let (u_q, s_q) = thin_svd(&(qz * scale));
    if s_h.is_empty() || s_q.is_empty() {
        return Err(Error::Undefined("canonical correlation of a rank-zero matrix".into()));
    }
    let shrink = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| v / (v * v + CCA_EPSILON).sqrt()).collect() };
    let (a_h, a_q) = (shrink(&s_h), shrink(&s_q));
    let mut m = u_h.transpose() * &u_q;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] *= a_h[i] * a_q[j];
        }
    }
    let mut sv: Vec<f64> = SVD::new(m, false, false)
        .singular_values
        .iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.resize(r.max(sv.len()), 0.0);
    sv.truncate(r);
    Ok(sv)
}

/// 1 where the prediction is wrong, else 0.
pub fn error_vector(pred: &[usize], truth: &[usize]) -> Result<Vec<u8>> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p != t) as u8).collect())
}

/// Agreement statistics of two prediction vectors against the truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionMetrics {
    pub n: usize,
    pub correct_h: usize,
    pub correct_q: usize,
    /// Rows where at least one base is right.
    pub correct_either: usize,
    pub disagreements: usize,
    pub both_wrong_count: usize,
    pub acc_h: f64,
    pub acc_q: f64,
    pub acc_oracle: f64,
    pub oracle_gain: f64,
    pub disagreement: f64,
    /// Pearson correlation of the error indicators; `None` when either
    /// indicator is constant.
    pub error_corr: Option<f64>,
}

pub fn prediction_metrics(pred_h: &[usize], pred_q: &[usize], truth: &[usize]) -> Result<PredictionMetrics> {
    let e_h = error_vector(pred_h, truth)?;
    let e_q = error_vector(pred_q, truth)?;
    let n = truth.len();
    if n < 2 {
        return Err(Error::InvalidDataset(format!("prediction metrics need at least 2 rows, got {n}")));
    }
    let wrong_h = e_h.iter().filter(|&&e| e == 1).count();
    let wrong_q = e_q.iter().filter(|&&e| e == 1).count();
    let both_wrong = e_h.iter().zip(&e_q).filter(|(a, b)| **a == 1 && **b == 1).count();
    let disagreements = pred_h.iter().zip(pred_q).filter(|(a, b)| a != b).count();
    let (correct_h, correct_q, correct_either) = (n - wrong_h, n - wrong_q, n - both_wrong);
    let nf = n as f64;
    // Integer numerator keeps the binary Pearson formula exact where it can be.
    let error_corr = if wrong_h == 0 || wrong_h == n || wrong_q == 0 || wrong_q == n {
        None
    } else {
        let num = (n * both_wrong) as f64 - (wrong_h * wrong_q) as f64;
        let den = ((wrong_h * (n - wrong_h)) as f64 * (wrong_q * (n - wrong_q)) as f64).sqrt();
        Some((num / den).clamp(-1.0, 1.0))
    };
    let acc_h = correct_h as f64 / nf;
    let acc_q = correct_q as f64 / nf;
    let acc_oracle = correct_either as f64 / nf;
    Ok(PredictionMetrics {
        n,
        correct_h,
        correct_q,
        correct_either,
        disagreements,
        both_wrong_count: both_wrong,
        acc_h,
        acc_q,
        acc_oracle,
        oracle_gain: acc_oracle - acc_h.max(acc_q),
        disagreement: disagreements as f64 / nf,
        error_corr,
    })
}

/// Ensemble gain as a percentage of the oracle gain; `None` when the oracle
/// gain is (numerically) zero.
pub fn oracle_utilization(ensemble_gain: f64, oracle_gain: f64) -> Option<f64> {
    if oracle_gain < 1e-12 {
        None
    } else {
        Some(100.0 * ensemble_gain / oracle_gain)
    }
}

/// Rows where both bases err but the ensemble is right, out of rows where
/// both bases err.
pub fn oracle_exceeding(pred_h: &[usize], pred_q: &[usize], pred_ens: &[usize], truth: &[usize]) -> (usize, usize) {
    let mut both = 0;
    let mut rescued = 0;
    for i in 0..truth.len() {
        if pred_h[i] != truth[i] && pred_q[i] != truth[i] {
            both += 1;
            if pred_ens[i] == truth[i] {
                rescued += 1;
            }
        }
    }
    (rescued, both)
}

/// Complementarity of two base models on one dataset.
///
/// Undefined quantities are `null` in the serialised form, with the reason
/// listed under `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplementarityReport {
    pub dataset: String,
    pub n_test: usize,
    pub subsample_n: usize,
    pub subsample_seed: u64,
    pub median_max_cross_corr: Option<f64>,
    pub constant_columns_h: usize,
    pub constant_columns_q: usize,
    pub canonical_corrs: Vec<f64>,
    pub error_corr: Option<f64>,
    pub disagreement: f64,
    pub acc_h: f64,
    pub acc_q: f64,
    pub acc_oracle: f64,
    pub oracle_gain: f64,
    pub both_wrong_count: usize,
    pub undefined: BTreeMap<String, String>,
}

/// Feature metrics on at most `cap` test rows drawn with `seed`; prediction
/// metrics on the full test set.
pub fn complementarity_report(
    dataset: &str,
    h_test: &FeatureMatrix,
    q_test: &FeatureMatrix,
    pred_h: &[usize],
    pred_q: &[usize],
    truth: &[usize],
    cap: usize,
    seed: u64,
) -> Result<ComplementarityReport> {
    let pm = prediction_metrics(pred_h, pred_q, truth)?;
    let rows = subsample_indices(h_test.nrows(), cap.max(1), seed);
    let h_sub = h_test.select_rows(&rows);
    let q_sub = q_test.select_rows(&rows);
    let mut undefined = BTreeMap::new();

    let (median_max, constant_h, constant_q) = match median_max_cross_correlation(&h_sub, &q_sub) {
        Ok(cc) => (Some(cc.median_max), cc.constant_h, cc.constant_q),
        Err(e) => {
            undefined.insert("median_max_cross_corr".into(), e.to_string());
            (None, 0, 0)
        }
    };
    let canonical_corrs = match canonical_correlations(&h_sub, &q_sub, 5) {
        Ok(c) => c,
        Err(e) => {
            undefined.insert("canonical_corrs".into(), e.to_string());
            vec![]
        }
    };
    if pm.error_corr.is_none() {
        undefined.insert(
            "error_corr".into(),
            "an error indicator has zero variance (a base is always right or always wrong)".into(),
        );
    }
    Ok(ComplementarityReport {
        dataset: dataset.to_string(),
        n_test: truth.len(),
        subsample_n: rows.len(),
        subsample_seed: seed,
        median_max_cross_corr: median_max,
        constant_columns_h: constant_h,
        constant_columns_q: constant_q,
        canonical_corrs,
        error_corr: pm.error_corr,
        disagreement: pm.disagreement,
        acc_h: pm.acc_h,
        acc_q: pm.acc_q,
        acc_oracle: pm.acc_oracle,
        oracle_gain: pm.oracle_gain,
        both_wrong_count: pm.both_wrong_count,
        undefined,
    })
}
