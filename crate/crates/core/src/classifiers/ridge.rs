use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::blob::{self, BlobReader, BlobWriter};
use crate::data::stratified_kfold;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// `count` values log-spaced over `[lo, hi]`.
pub fn alpha_grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaSelection {
    /// Exact leave-one-out error from one eigendecomposition.
    LeaveOneOut,
    KFold(usize),
    /// A single alpha was given.
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeConfig {
    pub alphas: Vec<f64>,
    /// Above this many rows, alpha is chosen by k-fold CV instead of LOO.
    pub loo_max_samples: usize,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            alphas: alpha_grid(10, 1e-3, 1e3),
            loo_max_samples: 10_000,
            cv_folds: 5,
            seed: 42,
        }
    }
}

/// One-vs-rest ridge classifier on standardised features.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `c × d`, acting on standardised features.
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
    pub alpha: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub selection: AlphaSelection,
    /// Selection error for each grid alpha (sum of squared residuals).
    pub alpha_errors: Vec<f64>,
}

struct Standardized {
    z: Array2<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(x: &Array2<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
    let scale: Vec<f64> = x
        .columns()
        .into_iter()
        .zip(&mean)
        .map(|(c, m)| {
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                sd
            } else {
                // Constant column: centred to zero, so it gets zero weight.
                1.0
            }
        })
        .collect();
    let mut z = x.clone();
    for mut row in z.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }
    // Columns with scale 1 due to constancy are numerically ~0; pin them.
    Standardized { z, mean, scale }
}

/// `±1` one-vs-rest targets, centred per class.
fn centred_targets(y: &[usize], n_classes: usize) -> (Array2<f64>, Array1<f64>) {
    let n = y.len();
    let mut t = Array2::from_elem((n, n_classes), -1.0);
    for (i, &k) in y.iter().enumerate() {
        t[[i, k]] = 1.0;
    }
    let mean = t.sum_axis(ndarray::Axis(0)) / n as f64;
    for mut row in t.rows_mut() {
        row -= &mean;
    }
    (t, mean)
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_nd(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Spectral form of the centred design, reusable across alphas.
///
/// With `n ≤ d` the Gram matrix `Z Zᵀ = U Λ Uᵀ` is decomposed (`basis = U`);
/// otherwise `Zᵀ Z = V Λ Vᵀ` (`basis = Z V`, `right = V`). In both cases the
/// fitted values at a given alpha are `basis · diag(f) · basisᵀ · T` for a
/// per-eigenvalue filter `f`.
struct Spectral {
    basis: DMatrix<f64>,
    right: Option<DMatrix<f64>>,
    lambda: Vec<f64>,
    /// `basisᵀ T`.
    proj: DMatrix<f64>,
    targets: DMatrix<f64>,
    dual: bool,
}

impl Spectral {
    fn new(z: &Array2<f64>, t: &Array2<f64>) -> Spectral {
        let (n, d) = z.dim();
        let dual = n <= d;
        let gram = if dual { z.dot(&z.t()) } else { z.t().dot(z) };
        let eig = SymmetricEigen::new(to_na(&gram));
        let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let (basis, right) = if dual {
            (eig.eigenvectors, None)
        } else {
            let p = to_na(z) * &eig.eigenvectors;
            (p, Some(eig.eigenvectors))
        };
        let targets = to_na(t);
        let proj = basis.transpose() * &targets;
        Spectral {
            basis,
            right,
            lambda,
            proj,
            targets,
            dual,
        }
    }

    /// Hat-matrix filter: `λ/(λ+α)` for the Gram basis, `1/(λ+α)` for `Z V`.
    fn filter(&self, alpha: f64) -> Vec<f64> {
        self.lambda
            .iter()
            .map(|&l| if self.dual { l / (l + alpha) } else { 1.0 / (l + alpha) })
            .collect()
    }

    /// Sum over classes and rows of squared leave-one-out residuals. The
    /// intercept is unpenalised and `Z` is centred, so the hat matrix is
    /// `11ᵀ/n + basis · diag(f) · basisᵀ`.
    fn loo_error(&self, alpha: f64) -> f64 {
        let f = self.filter(alpha);
        let n = self.basis.nrows();
        let mut scaled = self.proj.clone();
        for (j, fj) in f.iter().enumerate() {
            scaled.row_mut(j).scale_mut(*fj);
        }
        let fitted = &self.basis * scaled;
        let targets = &self.targets;
        let mut total = 0.0;
        for i in 0..n {
            let h: f64 = 1.0 / n as f64
                + (0..f.len())
                    .map(|j| self.basis[(i, j)] * self.basis[(i, j)] * f[j])
                    .sum::<f64>();
            let denom = (1.0 - h).max(1e-12);
            for c in 0..fitted.ncols() {
                let r = (targets[(i, c)] - fitted[(i, c)]) / denom;
                total += r * r;
            }
        }
        total
    }

    /// Weights on the standardised features, `d × c`.
    fn weights(&self, z: &Array2<f64>, alpha: f64) -> Array2<f64> {
        let inv: Vec<f64> = self.lambda.iter().map(|&l| 1.0 / (l + alpha)).collect();
        let mut scaled = self.proj.clone();
        for (j, v) in inv.iter().enumerate() {
            scaled.row_mut(j).scale_mut(*v);
        }
        match &self.right {
            None => z.t().dot(&to_nd(&(&self.basis * scaled))),
            Some(v) => to_nd(&(v * scaled)),
        }
    }
}

fn validate(x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<()> {
    x.split.ensure_train("ridge fit")?;
    super::check_labels(x.nrows(), y, n_classes)?;
    let mut seen = y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(Error::SingleClass(seen.len()));
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite ridge input".into()));
    }
    Ok(())
}

fn assemble(
    std: Standardized,
    spectral: &Spectral,
    t_mean: Array1<f64>,
    alpha: f64,
    selection: AlphaSelection,
    alpha_errors: Vec<f64>,
) -> RidgeModel {
    let w = spectral.weights(&std.z, alpha);
    RidgeModel {
        coef: w.t().to_owned(),
        intercept: t_mean,
        alpha,
        feature_mean: std.mean,
        feature_scale: std.scale,
        selection,
        alpha_errors,
    }
}

/// Fits at a single, given alpha.
pub fn ridge_fit_alpha(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    alpha: f64,
) -> Result<RidgeModel> {
    validate(x, y, n_classes)?;
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("ridge alpha must be positive, got {alpha}")));
    }
    let std = standardize(&x.values);
    let (t, t_mean) = centred_targets(y, n_classes);
    let spectral = Spectral::new(&std.z, &t);
    Ok(assemble(std, &spectral, t_mean, alpha, AlphaSelection::Fixed, vec![]))
}

/// Fits with alpha chosen from `cfg.alphas`: exact leave-one-out for up to
/// `cfg.loo_max_samples` rows, stratified k-fold squared error above that.
/// Ties go to the smaller alpha.
pub fn ridge_fit(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    cfg: &RidgeConfig,
) -> Result<RidgeModel> {
    validate(x, y, n_classes)?;
    if cfg.alphas.is_empty() || cfg.alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Config("ridge alpha grid must be non-empty and positive".into()));
    }
    let std = standardize(&x.values);
    let (t, t_mean) = centred_targets(y, n_classes);
    let spectral = Spectral::new(&std.z, &t);

    let (selection, errors) = if x.nrows() <= cfg.loo_max_samples {
        let errs = cfg.alphas.iter().map(|&a| spectral.loo_error(a)).collect();
        (AlphaSelection::LeaveOneOut, errs)
    } else {
        (
            AlphaSelection::KFold(cfg.cv_folds),
            kfold_errors(x, y, n_classes, cfg)?,
        )
    };
    let best = errors
        .iter()
        .enumerate()
        .fold(0, |b, (i, e)| if *e < errors[b] { i } else { b });
    Ok(assemble(std, &spectral, t_mean, cfg.alphas[best], selection, errors))
}

fn kfold_errors(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    cfg: &RidgeConfig,
) -> Result<Vec<f64>> {
    let folds = stratified_kfold(y, cfg.cv_folds, cfg.seed)?;
    let mut errors = vec![0.0; cfg.alphas.len()];
    for fold in 0..folds.k {
        let train_idx = folds.training(fold);
        let held_idx = folds.held_out(fold);
        let xt = x.select_rows(&train_idx);
        let yt: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
        let std = standardize(&xt.values);
        let (t, t_mean) = centred_targets(&yt, n_classes);
        let spectral = Spectral::new(&std.z, &t);
        let held = x.select_rows(&held_idx);
        for (a, err) in cfg.alphas.iter().zip(errors.iter_mut()) {
            let w = spectral.weights(&std.z, *a);
            let model = RidgeModel {
                coef: w.t().to_owned(),
                intercept: t_mean.clone(),
                alpha: *a,
                feature_mean: std.mean.clone(),
                feature_scale: std.scale.clone(),
                selection: AlphaSelection::Fixed,
                alpha_errors: vec![],
            };
            let scores = model.decision(&held)?;
            for (r, &i) in held_idx.iter().enumerate() {
                for c in 0..n_classes {
                    let target = if y[i] == c { 1.0 } else { -1.0 };
                    let e = scores[[r, c]] - target;
                    *err += e * e;
                }
            }
        }
    }
    Ok(errors)
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.coef.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.coef.nrows()
    }

    /// Raw one-vs-rest decision scores, `n × c`.
    pub fn decision(&self, x: &FeatureMatrix) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "ridge was fitted on {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let mut z = x.values.clone();
        for mut row in z.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.feature_mean).zip(&self.feature_scale) {
                *v = (*v - m) / s;
            }
        }
        let mut scores = z.dot(&self.coef.t());
        for mut row in scores.rows_mut() {
            row += &self.intercept;
        }
        Ok(scores)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(crate::matrix::argmax_rows(&self.decision(x)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BlobWriter::new(b"RIDG");
        w.usize(self.n_classes());
        w.usize(self.n_features());
        w.f64s(&self.coef.iter().copied().collect::<Vec<_>>());
        w.f64s(&self.intercept.to_vec());
        w.f64(self.alpha);
        w.f64s(&self.feature_mean);
        w.f64s(&self.feature_scale);
        match self.selection {
            AlphaSelection::LeaveOneOut => w.u64(0),
            AlphaSelection::Fixed => w.u64(1),
            AlphaSelection::KFold(k) => w.u64(2 + k as u64),
        }
        w.f64s(&self.alpha_errors);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RidgeModel> {
        let mut r = BlobReader::open(bytes, b"RIDG")?;
        let c = r.usize()?;
        let d = r.usize()?;
        let coef = r.f64s()?;
        let intercept = r.f64s()?;
        let alpha = r.f64()?;
        let feature_mean = r.f64s()?;
        let feature_scale = r.f64s()?;
        let selection = match r.u64()? {
            0 => AlphaSelection::LeaveOneOut,
            1 => AlphaSelection::Fixed,
            k => AlphaSelection::KFold((k - 2) as usize),
        };
        let alpha_errors = r.f64s()?;
        r.finish()?;
        if coef.len() != c * d || intercept.len() != c || feature_mean.len() != d || feature_scale.len() != d {
            return Err(Error::Blob("inconsistent ridge blob".into()));
        }
        Ok(RidgeModel {
            coef: Array2::from_shape_vec((c, d), coef).expect("checked"),
            intercept: Array1::from(intercept),
            alpha,
            feature_mean,
            feature_scale,
            selection,
            alpha_errors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<RidgeModel> {
        Self::from_bytes(&blob::read_file(path)?)
    }
}
