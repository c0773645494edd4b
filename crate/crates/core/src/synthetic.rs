//! Synthetic datasets with planted signal, for tests, the book and desk
//! benchmarks.
//!
//! Two kinds of signal are planted. A *distributional* signal changes the
//! noise law at fixed variance (Gaussian against uniform), which interval
//! quantiles pick up and random kernels barely do. A *pattern* signal embeds
//! copies of a short asymmetric motif, either forwards or time-reversed. The
//! two orientations share their value distribution, spectrum magnitude and
//! difference distributions, and are narrower than the finest quantile
//! interval, so quantile features see little; kernel competition sees which
//! shape is present.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::matrix::Split;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Four classes: 0/1 differ only in noise law, 2/3 only in motif
    /// orientation.
    Planted,
    /// Two classes: label = noise-law bit XOR motif-orientation bit, so each
    /// signal alone is uninformative.
    Interaction,
    /// Three classes separated by a constant level shift; quantiles solve it
    /// outright.
    Offset,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [SyntheticKind::Planted, SyntheticKind::Interaction, SyntheticKind::Offset];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Planted => "planted",
            SyntheticKind::Interaction => "interaction",
            SyntheticKind::Offset => "offset",
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            SyntheticKind::Planted => 4,
            SyntheticKind::Interaction => 2,
            SyntheticKind::Offset => 3,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SyntheticKind> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic dataset {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub n_train: usize,
    pub n_test: usize,
    pub length: usize,
    /// Motif height relative to unit-variance noise.
    pub motif_scale: f64,
    /// Motif copies per series.
    pub motifs: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(kind: SyntheticKind, n_train: usize, n_test: usize, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            kind,
            n_train,
            n_test,
            length: 128,
            motif_scale: 2.5,
            motifs: 6,
            seed,
        }
    }
}

/// Short asymmetric bump: fast then slow rise, fast then slow fall. Its
/// time reversal keeps the value multiset, the spectrum magnitude and (up to
/// sign) every windowed sum of differences, but is not its negation.
pub fn motif() -> Vec<f64> {
    vec![0.0, 2.0, 3.0, 1.0, 0.0]
}

fn noise(rng: &mut Rng, uniform: bool) -> f64 {
    if uniform {
        // Same variance as the standard normal.
        rng.random_range(-3f64.sqrt()..3f64.sqrt())
    } else {
        StandardNormal.sample(rng)
    }
}

/// Adds motif copies at uniform positions, wrapping around the end so the
/// position of every part of the motif is uniform too. Clipped placement
/// would let interval features read orientation off the series edges.
fn embed_motifs(series: &mut [f64], reversed: bool, cfg: &SyntheticConfig, rng: &mut Rng) {
    let mut shape = motif();
    if reversed {
        shape.reverse();
    }
    let len = series.len();
    for _ in 0..cfg.motifs {
        let at = rng.random_range(0..len);
        for (j, m) in shape.iter().enumerate() {
            series[(at + j) % len] += cfg.motif_scale * m;
        }
    }
}

fn instance(label: usize, cfg: &SyntheticConfig, rng: &mut Rng) -> Vec<f64> {
    let len = cfg.length;
    match cfg.kind {
        SyntheticKind::Planted => {
            let uniform = label == 1;
            let mut s: Vec<f64> = (0..len).map(|_| noise(rng, uniform)).collect();
            if label >= 2 {
                embed_motifs(&mut s, label == 3, cfg, rng);
            }
            s
        }
        SyntheticKind::Interaction => {
            // Both signals are drawn independently; the label is their XOR.
            let uniform = rng.random_bool(0.5);
            let reversed = uniform ^ (label == 1);
            let mut s: Vec<f64> = (0..len).map(|_| noise(rng, uniform)).collect();
            embed_motifs(&mut s, reversed, cfg, rng);
            s
        }
        SyntheticKind::Offset => (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z + 0.5 * label as f64
            })
            .collect(),
    }
}

fn split(cfg: &SyntheticConfig, n: usize, stream: u64, tag: Split) -> Result<Dataset> {
    let c = cfg.kind.n_classes();
    let mut rng = rng::stream(cfg.seed, stream);
    let labels: Vec<i64> = (0..n).map(|i| (i % c) as i64).collect();
    let mut x = Array3::<f32>::zeros((n, 1, cfg.length));
    for (i, &label) in labels.iter().enumerate() {
        for (t, v) in instance(label as usize, cfg, &mut rng).into_iter().enumerate() {
            x[[i, 0, t]] = v as f32;
        }
    }
    let classes: Vec<i64> = (0..c as i64).collect();
    Dataset::with_classes(cfg.kind.name(), tag, x, &labels, &classes)
}

/// Generates a train/test pair; labels cycle through the classes so every
/// class is equally represented.
pub fn generate(cfg: &SyntheticConfig) -> Result<SplitPair> {
    let c = cfg.kind.n_classes();
    if cfg.n_train < 2 * c || cfg.n_test < 1 || cfg.length < 2 {
        return Err(Error::Config(format!(
            "synthetic {} needs at least {} training rows, one test row and length 2",
            cfg.kind,
            2 * c
        )));
    }
    let train = split(cfg, cfg.n_train, 1, Split::Train)?;
    let test = split(cfg, cfg.n_test, 2, Split::Test)?;
    SplitPair::new(cfg.kind.name(), train, test)
}

/// Two features, four Gaussian clusters at the corners of a square, labelled
/// by XOR of the quadrant signs. No linear boundary does better than chance.
pub fn xor_clusters(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = rng::seeded(seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (i % 2 == 1, (i / 2) % 2 == 1);
        let centre = |bit: bool| if bit { 1.0 } else { -1.0 };
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        x[[i, 0]] = centre(a) + 0.3 * z0;
        x[[i, 1]] = centre(b) + 0.3 * z1;
        y.push((a ^ b) as usize);
    }
    (x, y)
}

/// Two well-separated Gaussian blobs in `d` dimensions.
pub fn gaussian_blobs(n: usize, d: usize, separation: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = rng::seeded(seed);
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((n, d), |(i, _)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z + if y[i] == 1 { separation / 2.0 } else { -separation / 2.0 }
    });
    (x, y)
}
