//! Competing convolutional kernels.
//!
//! Kernels are organised into groups. At every time point, every kernel in
//! a group is convolved with the (dilated, zero-padded) series and the
//! kernel with the largest absolute response wins. Each kernel reports how
//! often it won (hard count) and the summed magnitude of its winning
//! responses (soft count). Features are laid out as
//! `dilation × group × kernel × {hard, soft}`.
//!
//! For multichannel input each `(dilation, group)` pair convolves a fixed
//! random subset of at most three channels and sums the per-channel
//! responses before the competition.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::blob::{self, BlobReader, BlobWriter};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{ColumnTag, FeatureMatrix};
use crate::rng;

/// Maximum number of channels one group convolves.
pub const MAX_GROUP_CHANNELS: usize = 3;

/// Added to the per-feature standard deviation when normalising.
pub const SCALE_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HydraConfig {
    /// Groups per dilation.
    pub groups: usize,
    /// Competing kernels per group.
    pub kernels_per_group: usize,
    /// Taps per kernel; odd so "same" padding is symmetric.
    pub kernel_length: usize,
    pub seed: u64,
}

impl Default for HydraConfig {
    fn default() -> Self {
        HydraConfig {
            groups: 64,
            kernels_per_group: 8,
            kernel_length: 9,
            seed: 42,
        }
    }
}

impl HydraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::Config("hydra needs at least one group".into()));
        }
        if self.kernels_per_group < 2 {
            return Err(Error::Config(format!(
                "hydra competition needs at least 2 kernels per group, got {}",
                self.kernels_per_group
            )));
        }
        if self.kernel_length < 3 || self.kernel_length % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel length must be odd and at least 3, got {}",
                self.kernel_length
            )));
        }
        Ok(())
    }
}

/// Dilations `1, 2, 4, …, 2^p` with `p = ⌊log2((L − 1)/(k − 1))⌋`, i.e. every
/// power of two whose dilated kernel still spans at most the series.
pub fn compute_dilations(series_length: usize, kernel_length: usize) -> Result<Vec<usize>> {
    if kernel_length < 2 {
        return Err(Error::Config(format!(
            "kernel length must be at least 2, got {kernel_length}"
        )));
    }
    if series_length < kernel_length {
        return Err(Error::SeriesTooShort {
            series_length,
            kernel_length,
        });
    }
    let span = kernel_length - 1;
    let reach = series_length - 1;
    let mut dilations = vec![1usize];
    while let Some(next) = dilations.last().unwrap().checked_mul(2) {
        if next * span > reach {
            break;
        }
        dilations.push(next);
    }
    Ok(dilations)
}

/// A fitted Hydra transform: kernels, channel subsets and the
/// normalisation learned from the training features.
#[derive(Clone, Debug, PartialEq)]
pub struct HydraTransform {
    config: HydraConfig,
    n_channels: usize,
    series_length: usize,
    dilations: Vec<usize>,
    channels_used: usize,
    /// Indexed by `dilation_index * groups + group`.
    channel_selection: Vec<Vec<usize>>,
    /// `[dilation][group][kernel][channel_used][tap]`, row-major.
    weights: Vec<f64>,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
}

impl HydraTransform {
    /// Draws the kernels and fits the feature normalisation on `train`.
    pub fn fit(config: &HydraConfig, train: &Dataset) -> Result<HydraTransform> {
        config.validate()?;
        train.split().ensure_train("hydra fit")?;
        let dilations = compute_dilations(train.series_length(), config.kernel_length)?;
        let n_channels = train.n_channels();
        let channels_used = n_channels.min(MAX_GROUP_CHANNELS);

        let mut rng = rng::seeded(config.seed);
        let mut channel_selection = Vec::with_capacity(dilations.len() * config.groups);
        let mut weights = Vec::with_capacity(
            dilations.len()
                * config.groups
                * config.kernels_per_group
                * channels_used
                * config.kernel_length,
        );
        for _ in &dilations {
            for _ in 0..config.groups {
                let mut sel = if n_channels <= MAX_GROUP_CHANNELS {
                    (0..n_channels).collect::<Vec<_>>()
                } else {
                    index::sample(&mut rng, n_channels, channels_used).into_vec()
                };
                sel.sort_unstable();
                channel_selection.push(sel);
                for _ in 0..config.kernels_per_group * channels_used {
                    let start = weights.len();
                    for _ in 0..config.kernel_length {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        weights.push(w);
                    }
                    let taps = &mut weights[start..];
                    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
                    taps.iter_mut().for_each(|w| *w -= mean);
                }
            }
        }

        let mut transform = HydraTransform {
            config: config.clone(),
            n_channels,
            series_length: train.series_length(),
            dilations,
            channels_used,
            channel_selection,
            weights,
            feature_mean: Vec::new(),
            feature_scale: Vec::new(),
        };
        let d = transform.n_features();
        transform.feature_mean = vec![0.0; d];
        transform.feature_scale = vec![1.0; d];
        let raw = transform.raw_features(train)?;
        transform.fit_normalization(&raw);
        Ok(transform)
    }

    /// Builds a transform from explicit kernels with identity normalisation.
    ///
    /// `weights` is laid out `[dilation][group][kernel][channel][tap]` and
    /// `channel_selection` has one entry per `(dilation, group)`.
    pub fn from_kernels(
        config: &HydraConfig,
        n_channels: usize,
        series_length: usize,
        weights: Vec<f64>,
        channel_selection: Vec<Vec<usize>>,
    ) -> Result<HydraTransform> {
        config.validate()?;
        let dilations = compute_dilations(series_length, config.kernel_length)?;
        let groups = dilations.len() * config.groups;
        let channels_used = channel_selection.first().map_or(0, Vec::len);
        if channel_selection.len() != groups
            || channels_used == 0
            || channel_selection
                .iter()
                .any(|s| s.len() != channels_used || s.iter().any(|&c| c >= n_channels))
        {
            return Err(Error::DimensionMismatch(
                "channel selection does not match the dilation/group layout".into(),
            ));
        }
        let expected = groups * config.kernels_per_group * channels_used * config.kernel_length;
        if weights.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} kernel weights, expected {expected}",
                weights.len()
            )));
        }
        let d = groups * config.kernels_per_group * 2;
        Ok(HydraTransform {
            config: config.clone(),
            n_channels,
            series_length,
            dilations,
            channels_used,
            channel_selection,
            weights,
            feature_mean: vec![0.0; d],
            feature_scale: vec![1.0; d],
        })
    }

    fn fit_normalization(&mut self, raw: &Array2<f64>) {
        let n = raw.nrows() as f64;
        let mut mean = vec![0.0; raw.ncols()];
        for row in raw.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; raw.ncols()];
        for row in raw.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        self.feature_scale = var.iter().map(|s| (s / n).sqrt() + SCALE_EPSILON).collect();
        self.feature_mean = mean;
    }

    pub fn config(&self) -> &HydraConfig {
        &self.config
    }

    pub fn dilations(&self) -> &[usize] {
        &self.dilations
    }

    pub fn channels_used(&self) -> usize {
        self.channels_used
    }

    pub fn channel_selection(&self, dilation_index: usize, group: usize) -> &[usize] {
        &self.channel_selection[dilation_index * self.config.groups + group]
    }

    /// Weights of one kernel, `[channel_used][tap]`.
    pub fn kernel(&self, dilation_index: usize, group: usize, kernel: usize) -> &[f64] {
        let per_kernel = self.channels_used * self.config.kernel_length;
        let idx = (dilation_index * self.config.groups + group) * self.config.kernels_per_group
            + kernel;
        &self.weights[idx * per_kernel..(idx + 1) * per_kernel]
    }

    /// Shape of the weight tensor `[dilations, groups, kernels, channels, taps]`.
    pub fn weight_shape(&self) -> [usize; 5] {
        [
            self.dilations.len(),
            self.config.groups,
            self.config.kernels_per_group,
            self.channels_used,
            self.config.kernel_length,
        ]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_features(&self) -> usize {
        self.dilations.len() * self.config.groups * self.config.kernels_per_group * 2
    }

    pub fn columns(&self) -> Vec<ColumnTag> {
        let mut cols = Vec::with_capacity(self.n_features());
        for &dilation in &self.dilations {
            for group in 0..self.config.groups {
                for kernel in 0..self.config.kernels_per_group {
                    for soft in [false, true] {
                        cols.push(ColumnTag::Hydra {
                            dilation: dilation as u32,
                            group: group as u32,
                            kernel: kernel as u32,
                            soft,
                        });
                    }
                }
            }
        }
        cols
    }

    fn check_shape(&self, d: &Dataset) -> Result<()> {
        if d.n_channels() != self.n_channels || d.series_length() != self.series_length {
            return Err(Error::DimensionMismatch(format!(
                "hydra was fitted on {}×{} series, got {}×{}",
                self.n_channels,
                self.series_length,
                d.n_channels(),
                d.series_length()
            )));
        }
        Ok(())
    }

    /// Hard and soft win counts before normalisation.
    pub fn raw_features(&self, d: &Dataset) -> Result<Array2<f64>> {
        self.check_shape(d)?;
        let mut out = Array2::<f64>::zeros((d.len(), self.n_features()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let row = row.as_slice_mut().expect("standard layout");
                self.count_instance(d, i, row);
            });
        Ok(out)
    }

    /// Normalised features: `(count − train mean) / (train std + 1e-8)`.
    pub fn transform(&self, d: &Dataset) -> Result<FeatureMatrix> {
        let mut raw = self.raw_features(d)?;
        for mut row in raw.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.feature_mean).zip(&self.feature_scale) {
                *v = (*v - m) / s;
            }
        }
        FeatureMatrix::new(raw, self.columns(), d.split())
    }

    fn count_instance(&self, d: &Dataset, i: usize, out: &mut [f64]) {
        let len = self.series_length;
        let klen = self.config.kernel_length;
        let half = (klen / 2) as isize;
        let k = self.config.kernels_per_group;
        let series: Vec<Vec<f64>> = (0..self.n_channels)
            .map(|c| d.series(i, c).iter().map(|&v| v as f64).collect())
            .collect();
        let mut responses = vec![0.0f64; k * len];

        for (di, &dilation) in self.dilations.iter().enumerate() {
            for g in 0..self.config.groups {
                responses.iter_mut().for_each(|r| *r = 0.0);
                let selection = self.channel_selection(di, g);
                for kern in 0..k {
                    let w = self.kernel(di, g, kern);
                    let resp = &mut responses[kern * len..(kern + 1) * len];
                    for (ci, &ch) in selection.iter().enumerate() {
                        let x = &series[ch];
                        for (tap, &wt) in w[ci * klen..(ci + 1) * klen].iter().enumerate() {
                            let offset = (tap as isize - half) * dilation as isize;
                            // resp[t] += wt * x[t + offset] wherever t + offset is in range.
                            let (t0, t1) = if offset >= 0 {
                                (0, len.saturating_sub(offset as usize))
                            } else {
                                ((-offset as usize).min(len), len)
                            };
                            if t0 >= t1 {
                                continue;
                            }
                            let src0 = (t0 as isize + offset) as usize;
                            for (r, &xv) in resp[t0..t1].iter_mut().zip(&x[src0..]) {
                                *r += wt * xv;
                            }
                        }
                    }
                }
                let base = (di * self.config.groups + g) * k * 2;
                for t in 0..len {
                    let mut best = 0;
                    let mut best_mag = responses[t].abs();
                    for kern in 1..k {
                        let mag = responses[kern * len + t].abs();
                        if mag > best_mag {
                            best = kern;
                            best_mag = mag;
                        }
                    }
                    out[base + 2 * best] += 1.0;
                    out[base + 2 * best + 1] += best_mag;
                }
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BlobWriter::new(b"HYDR");
        w.usize(self.config.groups);
        w.usize(self.config.kernels_per_group);
        w.usize(self.config.kernel_length);
        w.u64(self.config.seed);
        w.usize(self.n_channels);
        w.usize(self.series_length);
        w.usizes(&self.dilations);
        w.usize(self.channels_used);
        w.usize(self.channel_selection.len());
        for sel in &self.channel_selection {
            w.usizes(sel);
        }
        w.f64s(&self.weights);
        w.f64s(&self.feature_mean);
        w.f64s(&self.feature_scale);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<HydraTransform> {
        let mut r = BlobReader::open(bytes, b"HYDR")?;
        let config = HydraConfig {
            groups: r.usize()?,
            kernels_per_group: r.usize()?,
            kernel_length: r.usize()?,
            seed: r.u64()?,
        };
        config.validate()?;
        let n_channels = r.usize()?;
        let series_length = r.usize()?;
        let dilations = r.usizes()?;
        let channels_used = r.usize()?;
        let n_sel = r.usize()?;
        let channel_selection = (0..n_sel).map(|_| r.usizes()).collect::<Result<Vec<_>>>()?;
        let weights = r.f64s()?;
        let feature_mean = r.f64s()?;
        let feature_scale = r.f64s()?;
        r.finish()?;
        let t = HydraTransform {
            config,
            n_channels,
            series_length,
            dilations,
            channels_used,
            channel_selection,
            weights,
            feature_mean,
            feature_scale,
        };
        let [nd, g, k, c, l] = t.weight_shape();
        if t.dilations != compute_dilations(series_length, t.config.kernel_length)?
            || t.channel_selection.len() != nd * g
            || t.weights.len() != nd * g * k * c * l
            || t.feature_mean.len() != t.n_features()
            || t.feature_scale.len() != t.n_features()
        {
            return Err(Error::Blob("inconsistent hydra transform blob".into()));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<HydraTransform> {
        Self::from_bytes(&blob::read_file(path)?)
    }
}
