//! Interval quantiles over dyadic intervals.
//!
//! Each channel is turned into four representations (the series, a smoothed
//! first difference, the second difference and the DFT magnitude). Every
//! representation is cut into dyadic intervals, and each interval of length
//! `m` contributes `1 + ⌊(m − 1)/v⌋` evenly spaced quantiles, with the
//! interval mean subtracted from every second one. There is no randomness
//! and nothing to fit.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{ColumnTag, FeatureMatrix, Representation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantConfig {
    /// Number of dyadic levels; level `ℓ` splits into `2^ℓ` parts.
    pub depth: usize,
    /// Interval length per extra quantile.
    pub divisor: usize,
    /// Moving-average window applied to the first difference.
    pub smoothing_window: usize,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            depth: 6,
            divisor: 4,
            smoothing_window: 5,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.divisor == 0 || self.smoothing_window == 0 {
            return Err(Error::Config(format!(
                "quant depth, divisor and smoothing window must be ≥ 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Half-open `(start, end)` intervals over a sequence of `length` points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalSet {
    pub length: usize,
    pub intervals: Vec<(usize, usize)>,
}

/// Dyadic intervals for levels `0..depth`.
///
/// Level `ℓ` (while `2^ℓ ≤ length`) partitions `[0, length)` into `2^ℓ`
/// parts, spreading the remainder one point at a time over the leading
/// parts. From level 1 on, every part is also repeated shifted right by half
/// its width when it still fits. Duplicates are dropped, first occurrence
/// kept.
pub fn dyadic_intervals(length: usize, depth: usize) -> IntervalSet {
    let mut intervals: Vec<(usize, usize)> = Vec::new();
    for level in 0..depth.min(usize::BITS as usize - 1) {
        let parts = 1usize << level;
        if parts > length {
            break;
        }
        let base = length / parts;
        let extra = length % parts;
        let mut level_parts = Vec::with_capacity(parts);
        let mut start = 0;
        for i in 0..parts {
            let width = base + usize::from(i < extra);
            level_parts.push((start, start + width));
            start += width;
        }
        let shifted: Vec<(usize, usize)> = if level == 0 {
            Vec::new()
        } else {
            level_parts
                .iter()
                .map(|&(s, e)| ((e - s) / 2, s, e))
                .filter(|&(half, _, e)| half > 0 && e + half <= length)
                .map(|(half, s, e)| (s + half, e + half))
                .collect()
        };
        for iv in level_parts.into_iter().chain(shifted) {
            if !intervals.contains(&iv) {
                intervals.push(iv);
            }
        }
    }
    IntervalSet { length, intervals }
}

/// Number of quantiles for an interval of `m` points: `1 + ⌊(m − 1)/v⌋`.
pub fn quantile_count(m: usize, v: usize) -> usize {
    1 + (m.max(1) - 1) / v.max(1)
}

/// `k` evenly spaced quantiles of `values` (linear interpolation between
/// order statistics), with the mean subtracted at odd positions.
/// `k = 1` gives the median.
pub fn interval_quantiles(values: &[f64], k: usize) -> Vec<f64> {
    assert!(!values.is_empty() && k >= 1, "interval_quantiles needs data and k ≥ 1");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let at = |num: usize, den: usize| {
        // Quantile at position num/den of the index range 0..m-1, exactly.
        let scaled = num * (m - 1);
        let lo = scaled / den;
        let frac = (scaled % den) as f64 / den as f64;
        if lo + 1 < m {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        } else {
            sorted[lo]
        }
    };
    if k == 1 {
        return vec![at(1, 2)];
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    (0..k)
        .map(|i| {
            let q = at(i, k - 1);
            if i % 2 == 1 {
                q - mean
            } else {
                q
            }
        })
        .collect()
}

/// Lengths of the representations of a `len`-point series; representations
/// that would be empty are left out.
pub fn representation_lengths(len: usize, smoothing_window: usize) -> Vec<(Representation, usize)> {
    let candidates = [
        (Representation::Original, len),
        (Representation::SmoothedDiff, len.saturating_sub(smoothing_window)),
        (Representation::SecondDiff, len.saturating_sub(2)),
        (Representation::FftMagnitude, len / 2 + 1),
    ];
    candidates.into_iter().filter(|&(_, l)| l > 0).collect()
}

/// The four series representations plus a note for each one that was too
/// short to produce.
#[derive(Clone, Debug, PartialEq)]
pub struct Representations {
    pub series: Vec<(Representation, Vec<f64>)>,
    pub notes: Vec<String>,
}

struct RepresentationBuilder {
    fft: Arc<dyn Fft<f64>>,
    smoothing_window: usize,
}

impl RepresentationBuilder {
    fn new(len: usize, smoothing_window: usize) -> Self {
        RepresentationBuilder {
            fft: FftPlanner::new().plan_fft_forward(len.max(1)),
            smoothing_window,
        }
    }

    fn build(&self, series: &[f64]) -> Representations {
        let len = series.len();
        let w = self.smoothing_window;
        let mut out = Vec::with_capacity(4);
        let mut notes = Vec::new();
        out.push((Representation::Original, series.to_vec()));

        let diff: Vec<f64> = series.windows(2).map(|p| p[1] - p[0]).collect();
        if diff.len() >= w {
            let smoothed = diff
                .windows(w)
                .map(|win| win.iter().sum::<f64>() / w as f64)
                .collect();
            out.push((Representation::SmoothedDiff, smoothed));
        } else {
            notes.push(format!(
                "smoothed difference omitted: {len} points, window {w}"
            ));
        }

        if len >= 3 {
            let second = diff.windows(2).map(|p| p[1] - p[0]).collect();
            out.push((Representation::SecondDiff, second));
        } else {
            notes.push(format!("second difference omitted: {len} points"));
        }

        let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        let magnitude = buf[..len / 2 + 1].iter().map(|c| c.norm()).collect();
        out.push((Representation::FftMagnitude, magnitude));

        Representations { series: out, notes }
    }
}

/// Original, smoothed first difference ("valid" moving average of width
/// `smoothing_window`), second difference, and the magnitude of the
/// unnormalised forward DFT (bins `0..=len/2`).
pub fn representations(series: &[f64], smoothing_window: usize) -> Representations {
    RepresentationBuilder::new(series.len(), smoothing_window).build(series)
}

/// Per-representation interval plan: `(start, end, quantile count)`.
struct Plan {
    reps: Vec<(Representation, Vec<(usize, usize, usize)>)>,
    per_channel: usize,
}

impl Plan {
    fn new(config: &QuantConfig, series_length: usize) -> Plan {
        let reps: Vec<(Representation, Vec<(usize, usize, usize)>)> = representation_lengths(series_length, config.smoothing_window)
            .into_iter()
            .map(|(rep, len)| {
                let ivs: Vec<(usize, usize, usize)> = dyadic_intervals(len, config.depth)
                    .intervals
                    .into_iter()
                    .map(|(s, e)| (s, e, quantile_count(e - s, config.divisor)))
                    .collect();
                (rep, ivs)
            })
            .collect();
        let per_channel = reps
            .iter()
            .flat_map(|(_, ivs)| ivs.iter().map(|&(_, _, k)| k))
            .sum();
        Plan { reps, per_channel }
    }
}

/// Column provenance for `n_channels` channels of `series_length` points.
pub fn quant_columns(config: &QuantConfig, series_length: usize, n_channels: usize) -> Vec<ColumnTag> {
    let plan = Plan::new(config, series_length);
    let mut cols = Vec::with_capacity(plan.per_channel * n_channels);
    for channel in 0..n_channels {
        for (rep, ivs) in &plan.reps {
            for &(start, end, k) in ivs {
                for quantile in 0..k {
                    cols.push(ColumnTag::Quant {
                        channel: channel as u32,
                        representation: *rep,
                        start: start as u32,
                        end: end as u32,
                        quantile: quantile as u32,
                    });
                }
            }
        }
    }
    cols
}

/// Extracts the quantile features of every instance of `d`.
pub fn quant_transform(config: &QuantConfig, d: &Dataset) -> Result<FeatureMatrix> {
    config.validate()?;
    let len = d.series_length();
    let plan = Plan::new(config, len);
    let builder = RepresentationBuilder::new(len, config.smoothing_window);
    let width = plan.per_channel * d.n_channels();
    let mut out = Array2::<f64>::zeros((d.len(), width));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut col = 0;
            for c in 0..d.n_channels() {
                let series: Vec<f64> = d.series(i, c).iter().map(|&v| v as f64).collect();
                let reps = builder.build(&series);
                for ((rep, ivs), (built_rep, values)) in plan.reps.iter().zip(&reps.series) {
                    debug_assert_eq!(rep, built_rep);
                    for &(s, e, k) in ivs {
                        for q in interval_quantiles(&values[s..e], k) {
                            row[col] = q;
                            col += 1;
                        }
                    }
                }
            }
            debug_assert_eq!(col, width);
        });
    FeatureMatrix::new(out, quant_columns(config, len, d.n_channels()), d.split())
}
