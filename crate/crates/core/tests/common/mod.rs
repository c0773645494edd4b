//! Independent reference implementations used as test oracles. None of
//! these call into the crate's transform internals.

#![allow(dead_code)]

use std::collections::BTreeSet;

/// Full "same"-padded dilated convolution of every kernel, then a per-time
/// argmax of |response| with the lowest index winning ties. Returns
/// `(hard, soft)` per kernel.
pub fn hydra_counts_brute_force(series: &[f64], kernels: &[Vec<f64>], dilation: usize) -> Vec<(f64, f64)> {
    let len = series.len() as isize;
    let outputs: Vec<Vec<f64>> = kernels
        .iter()
        .map(|w| {
            let half = (w.len() / 2) as isize;
            (0..len)
                .map(|t| {
                    let mut acc = 0.0;
                    for (j, wj) in w.iter().enumerate() {
                        let src = t + (j as isize - half) * dilation as isize;
                        if (0..len).contains(&src) {
                            acc += wj * series[src as usize];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let mut counts = vec![(0.0, 0.0); kernels.len()];
    for t in 0..len as usize {
        let mut best = 0;
        for k in 1..kernels.len() {
            if outputs[k][t].abs() > outputs[best][t].abs() {
                best = k;
            }
        }
        counts[best].0 += 1.0;
        counts[best].1 += outputs[best][t].abs();
    }
    counts
}

/// Quantiles at probabilities `i/(k-1)` by sorting and interpolating at the
/// fractional index `p·(m-1)`, mean subtracted at odd positions; the median
/// for `k = 1`.
pub fn quantiles_sort_interpolate(values: &[f64], k: usize) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = s.len();
    let q = |p: f64| {
        let pos = p * (m - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
    };
    if k == 1 {
        return vec![q(0.5)];
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    (0..k)
        .map(|i| {
            let v = q(i as f64 / (k - 1) as f64);
            if i % 2 == 1 {
                v - mean
            } else {
                v
            }
        })
        .collect()
}

/// Magnitude of the direct O(n²) DFT at bins `0..=n/2`.
pub fn dft_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// Dyadic intervals by explicit enumeration into an ordered set; order is
/// irrelevant for counting.
pub fn enumerate_intervals(length: usize, depth: usize) -> BTreeSet<(usize, usize)> {
    let mut set = BTreeSet::new();
    for level in 0..depth as u32 {
        let parts = 2usize.pow(level);
        if parts > length {
            break;
        }
        // Boundaries of the partition with the remainder given to the first parts.
        let mut bounds = vec![0];
        for i in 0..parts {
            let width = length / parts + if i < length % parts { 1 } else { 0 };
            bounds.push(bounds[i] + width);
        }
        for w in bounds.windows(2) {
            let (s, e) = (w[0], w[1]);
            set.insert((s, e));
            let half = (e - s) / 2;
            if level >= 1 && half > 0 && e + half <= length {
                set.insert((s + half, e + half));
            }
        }
    }
    set
}

/// Quant output width for one channel of `len` points.
pub fn quant_width(len: usize, depth: usize, v: usize, smoothing: usize) -> usize {
    let rep_lengths = [len, len.saturating_sub(1).saturating_sub(smoothing - 1), len.saturating_sub(2), len / 2 + 1];
    rep_lengths
        .iter()
        .filter(|&&l| l > 0)
        .map(|&l| {
            enumerate_intervals(l, depth)
                .iter()
                .map(|&(s, e)| 1 + (e - s - 1) / v)
                .sum::<usize>()
        })
        .sum()
}

/// Pearson correlation by the textbook two-pass formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
