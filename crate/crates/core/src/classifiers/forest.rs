use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;

use crate::blob::{self, BlobReader, BlobWriter};
use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, ProbMatrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per node, as a fraction of the total (at least one).
    pub max_features_fraction: f64,
    pub min_samples_split: usize,
    pub seed: u64,
    /// Keep every evaluated candidate split for inspection.
    pub audit: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_features_fraction: 0.1,
            min_samples_split: 2,
            seed: 42,
            audit: false,
        }
    }
}

impl ForestConfig {
    pub fn max_features(&self, n_features: usize) -> usize {
        ((self.max_features_fraction * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if !(self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "max_features_fraction must lie in (0, 1], got {}",
                self.max_features_fraction
            )));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Feature range among the node's samples when the threshold was drawn.
        range: (f64, f64),
        gain: f64,
        samples: usize,
        candidates: Vec<SplitCandidate>,
    },
    Leaf {
        histogram: Vec<u32>,
    },
}

/// Nodes in creation order; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, row: &[f64]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { histogram } => return histogram,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
}

fn entropy(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum()
}

struct Grower<'a> {
    /// Column-major copy: feature `f` of row `i` is `cols[f * n + i]`.
    cols: &'a [f64],
    n: usize,
    d: usize,
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    min_samples_split: usize,
    audit: bool,
}

impl Grower<'_> {
    fn grow(&self, seed: u64) -> Tree {
        let mut rng = rng::seeded(seed);
        let mut rows: Vec<usize> = (0..self.n).collect();
        let mut features: Vec<usize> = (0..self.d).collect();
        let mut nodes = vec![Node::Leaf { histogram: vec![] }];
        let mut stack = vec![(0usize, 0usize, self.n)];
        let mut left_counts = vec![0u32; self.n_classes];

        while let Some((id, start, end)) = stack.pop() {
            let here = &rows[start..end];
            let mut hist = vec![0u32; self.n_classes];
            for &i in here {
                hist[self.y[i]] += 1;
            }
            let total = here.len() as u32;
            let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
            if pure || here.len() < self.min_samples_split {
                nodes[id] = Node::Leaf { histogram: hist };
                continue;
            }
            let parent = entropy(&hist, total);

            let mut best: Option<(SplitCandidate, (f64, f64))> = None;
            let mut candidates = Vec::new();
            let mut found = 0;
            let mut drawn = 0;
            // Partial Fisher-Yates over the feature list; constant features
            // are skipped without counting towards the budget.
            while found < self.max_features && drawn < self.d {
                let j = rng.random_range(drawn..self.d);
                features.swap(drawn, j);
                let f = features[drawn];
                drawn += 1;
                let col = &self.cols[f * self.n..(f + 1) * self.n];
                let (lo, hi) = here.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(col[i]), hi.max(col[i]))
                });
                if !(hi > lo) {
                    continue;
                }
                found += 1;
                let mut threshold = rng.random_range(lo..hi);
                if threshold >= hi {
                    threshold = lo;
                }
                left_counts.fill(0);
                let mut n_left = 0u32;
                for &i in here {
                    if col[i] <= threshold {
                        left_counts[self.y[i]] += 1;
                        n_left += 1;
                    }
                }
                let right_counts: Vec<u32> = hist.iter().zip(&left_counts).map(|(h, l)| h - l).collect();
                let n_right = total - n_left;
                let gain = parent
                    - (n_left as f64 / total as f64) * entropy(&left_counts, n_left)
                    - (n_right as f64 / total as f64) * entropy(&right_counts, n_right);
                let cand = SplitCandidate {
                    feature: f,
                    threshold,
                    gain,
                };
                if best.as_ref().map_or(true, |(b, _)| gain > b.gain) {
                    best = Some((cand.clone(), (lo, hi)));
                }
                if self.audit {
                    candidates.push(cand);
                }
            }

            let Some((chosen, range)) = best else {
                nodes[id] = Node::Leaf { histogram: hist };
                continue;
            };
            let col = &self.cols[chosen.feature * self.n..(chosen.feature + 1) * self.n];
            let slice = &mut rows[start..end];
            let mut mid = 0;
            for k in 0..slice.len() {
                if col[slice[k]] <= chosen.threshold {
                    slice.swap(k, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { histogram: vec![] });
            nodes.push(Node::Leaf { histogram: vec![] });
            nodes[id] = Node::Split {
                feature: chosen.feature,
                threshold: chosen.threshold,
                left,
                right,
                range,
                gain: chosen.gain,
                samples: end - start,
                candidates,
            };
            stack.push((right, start + mid, end));
            stack.push((left, start, start + mid));
        }
        Tree { nodes }
    }
}

/// Fits an extremely randomised forest: per node, one uniform threshold per
/// candidate feature, entropy gain, no bootstrap and no depth limit. Trees
/// are grown in parallel from per-tree seeds, so the result does not depend
/// on the thread count.
pub fn forest_fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, cfg: &ForestConfig) -> Result<ForestModel> {
    x.split.ensure_train("forest fit")?;
    cfg.validate()?;
    if n_classes < 2 {
        return Err(Error::SingleClass(n_classes));
    }
    super::check_labels(x.nrows(), y, n_classes)?;
    let (n, d) = x.values.dim();
    if d == 0 {
        return Err(Error::DimensionMismatch("forest needs at least one feature".into()));
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite forest input".into()));
    }
    let cols: Vec<f64> = x.values.t().iter().copied().collect();
    let grower = Grower {
        cols: &cols,
        n,
        d,
        y,
        n_classes,
        max_features: cfg.max_features(d),
        min_samples_split: cfg.min_samples_split,
        audit: cfg.audit,
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| grower.grow(rng::derive_seed(cfg.seed, t as u64)))
        .collect();
    Ok(ForestModel {
        trees,
        n_features: d,
        n_classes,
    })
}

impl ForestModel {
    /// Mean over trees of each leaf's class frequencies.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<ProbMatrix> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "forest was fitted on {} features, got {}",
                self.n_features,
                x.ncols()
            )));
        }
        let c = self.n_classes;
        let rows: Vec<Vec<f64>> = x
            .values
            .rows()
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|row| {
                let row = row.to_vec();
                let mut acc = vec![0.0; c];
                for tree in &self.trees {
                    let h = tree.leaf(&row);
                    let total: u32 = h.iter().sum();
                    for (a, &v) in acc.iter_mut().zip(h) {
                        *a += v as f64 / total as f64;
                    }
                }
                acc.iter().map(|a| a / self.trees.len() as f64).collect()
            })
            .collect();
        Ok(Array2::from_shape_fn((rows.len(), c), |(i, j)| rows[i][j]))
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(crate::matrix::argmax_rows(&self.predict_proba(x)?))
    }

    /// Plain-text dump of every split and, when fitted with `audit`, the
    /// candidates it was chosen from.
    pub fn audit_text(&self) -> String {
        let mut out = String::new();
        for (t, tree) in self.trees.iter().enumerate() {
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        range,
                        gain,
                        samples,
                        candidates,
                        ..
                    } => {
                        let _ = write!(
                            out,
                            "tree {t} node {i} split feature={feature} threshold={threshold:.6} range=[{:.6}, {:.6}] gain={gain:.6} samples={samples}",
                            range.0, range.1
                        );
                        for c in candidates {
                            let _ = write!(out, " | f{}@{:.6}:{:.6}", c.feature, c.threshold, c.gain);
                        }
                        out.push('\n');
                    }
                    Node::Leaf { histogram } => {
                        let _ = writeln!(out, "tree {t} node {i} leaf {histogram:?}");
                    }
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BlobWriter::new(b"FRST");
        w.usize(self.n_features);
        w.usize(self.n_classes);
        w.usize(self.trees.len());
        for tree in &self.trees {
            w.usize(tree.nodes.len());
            for node in &tree.nodes {
                match node {
                    Node::Leaf { histogram } => {
                        w.u8(0);
                        let h: Vec<usize> = histogram.iter().map(|&v| v as usize).collect();
                        w.usizes(&h);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        range,
                        gain,
                        samples,
                        ..
                    } => {
                        w.u8(1);
                        w.usize(*feature);
                        w.f64(*threshold);
                        w.usize(*left);
                        w.usize(*right);
                        w.f64(range.0);
                        w.f64(range.1);
                        w.f64(*gain);
                        w.usize(*samples);
                    }
                }
            }
        }
        w.finish()
    }

    /// Audit candidates are not persisted.
    pub fn from_bytes(bytes: &[u8]) -> Result<ForestModel> {
        let mut r = BlobReader::open(bytes, b"FRST")?;
        let n_features = r.usize()?;
        let n_classes = r.usize()?;
        let n_trees = r.usize()?;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = r.usize()?;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => {
                        let h = r.usizes()?;
                        if h.len() != n_classes || h.iter().sum::<usize>() == 0 {
                            return Err(Error::Blob("bad leaf histogram".into()));
                        }
                        Node::Leaf {
                            histogram: h.into_iter().map(|v| v as u32).collect(),
                        }
                    }
                    1 => Node::Split {
                        feature: r.usize()?,
                        threshold: r.f64()?,
                        left: r.usize()?,
                        right: r.usize()?,
                        range: (r.f64()?, r.f64()?),
                        gain: r.f64()?,
                        samples: r.usize()?,
                        candidates: vec![],
                    },
                    tag => return Err(Error::Blob(format!("unknown node tag {tag}"))),
                });
            }
            // Children must come after their parent, which also rules out cycles.
            for (i, node) in nodes.iter().enumerate() {
                if let Node::Split { feature, left, right, .. } = node {
                    if *feature >= n_features || *left <= i || *right <= i || *left >= n_nodes || *right >= n_nodes {
                        return Err(Error::Blob("bad split node".into()));
                    }
                }
            }
            if nodes.is_empty() {
                return Err(Error::Blob("empty tree".into()));
            }
            trees.push(Tree { nodes });
        }
        r.finish()?;
        Ok(ForestModel {
            trees,
            n_features,
            n_classes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ForestModel> {
        Self::from_bytes(&blob::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Split;
    use ndarray::array;

    fn small(n_trees: usize, audit: bool) -> ForestConfig {
        ForestConfig {
            n_trees,
            audit,
            ..ForestConfig::default()
        }
    }

    fn strip_audit(mut m: ForestModel) -> ForestModel {
        for t in &mut m.trees {
            for node in &mut t.nodes {
                if let Node::Split { candidates, .. } = node {
                    candidates.clear();
                }
            }
        }
        m
    }

    fn xor_like(n: usize) -> (FeatureMatrix, Vec<usize>) {
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 37 + j * 11) % 17) as f64);
        let y = (0..n).map(|i| ((i * 37) % 17 > 8) as usize).collect();
        (FeatureMatrix::from_array(x, Split::Train), y)
    }

    #[test]
    fn pure_input_gives_single_leaves() {
        let x = FeatureMatrix::from_array(array![[1.0], [2.0], [3.0]], Split::Train);
        let m = forest_fit(&x, &[1, 1, 1], 2, &small(5, false)).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        let p = m.predict_proba(&x).unwrap();
        assert!(p.rows().into_iter().all(|r| r.to_vec() == vec![0.0, 1.0]));
    }

    #[test]
    fn constant_features_give_leaves() {
        let x = FeatureMatrix::from_array(Array2::from_elem((6, 4), 2.5), Split::Train);
        let m = forest_fit(&x, &[0, 1, 0, 1, 0, 1], 2, &small(3, false)).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(m.predict_proba(&x).unwrap()[[0, 0]], 0.5);
    }

    #[test]
    fn fits_training_data_exactly() {
        let (x, y) = xor_like(80);
        let m = forest_fit(&x, &y, 2, &small(20, false)).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
    }

    #[test]
    fn probabilities_are_distributions() {
        let (x, y) = xor_like(60);
        let m = forest_fit(&x, &y, 2, &small(10, false)).unwrap();
        let q = FeatureMatrix::from_array(Array2::from_shape_fn((7, 3), |(i, j)| (i * j) as f64 - 2.0), Split::Test);
        for row in m.predict_proba(&q).unwrap().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn thresholds_inside_ranges_and_best_gain_chosen() {
        let (x, y) = xor_like(100);
        let m = forest_fit(&x, &y, 2, &small(8, true)).unwrap();
        let mut splits = 0;
        for t in &m.trees {
            for node in &t.nodes {
                if let Node::Split {
                    feature,
                    threshold,
                    range,
                    gain,
                    candidates,
                    ..
                } = node
                {
                    splits += 1;
                    assert!(range.0 <= *threshold && *threshold < range.1);
                    assert!(candidates.iter().all(|c| c.gain <= *gain));
                    assert!(candidates.iter().any(|c| c.feature == *feature && c.threshold == *threshold));
                    assert!(!candidates.is_empty() && candidates.len() <= 1);
                }
            }
        }
        assert!(splits > 0);
        assert!(m.audit_text().contains("split feature="));
    }

    #[test]
    fn audit_does_not_change_the_model() {
        let (x, y) = xor_like(50);
        let a = forest_fit(&x, &y, 2, &small(6, true)).unwrap();
        let b = forest_fit(&x, &y, 2, &small(6, false)).unwrap();
        assert_eq!(strip_audit(a), b);
    }

    #[test]
    fn thread_count_independent() {
        let (x, y) = xor_like(70);
        let cfg = small(16, false);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| forest_fit(&x, &y, 2, &cfg).unwrap());
        let b = forest_fit(&x, &y, 2, &cfg).unwrap();
        assert_eq!(a, b);
        let pa = one.install(|| a.predict_proba(&x).unwrap());
        assert_eq!(pa, b.predict_proba(&x).unwrap());
    }

    #[test]
    fn max_features_rounding() {
        let cfg = ForestConfig::default();
        assert_eq!(cfg.max_features(1), 1);
        assert_eq!(cfg.max_features(10), 1);
        assert_eq!(cfg.max_features(11), 2);
        assert_eq!(cfg.max_features(4096), 410);
    }

    #[test]
    fn errors() {
        let (x, y) = xor_like(10);
        assert!(matches!(forest_fit(&x, &y, 1, &small(2, false)), Err(Error::SingleClass(1))));
        let test = FeatureMatrix { split: Split::Test, ..x.clone() };
        assert!(matches!(forest_fit(&test, &y, 2, &small(2, false)), Err(Error::TestDataInFit(_))));
        let m = forest_fit(&x, &y, 2, &small(2, false)).unwrap();
        let narrow = FeatureMatrix::from_array(Array2::zeros((1, 2)), Split::Test);
        assert!(matches!(m.predict_proba(&narrow), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn blob_round_trip() {
        let (x, y) = xor_like(40);
        let m = forest_fit(&x, &y, 2, &small(4, false)).unwrap();
        let back = ForestModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let mut bytes = m.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(ForestModel::from_bytes(&bytes).is_err());
    }
}
