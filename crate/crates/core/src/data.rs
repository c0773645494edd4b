//! Dataset ingestion, validation, stratified folds and subsampling.
//!
//! Two on-disk layouts are supported:
//!
//! * **TSD1 binary** (little-endian): magic `"TSD1"`, `u64 n_instances`,
//!   `u64 n_channels`, `u64 series_length`, `u64 n_labels_present`, then
//!   `f32` values in `[instance][channel][time]` order, then `i64` labels.
//!   `n_labels_present` must equal `n_instances`.
//! * **CSV** (univariate only): one row per instance, label in the last
//!   column, optional header row.
//!
//! Raw labels are remapped to `0..c` in ascending order of the original
//! value; the mapping is kept on the dataset for reporting.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayView1, Axis};
use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::matrix::Split;
use crate::rng;

const MAGIC: &[u8; 4] = b"TSD1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Binary,
    Csv,
}

impl Layout {
    /// `.csv` files are CSV, everything else is TSD1.
    pub fn from_path(path: &Path) -> Layout {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Layout::Csv,
            _ => Layout::Binary,
        }
    }
}

/// A labelled collection of fixed-length multichannel series.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    split: Split,
    x: Array3<f32>,
    y: Vec<usize>,
    classes: Vec<i64>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from raw labels, remapping them to `0..c`.
    ///
    /// Enforces the full set of invariants: at least two instances, two
    /// classes, non-empty series and finite values.
    pub fn from_raw(
        name: impl Into<String>,
        split: Split,
        x: Array3<f32>,
        raw_labels: &[i64],
    ) -> Result<Dataset> {
        let mut classes = raw_labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::SingleClass(classes.len()));
        }
        let ds = Self::with_classes(name, split, x, raw_labels, &classes)?;
        if ds.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 instances, found {}",
                ds.len()
            )));
        }
        Ok(ds)
    }

    /// Builds a dataset whose labels are mapped through an existing class
    /// list, e.g. a test split that must share the train split's mapping.
    /// Classes may be absent, but unknown labels are rejected.
    pub fn with_classes(
        name: impl Into<String>,
        split: Split,
        x: Array3<f32>,
        raw_labels: &[i64],
        classes: &[i64],
    ) -> Result<Dataset> {
        let (n, _, len) = x.dim();
        if raw_labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} instances but {} labels",
                raw_labels.len()
            )));
        }
        if n == 0 || len == 0 || x.dim().1 == 0 {
            return Err(Error::InvalidDataset(format!(
                "empty dataset shape {:?}",
                x.dim()
            )));
        }
        if let Some((i, _)) = x
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, inst)| inst.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite { instance: i });
        }
        let y = raw_labels
            .iter()
            .map(|l| {
                classes.binary_search(l).map_err(|_| {
                    Error::InvalidDataset(format!("label {l} not among the known classes"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            name: name.into(),
            split,
            x: x.as_standard_layout().into_owned(),
            y,
            classes: classes.to_vec(),
            row_ids: (0..n).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.x.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.x.dim().1
    }

    pub fn series_length(&self) -> usize {
        self.x.dim().2
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    /// Original label values; `classes()[k]` is the raw label of class `k`.
    pub fn classes(&self) -> &[i64] {
        &self.classes
    }

    pub fn raw_labels(&self) -> Vec<i64> {
        self.y.iter().map(|&k| self.classes[k]).collect()
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.x
    }

    /// One channel of one instance.
    pub fn series(&self, instance: usize, channel: usize) -> ArrayView1<'_, f32> {
        self.x.slice(ndarray::s![instance, channel, ..])
    }

    /// Index of each row in the dataset this one was cut from.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Rows `indices` of this dataset, keeping split, classes and row ids.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            split: self.split,
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Same rows with labels replaced (classes stay `0..n_classes`).
    pub fn with_labels(&self, y: Vec<usize>) -> Result<Dataset> {
        if y.len() != self.len() || y.iter().any(|&k| k >= self.n_classes()) {
            return Err(Error::DimensionMismatch("replacement labels".into()));
        }
        Ok(Dataset {
            y,
            ..self.clone()
        })
    }

    pub fn retagged(&self, split: Split) -> Dataset {
        Dataset {
            split,
            ..self.clone()
        }
    }

    pub fn same_shape(&self, other: &Dataset) -> Result<()> {
        if self.n_channels() != other.n_channels() || self.series_length() != other.series_length()
        {
            return Err(Error::DimensionMismatch(format!(
                "{} channels × {} points vs {} channels × {} points",
                self.n_channels(),
                self.series_length(),
                other.n_channels(),
                other.series_length()
            )));
        }
        Ok(())
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MAGIC)?;
        let (n, ch, len) = self.x.dim();
        for v in [n, ch, len, n] {
            write(&(v as u64).to_le_bytes())?;
        }
        for v in self.x.iter() {
            write(&v.to_le_bytes())?;
        }
        for l in self.raw_labels() {
            write(&l.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Raw contents of a dataset file before label remapping.
struct RawDataset {
    x: Array3<f32>,
    labels: Vec<i64>,
}

fn read_binary(path: &Path) -> Result<RawDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 36];
    r.read_exact(&mut header)
        .map_err(|_| Error::MalformedHeader("file shorter than the 36-byte header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::MalformedHeader("missing TSD1 magic".into()));
    }
    let field = |i: usize| u64::from_le_bytes(header[4 + 8 * i..12 + 8 * i].try_into().unwrap());
    let (n, ch, len, n_labels) = (field(0), field(1), field(2), field(3));
    if n_labels != n {
        return Err(Error::MalformedHeader(format!(
            "{n_labels} labels declared for {n} instances"
        )));
    }
    let cells = n
        .checked_mul(ch)
        .and_then(|v| v.checked_mul(len))
        .filter(|&v| v < (1 << 40))
        .ok_or_else(|| Error::MalformedHeader(format!("implausible shape {n}×{ch}×{len}")))?
        as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    let expected = cells * 4 + n as usize * 8;
    if body.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "header declares {n}×{ch}×{len} ({expected} payload bytes) but file has {}",
            body.len()
        )));
    }
    let (data, labels) = body.split_at(cells * 4);
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = labels
        .chunks_exact(8)
        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let x = Array3::from_shape_vec((n as usize, ch as usize, len as usize), values)
        .expect("payload length checked");
    Ok(RawDataset { x, labels })
}

fn parse_label(field: &str) -> Option<i64> {
    let field = field.trim();
    field.parse::<i64>().ok().or_else(|| {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && v.abs() < 9.0e15)
            .map(|v| v as i64)
    })
}

fn read_csv(path: &Path) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::MalformedHeader(format!(
                "row {line} has {} fields; need at least one value and a label",
                record.len()
            )));
        }
        let fields: Vec<&str> = record.iter().collect();
        let (values, label) = fields.split_at(fields.len() - 1);
        let parsed: Option<Vec<f32>> = values
            .iter()
            .map(|v| v.trim().parse::<f32>().ok())
            .collect();
        match (parsed, parse_label(label[0])) {
            (Some(v), Some(l)) => {
                rows.push(v);
                labels.push(l);
            }
            // A non-numeric first row is a header.
            _ if line == 0 => continue,
            _ => {
                return Err(Error::MalformedHeader(format!(
                    "row {line} contains a non-numeric field"
                )))
            }
        }
    }
    let len = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != len) {
        return Err(Error::DimensionMismatch(format!(
            "instance {i} has {} values, expected {len}",
            r.len()
        )));
    }
    let n = rows.len();
    let x = Array3::from_shape_vec((n, 1, len), rows.into_iter().flatten().collect())
        .expect("row lengths checked");
    Ok(RawDataset { x, labels })
}

fn read_raw(path: &Path, layout: Layout) -> Result<RawDataset> {
    match layout {
        Layout::Binary => read_binary(path),
        Layout::Csv => read_csv(path),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Loads and validates a single dataset file (tagged as a train split).
pub fn load_dataset(path: &Path, layout: Layout) -> Result<Dataset> {
    let raw = read_raw(path, layout)?;
    Dataset::from_raw(stem(path), Split::Train, raw.x, &raw.labels)
}

/// A dataset with its predefined train/test split.
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

impl SplitPair {
    /// Builds a pair, mapping the test labels through the train classes.
    pub fn new(name: impl Into<String>, train: Dataset, test: Dataset) -> Result<SplitPair> {
        train.same_shape(&test)?;
        let name = name.into();
        let test = Dataset::with_classes(
            name.clone(),
            Split::Test,
            test.x.clone(),
            &test.raw_labels(),
            train.classes(),
        )?;
        let train = Dataset {
            name: name.clone(),
            split: Split::Train,
            ..train
        };
        Ok(SplitPair { name, train, test })
    }
}

fn find_split_file(dir: &Path, split: &str) -> Result<PathBuf> {
    for ext in ["tsd", "csv"] {
        let p = dir.join(format!("{split}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::InvalidDataset(format!(
        "{} has no {split}.tsd or {split}.csv",
        dir.display()
    )))
}

/// Loads `<dir>/train.{tsd,csv}` and `<dir>/test.{tsd,csv}`; the dataset is
/// named after the directory.
pub fn load_split_pair(dir: &Path) -> Result<SplitPair> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let train_path = find_split_file(dir, "train")?;
    let test_path = find_split_file(dir, "test")?;
    let train_raw = read_raw(&train_path, Layout::from_path(&train_path))?;
    let test_raw = read_raw(&test_path, Layout::from_path(&test_path))?;
    let train = Dataset::from_raw(name.clone(), Split::Train, train_raw.x, &train_raw.labels)?;
    let test = Dataset::with_classes(
        name.clone(),
        Split::Test,
        test_raw.x,
        &test_raw.labels,
        train.classes(),
    )?;
    train.same_shape(&test)?;
    Ok(SplitPair { name, train, test })
}

/// Writes a split pair in the directory layout [`load_split_pair`] reads.
pub fn save_split_pair(pair: &SplitPair, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    pair.train.save_binary(&dir.join("train.tsd"))?;
    pair.test.save_binary(&dir.join("test.tsd"))
}

/// Fold index of every sample for stratified k-fold splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled with its own seeded stream and dealt round-robin
/// to the folds. The dealing position carries over from one class to the
/// next so fold sizes stay balanced as well.
pub fn stratified_kfold(y: &[usize], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    let mut fold_of = vec![0; y.len()];
    let mut next = 0;
    for (class, idx) in members.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(Error::TooFewMembers {
                class,
                count: idx.len(),
                folds: k,
            });
        }
        idx.shuffle(&mut rng::stream(seed, class as u64));
        for &i in idx.iter() {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// `min(cap, n)` distinct indices in ascending order, drawn uniformly
/// without replacement. Returns `0..n` when the cap does not bind.
pub fn subsample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if cap >= n {
        return (0..n).collect();
    }
    let mut idx = index::sample(&mut rng::seeded(seed), n, cap).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Array3::from_shape_vec((2, 1, 4), vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        Dataset::from_raw("tiny", Split::Train, x, &[0, 1]).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.tsd");
        let ds = tiny();
        ds.save_binary(&path).unwrap();
        let back = load_dataset(&path, Layout::Binary).unwrap();
        assert_eq!((back.len(), back.n_channels(), back.series_length()), (2, 1, 4));
        assert_eq!(back.values(), ds.values());
        assert_eq!(back.labels(), &[0, 1]);
    }

    #[test]
    fn csv_labels_are_remapped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "t0,t1,t2,label").unwrap();
        writeln!(f, "1,2,3,7").unwrap();
        writeln!(f, "4,5,6,3").unwrap();
        writeln!(f, "7,8,9,7").unwrap();
        drop(f);
        let ds = load_dataset(&path, Layout::Csv).unwrap();
        assert_eq!(ds.classes(), &[3, 7]);
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.series_length(), 3);
    }

    #[test]
    fn nan_reports_instance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        let mut f = File::create(&path).unwrap();
        for i in 0..8 {
            let v = if i == 5 { "nan".to_string() } else { i.to_string() };
            writeln!(f, "{v},1,{}", i % 2).unwrap();
        }
        drop(f);
        match load_dataset(&path, Layout::Csv) {
            Err(Error::NonFinite { instance }) => assert_eq!(instance, 5),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Array3::zeros((3, 1, 2));
        assert!(matches!(
            Dataset::from_raw("one", Split::Train, x, &[4, 4, 4]),
            Err(Error::SingleClass(1))
        ));
    }

    #[test]
    fn bad_headers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsd");
        std::fs::write(&path, b"TSD2").unwrap();
        assert!(matches!(
            load_dataset(&path, Layout::Binary),
            Err(Error::MalformedHeader(_))
        ));

        let mut bytes = MAGIC.to_vec();
        for v in [2u64, 1, 4, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[0u8; 12]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dataset(&path, Layout::Binary),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn test_split_shares_train_mapping() {
        let train = Dataset::from_raw("d", Split::Train, Array3::zeros((2, 1, 3)), &[10, 20])
            .unwrap();
        let test = Dataset::with_classes(
            "d",
            Split::Test,
            Array3::zeros((2, 1, 3)),
            &[20, 20],
            train.classes(),
        )
        .unwrap();
        assert_eq!(test.labels(), &[1, 1]);
        assert!(Dataset::with_classes(
            "d",
            Split::Test,
            Array3::zeros((1, 1, 3)),
            &[30],
            train.classes()
        )
        .is_err());
    }

    #[test]
    fn kfold_two_by_two() {
        let f = stratified_kfold(&[0, 0, 1, 1], 2, 42).unwrap();
        for fold in 0..2 {
            let mut labels: Vec<usize> = f.held_out(fold).iter().map(|&i| [0, 0, 1, 1][i]).collect();
            labels.sort();
            assert_eq!(labels, vec![0, 1]);
        }
    }

    #[test]
    fn kfold_five_per_class() {
        let y: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let f = stratified_kfold(&y, 5, 1).unwrap();
        for fold in 0..5 {
            let held = f.held_out(fold);
            assert_eq!(held.len(), 2);
            assert_ne!(y[held[0]], y[held[1]]);
        }
    }

    #[test]
    fn kfold_uneven_counts() {
        // Expected counts enumerated independently: 60 = 5·12, 43 = 5·8 + 3.
        let mut y = vec![0; 60];
        y.extend(vec![1; 43]);
        let f = stratified_kfold(&y, 5, 42).unwrap();
        let mut c0: Vec<usize> = (0..5)
            .map(|k| f.held_out(k).iter().filter(|&&i| y[i] == 0).count())
            .collect();
        let mut c1: Vec<usize> = (0..5)
            .map(|k| f.held_out(k).iter().filter(|&&i| y[i] == 1).count())
            .collect();
        c0.sort();
        c1.sort();
        assert_eq!(c0, vec![12; 5]);
        assert_eq!(c1, vec![8, 8, 9, 9, 9]);
    }

    #[test]
    fn kfold_rejects_small_classes() {
        assert!(matches!(
            stratified_kfold(&[0, 0, 0, 1], 2, 0),
            Err(Error::TooFewMembers { class: 1, .. })
        ));
        assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
    }

    #[test]
    fn subsample_rules() {
        assert_eq!(subsample_indices(100, 5000, 42), (0..100).collect::<Vec<_>>());
        let a = subsample_indices(10_000, 5000, 42);
        assert_eq!(a.len(), 5000);
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 5000);
        assert_eq!(a, subsample_indices(10_000, 5000, 42));
        assert_ne!(a, subsample_indices(10_000, 5000, 43));
    }
}
