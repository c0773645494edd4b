//! Feature and probability matrices shared by every stage.

use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::blob::{self, BlobReader, BlobWriter};
use crate::error::{Error, Result};

/// Which side of the predefined train/test split a piece of data came from.
///
/// Fit routines refuse anything tagged [`Split::Test`], which is how the
/// crate guarantees that no test row ever reaches a fit path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn ensure_train(self, phase: &'static str) -> Result<()> {
        match self {
            Split::Train => Ok(()),
            Split::Test => Err(Error::TestDataInFit(phase)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Original,
    SmoothedDiff,
    SecondDiff,
    FftMagnitude,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::Original,
        Representation::SmoothedDiff,
        Representation::SecondDiff,
        Representation::FftMagnitude,
    ];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Result<Self> {
        Self::ALL
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Blob(format!("unknown representation code {c}")))
    }
}

/// Base pipeline a logit column came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitSource {
    HydraRidge,
    QuantForest,
}

/// Provenance of one feature column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnTag {
    /// Untagged column (hand-built matrices, tests).
    Raw(u32),
    Hydra {
        dilation: u32,
        group: u32,
        kernel: u32,
        soft: bool,
    },
    Quant {
        channel: u32,
        representation: Representation,
        start: u32,
        end: u32,
        quantile: u32,
    },
    Logit {
        source: LogitSource,
        class: u32,
    },
}

/// Coarse source of a column, as used in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Raw,
    Hydra,
    Quant,
    Logits,
}

impl ColumnTag {
    pub fn source(&self) -> FeatureSource {
        match self {
            ColumnTag::Raw(_) => FeatureSource::Raw,
            ColumnTag::Hydra { .. } => FeatureSource::Hydra,
            ColumnTag::Quant { .. } => FeatureSource::Quant,
            ColumnTag::Logit { .. } => FeatureSource::Logits,
        }
    }
}

/// Dense `n × d` feature matrix with per-column provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub columns: Vec<ColumnTag>,
    pub split: Split,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, columns: Vec<ColumnTag>, split: Split) -> Result<Self> {
        if values.ncols() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} column tags",
                values.ncols(),
                columns.len()
            )));
        }
        Ok(FeatureMatrix {
            values,
            columns,
            split,
        })
    }

    /// Wraps a plain array, tagging columns `Raw(0..d)`.
    pub fn from_array(values: Array2<f64>, split: Split) -> Self {
        let columns = (0..values.ncols() as u32).map(ColumnTag::Raw).collect();
        FeatureMatrix {
            values,
            columns,
            split,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Column-wise concatenation `[self | other]`.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.nrows() != other.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate {} rows with {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        if self.split != other.split {
            return Err(Error::DimensionMismatch(
                "cannot concatenate train and test features".into(),
            ));
        }
        let values = concatenate(Axis(1), &[self.values.view(), other.values.view()])
            .expect("row counts checked");
        let mut columns = self.columns.clone();
        columns.extend_from_slice(&other.columns);
        Ok(FeatureMatrix {
            values,
            columns,
            split: self.split,
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select(Axis(0), rows),
            columns: self.columns.clone(),
            split: self.split,
        }
    }

    pub fn count_source(&self, source: FeatureSource) -> usize {
        self.columns.iter().filter(|c| c.source() == source).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BlobWriter::new(b"FMAT");
        w.u8(match self.split {
            Split::Train => 0,
            Split::Test => 1,
        });
        w.usize(self.nrows());
        w.usize(self.ncols());
        for tag in &self.columns {
            match *tag {
                ColumnTag::Raw(i) => {
                    w.u8(0);
                    w.u32(i);
                }
                ColumnTag::Hydra {
                    dilation,
                    group,
                    kernel,
                    soft,
                } => {
                    w.u8(1);
                    w.u32(dilation);
                    w.u32(group);
                    w.u32(kernel);
                    w.u8(soft as u8);
                }
                ColumnTag::Quant {
                    channel,
                    representation,
                    start,
                    end,
                    quantile,
                } => {
                    w.u8(2);
                    w.u32(channel);
                    w.u8(representation.code());
                    w.u32(start);
                    w.u32(end);
                    w.u32(quantile);
                }
                ColumnTag::Logit { source, class } => {
                    w.u8(3);
                    w.u8(match source {
                        LogitSource::HydraRidge => 0,
                        LogitSource::QuantForest => 1,
                    });
                    w.u32(class);
                }
            }
        }
        for &v in self.values.iter() {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FeatureMatrix> {
        let mut r = BlobReader::open(bytes, b"FMAT")?;
        let split = match r.u8()? {
            0 => Split::Train,
            1 => Split::Test,
            s => return Err(Error::Blob(format!("unknown split code {s}"))),
        };
        let n = r.usize()?;
        let d = r.usize()?;
        let mut columns = Vec::with_capacity(d.min(1 << 20));
        for _ in 0..d {
            let tag = match r.u8()? {
                0 => ColumnTag::Raw(r.u32()?),
                1 => ColumnTag::Hydra {
                    dilation: r.u32()?,
                    group: r.u32()?,
                    kernel: r.u32()?,
                    soft: r.u8()? != 0,
                },
                2 => ColumnTag::Quant {
                    channel: r.u32()?,
                    representation: Representation::from_code(r.u8()?)?,
                    start: r.u32()?,
                    end: r.u32()?,
                    quantile: r.u32()?,
                },
                3 => ColumnTag::Logit {
                    source: match r.u8()? {
                        0 => LogitSource::HydraRidge,
                        1 => LogitSource::QuantForest,
                        s => return Err(Error::Blob(format!("unknown logit source {s}"))),
                    },
                    class: r.u32()?,
                },
                t => return Err(Error::Blob(format!("unknown column tag {t}"))),
            };
            columns.push(tag);
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Error::Blob("matrix size overflows".into()))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            data.push(r.f64()?);
        }
        r.finish()?;
        let values = Array2::from_shape_vec((n, d), data).expect("length checked");
        FeatureMatrix::new(values, columns, split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FeatureMatrix> {
        Self::from_bytes(&blob::read_file(path)?)
    }
}

/// `n × c` class-probability matrix, rows summing to one.
pub type ProbMatrix = Array2<f64>;

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "accuracy: length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len() as f64
}
