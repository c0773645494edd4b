//! Summary table: one row per (dataset, seed), one accuracy column per base
//! and strategy, plus the columns that tie for the row maximum.

use super::{group_records, RunRecord};
use crate::ensembles::Strategy;
use crate::error::Result;

/// Accuracies within this distance of the row maximum share the marker.
pub const BEST_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub seed: u64,
    /// `(column, accuracy)`; `None` when that run failed or was not requested.
    pub cells: Vec<(String, Option<f64>)>,
    pub best: Vec<String>,
}

pub fn summary_rows(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut strategies: Vec<Strategy> = Vec::new();
    for r in records {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    group_records(records)
        .into_iter()
        .map(|((dataset, seed), runs)| {
            let base = runs.iter().find_map(|r| r.accuracy.as_ref());
            let mut cells = vec![
                ("hydra".to_string(), base.map(|a| a.hydra)),
                ("quant".to_string(), base.map(|a| a.quant)),
            ];
            for s in &strategies {
                let acc = runs
                    .iter()
                    .find(|r| r.strategy == *s)
                    .and_then(|r| r.accuracy.as_ref())
                    .map(|a| a.ensemble);
                cells.push((s.name().to_string(), acc));
            }
            let max = cells.iter().filter_map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
            let best = cells
                .iter()
                .filter(|(_, v)| v.is_some_and(|v| max - v <= BEST_TOLERANCE))
                .map(|(k, _)| k.clone())
                .collect();
            SummaryRow {
                dataset,
                seed,
                cells,
                best,
            }
        })
        .collect()
}

/// CSV rendering of [`summary_rows`]; failed cells are written as `failed`
/// and the `best` column joins tied columns with `;`.
pub fn summary_csv(records: &[RunRecord]) -> Result<String> {
    let rows = summary_rows(records);
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        let mut header = vec!["dataset".to_string(), "seed".to_string()];
        header.extend(first.cells.iter().map(|(k, _)| k.clone()));
        header.push("best".into());
        w.write_record(&header)?;
    }
    for row in &rows {
        let mut fields = vec![row.dataset.clone(), row.seed.to_string()];
        fields.extend(row.cells.iter().map(|(_, v)| match v {
            Some(v) => format!("{v:.6}"),
            None => "failed".into(),
        }));
        fields.push(row.best.join(";"));
        w.write_record(&fields)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
