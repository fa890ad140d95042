//! Long-format and aggregated result tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::csvio::fmt_f64;
use crate::harness::experiment::{write_atomic, RunRecord};
use crate::metrics::EvalReport;

/// Metrics aggregated per group, in output order.
pub const METRICS: [&str; 6] = ["sqrt_pehe_p", "ate_error_p", "ate_error_g", "ate_error_dr", "pehe_nn", "alpha"];

/// Sample mean and standard error `sd / sqrt(n)` (divisor `n - 1`; zero for
/// a single value).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

fn report_metric(r: &EvalReport, metric: &str) -> Option<f64> {
    match metric {
        "sqrt_pehe_p" => r.sqrt_pehe_p,
        "ate_error_p" => r.ate_error_p,
        "ate_error_g" => r.ate_error_g,
        "ate_error_dr" => r.ate_error_dr,
        "pehe_nn" => r.pehe_nn,
        _ => None,
    }
}

/// Value of `metric` for the selected model of a record.
pub fn record_metric(r: &RunRecord, metric: &str) -> Option<f64> {
    if metric == "alpha" {
        return r.alpha;
    }
    r.report.as_ref().and_then(|rep| report_metric(rep, metric))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub phase: String,
    pub scheme: String,
    /// Formatted so groups sort and compare exactly.
    pub gamma_tilde: String,
    pub omega: String,
}

impl GroupKey {
    pub fn of(r: &RunRecord) -> Self {
        Self {
            phase: r.dataset.phase.clone().unwrap_or_else(|| "toy".into()),
            scheme: r.scheme.name().into(),
            gamma_tilde: r.dataset.gamma_tilde.map(fmt_f64).unwrap_or_default(),
            omega: r.dataset.omega.map(|o| o.to_string()).unwrap_or_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: GroupKey,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error per group and metric, over records with a
/// selected model.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(GroupKey::of(r)).or_default().push(r);
    }
    let mut out = Vec::new();
    for (group, rs) in groups {
        for metric in METRICS {
            let vals: Vec<f64> = rs.iter().filter_map(|r| record_metric(r, metric)).collect();
            if let Some((mean, stderr)) = mean_stderr(&vals) {
                out.push(AggregateRow {
                    group: group.clone(),
                    metric: metric.into(),
                    n: vals.len(),
                    mean,
                    stderr,
                });
            }
        }
    }
    out
}

/// Scheme-by-metric table of `mean ± stderr`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[row][column]`: `(mean, stderr, n)`.
    pub cells: Vec<Vec<Option<(f64, f64, usize)>>>,
}

impl ResultTable {
    pub fn markdown(&self) -> String {
        let mut s = format!("| scheme | {} |\n", self.columns.join(" | "));
        s += &format!("|---|{}\n", "---|".repeat(self.columns.len()));
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            let cols: Vec<String> = cells
                .iter()
                .map(|c| match c {
                    Some((m, e, _)) => format!("{m:.3} ± {e:.3}"),
                    None => "-".into(),
                })
                .collect();
            s += &format!("| {row} | {} |\n", cols.join(" | "));
        }
        s
    }
}

/// `sqrt(PEHE_p)` and `|ATE_p error|` per scheme over the records of one
/// phase.
pub fn result_table(records: &[RunRecord], phase: &str) -> ResultTable {
    let columns = vec!["sqrt_pehe_p".to_string(), "ate_error_p".to_string()];
    let mut rows: Vec<String> = Vec::new();
    for r in records {
        let name = r.scheme.name().to_string();
        if GroupKey::of(r).phase == phase && !rows.contains(&name) {
            rows.push(name);
        }
    }
    let cells = rows
        .iter()
        .map(|row| {
            columns
                .iter()
                .map(|m| {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| GroupKey::of(r).phase == phase && r.scheme.name() == row)
                        .filter_map(|r| record_metric(r, m))
                        .collect();
                    mean_stderr(&vals).map(|(a, b)| (a, b, vals.len()))
                })
                .collect()
        })
        .collect();
    ResultTable { rows, columns, cells }
}

const LONG_HEADER: [&str; 21] = [
    "config_hash",
    "key",
    "kind",
    "phase",
    "gamma_tilde",
    "omega",
    "replication",
    "scheme",
    "selection",
    "alpha",
    "ipm",
    "sqrt_pehe_p",
    "pehe_p",
    "ate_error_p",
    "ate_error_g",
    "ate_dr",
    "ate_error_dr",
    "pehe_nn",
    "b1",
    "b0",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn long_row(r: &RunRecord) -> Vec<String> {
    let rep = r.report.as_ref();
    let g = |f: fn(&EvalReport) -> Option<f64>| opt(rep.and_then(f));
    vec![
        r.config_hash.clone(),
        r.key.clone(),
        r.dataset.kind.clone(),
        r.dataset.phase.clone().unwrap_or_default(),
        opt(r.dataset.gamma_tilde),
        r.dataset.omega.map(|o| o.to_string()).unwrap_or_default(),
        r.dataset.replication.to_string(),
        r.scheme.name().into(),
        r.selection.name().into(),
        opt(r.alpha),
        r.selected_candidate().map(|c| c.candidate.ipm.to_string()).unwrap_or_default(),
        g(|x| x.sqrt_pehe_p),
        g(|x| x.pehe_p),
        g(|x| x.ate_error_p),
        g(|x| x.ate_error_g),
        g(|x| x.ate_dr),
        g(|x| x.ate_error_dr),
        g(|x| x.pehe_nn),
        g(|x| Some(x.b1)),
        g(|x| Some(x.b0)),
        r.error.clone().unwrap_or_default(),
    ]
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_records: usize,
    pub n_failed: usize,
    pub aggregates: Vec<AggregateRow>,
    /// Present when the records include an evaluation phase.
    pub table: Option<ResultTable>,
}

/// Writes `records.csv` (one row per record), `candidates.csv` (one row per
/// record and candidate), `aggregate.csv`, `summary.json` and, for file
/// data, `table.md`.
pub fn emit_report(records: &[RunRecord], dir: &Path) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Config("no records to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    write_rows(&dir.join("records.csv"), &LONG_HEADER, records.iter().map(long_row))?;

    let cand_header = [
        "key",
        "scheme",
        "candidate",
        "selected",
        "alpha",
        "ipm",
        "encoder_layers",
        "encoder_dim",
        "rep_dim",
        "head_layers",
        "head_dim",
        "selection_value",
        "val_sqrt_pehe_p",
        "val_pehe_nn",
        "best_epoch",
        "ipm_evaluated",
        "test_sqrt_pehe_p",
        "test_ate_error_p",
        "test_pehe_nn",
        "error",
    ];
    let cand_rows = records.iter().flat_map(|r| {
        r.candidates.iter().enumerate().map(move |(i, c)| {
            let a = &c.candidate.architecture;
            let t = c.test.as_ref();
            vec![
                r.key.clone(),
                r.scheme.name().into(),
                i.to_string(),
                (r.selected == Some(i)).to_string(),
                fmt_f64(c.candidate.alpha),
                c.candidate.ipm.to_string(),
                a.encoder_layers.to_string(),
                a.encoder_dim.to_string(),
                a.rep_dim.to_string(),
                a.head_layers.to_string(),
                a.head_dim.to_string(),
                opt(c.selection_value),
                opt(c.val_sqrt_pehe_p),
                opt(c.val_pehe_nn),
                c.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
                c.ipm_evaluated.to_string(),
                opt(t.and_then(|t| t.sqrt_pehe_p)),
                opt(t.and_then(|t| t.ate_error_p)),
                opt(t.and_then(|t| t.pehe_nn)),
                c.error.clone().unwrap_or_default(),
            ]
        })
    });
    write_rows(&dir.join("candidates.csv"), &cand_header, cand_rows)?;

    let aggregates = aggregate(records);
    let agg_header = ["phase", "scheme", "gamma_tilde", "omega", "metric", "n", "mean", "stderr"];
    write_rows(
        &dir.join("aggregate.csv"),
        &agg_header,
        aggregates.iter().map(|a| {
            vec![
                a.group.phase.clone(),
                a.group.scheme.clone(),
                a.group.gamma_tilde.clone(),
                a.group.omega.clone(),
                a.metric.clone(),
                a.n.to_string(),
                fmt_f64(a.mean),
                fmt_f64(a.stderr),
            ]
        }),
    )?;

    let table = records
        .iter()
        .any(|r| r.dataset.phase.as_deref() == Some("eval"))
        .then(|| result_table(records, "eval"));
    if let Some(t) = &table {
        write_atomic(&dir.join("table.md"), t.markdown().as_bytes())?;
    }
    let summary = Summary {
        n_records: records.len(),
        n_failed: records.iter().filter(|r| r.error.is_some()).count(),
        aggregates,
        table,
    };
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(summary)
}
