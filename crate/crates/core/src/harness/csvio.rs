//! Dataset and table CSV files.
//!
//! Dataset files carry a header. The columns `t` and `y_factual` are
//! required; `y_cfactual`, `mu0`, `mu1` and `e_true` are optional ground
//! truth. Every other column is a covariate, taken in file order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cfr::RepresentationTable;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

const RESERVED: [&str; 6] = ["t", "y_factual", "y_cfactual", "mu0", "mu1", "e_true"];

/// `%.17g`: 17 significant digits, trailing zeros removed, scientific
/// notation outside `1e-5 <= |x| < 1e17`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvOptions {
    /// Require and keep the `y_cfactual` column.
    pub has_counterfactuals: bool,
    /// Covariate columns to drop.
    pub categorical: Vec<String>,
}

fn parse_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Reads a dataset file. Rows are numbered from 1 for the first data row.
pub fn load_csv_dataset(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let t_col = find("t").ok_or_else(|| parse_err(path, 0, "t", "missing required column"))?;
    let y_col = find("y_factual").ok_or_else(|| parse_err(path, 0, "y_factual", "missing required column"))?;
    let ycf_col = find("y_cfactual");
    if options.has_counterfactuals && ycf_col.is_none() {
        return Err(parse_err(path, 0, "y_cfactual", "missing required column"));
    }
    for c in &options.categorical {
        if find(c).is_none() {
            return Err(parse_err(path, 0, c, "categorical column not present"));
        }
    }
    let covariates: Vec<usize> = (0..header.len())
        .filter(|&i| !RESERVED.contains(&header[i].as_str()) && !options.categorical.contains(&header[i]))
        .collect();
    let optional = |name: &str| find(name).map(|c| (c, Vec::new()));
    let mut ycf = if options.has_counterfactuals { ycf_col.map(|c| (c, Vec::new())) } else { None };
    let (mut mu0, mut mu1, mut e_true) = (optional("mu0"), optional("mu1"), optional("e_true"));

    let (mut x, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(path, row, "*", e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                row,
                "*",
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        let num = |c: usize| -> Result<f64> {
            let v: f64 = record[c]
                .parse()
                .map_err(|_| parse_err(path, row, &header[c], format!("'{}' is not a number", &record[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(path, row, &header[c], format!("non-finite value '{}'", &record[c])))
            }
        };
        t.push(match num(t_col)? {
            v if v == 1.0 => true,
            v if v == 0.0 => false,
            v => return Err(parse_err(path, row, "t", format!("treatment must be 0 or 1, got {v}"))),
        });
        y.push(num(y_col)?);
        for slot in [&mut ycf, &mut mu0, &mut mu1, &mut e_true].into_iter().flatten() {
            slot.1.push(num(slot.0)?);
        }
        for &c in &covariates {
            x.push(num(c)?);
        }
    }
    let n = t.len();
    let mut d = Dataset::new(DenseMatrix::from_vec(n, covariates.len(), x)?, t, y)?;
    if let Some((_, v)) = ycf {
        d = d.with_counterfactual(v)?;
    }
    match (mu0, mu1) {
        (Some((_, a)), Some((_, b))) => d = d.with_potential_means(a, b)?,
        (None, None) => {}
        _ => return Err(parse_err(path, 0, "mu0/mu1", "mu0 and mu1 must appear together")),
    }
    if let Some((_, e)) = e_true {
        d = d.with_true_propensity(e)?;
    }
    Ok(d)
}

/// Covariate names used when writing a dataset.
pub fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

pub fn write_csv_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["t".into(), "y_factual".into()];
    let extras = [
        ("y_cfactual", &data.y_cf),
        ("mu0", &data.mu0),
        ("mu1", &data.mu1),
        ("e_true", &data.e_true),
    ];
    header.extend(extras.iter().filter(|(_, v)| v.is_some()).map(|(n, _)| n.to_string()));
    header.extend(covariate_names(data.dim()));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row = vec![if data.t[i] { "1".to_string() } else { "0".to_string() }, fmt_f64(data.y[i])];
        row.extend(extras.iter().filter_map(|(_, v)| v.as_ref().map(|v| fmt_f64(v[i]))));
        row.extend(data.x.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_representation_csv(path: impl AsRef<Path>, table: &RepresentationTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(table.header())?;
    for i in 0..table.n_rows() {
        let mut row: Vec<String> = table.rep.row(i).iter().map(|&v| fmt_f64(v)).collect();
        row.push(fmt_f64(table.weight[i]));
        row.push(if table.t[i] { "1".into() } else { "0".into() });
        row.push(fmt_f64(table.y[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-column affine map fitted on training covariates. Constant columns
/// are only centered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population standard deviation (divisor `n`).
    pub fn fit(x: &DenseMatrix) -> Self {
        let (n, p) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; p];
        for i in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for i in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} columns, data has {}",
                self.mean.len(),
                data.dim()
            )));
        }
        let mut out = data.clone();
        for i in 0..out.len() {
            for ((v, m), s) in out.x.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}
