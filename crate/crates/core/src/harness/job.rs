//! Single training runs: one dataset, one configuration, checkpoints on
//! disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cfr::{export_representations, train_cfr, CfrModel, RepresentationTable, TrainConfig, TrainTrace};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::harness::csvio::{fmt_f64, load_csv_dataset, CsvOptions, Standardizer};
use crate::harness::experiment::{split_validation, write_atomic};
use crate::metrics::{evaluate, EvalReport};
use crate::propensity::{train_propensity, PropensityConfig, PropensityModel};
use crate::synthgen::{generate_toy, ToyConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvJobData {
    pub train: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default, flatten)]
    pub options: CsvOptions,
}

fn default_val_fraction() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobData {
    Toy(ToyConfig),
    Csv(CsvJobData),
}

impl Default for JobData {
    fn default() -> Self {
        JobData::Toy(ToyConfig::default())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJob {
    pub data: JobData,
    pub train: TrainConfig,
    pub propensity: PropensityConfig,
}

#[derive(Clone, Debug)]
pub struct JobSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl JobSplits {
    pub fn get(&self, name: &str) -> Result<&Dataset> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split '{other}' (train, val, test)"))),
        }
    }
}

impl TrainJob {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Sets the training seed and, for toy data, the generator seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        if let JobData::Toy(t) = &mut self.data {
            t.seed = seed;
        }
        self
    }

    pub fn splits(&self) -> Result<JobSplits> {
        match &self.data {
            JobData::Toy(cfg) => {
                let s = generate_toy(cfg)?;
                Ok(JobSplits {
                    train: s.train,
                    val: s.val,
                    test: s.test,
                })
            }
            JobData::Csv(c) => {
                let full = load_csv_dataset(&c.train, &c.options)?;
                let test = match &c.test {
                    Some(p) => load_csv_dataset(p, &c.options)?,
                    None => full.clone(),
                };
                let (train, val) = split_validation(&full, c.val_fraction, crate::mix_seed(&[self.train.seed, 3]));
                if c.standardize {
                    let st = Standardizer::fit(&train.x);
                    Ok(JobSplits {
                        train: st.apply(&train)?,
                        val: st.apply(&val)?,
                        test: st.apply(&test)?,
                    })
                } else {
                    Ok(JobSplits { train, val, test })
                }
            }
        }
    }
}

/// Artifacts of one run; written as `model.json`, `propensity.json`,
/// `trace.json` and `job.json`.
#[derive(Clone, Debug)]
pub struct TrainedJob {
    pub job: TrainJob,
    pub model: CfrModel,
    pub propensity: PropensityModel,
    pub trace: TrainTrace,
}

pub fn run_train_job(job: &TrainJob) -> Result<(TrainedJob, JobSplits)> {
    let splits = job.splits()?;
    let prop = train_propensity(&splits.train, &job.propensity, job.train.seed)?;
    let fit = train_cfr(&splits.train, &splits.val, &prop.model, &job.train)?;
    Ok((
        TrainedJob {
            job: job.clone(),
            model: fit.model,
            propensity: prop.model,
            trace: fit.trace,
        },
        splits,
    ))
}

fn read_json<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

impl TrainedJob {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("job.json"), serde_json::to_string_pretty(&self.job)?.as_bytes())?;
        write_atomic(&dir.join("model.json"), serde_json::to_string(&self.model)?.as_bytes())?;
        write_atomic(&dir.join("propensity.json"), serde_json::to_string(&self.propensity)?.as_bytes())?;
        write_atomic(&dir.join("trace.json"), serde_json::to_string_pretty(&self.trace)?.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            job: read_json(dir.join("job.json"))?,
            model: read_json(dir.join("model.json"))?,
            propensity: read_json(dir.join("propensity.json"))?,
            trace: read_json(dir.join("trace.json"))?,
        })
    }

    pub fn evaluate(&self, splits: &JobSplits, split: &str) -> Result<EvalReport> {
        evaluate(&self.model, &self.propensity, self.job.train.scheme, &splits.train, splits.get(split)?)
    }

    pub fn export(&self, splits: &JobSplits, split: &str) -> Result<RepresentationTable> {
        export_representations(&self.model, &self.propensity, self.job.train.scheme, splits.get(split)?)
    }
}

/// Scalar fields of a report as one CSV header and row.
pub fn report_row(r: &EvalReport) -> (Vec<String>, Vec<String>) {
    let o = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut h: Vec<String> = [
        "scheme", "n_units", "n_treated", "n_control", "pehe_p", "sqrt_pehe_p", "ate_p_hat", "ate_p_true",
        "ate_error_p", "ate_g_hat", "ate_g_true", "ate_error_g", "b1", "b0", "ate_dr", "ate_error_dr", "pehe_nn",
    ]
    .map(String::from)
    .to_vec();
    let mut v = vec![
        r.scheme.clone(),
        r.n_units.to_string(),
        r.n_treated.to_string(),
        r.n_control.to_string(),
        o(r.pehe_p),
        o(r.sqrt_pehe_p),
        fmt_f64(r.ate_p_hat),
        o(r.ate_p_true),
        o(r.ate_error_p),
        o(r.ate_g_hat),
        o(r.ate_g_true),
        o(r.ate_error_g),
        fmt_f64(r.b1),
        fmt_f64(r.b0),
        o(r.ate_dr),
        o(r.ate_error_dr),
        o(r.pehe_nn),
    ];
    for t in &r.targets {
        let tag = format!("{}_{}", t.tilting, t.propensity);
        h.push(format!("pehe_g_{tag}"));
        v.push(o(t.pehe_g));
        h.push(format!("ate_error_g_{tag}"));
        v.push(o(t.ate_error_g));
    }
    (h, v)
}
