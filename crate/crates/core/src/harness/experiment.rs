//! Grid execution with a resumable record store.
//!
//! A cell is one (dataset, scheme) pair. Each cell trains one propensity
//! network per propensity architecture, then one CFR model per candidate,
//! picks the candidate with the best validation score and reports it on the
//! test split. Finished cells are written to
//! `out/records/<config hash>/<key>.json` by write-then-rename, so a
//! restarted run skips them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfr::{train_cfr, TrainConfig, TrainTrace};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::harness::config::{Candidate, CsvReplication, CsvSource, DatasetSource, ExperimentConfig, Selection};
use crate::harness::csvio::{load_csv_dataset, Standardizer};
use crate::metrics::{evaluate, EvalReport};
use crate::propensity::{train_propensity, PropensityConfig, PropensityModel};
use crate::synthgen::{generate_toy, ToyConfig};
use crate::weights::WeightScheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetKey {
    /// `"toy"` or `"csv"`.
    pub kind: String,
    /// `"tune"` or `"eval"` for files; absent for toy data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<usize>,
    pub replication: usize,
    /// Seed of the generator or of the validation split.
    pub data_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub candidate: Candidate,
    /// Score used for selection (lower is better).
    pub selection_value: Option<f64>,
    pub val_sqrt_pehe_p: Option<f64>,
    pub val_pehe_nn: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    /// Whether any batch evaluated the IPM term.
    pub ipm_evaluated: bool,
    pub aborted: Option<String>,
    pub test: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub key: String,
    pub dataset: DatasetKey,
    /// Seed for network initialization and batches.
    pub seed: u64,
    pub scheme: WeightScheme,
    pub selection: Selection,
    /// Index into `candidates` of the selected model.
    pub selected: Option<usize>,
    pub alpha: Option<f64>,
    pub report: Option<EvalReport>,
    pub candidates: Vec<CandidateResult>,
    pub wall_time_s: f64,
    pub trace_path: Option<String>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn selected_candidate(&self) -> Option<&CandidateResult> {
        self.selected.map(|i| &self.candidates[i])
    }

    /// Test result of the first candidate with the given `alpha`.
    pub fn candidate_with_alpha(&self, alpha: f64) -> Option<&CandidateResult> {
        self.candidates.iter().find(|c| c.candidate.alpha == alpha)
    }
}

#[derive(Clone, Debug)]
enum DataSpec {
    Toy(ToyConfig),
    Csv { rep: CsvReplication, seed: u64 },
}

#[derive(Clone, Debug)]
struct Cell {
    key: String,
    dataset: DatasetKey,
    data: DataSpec,
    scheme: WeightScheme,
    seed: u64,
    candidates: Vec<Candidate>,
}

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn fmt_key_num(x: f64) -> String {
    let s = format!("{x}");
    s.replace('.', "p").replace('-', "m")
}

/// Record store layout under one output directory.
#[derive(Clone, Debug)]
pub struct RecordStore {
    pub records: PathBuf,
    pub traces: PathBuf,
}

impl RecordStore {
    pub fn new(out: &Path, hash: &str) -> Self {
        Self {
            records: out.join("records").join(hash),
            traces: out.join("traces").join(hash),
        }
    }

    pub fn record_path(&self, key: &str) -> PathBuf {
        self.records.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> Result<Option<RunRecord>> {
        let path = self.record_path(key);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
    }

    /// Every record in the store, sorted by key.
    pub fn load_all(&self) -> Result<Vec<RunRecord>> {
        let mut out = Vec::new();
        if !self.records.exists() {
            return Ok(out);
        }
        for entry in std::fs::read_dir(&self.records)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".json") && name != "config.json" {
                out.push(serde_json::from_str::<RunRecord>(&std::fs::read_to_string(&path)?)?);
            }
        }
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn toy_cells(config: &ExperimentConfig, grid: &crate::harness::config::ToyGrid) -> Vec<Cell> {
    let candidates = config.grid_candidates();
    let mut cells = Vec::new();
    for r in 0..config.repetitions {
        // same data seed across the grid: datasets differ only in gamma and omega
        let data_seed = crate::mix_seed(&[config.seed, r as u64]);
        let seed = crate::mix_seed(&[config.seed, r as u64, 1]);
        for &omega in &grid.omegas {
            for &gamma in &grid.gammas {
                let toy = ToyConfig {
                    gamma_tilde: gamma,
                    omega,
                    seed: data_seed,
                    ..grid.base.clone()
                };
                for &scheme in &config.schemes {
                    cells.push(Cell {
                        key: format!("toy_g{}_o{omega}_r{r}_{}", fmt_key_num(gamma), scheme.name()),
                        dataset: DatasetKey {
                            kind: "toy".into(),
                            phase: None,
                            gamma_tilde: Some(gamma),
                            omega: Some(omega),
                            replication: r,
                            data_seed,
                            train_path: None,
                        },
                        data: DataSpec::Toy(toy.clone()),
                        scheme,
                        seed,
                        candidates: candidates.clone(),
                    });
                }
            }
        }
    }
    cells
}

fn csv_cells(
    config: &ExperimentConfig,
    phase: &str,
    reps: &[CsvReplication],
    candidates: &dyn Fn(WeightScheme) -> Vec<Candidate>,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    let tag = if phase == "tune" { 2 } else { 3 };
    for (r, rep) in reps.iter().enumerate() {
        let data_seed = crate::mix_seed(&[config.seed, tag, r as u64]);
        let seed = crate::mix_seed(&[config.seed, tag, r as u64, 1]);
        for &scheme in &config.schemes {
            cells.push(Cell {
                key: format!("{phase}_r{r}_{}", scheme.name()),
                dataset: DatasetKey {
                    kind: "csv".into(),
                    phase: Some(phase.into()),
                    gamma_tilde: None,
                    omega: None,
                    replication: r,
                    data_seed,
                    train_path: Some(rep.train.display().to_string()),
                },
                data: DataSpec::Csv {
                    rep: rep.clone(),
                    seed: data_seed,
                },
                scheme,
                seed,
                candidates: candidates(scheme),
            });
        }
    }
    cells
}

/// Splits `data` into training and validation parts by a seeded shuffle.
pub fn split_validation(data: &Dataset, val_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let n_val = ((data.len() as f64) * val_fraction).round() as usize;
    let n_val = n_val.clamp(1.min(data.len()), data.len().saturating_sub(1));
    let (val, train) = idx.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (data.subset(&train), data.subset(&val))
}

fn load_splits(spec: &DataSpec, src: Option<&CsvSource>) -> Result<Splits> {
    match spec {
        DataSpec::Toy(cfg) => {
            let s = generate_toy(cfg)?;
            Ok(Splits {
                train: s.train,
                val: s.val,
                test: s.test,
            })
        }
        DataSpec::Csv { rep, seed } => {
            let src = src.expect("csv source");
            let full = load_csv_dataset(&rep.train, &src.options)?;
            let test = match &rep.test {
                Some(p) => load_csv_dataset(p, &src.options)?,
                None => full.clone(),
            };
            let (train, val) = split_validation(&full, src.val_fraction, *seed);
            if src.standardize {
                let st = Standardizer::fit(&train.x);
                Ok(Splits {
                    train: st.apply(&train)?,
                    val: st.apply(&val)?,
                    test: st.apply(&test)?,
                })
            } else {
                Ok(Splits { train, val, test })
            }
        }
    }
}

fn selection_score(selection: Selection, val: &EvalReport, trace: &TrainTrace) -> Option<f64> {
    let v = match selection {
        Selection::OraclePehe => val.sqrt_pehe_p,
        Selection::PeheNn => val.pehe_nn,
        Selection::ValLoss => Some(trace.best_val_loss),
    };
    v.filter(|v| v.is_finite())
}

struct CellOutput {
    record: RunRecord,
    trace: Option<TrainTrace>,
}

fn run_candidate(
    cell: &Cell,
    c: &Candidate,
    splits: &Splits,
    prop: &PropensityModel,
    config: &ExperimentConfig,
) -> Result<(CandidateResult, TrainTrace)> {
    let tc = TrainConfig {
        alpha: c.alpha,
        ipm: c.ipm,
        scheme: cell.scheme,
        architecture: c.architecture.clone(),
        batch_size: config.training.batch_size,
        learning_rate: config.training.learning_rate,
        max_epochs: config.training.max_epochs,
        patience: config.training.patience,
        seed: cell.seed,
    };
    let fit = train_cfr(&splits.train, &splits.val, prop, &tc)?;
    let val = evaluate(&fit.model, prop, cell.scheme, &splits.train, &splits.val)?;
    let test = evaluate(&fit.model, prop, cell.scheme, &splits.train, &splits.test)?;
    let trace = fit.trace;
    Ok((
        CandidateResult {
            candidate: c.clone(),
            selection_value: selection_score(config.selection(), &val, &trace),
            val_sqrt_pehe_p: val.sqrt_pehe_p,
            val_pehe_nn: val.pehe_nn,
            best_val_loss: Some(trace.best_val_loss),
            best_epoch: Some(trace.best_epoch),
            epochs_run: Some(trace.epochs.len() - 1),
            ipm_evaluated: trace.epochs.iter().any(|e| e.ipm.is_some()),
            aborted: trace.aborted.clone(),
            test: Some(test),
            error: None,
        },
        trace,
    ))
}

fn failed_candidate(c: &Candidate, e: &Error) -> CandidateResult {
    CandidateResult {
        candidate: c.clone(),
        selection_value: None,
        val_sqrt_pehe_p: None,
        val_pehe_nn: None,
        best_val_loss: None,
        best_epoch: None,
        epochs_run: None,
        ipm_evaluated: false,
        aborted: None,
        test: None,
        error: Some(e.to_string()),
    }
}

fn run_cell(cell: &Cell, config: &ExperimentConfig, hash: &str) -> CellOutput {
    let start = Instant::now();
    let src = match &config.dataset {
        DatasetSource::Csv(s) => Some(s),
        DatasetSource::Toy(_) => None,
    };
    let mut record = RunRecord {
        config_hash: hash.into(),
        key: cell.key.clone(),
        dataset: cell.dataset.clone(),
        seed: cell.seed,
        scheme: cell.scheme,
        selection: config.selection(),
        selected: None,
        alpha: None,
        report: None,
        candidates: Vec::new(),
        wall_time_s: 0.0,
        trace_path: None,
        error: None,
    };
    let splits = match load_splits(&cell.data, src) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(format!("loading data: {e}"));
            record.wall_time_s = start.elapsed().as_secs_f64();
            return CellOutput { record, trace: None };
        }
    };

    let mut props: BTreeMap<(usize, usize), std::result::Result<PropensityModel, String>> = BTreeMap::new();
    let mut traces = Vec::new();
    for c in &cell.candidates {
        let prop = props.entry((c.propensity_layers, c.propensity_dim)).or_insert_with(|| {
            let pc = PropensityConfig {
                hidden_layers: c.propensity_layers,
                hidden_dim: c.propensity_dim,
                ..config.propensity.clone()
            };
            train_propensity(&splits.train, &pc, cell.seed)
                .map(|f| f.model)
                .map_err(|e| e.to_string())
        });
        let result = match prop {
            Ok(p) => run_candidate(cell, c, &splits, p, config),
            Err(msg) => Err(Error::Diverged(format!("propensity: {msg}"))),
        };
        match result {
            Ok((r, t)) => {
                record.candidates.push(r);
                traces.push(Some(t));
            }
            Err(e) => {
                record.candidates.push(failed_candidate(c, &e));
                traces.push(None);
            }
        }
    }

    let best = record
        .candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.selection_value.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        });
    let mut trace = None;
    match best {
        Some((i, _)) => {
            record.selected = Some(i);
            record.alpha = Some(record.candidates[i].candidate.alpha);
            record.report = record.candidates[i].test.clone();
            trace = traces[i].take();
        }
        None => {
            let first = record.candidates.iter().find_map(|c| c.error.clone());
            record.error = Some(first.unwrap_or_else(|| "no candidate produced a selection score".into()));
        }
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    CellOutput { record, trace }
}

fn execute(cells: &[Cell], config: &ExperimentConfig, store: &RecordStore, on_record: &(dyn Fn(&RunRecord) + Sync)) -> Result<Vec<RunRecord>> {
    let hash = config.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|cell| -> Result<RunRecord> {
                if let Some(done) = store.load(&cell.key)? {
                    return Ok(done);
                }
                let CellOutput { mut record, trace } = run_cell(cell, config, &hash);
                if let Some(trace) = trace {
                    let path = store.traces.join(format!("{}.json", cell.key));
                    write_atomic(&path, serde_json::to_string(&trace)?.as_bytes())?;
                    record.trace_path = Some(path.display().to_string());
                }
                write_atomic(&store.record_path(&cell.key), serde_json::to_string_pretty(&record)?.as_bytes())?;
                on_record(&record);
                Ok(record)
            })
            .collect()
    })
}

/// Per scheme, the candidate with the lowest mean selection score over the
/// tuning records; candidates missing a score in any replication are
/// skipped.
pub fn choose_tuned(records: &[RunRecord], scheme: WeightScheme) -> Option<Candidate> {
    let rs: Vec<&RunRecord> = records.iter().filter(|r| r.scheme == scheme).collect();
    let n = rs.first()?.candidates.len();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let scores: Option<Vec<f64>> = rs.iter().map(|r| r.candidates.get(i)?.selection_value).collect();
        if let Some(s) = scores {
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            if best.map_or(true, |(_, b)| mean < b) {
                best = Some((i, mean));
            }
        }
    }
    best.map(|(i, _)| rs[0].candidates[i].candidate.clone())
}

/// Runs every cell of the configuration, reusing finished records.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_experiment_with(config, &|_| {})
}

/// As [`run_experiment`], calling `on_record` after each newly finished
/// cell.
pub fn run_experiment_with(config: &ExperimentConfig, on_record: &(dyn Fn(&RunRecord) + Sync)) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let hash = config.hash();
    let store = RecordStore::new(&config.out, &hash);
    std::fs::create_dir_all(&store.records)?;
    write_atomic(&store.records.join("config.json"), serde_json::to_string_pretty(config)?.as_bytes())?;
    match &config.dataset {
        DatasetSource::Toy(grid) => execute(&toy_cells(config, grid), config, &store, on_record),
        DatasetSource::Csv(src) => {
            let base = src.base_dir.clone().unwrap_or_default();
            let tune = src.tune.expand(&base);
            let eval = src.eval.expand(&base);
            if tune.is_empty() {
                let grid = config.grid_candidates();
                return execute(&csv_cells(config, "eval", &eval, &|_| grid.clone()), config, &store, on_record);
            }
            let sampled = config.search.sample(config.seed)?;
            let mut records = execute(
                &csv_cells(config, "tune", &tune, &|_| sampled.clone()),
                config,
                &store,
                on_record,
            )?;
            let mut chosen = BTreeMap::new();
            for &s in &config.schemes {
                let c = choose_tuned(&records, s)
                    .ok_or_else(|| Error::Config(format!("no tuning candidate succeeded for scheme {s}")))?;
                chosen.insert(s.name(), c);
            }
            let eval_cells = csv_cells(config, "eval", &eval, &|s| vec![chosen[s.name()].clone()]);
            records.extend(execute(&eval_cells, config, &store, on_record)?);
            Ok(records)
        }
    }
}
