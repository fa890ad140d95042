//! Experiment configuration.
//!
//! A configuration is one JSON document. Every field has a default, and the
//! empty document `{}` describes the full toy benchmark.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cfr::Architecture;
use crate::error::{Error, Result};
use crate::harness::csvio::CsvOptions;
use crate::ipm::IpmSpec;
use crate::propensity::PropensityConfig;
use crate::synthgen::{gamma_grid, ToyConfig, OMEGA_GRID};
use crate::weights::WeightScheme;

/// Toy-benchmark IPM strengths.
pub const TOY_ALPHAS: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];

/// `10^(k/2)` for `k = -10..=6`.
pub fn real_data_alphas() -> Vec<f64> {
    (-10..=6).map(|k| 10f64.powf(k as f64 / 2.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyGrid {
    /// Template; `gamma_tilde`, `omega` and `seed` are set per dataset.
    pub base: ToyConfig,
    pub gammas: Vec<f64>,
    pub omegas: Vec<usize>,
}

impl Default for ToyGrid {
    fn default() -> Self {
        Self {
            base: ToyConfig::default(),
            gammas: gamma_grid(),
            omegas: OMEGA_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvReplication {
    pub train: PathBuf,
    /// Held-out file; without one the model is scored on its own training
    /// file.
    #[serde(default)]
    pub test: Option<PathBuf>,
}

/// Either an explicit list or numbered file names with `{i}` placeholders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CsvSet {
    List(Vec<CsvReplication>),
    Pattern {
        train_pattern: String,
        #[serde(default)]
        test_pattern: Option<String>,
        #[serde(default = "one")]
        first: usize,
        count: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for CsvSet {
    fn default() -> Self {
        CsvSet::List(Vec::new())
    }
}

impl CsvSet {
    /// Replications with relative paths resolved against `base`.
    pub fn expand(&self, base: &Path) -> Vec<CsvReplication> {
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let reps = match self {
            CsvSet::List(v) => v.clone(),
            CsvSet::Pattern {
                train_pattern,
                test_pattern,
                first,
                count,
            } => (*first..*first + *count)
                .map(|i| CsvReplication {
                    train: train_pattern.replace("{i}", &i.to_string()).into(),
                    test: test_pattern.as_ref().map(|t| t.replace("{i}", &i.to_string()).into()),
                })
                .collect(),
        };
        reps.into_iter()
            .map(|r| CsvReplication {
                train: resolve(r.train),
                test: r.test.map(resolve),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSource {
    /// Replications used to choose hyperparameters.
    pub tune: CsvSet,
    /// Replications reported with the chosen hyperparameters.
    pub eval: CsvSet,
    /// Share of each training file held out for validation.
    pub val_fraction: f64,
    /// Standardize covariates with training-part statistics.
    pub standardize: bool,
    #[serde(flatten)]
    pub options: CsvOptions,
    /// Directory that relative paths are resolved against; defaults to the
    /// directory holding the configuration file.
    pub base_dir: Option<PathBuf>,
}

impl Default for CsvSource {
    fn default() -> Self {
        Self {
            tune: CsvSet::default(),
            eval: CsvSet::default(),
            val_fraction: 0.3,
            standardize: false,
            options: CsvOptions {
                has_counterfactuals: true,
                categorical: Vec::new(),
            },
            base_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Toy(ToyGrid),
    Csv(CsvSource),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Toy(ToyGrid::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// True `sqrt(PEHE_p)` on validation; needs ground truth.
    OraclePehe,
    /// Nearest-neighbour PEHE proxy on validation.
    PeheNn,
    /// Best weighted validation MSE from training.
    ValLoss,
}

impl Selection {
    pub fn name(&self) -> &'static str {
        match self {
            Selection::OraclePehe => "oracle_pehe",
            Selection::PeheNn => "pehe_nn",
            Selection::ValLoss => "val_loss",
        }
    }
}

/// Training options shared by every grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        let t = crate::cfr::TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
        }
    }
}

/// Random-search ranges for real data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub n_configs: usize,
    pub alphas: Vec<f64>,
    pub ipms: Vec<IpmSpec>,
    pub encoder_layers: Vec<usize>,
    pub head_layers: Vec<usize>,
    pub encoder_dims: Vec<usize>,
    pub head_dims: Vec<usize>,
    pub propensity_layers: Vec<usize>,
    pub propensity_dims: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_configs: 100,
            alphas: real_data_alphas(),
            ipms: vec![IpmSpec::wass(), IpmSpec::MmdLinear, IpmSpec::mmd_rbf()],
            encoder_layers: vec![1, 2, 3],
            head_layers: vec![1, 2, 3],
            encoder_dims: vec![20, 50, 100, 200],
            head_dims: vec![20, 50, 100, 200],
            propensity_layers: vec![1, 2, 3],
            propensity_dims: vec![10, 20, 30],
        }
    }
}

/// One point of the hyperparameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub alpha: f64,
    pub ipm: IpmSpec,
    pub architecture: Architecture,
    pub propensity_layers: usize,
    pub propensity_dim: usize,
}

impl SearchSpace {
    /// `n_configs` independent draws; the representation width equals the
    /// encoder width.
    pub fn sample(&self, seed: u64) -> Result<Vec<Candidate>> {
        let lists: [&[usize]; 6] = [
            &self.encoder_layers,
            &self.head_layers,
            &self.encoder_dims,
            &self.head_dims,
            &self.propensity_layers,
            &self.propensity_dims,
        ];
        if self.alphas.is_empty() || self.ipms.is_empty() || lists.iter().any(|l| l.is_empty()) {
            return Err(Error::Config("every search range must be non-empty".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(crate::mix_seed(&[seed, 0x5345_4152]));
        let mut out = Vec::with_capacity(self.n_configs);
        for _ in 0..self.n_configs {
            let alpha = self.alphas[rng.gen_range(0..self.alphas.len())];
            let ipm = self.ipms[rng.gen_range(0..self.ipms.len())];
            let [el, hl, ed, hd, pl, pd] = lists.map(|l| *l.choose(&mut rng).expect("non-empty"));
            out.push(Candidate {
                alpha,
                ipm,
                architecture: Architecture {
                    encoder_layers: el,
                    encoder_dim: ed,
                    rep_dim: ed,
                    head_layers: hl,
                    head_dim: hd,
                },
                propensity_layers: pl,
                propensity_dim: pd,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub schemes: Vec<WeightScheme>,
    /// Toy grid: every combination of `alphas`, `ipms` and `architectures`.
    pub alphas: Vec<f64>,
    pub ipms: Vec<IpmSpec>,
    pub architectures: Vec<Architecture>,
    /// Real data: random search instead of the full product.
    pub search: SearchSpace,
    pub propensity: PropensityConfig,
    pub training: TrainingOptions,
    /// Toy datasets per grid point.
    pub repetitions: usize,
    pub seed: u64,
    /// Defaults to `oracle_pehe` for toy data and `pehe_nn` for files.
    pub selection: Option<Selection>,
    pub out: PathBuf,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            schemes: vec![
                WeightScheme::Uniform,
                WeightScheme::Ipw,
                WeightScheme::truncipw(),
                WeightScheme::Mw,
                WeightScheme::Ow,
            ],
            alphas: TOY_ALPHAS.to_vec(),
            ipms: vec![IpmSpec::wass()],
            architectures: vec![Architecture::default()],
            search: SearchSpace::default(),
            propensity: PropensityConfig::default(),
            training: TrainingOptions::default(),
            repetitions: 20,
            seed: 0,
            selection: None,
            out: PathBuf::from("runs"),
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if let DatasetSource::Csv(src) = &mut cfg.dataset {
            if src.base_dir.is_none() {
                src.base_dir = path.parent().map(Path::to_path_buf);
            }
        }
        Ok(cfg)
    }

    pub fn selection(&self) -> Selection {
        self.selection.unwrap_or(match self.dataset {
            DatasetSource::Toy(_) => Selection::OraclePehe,
            DatasetSource::Csv(_) => Selection::PeheNn,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.schemes.is_empty() {
            return bad("schemes must be non-empty");
        }
        for s in &self.schemes {
            s.validate()?;
        }
        match &self.dataset {
            DatasetSource::Toy(grid) => {
                if self.alphas.is_empty() || self.ipms.is_empty() || self.architectures.is_empty() {
                    return bad("alphas, ipms and architectures must be non-empty");
                }
                if grid.gammas.is_empty() || grid.omegas.is_empty() {
                    return bad("gamma and omega grids must be non-empty");
                }
                if self.repetitions == 0 {
                    return bad("repetitions must be positive");
                }
                for &omega in &grid.omegas {
                    ToyConfig {
                        omega,
                        ..grid.base.clone()
                    }
                    .validate()?;
                }
                if self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                    return bad("alphas must be finite and >= 0");
                }
            }
            DatasetSource::Csv(src) => {
                if !(src.val_fraction > 0.0 && src.val_fraction < 1.0) {
                    return bad("val_fraction must lie in (0, 1)");
                }
                let base = src.base_dir.clone().unwrap_or_default();
                if src.eval.expand(&base).is_empty() {
                    return bad("csv source needs at least one eval replication");
                }
                if self.selection() == Selection::OraclePehe && !src.options.has_counterfactuals {
                    return bad("oracle selection needs counterfactual columns");
                }
            }
        }
        for ipm in &self.ipms {
            ipm.validate()?;
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, ignoring the output
    /// directory and worker count.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
            m.remove("workers");
        }
        let canonical = serde_json::to_string(&v).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The toy-grid cartesian product of the configured grids.
    pub fn grid_candidates(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        for arch in &self.architectures {
            for ipm in &self.ipms {
                for &alpha in &self.alphas {
                    out.push(Candidate {
                        alpha,
                        ipm: *ipm,
                        architecture: arch.clone(),
                        propensity_layers: self.propensity.hidden_layers,
                        propensity_dim: self.propensity.hidden_dim,
                    });
                }
            }
        }
        out
    }
}
