//! Exact checks of the balance results on finite covariate spaces.
//!
//! On a finite support every density, divergence and normalizer is a finite
//! sum, so each bound can be evaluated exactly and asserted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipm::{exact_ot_cost, IpmSpec, Kernel, WeightedSample};
use crate::numcore::{euclidean, logistic, DenseMatrix};
use crate::weights::WeightScheme;

/// Absolute slack allowed on every inequality.
pub const TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    /// `p(x_k)`, summing to one.
    pub p: Vec<f64>,
    /// True propensity `e(x_k)`.
    pub e: Vec<f64>,
    /// Model propensity `e_eta(x_k)`.
    pub e_model: Vec<f64>,
    pub scheme: WeightScheme,
}

impl DiscreteInstance {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.p.len();
        if k == 0 || self.e.len() != k || self.e_model.len() != k {
            return Err(Error::Shape("instance vectors must be non-empty and equally long".into()));
        }
        if self.p.iter().any(|&v| !(v >= 0.0)) || (self.p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("p must be a probability vector".into()));
        }
        if self.e.iter().chain(&self.e_model).any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain("propensities must lie strictly inside (0, 1)".into()));
        }
        self.scheme.validate()
    }

    /// Marginal treated share `P(T = 1)`.
    pub fn treated_share(&self) -> f64 {
        self.p.iter().zip(&self.e).map(|(p, e)| p * e).sum()
    }

    /// `p(x | T = 1)` and `p(x | T = 0)` by Bayes' rule.
    pub fn arm_conditionals(&self) -> (Vec<f64>, Vec<f64>) {
        let p1 = self.treated_share();
        let p0 = 1.0 - p1;
        let c1 = self.p.iter().zip(&self.e).map(|(p, e)| p * e / p1).collect();
        let c0 = self.p.iter().zip(&self.e).map(|(p, e)| p * (1.0 - e) / p0).collect();
        (c1, c0)
    }

    /// Target `g = f p / Z` under the true propensity.
    pub fn target(&self) -> Result<Vec<f64>> {
        let f = self.scheme.tilts_from_propensity(&self.e)?;
        normalize(self.p.iter().zip(&f).map(|(p, f)| p * f).collect())
    }

    /// Same instance with the support points reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect();
        Self {
            p: pick(&self.p),
            e: pick(&self.e),
            e_model: pick(&self.e_model),
            scheme: self.scheme,
        }
    }
}

fn normalize(v: Vec<f64>) -> Result<Vec<f64>> {
    let z: f64 = v.iter().sum();
    if !(z > 0.0) {
        return Err(Error::EmptyTarget);
    }
    Ok(v.into_iter().map(|x| x / z).collect())
}

/// `g(x | T = t) ∝ w(x, t) p(x | T = t)`, with weights from the true
/// propensity or, when `use_model`, from the model propensity.
pub fn reweighted_conditionals(inst: &DiscreteInstance, use_model: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c1, c0) = inst.arm_conditionals();
    let e = if use_model { &inst.e_model } else { &inst.e };
    let w1 = inst.scheme.weights_from_propensity(e, &vec![true; e.len()])?;
    let w0 = inst.scheme.weights_from_propensity(e, &vec![false; e.len()])?;
    let g1 = normalize(c1.iter().zip(&w1).map(|(c, w)| c * w).collect())?;
    let g0 = normalize(c0.iter().zip(&w0).map(|(c, w)| c * w).collect())?;
    Ok((g1, g0))
}

/// Smallest `Gamma >= 1` with `1/Gamma <= e(1-e_eta) / (e_eta(1-e)) <= Gamma`
/// on the support.
pub fn gamma_of(inst: &DiscreteInstance) -> f64 {
    inst.e
        .iter()
        .zip(&inst.e_model)
        .map(|(&e, &m)| {
            let or = e * (1.0 - m) / (m * (1.0 - e));
            or.max(1.0 / or)
        })
        .fold(1.0, f64::max)
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub tvd: f64,
    /// Largest deviation of either arm from the target `g`.
    pub target_gap: f64,
    pub pass: bool,
}

/// With the true propensity both reweighted arms equal the target.
pub fn balance_check(inst: &DiscreteInstance) -> Result<BalanceReport> {
    let (g1, g0) = reweighted_conditionals(inst, false)?;
    let g = inst.target()?;
    let tvd = total_variation(&g1, &g0);
    let target_gap = g1
        .iter()
        .zip(&g0)
        .zip(&g)
        .map(|((a, b), c)| (a - c).abs().max((b - c).abs()))
        .fold(0.0, f64::max);
    Ok(BalanceReport {
        tvd,
        target_gap,
        pass: tvd < TOLERANCE && target_gap < TOLERANCE,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlTvdReport {
    pub gamma: f64,
    pub kl: f64,
    pub kl_bound: f64,
    pub tvd: f64,
    pub tvd_bound: f64,
    pub pass_kl: bool,
    pub pass_tvd: bool,
}

/// `KL(g_eta(.|1) || g_eta(.|0)) <= 2 log Gamma` and
/// `TVD <= sqrt(log Gamma)`.
pub fn kl_and_tvd_check(inst: &DiscreteInstance) -> Result<KlTvdReport> {
    let f_true = inst.scheme.tilts_from_propensity(&inst.e)?;
    let f_model = inst.scheme.tilts_from_propensity(&inst.e_model)?;
    if f_true.iter().chain(&f_model).any(|&f| f <= 0.0) {
        return Err(Error::Domain("the bound needs a strictly positive tilting on the support".into()));
    }
    let (g1, g0) = reweighted_conditionals(inst, true)?;
    let gamma = gamma_of(inst);
    let kl = kl_divergence(&g1, &g0);
    let tvd = total_variation(&g1, &g0);
    let kl_bound = 2.0 * gamma.ln();
    let tvd_bound = gamma.ln().sqrt();
    Ok(KlTvdReport {
        gamma,
        kl,
        kl_bound,
        tvd,
        tvd_bound,
        pass_kl: kl <= kl_bound + TOLERANCE,
        pass_tvd: tvd <= tvd_bound + TOLERANCE,
    })
}

/// Exact MMD (all pairs, not a V-statistic) between two distributions on
/// common support points.
pub fn discrete_mmd(kernel: Kernel, points: &DenseMatrix, p: &[f64], q: &[f64]) -> f64 {
    let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let mut s = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            s += d[i] * d[j] * kernel.eval(points.row(i), points.row(j));
        }
    }
    s.max(0.0).sqrt()
}

pub fn diameter(points: &DenseMatrix) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..points.rows() {
        for j in i + 1..points.rows() {
            best = best.max(euclidean(points.row(i), points.row(j)));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpmBoundReport {
    pub ipm: String,
    pub gamma: f64,
    pub value: f64,
    pub bound: f64,
    /// `diam(R)` for Wasserstein, `C_k` for MMD.
    pub constant: f64,
    pub pass: bool,
}

/// `W <= diam sqrt(log Gamma)` (exact transport) or
/// `MMD_k <= 2 sqrt(C_k log Gamma)` between the model-reweighted arms pushed
/// through `embedding` (one row per support point).
pub fn ipm_bound_check(inst: &DiscreteInstance, embedding: &DenseMatrix, ipm: IpmSpec) -> Result<IpmBoundReport> {
    if embedding.rows() != inst.len() {
        return Err(Error::Shape(format!(
            "{} embedded points for {} support points",
            embedding.rows(),
            inst.len()
        )));
    }
    let (g1, g0) = reweighted_conditionals(inst, true)?;
    let gamma = gamma_of(inst);
    let lg = gamma.ln();
    let (value, constant, bound) = match ipm {
        IpmSpec::SinkhornWasserstein { .. } => {
            let a = WeightedSample::new(embedding.clone(), g1)?;
            let b = WeightedSample::new(embedding.clone(), g0)?;
            let diam = diameter(embedding);
            (exact_ot_cost(&a, &b)?, diam, diam * lg.sqrt())
        }
        IpmSpec::MmdLinear | IpmSpec::MmdRbf { .. } => {
            let kernel = match ipm {
                IpmSpec::MmdRbf { sigma } => Kernel::Rbf { sigma },
                _ => Kernel::Linear,
            };
            let ck = kernel.sup_diagonal(embedding);
            (discrete_mmd(kernel, embedding, &g1, &g0), ck, 2.0 * (ck * lg).sqrt())
        }
    };
    Ok(IpmBoundReport {
        ipm: ipm.name().into(),
        gamma,
        value,
        bound,
        constant,
        pass: value <= bound + TOLERANCE,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub a_f: f64,
    pub b_f: f64,
    pub pehe_p: f64,
    pub pehe_g: f64,
    pub pass: bool,
}

/// `A_f pehe_g <= pehe_p <= B_f pehe_g` with `A_f = Z_f / sup f` and
/// `B_f = Z_f / inf f`, from squared errors on the support.
pub fn pehe_sandwich_constants(inst: &DiscreteInstance, sq_errors: &[f64]) -> Result<SandwichReport> {
    if sq_errors.len() != inst.len() {
        return Err(Error::Shape("one squared error per support point".into()));
    }
    let f = inst.scheme.tilts_from_propensity(&inst.e)?;
    let sup = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inf = f.iter().copied().fold(f64::INFINITY, f64::min);
    if !(inf > 0.0) {
        return Err(Error::Domain("inf f = 0 on the support".into()));
    }
    let z: f64 = f.iter().zip(&inst.p).map(|(f, p)| f * p).sum();
    let pehe_p: f64 = inst.p.iter().zip(sq_errors).map(|(p, e)| p * e).sum();
    let pehe_g: f64 = f.iter().zip(&inst.p).zip(sq_errors).map(|((f, p), e)| f * p * e).sum::<f64>() / z;
    let (a_f, b_f) = (z / sup, z / inf);
    let slack = TOLERANCE * pehe_p.abs().max(1.0);
    Ok(SandwichReport {
        a_f,
        b_f,
        pehe_p,
        pehe_g,
        pass: a_f * pehe_g <= pehe_p + slack && pehe_p <= b_f * pehe_g + slack,
    })
}

/// Controls for random instance generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSpec {
    pub min_support: usize,
    pub max_support: usize,
    /// Propensities are uniform on `[e_low, 1 - e_low]`.
    pub e_low: f64,
    /// Standard deviation of the logit perturbation is uniform on
    /// `[0, max_perturbation]`.
    pub max_perturbation: f64,
    /// Model propensities are clamped to `[clamp, 1 - clamp]`.
    pub clamp: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            min_support: 2,
            max_support: 16,
            e_low: 0.05,
            max_perturbation: 2.0,
            clamp: 0.01,
        }
    }
}

impl InstanceSpec {
    /// Keeps both propensities strictly inside the truncation window so the
    /// tilting stays positive.
    pub fn for_scheme(&self, scheme: WeightScheme) -> Self {
        match scheme {
            WeightScheme::TruncIpw { xi } => Self {
                e_low: self.e_low.max(xi + 0.01),
                clamp: self.clamp.max(xi + 0.01),
                ..self.clone()
            },
            _ => self.clone(),
        }
    }
}

/// Symmetric Dirichlet(1) support probabilities, uniform propensities and a
/// clamped logit perturbation for the model propensity.
pub fn random_instance<R: Rng>(rng: &mut R, scheme: WeightScheme, spec: &InstanceSpec) -> DiscreteInstance {
    let spec = spec.for_scheme(scheme);
    let k = rng.gen_range(spec.min_support..=spec.max_support);
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let p = raw.iter().map(|v| v / total).collect();
    let e: Vec<f64> = (0..k).map(|_| rng.gen_range(spec.e_low..=1.0 - spec.e_low)).collect();
    let scale = rng.gen_range(0.0..=spec.max_perturbation);
    let e_model = e
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            let logit = (v / (1.0 - v)).ln() + scale * z;
            logistic(logit).clamp(spec.clamp, 1.0 - spec.clamp)
        })
        .collect();
    DiscreteInstance {
        p,
        e,
        e_model,
        scheme,
    }
}

/// One row per support point, standard normal coordinates in 1 to 4
/// dimensions times a random scale in `[0.1, 3]`.
pub fn random_embedding<R: Rng>(rng: &mut R, k: usize) -> DenseMatrix {
    let d = rng.gen_range(1..=4);
    let scale = rng.gen_range(0.1..=3.0);
    let data = (0..k * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_vec(k, d, data).expect("sized buffer")
}

/// Mean KL between model-reweighted arms when the same logit noise is
/// scaled by each magnitude in turn.
pub fn degradation_curve(scheme: WeightScheme, magnitudes: &[f64], instances: usize, seed: u64) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; magnitudes.len()];
    let spec = InstanceSpec::default().for_scheme(scheme);
    for i in 0..instances {
        let mut rng = ChaCha20Rng::seed_from_u64(crate::mix_seed(&[seed, i as u64]));
        let base = random_instance(&mut rng, scheme, &spec);
        let noise: Vec<f64> = (0..base.len()).map(|_| rng.sample(StandardNormal)).collect();
        for (m, sum) in magnitudes.iter().zip(sums.iter_mut()) {
            let e_model = base
                .e
                .iter()
                .zip(&noise)
                .map(|(&v, z)| logistic((v / (1.0 - v)).ln() + m * z).clamp(spec.clamp, 1.0 - spec.clamp))
                .collect();
            let inst = DiscreteInstance {
                e_model,
                ..base.clone()
            };
            let (g1, g0) = reweighted_conditionals(&inst, true)?;
            *sum += kl_divergence(&g1, &g0);
        }
    }
    Ok(sums.into_iter().map(|s| s / instances.max(1) as f64).collect())
}

/// Instance counts and seed for [`run_suite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub balance_instances: usize,
    pub kl_instances: usize,
    pub ipm_instances: usize,
    pub sandwich_instances: usize,
    pub seed: u64,
    pub instance: InstanceSpec,
    /// Support size limit for the transport checks.
    pub ipm_max_support: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            balance_instances: 1000,
            kl_instances: 1000,
            ipm_instances: 500,
            sandwich_instances: 500,
            seed: 0,
            instance: InstanceSpec::default(),
            ipm_max_support: 8,
        }
    }
}

impl SuiteConfig {
    pub fn with_instances(n: usize, seed: u64) -> Self {
        Self {
            balance_instances: n,
            kl_instances: n,
            ipm_instances: n,
            sandwich_instances: n,
            seed,
            ..Default::default()
        }
    }
}

/// Everything needed to rerun one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseInput {
    pub check: String,
    pub instance: DiscreteInstance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<DenseMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipm: Option<IpmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sq_errors: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseReport {
    Balance(BalanceReport),
    KlTvd(KlTvdReport),
    IpmBound(IpmBoundReport),
    Sandwich(SandwichReport),
}

impl CaseReport {
    pub fn pass(&self) -> bool {
        match self {
            CaseReport::Balance(r) => r.pass,
            CaseReport::KlTvd(r) => r.pass_kl && r.pass_tvd,
            CaseReport::IpmBound(r) => r.pass,
            CaseReport::Sandwich(r) => r.pass,
        }
    }
}

/// Recomputes the report of one case from its inputs.
pub fn replay(case: &CaseInput) -> Result<CaseReport> {
    case.instance.validate()?;
    Ok(match case.check.as_str() {
        "balance" => CaseReport::Balance(balance_check(&case.instance)?),
        "kl_tvd" => CaseReport::KlTvd(kl_and_tvd_check(&case.instance)?),
        "ipm_bound" => {
            let emb = case
                .embedding
                .as_ref()
                .ok_or_else(|| Error::Config("ipm_bound case needs an embedding".into()))?;
            let ipm = case.ipm.ok_or_else(|| Error::Config("ipm_bound case needs an ipm".into()))?;
            CaseReport::IpmBound(ipm_bound_check(&case.instance, emb, ipm)?)
        }
        "sandwich" => {
            let err = case
                .sq_errors
                .as_ref()
                .ok_or_else(|| Error::Config("sandwich case needs squared errors".into()))?;
            CaseReport::Sandwich(pehe_sandwich_constants(&case.instance, err)?)
        }
        other => return Err(Error::Config(format!("unknown check '{other}'"))),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest `value - bound` seen (negative when every case had room).
    pub worst_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedCase {
    pub input: CaseInput,
    pub report: Option<CaseReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub checks: Vec<CheckSummary>,
    pub failures: Vec<FailedCase>,
    pub pass: bool,
}

fn margins(r: &CaseReport) -> Vec<f64> {
    match r {
        CaseReport::Balance(b) => vec![b.tvd.max(b.target_gap) - TOLERANCE],
        CaseReport::KlTvd(k) => vec![k.kl - k.kl_bound, k.tvd - k.tvd_bound],
        CaseReport::IpmBound(i) => vec![i.value - i.bound],
        CaseReport::Sandwich(s) => vec![s.a_f * s.pehe_g - s.pehe_p, s.pehe_p - s.b_f * s.pehe_g],
    }
}

struct Tally {
    summary: CheckSummary,
}

impl Tally {
    fn new(check: &str) -> Self {
        Self {
            summary: CheckSummary {
                check: check.into(),
                cases: 0,
                failures: 0,
                worst_margin: None,
            },
        }
    }

    fn record(&mut self, input: CaseInput, failures: &mut Vec<FailedCase>) {
        self.summary.cases += 1;
        match replay(&input) {
            Ok(report) => {
                for m in margins(&report) {
                    let w = self.summary.worst_margin.get_or_insert(m);
                    *w = w.max(m);
                }
                if !report.pass() {
                    self.summary.failures += 1;
                    failures.push(FailedCase {
                        input,
                        report: Some(report),
                        error: None,
                    });
                }
            }
            Err(e) => {
                self.summary.failures += 1;
                failures.push(FailedCase {
                    input,
                    report: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
}

fn case_rng(seed: u64, check: u64, index: usize) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(crate::mix_seed(&[seed, check, index as u64]))
}

/// Runs all four randomized suites. The balance, KL and sandwich suites
/// cycle through every propensity scheme.
pub fn run_suite(config: &SuiteConfig) -> SuiteReport {
    let schemes = WeightScheme::PROPENSITY_SCHEMES;
    let mut failures = Vec::new();
    let mut summaries = Vec::new();

    let mut t = Tally::new("balance");
    for i in 0..config.balance_instances {
        for (s, &scheme) in schemes.iter().enumerate() {
            let mut rng = case_rng(config.seed, 1 + s as u64, i);
            let instance = random_instance(&mut rng, scheme, &config.instance);
            t.record(
                CaseInput {
                    check: "balance".into(),
                    instance,
                    embedding: None,
                    ipm: None,
                    sq_errors: None,
                },
                &mut failures,
            );
        }
    }
    summaries.push(t.summary);

    let mut t = Tally::new("kl_tvd");
    for i in 0..config.kl_instances {
        let scheme = schemes[i % schemes.len()];
        let mut rng = case_rng(config.seed, 10, i);
        let instance = random_instance(&mut rng, scheme, &config.instance);
        t.record(
            CaseInput {
                check: "kl_tvd".into(),
                instance,
                embedding: None,
                ipm: None,
                sq_errors: None,
            },
            &mut failures,
        );
    }
    summaries.push(t.summary);

    let mut t = Tally::new("ipm_bound");
    let small = InstanceSpec {
        max_support: config.ipm_max_support.min(config.instance.max_support),
        min_support: config.instance.min_support.min(config.ipm_max_support),
        ..config.instance.clone()
    };
    for i in 0..config.ipm_instances {
        let scheme = schemes[i % schemes.len()];
        let mut rng = case_rng(config.seed, 20, i);
        let instance = random_instance(&mut rng, scheme, &small);
        let embedding = random_embedding(&mut rng, instance.len());
        for ipm in [IpmSpec::wass(), IpmSpec::MmdLinear, IpmSpec::mmd_rbf(), IpmSpec::MmdRbf { sigma: 1.0 }] {
            t.record(
                CaseInput {
                    check: "ipm_bound".into(),
                    instance: instance.clone(),
                    embedding: Some(embedding.clone()),
                    ipm: Some(ipm),
                    sq_errors: None,
                },
                &mut failures,
            );
        }
    }
    summaries.push(t.summary);

    let mut t = Tally::new("sandwich");
    for i in 0..config.sandwich_instances {
        // IPW has f = 1: the sandwich is an identity, so cycle the others
        let scheme = [WeightScheme::Mw, WeightScheme::Ow, WeightScheme::truncipw()][i % 3];
        let mut rng = case_rng(config.seed, 30, i);
        let instance = random_instance(&mut rng, scheme, &config.instance);
        let sq_errors = (0..instance.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        t.record(
            CaseInput {
                check: "sandwich".into(),
                instance,
                embedding: None,
                ipm: None,
                sq_errors: Some(sq_errors),
            },
            &mut failures,
        );
    }
    summaries.push(t.summary);

    SuiteReport {
        config: config.clone(),
        pass: failures.is_empty(),
        checks: summaries,
        failures,
    }
}
