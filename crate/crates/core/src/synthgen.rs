//! Synthetic benchmark with controllable imbalance and confounding.
//!
//! Covariates are equicorrelated Gaussians, treatment is logistic in
//! `X' gamma`, and potential outcomes are linear:
//!
//! ```text
//! X ~ MVN(0, sx2 [(1 - rho) I + rho 11'])
//! T | X ~ Bernoulli(sigmoid(X' gamma))
//! Y(0) = X' beta0 + eps,  Y(1) = Y(0) + X' beta_tau + theta
//! ```
//!
//! `gamma` is supported on `G` and both `beta`s on `B`, with `|B & G| = omega`.
//! Every unit consumes the same number of random draws regardless of
//! `gamma_tilde` and `omega`, so datasets that differ only in those two
//! parameters share covariates, noise and the uniform used for treatment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{logistic, DenseMatrix};

pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.3), seeded with seed_from_u64";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub p: usize,
    pub p_star: usize,
    /// Covariate variance `sigma_X^2`.
    pub sigma_x2: f64,
    /// Outcome noise standard deviation.
    pub sigma_y: f64,
    pub rho: f64,
    pub beta0: f64,
    pub beta_tau: f64,
    pub gamma_tilde: f64,
    pub omega: usize,
    pub theta: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_train: 525,
            n_val: 225,
            n_test: 250,
            p: 50,
            p_star: 20,
            sigma_x2: 0.05,
            sigma_y: 1.0,
            rho: 0.3,
            beta0: 1.0,
            beta_tau: 0.3,
            gamma_tilde: 0.0,
            omega: 20,
            theta: 3.0,
            seed: 0,
        }
    }
}

/// Grid of imbalance values `0, 0.5, ..., 5`.
pub fn gamma_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 * 0.5).collect()
}

pub const OMEGA_GRID: [usize; 3] = [0, 10, 20];

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.p_star > self.p {
            return bad(format!("p* = {} exceeds p = {}", self.p_star, self.p));
        }
        if self.omega > self.p_star {
            return bad(format!("omega = {} exceeds p* = {}", self.omega, self.p_star));
        }
        if 2 * self.p_star - self.omega > self.p {
            return bad(format!(
                "supports need 2p* - omega = {} coordinates but p = {}",
                2 * self.p_star - self.omega,
                self.p
            ));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho = {} must lie in [0, 1)", self.rho));
        }
        if !(self.gamma_tilde >= 0.0) || !(self.sigma_x2 > 0.0) || !(self.sigma_y >= 0.0) {
            return bad("gamma_tilde and sigma_y must be >= 0 and sigma_x2 > 0".into());
        }
        if self.n_train == 0 {
            return bad("n_train must be positive".into());
        }
        Ok(())
    }

    pub fn n_total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }
}

/// Coefficient supports and vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Supports {
    pub b: Vec<usize>,
    pub g: Vec<usize>,
    pub beta0: Vec<f64>,
    pub beta_tau: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `B = {0, .., p*-1}` and `G = {p*-omega, .., 2p*-omega-1}`.
pub fn build_supports(config: &ToyConfig) -> Result<Supports> {
    config.validate()?;
    let ps = config.p_star;
    let b: Vec<usize> = (0..ps).collect();
    let g: Vec<usize> = (ps - config.omega..2 * ps - config.omega).collect();
    let indicator = |set: &[usize], v: f64| {
        let mut out = vec![0.0; config.p];
        for &i in set {
            out[i] = v;
        }
        out
    };
    Ok(Supports {
        beta0: indicator(&b, config.beta0),
        beta_tau: indicator(&b, config.beta_tau),
        gamma: indicator(&g, config.gamma_tilde),
        b,
        g,
    })
}

fn equicorr_row<R: Rng>(p: usize, sx: f64, rho: f64, rng: &mut R, out: &mut [f64]) {
    let a = (1.0 - rho).sqrt();
    let c = rho.sqrt();
    for o in out.iter_mut().take(p) {
        *o = rng.sample(StandardNormal);
    }
    let z0: f64 = rng.sample(StandardNormal);
    for o in out.iter_mut().take(p) {
        *o = sx * (a * *o + c * z0);
    }
}

/// `n` draws from `MVN(0, sx2 [(1 - rho) I + rho 11'])` via
/// `X = sx (sqrt(1 - rho) Z + sqrt(rho) z0 1)`.
pub fn equicorr_mvn_sample<R: Rng>(p: usize, sigma_x2: f64, rho: f64, n: usize, rng: &mut R) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} must lie in [0, 1)")));
    }
    let sx = sigma_x2.sqrt();
    let mut x = DenseMatrix::zeros(n, p);
    for i in 0..n {
        equicorr_row(p, sx, rho, rng, x.row_mut(i));
    }
    Ok(x)
}

#[derive(Clone, Debug)]
pub struct ToySplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub supports: Supports,
}

/// Draws the train, validation and test splits (in that order) from one
/// ChaCha20 stream seeded with `config.seed`.
pub fn generate_toy(config: &ToyConfig) -> Result<ToySplits> {
    let supports = build_supports(config)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (n, p) = (config.n_total(), config.p);
    let sx = config.sigma_x2.sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = DenseMatrix::zeros(n, p);
    let mut t = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let (mut y, mut y_cf, mut mu0, mut mu1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        equicorr_row(p, sx, config.rho, &mut rng, x.row_mut(i));
        let u: f64 = rng.gen();
        let eps: f64 = config.sigma_y * rng.sample::<f64, _>(StandardNormal);
        let xi = x.row(i);
        let ei = logistic(dot(xi, &supports.gamma));
        let treated = u < ei;
        let m0 = dot(xi, &supports.beta0);
        let m1 = m0 + dot(xi, &supports.beta_tau) + config.theta;
        let (yf, ycf) = if treated { (m1 + eps, m0 + eps) } else { (m0 + eps, m1 + eps) };
        t.push(treated);
        e.push(ei);
        y.push(yf);
        y_cf.push(ycf);
        mu0.push(m0);
        mu1.push(m1);
    }
    let all = Dataset::new(x, t, y)?
        .with_counterfactual(y_cf)?
        .with_potential_means(mu0, mu1)?
        .with_true_propensity(e)?;
    let (a, b) = (config.n_train, config.n_train + config.n_val);
    let range = |lo: usize, hi: usize| (lo..hi).collect::<Vec<_>>();
    Ok(ToySplits {
        train: all.subset(&range(0, a)),
        val: all.subset(&range(a, b)),
        test: all.subset(&range(b, n)),
        supports,
    })
}

/// Manifest describing how a toy dataset was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyManifest {
    pub config: ToyConfig,
    pub rng: String,
    pub support_b: Vec<usize>,
    pub support_g: Vec<usize>,
    pub support_layout: String,
    pub shared_outcome_noise: bool,
    pub splits: [usize; 3],
}

impl ToyManifest {
    pub fn new(config: &ToyConfig, supports: &Supports) -> Self {
        Self {
            config: config.clone(),
            rng: RNG_ALGORITHM.into(),
            support_b: supports.b.clone(),
            support_g: supports.g.clone(),
            support_layout: "B = 0..p*-1, G = p*-omega..2p*-omega-1".into(),
            shared_outcome_noise: true,
            splits: [config.n_train, config.n_val, config.n_test],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_overlap_by_omega() {
        for omega in [0, 7, 10, 20] {
            let cfg = ToyConfig {
                omega,
                gamma_tilde: 2.0,
                ..Default::default()
            };
            let s = build_supports(&cfg).unwrap();
            assert_eq!(s.b.len(), 20);
            assert_eq!(s.g.len(), 20);
            let overlap = s.b.iter().filter(|i| s.g.contains(i)).count();
            assert_eq!(overlap, omega);
            assert_eq!(s.gamma.iter().filter(|&&g| g == 2.0).count(), 20);
            assert_eq!(s.beta_tau.iter().filter(|&&b| b == 0.3).count(), 20);
        }
        let high = build_supports(&ToyConfig::default()).unwrap();
        assert_eq!(high.b, high.g);
        assert!(high.gamma.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn invalid_layouts_rejected() {
        let over = ToyConfig {
            omega: 21,
            ..Default::default()
        };
        assert!(build_supports(&over).is_err());
        let crowded = ToyConfig {
            p: 30,
            omega: 0,
            ..Default::default()
        };
        assert!(build_supports(&crowded).is_err());
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(equicorr_mvn_sample(3, 1.0, 1.0, 2, &mut rng).is_err());
    }

    #[test]
    fn splits_and_ground_truth() {
        let cfg = ToyConfig {
            gamma_tilde: 1.5,
            seed: 4,
            ..Default::default()
        };
        let s = generate_toy(&cfg).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (525, 225, 250));
        let tau = s.test.tau_true().unwrap();
        for i in 0..s.test.len() {
            let x = s.test.x.row(i);
            let direct: f64 = (0..20).map(|k| 0.3 * x[k]).sum::<f64>() + 3.0;
            assert!((tau[i] - direct).abs() < 1e-12);
            let (y, ycf) = (s.test.y[i], s.test.y_cf.as_ref().unwrap()[i]);
            let (m0, m1) = (s.test.mu0.as_ref().unwrap()[i], s.test.mu1.as_ref().unwrap()[i]);
            // shared noise: both outcomes carry the same eps
            let (y1, y0) = if s.test.t[i] { (y, ycf) } else { (ycf, y) };
            assert!(((y1 - m1) - (y0 - m0)).abs() < 1e-12);
        }
        let again = generate_toy(&cfg).unwrap();
        assert_eq!(again.train, s.train);
    }

    #[test]
    fn common_random_numbers_across_gamma() {
        let a = generate_toy(&ToyConfig { seed: 9, ..Default::default() }).unwrap();
        let b = generate_toy(&ToyConfig {
            seed: 9,
            gamma_tilde: 5.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a.train.x, b.train.x);
        assert_eq!(a.train.mu0, b.train.mu0);
    }
}
