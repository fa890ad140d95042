//! Statistical and behavioural checks of the data generator, propensity
//! model, CFR trainer and metrics.

use bwcfr::cfr::{train_cfr, Architecture};
use bwcfr::metrics::{evaluate, pehe_nn_from_predictions};
use bwcfr::propensity::{train_propensity, PropensityConfig};
use bwcfr::synthgen::{build_supports, equicorr_mvn_sample, generate_toy, ToyConfig};
use bwcfr::{CfrModel, Dataset, DenseMatrix, IpmSpec, PropensityModel, TrainConfig, WeightScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn toy(gamma_tilde: f64, seed: u64) -> ToyConfig {
    ToyConfig {
        gamma_tilde,
        seed,
        ..ToyConfig::default()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn equicorrelated_moments_at_large_n() {
    let (p, s2, rho, n) = (6, 0.05, 0.3, 100_000);
    let x = equicorr_mvn_sample(p, s2, rho, n, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let var = |j: usize| cols[j].iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n as f64;
    for j in 0..p {
        assert!(means[j].abs() < 3.0 * s2.sqrt() / (n as f64).sqrt(), "mean {j}");
        assert!((var(j) - s2).abs() < 0.02 * s2, "variance {j}: {}", var(j));
        for k in 0..j {
            let cov = cols[j].iter().zip(&cols[k]).map(|(a, b)| (a - means[j]) * (b - means[k])).sum::<f64>() / n as f64;
            let corr = cov / (var(j) * var(k)).sqrt();
            assert!((corr - rho).abs() < 0.02, "corr {j},{k}: {corr}");
        }
    }
    let indep = equicorr_mvn_sample(3, 1.0, 0.0, n, &mut ChaCha20Rng::seed_from_u64(6)).unwrap();
    let (a, b) = (indep.column(0), indep.column(1));
    let c = a.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>() / n as f64;
    assert!(c.abs() < 0.02);
    assert!(equicorr_mvn_sample(3, 1.0, 1.0, 5, &mut ChaCha20Rng::seed_from_u64(0)).is_err());
}

#[test]
fn toy_splits_follow_the_design() {
    let s = generate_toy(&toy(0.0, 3)).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (525, 225, 250));
    let all: Vec<&Dataset> = vec![&s.train, &s.val, &s.test];
    let n: usize = all.iter().map(|d| d.len()).sum();
    let treated: usize = all.iter().map(|d| d.n_treated()).sum();
    let frac = treated as f64 / n as f64;
    assert!((frac - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "treated fraction {frac}");

    let tau: Vec<f64> = all.iter().flat_map(|d| d.tau_true().unwrap()).collect();
    let m = mean(&tau);
    let sd = (tau.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((m - 3.0).abs() < 3.0 * sd / (n as f64).sqrt(), "ATE {m}");

    // the effect only involves the outcome support
    let sup = build_supports(&toy(0.0, 3)).unwrap();
    let d = &s.test;
    for i in 0..d.len() {
        let manual: f64 = sup.b.iter().map(|&j| 0.3 * d.x.get(i, j)).sum::<f64>() + 3.0;
        assert!((manual - d.tau_true().unwrap()[i]).abs() < 1e-12);
    }
    // same seed, same data
    assert_eq!(generate_toy(&toy(0.0, 3)).unwrap().train.y, s.train.y);
}

#[test]
fn supports_layout() {
    for omega in [0, 10, 20] {
        let cfg = ToyConfig { omega, ..toy(1.0, 0) };
        let s = build_supports(&cfg).unwrap();
        assert_eq!(s.b.len(), 20);
        assert_eq!(s.g.len(), 20);
        assert_eq!(s.b.iter().filter(|j| s.g.contains(j)).count(), omega);
    }
    assert!(build_supports(&ToyConfig { omega: 21, ..toy(1.0, 0) }).is_err());
    let zero = build_supports(&toy(0.0, 0)).unwrap();
    assert!(zero.gamma.iter().all(|&g| g == 0.0));
}

fn imbalance(d: &Dataset) -> f64 {
    let (t, c) = (d.treated_indices(), d.control_indices());
    (0..d.dim())
        .map(|j| {
            let m1 = t.iter().map(|&i| d.x.get(i, j)).sum::<f64>() / t.len() as f64;
            let m0 = c.iter().map(|&i| d.x.get(i, j)).sum::<f64>() / c.len() as f64;
            (m1 - m0).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[test]
fn imbalance_grows_with_gamma() {
    let grid = bwcfr::synthgen::gamma_grid();
    let means: Vec<f64> = grid
        .iter()
        .map(|&g| mean(&(0..20).map(|s| imbalance(&generate_toy(&toy(g, s)).unwrap().train)).collect::<Vec<_>>()))
        .collect();
    for w in means.windows(2) {
        assert!(w[1] > w[0], "{means:?}");
    }
}

#[test]
fn propensity_calibration_and_separation() {
    let s = generate_toy(&toy(0.0, 1)).unwrap();
    let fit = train_propensity(&s.train, &PropensityConfig::default(), 1).unwrap();
    let e = fit.model.predict(&s.train.x).unwrap();
    let share = s.train.n_treated() as f64 / s.train.len() as f64;
    assert!((mean(&e) - share).abs() < 0.05, "mean {} vs {share}", mean(&e));

    // separable one-dimensional data
    let n = 400;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 - 200.0) / 50.0).collect();
    let t: Vec<bool> = xs.iter().map(|&v| v > 0.0).collect();
    let d = Dataset::new(DenseMatrix::from_vec(n, 1, xs).unwrap(), t.clone(), vec![0.0; n]).unwrap();
    let fit = train_propensity(&d, &PropensityConfig::default(), 2).unwrap();
    let e = fit.model.predict(&d.x).unwrap();
    let (mut hits, mut pairs) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if t[i] && !t[j] {
                pairs += 1.0;
                hits += if e[i] > e[j] { 1.0 } else if e[i] == e[j] { 0.5 } else { 0.0 };
            }
        }
    }
    assert!(hits / pairs > 0.95, "AUC {}", hits / pairs);
    assert!(e.iter().all(|&v| (1e-6..=1.0 - 1e-6).contains(&v)));
}

fn fitted_setup() -> (bwcfr::synthgen::ToySplits, PropensityModel) {
    let s = generate_toy(&toy(0.0, 7)).unwrap();
    let p = train_propensity(&s.train, &PropensityConfig::default(), 7).unwrap().model;
    (s, p)
}

#[test]
fn cfr_training_reduces_validation_loss_and_is_deterministic() {
    let (s, prop) = fitted_setup();
    let cfg = TrainConfig {
        alpha: 1.0,
        scheme: WeightScheme::Ow,
        max_epochs: 200,
        patience: 200,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train_cfr(&s.train, &s.val, &prop, &cfg).unwrap();
    let initial = a.trace.epochs[0].val_loss;
    let best = a.trace.best_val_loss;
    assert!(best <= 0.5 * initial, "{initial} -> {best}");
    assert!(a.trace.epochs.iter().skip(1).all(|e| e.ipm.is_some()));

    let b = train_cfr(&s.train, &s.val, &prop, &cfg).unwrap();
    assert_eq!(a.model.to_flat(), b.model.to_flat());
    assert_eq!(a.trace.best_epoch, b.trace.best_epoch);

    let plain = TrainConfig { alpha: 0.0, max_epochs: 20, ..cfg };
    let c = train_cfr(&s.train, &s.val, &prop, &plain).unwrap();
    assert!(c.trace.epochs.iter().all(|e| e.ipm.is_none()));
    let json = serde_json::to_string(&c.trace).unwrap();
    assert!(!json.contains("\"ipm\""));
}

#[test]
fn metric_oracles() {
    let (s, prop) = fitted_setup();
    let arch = Architecture {
        encoder_dim: 10,
        rep_dim: 10,
        head_dim: 10,
        ..Architecture::default()
    };
    let mut model = CfrModel::init(s.train.dim(), &arch, 1).unwrap();
    // twin heads: no predicted effect anywhere
    model.head1 = model.head0.clone();
    let rep = evaluate(&model, &prop, WeightScheme::Ow, &s.train, &s.test).unwrap();
    assert_eq!(rep.ate_p_hat, 0.0);
    let tau = s.test.tau_true().unwrap();
    let expected = tau.iter().map(|v| v * v).sum::<f64>() / tau.len() as f64;
    assert!((rep.pehe_p.unwrap() - expected).abs() < 1e-12 * expected);

    // shifting the treated head's output by c shifts b1 by c and leaves the
    // DR estimate unchanged
    let c = 0.75;
    let mut shifted = model.clone();
    let last = shifted.head1.layers.len() - 1;
    shifted.head1.layers[last].bias[0] += c;
    let rep2 = evaluate(&shifted, &prop, WeightScheme::Ow, &s.train, &s.test).unwrap();
    assert!((rep2.b1 - rep.b1 - c).abs() < 1e-12);
    assert!((rep2.b0 - rep.b0).abs() < 1e-15);
    assert!((rep2.ate_dr.unwrap() - rep.ate_dr.unwrap()).abs() < 1e-12);
    assert!((rep2.ate_p_hat - c).abs() < 1e-12);

    // reordering units leaves every aggregate unchanged
    let n = s.test.len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let rev = s.test.subset(&perm);
    let rep3 = evaluate(&shifted, &prop, WeightScheme::Ow, &s.train, &rev).unwrap();
    assert!((rep3.pehe_p.unwrap() - rep2.pehe_p.unwrap()).abs() < 1e-12);
    assert!((rep3.ate_g_hat.unwrap() - rep2.ate_g_hat.unwrap()).abs() < 1e-12);

    // the nearest-neighbour proxy is zero when predictions equal the
    // matched contrasts of a dataset with one unit per arm
    let d = Dataset::new(DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(), vec![true, false], vec![5.0, 2.0]).unwrap();
    assert_eq!(pehe_nn_from_predictions(&d, &[3.0, 3.0]).unwrap(), 0.0);
}

#[test]
fn ipm_variants_train_without_error() {
    let (s, prop) = fitted_setup();
    for ipm in [IpmSpec::wass(), IpmSpec::MmdLinear, IpmSpec::mmd_rbf()] {
        let cfg = TrainConfig {
            alpha: 1.0,
            ipm,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let fit = train_cfr(&s.train, &s.val, &prop, &cfg).unwrap();
        assert!(fit.model.to_flat().iter().all(|v| v.is_finite()));
    }
}
