#![allow(dead_code)]

use std::path::Path;

use bwcfr::harness::config::{CsvSet, CsvSource, SearchSpace, ToyGrid, TrainingOptions};
use bwcfr::harness::write_csv_dataset;
use bwcfr::propensity::PropensityConfig;
use bwcfr::synthgen::{generate_toy, ToyConfig};
use bwcfr::cfr::{objective_value, objective_with_gradient, sample_batch, Architecture, CfrModel, ObjectiveSpec};
use bwcfr::{Dataset, DenseMatrix, IpmSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn small_toy() -> ToyConfig {
    ToyConfig {
        n_train: 80,
        n_val: 40,
        n_test: 40,
        p: 6,
        p_star: 2,
        omega: 2,
        ..ToyConfig::default()
    }
}

pub fn small_grid(gammas: Vec<f64>) -> ToyGrid {
    ToyGrid {
        base: small_toy(),
        gammas,
        omegas: vec![2],
    }
}

pub fn quick_training(max_epochs: usize) -> TrainingOptions {
    TrainingOptions {
        max_epochs,
        patience: max_epochs,
        ..TrainingOptions::default()
    }
}

pub fn quick_propensity() -> PropensityConfig {
    PropensityConfig {
        max_epochs: 50,
        ..PropensityConfig::default()
    }
}

pub fn small_search(n_configs: usize) -> SearchSpace {
    SearchSpace {
        n_configs,
        alphas: vec![0.0, 0.1, 1.0],
        ipms: vec![IpmSpec::wass(), IpmSpec::MmdLinear, IpmSpec::mmd_rbf()],
        encoder_layers: vec![1],
        head_layers: vec![1],
        encoder_dims: vec![8, 16],
        head_dims: vec![8],
        propensity_layers: vec![1],
        propensity_dims: vec![10],
    }
}

/// Writes `tune_{i}.csv` and `eval_{i}_train.csv` / `eval_{i}_test.csv`
/// drawn from the toy generator, and returns a source reading them by
/// pattern relative to `dir`.
pub fn write_csv_benchmark(dir: &Path, n_tune: usize, n_eval: usize) -> CsvSource {
    let cfg = |seed: u64| ToyConfig {
        n_train: 120,
        n_val: 0,
        n_test: 60,
        gamma_tilde: 1.0,
        seed,
        ..small_toy()
    };
    for i in 1..=n_tune {
        let s = generate_toy(&cfg(100 + i as u64)).unwrap();
        write_csv_dataset(dir.join(format!("tune_{i}.csv")), &s.train).unwrap();
    }
    for i in 1..=n_eval {
        let s = generate_toy(&cfg(200 + i as u64)).unwrap();
        write_csv_dataset(dir.join(format!("eval_{i}_train.csv")), &s.train).unwrap();
        write_csv_dataset(dir.join(format!("eval_{i}_test.csv")), &s.test).unwrap();
    }
    CsvSource {
        tune: CsvSet::Pattern {
            train_pattern: "tune_{i}.csv".into(),
            test_pattern: None,
            first: 1,
            count: n_tune,
        },
        eval: CsvSet::Pattern {
            train_pattern: "eval_{i}_train.csv".into(),
            test_pattern: Some("eval_{i}_test.csv".into()),
            first: 1,
            count: n_eval,
        },
        base_dir: Some(dir.to_path_buf()),
        ..CsvSource::default()
    }
}

pub fn normal_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let v = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_vec(rows, cols, v).unwrap()
}

pub fn jitter(flat: &mut [f64], rng: &mut ChaCha20Rng, scale: f64) {
    for v in flat.iter_mut() {
        *v += scale * rng.sample::<f64, _>(StandardNormal);
    }
}

pub fn toy_batch_data(rng: &mut ChaCha20Rng, n: usize, p: usize, x_scale: f64) -> (Dataset, Vec<f64>) {
    let x = normal_matrix(rng, n, p, x_scale);
    let t: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
    (Dataset::new(x, t, y).unwrap(), w)
}

/// Relative error `|g - fd| / |fd|` in the Euclidean norm over all
/// parameters.
pub fn objective_relative_error(spec: ObjectiveSpec, x_scale: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let arch = Architecture {
        encoder_layers: 1,
        encoder_dim: 8,
        rep_dim: 4,
        head_layers: 1,
        head_dim: 6,
    };
    let (data, w) = toy_batch_data(&mut rng, 14, 5, x_scale);
    let mut out = Vec::new();
    for point in 0..10 {
        let mut model = CfrModel::init(5, &arch, seed * 100 + point).unwrap();
        let mut flat = model.to_flat();
        jitter(&mut flat, &mut rng, 0.1);
        model.set_flat(&flat).unwrap();
        let batch = sample_batch(&data, 12, &mut rng).unwrap();
        let (v, g) = objective_with_gradient(&model, &data, &batch, &w, &spec).unwrap();
        assert!(v.ipm.is_some(), "IPM term must be active");
        let g = g.to_flat();
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..flat.len() {
            let mut m = model.clone();
            let mut f = flat.clone();
            f[k] += h;
            m.set_flat(&f).unwrap();
            let up = objective_value(&m, &data, &batch, &w, &spec).unwrap().total;
            f[k] -= 2.0 * h;
            m.set_flat(&f).unwrap();
            let down = objective_value(&m, &data, &batch, &w, &spec).unwrap().total;
            let fd = (up - down) / (2.0 * h);
            num += (g[k] - fd).powi(2);
            den += fd * fd;
        }
        // share of the gradient contributed by the regularizer
        let factual_only = ObjectiveSpec { alpha: 0.0, ..spec };
        let (_, gf) = objective_with_gradient(&model, &data, &batch, &w, &factual_only).unwrap();
        let diff: f64 = g.iter().zip(gf.to_flat()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        out.push(((num / den).sqrt(), diff / den.sqrt()));
    }
    out
}

