//! Central finite differences against the analytic gradient of the full
//! objective for each discrepancy.

use bwcfr::cfr::{objective_value, objective_with_gradient, sample_batch, Architecture, CfrModel, ObjectiveSpec};
use bwcfr::synthgen::{generate_toy, ToyConfig};
use bwcfr::IpmSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> bwcfr::Result<()> {
    let s = generate_toy(&ToyConfig {
        n_train: 40,
        n_val: 0,
        n_test: 0,
        p: 8,
        p_star: 3,
        omega: 3,
        gamma_tilde: 1.0,
        ..ToyConfig::default()
    })?;
    let data = s.train;
    let w = vec![1.0; data.len()];
    let arch = Architecture {
        encoder_dim: 10,
        rep_dim: 4,
        head_dim: 10,
        ..Architecture::default()
    };
    let model = CfrModel::init(data.dim(), &arch, 2)?;
    let batch = sample_batch(&data, 30, &mut ChaCha20Rng::seed_from_u64(2))?;
    let flat = model.to_flat();
    for ipm in [IpmSpec::wass(), IpmSpec::MmdLinear, IpmSpec::mmd_rbf()] {
        let spec = ObjectiveSpec { alpha: 10.0, ipm };
        let (_, g) = objective_with_gradient(&model, &data, &batch, &w, &spec)?;
        let g = g.to_flat();
        let h = 1e-5;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..flat.len() {
            let mut m = model.clone();
            let mut f = flat.clone();
            f[k] += h;
            m.set_flat(&f)?;
            let up = objective_value(&m, &data, &batch, &w, &spec)?.total;
            f[k] -= 2.0 * h;
            m.set_flat(&f)?;
            let down = objective_value(&m, &data, &batch, &w, &spec)?.total;
            let fd = (up - down) / (2.0 * h);
            num += (g[k] - fd).powi(2);
            den += fd * fd;
        }
        println!("{ipm:<8} {} parameters, relative error {:.2e}", flat.len(), (num / den).sqrt());
    }
    Ok(())
}
