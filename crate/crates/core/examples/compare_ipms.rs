//! Entropic Sinkhorn against exact transport, and weighted MMD with both
//! kernels, on two small Gaussian clouds.

use bwcfr::ipm::{exact_ot_cost, sinkhorn_wasserstein, weighted_mmd2, Kernel};
use bwcfr::{DenseMatrix, WeightedSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn cloud(rng: &mut ChaCha20Rng, n: usize, shift: f64) -> DenseMatrix {
    let v = (0..n * 3).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::from_vec(n, 3, v).unwrap()
}

fn main() -> bwcfr::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let a = WeightedSample::uniform(cloud(&mut rng, 6, 0.0))?;
    let b = WeightedSample::uniform(cloud(&mut rng, 5, 0.8))?;

    let exact = exact_ot_cost(&a, &b)?;
    println!("exact transport cost {exact:.5}");
    for s in [1, 5, 10, 50, 200] {
        let v = sinkhorn_wasserstein(10.0, s, &a, &b)?;
        println!("  sinkhorn lambda=10, {s:>3} iterations: {v:.5} ({:+.2}%)", 100.0 * (v - exact) / exact);
    }

    let w: Vec<f64> = (0..6).map(|i| 0.5 + i as f64 * 0.3).collect();
    let weighted = WeightedSample::new(a.points.clone(), w)?;
    for k in [Kernel::Linear, Kernel::Rbf { sigma: 1.0 }, Kernel::Rbf { sigma: 3.0 }] {
        let u = weighted_mmd2(k, &a, &b)?;
        let v = weighted_mmd2(k, &weighted, &b)?;
        println!("MMD^2 {k:?}: uniform {:.5}, reweighted {:.5}", u.value, v.value);
    }
    Ok(())
}
