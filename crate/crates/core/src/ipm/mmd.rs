use crate::error::{Error, Result};
use crate::numcore::{squared_euclidean, DenseMatrix};

use super::WeightedSample;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Linear,
    /// `exp(-|r - s|^2 / sigma^2)`.
    Rbf { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, r: &[f64], s: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(r, s),
            Kernel::Rbf { sigma } => (-squared_euclidean(r, s) / (sigma * sigma)).exp(),
        }
    }

    /// Adds `scale * d k(r, s) / dr` into `out`.
    fn add_grad_first(&self, r: &[f64], s: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            Kernel::Linear => {
                for (o, &sv) in out.iter_mut().zip(s) {
                    *o += scale * sv;
                }
            }
            Kernel::Rbf { sigma } => {
                let s2 = sigma * sigma;
                let k = (-squared_euclidean(r, s) / s2).exp();
                let c = -2.0 * scale * k / s2;
                for ((o, &rv), &sv) in out.iter_mut().zip(r).zip(s) {
                    *o += c * (rv - sv);
                }
            }
        }
    }

    /// `sup_r k(r, r)` over a finite set of points.
    pub fn sup_diagonal(&self, points: &DenseMatrix) -> f64 {
        match self {
            Kernel::Rbf { .. } => 1.0,
            Kernel::Linear => (0..points.rows())
                .map(|i| dot(points.row(i), points.row(i)))
                .fold(0.0, f64::max),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmdEstimate {
    pub value: f64,
    pub within_a: f64,
    pub within_b: f64,
    pub cross: f64,
    /// A group had fewer than two positive weights; its within term is 0.
    pub degenerate: bool,
}

fn positive_count(w: &[f64]) -> usize {
    w.iter().filter(|&&x| x > 0.0).count()
}

/// Within-group mean of `k` over ordered pairs `i != j`, or `None` when the
/// pair weights sum to zero.
fn within_term(kernel: Kernel, s: &WeightedSample) -> Option<(f64, f64)> {
    if positive_count(&s.weights) < 2 {
        return None;
    }
    let n = s.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let wi = s.weights[i];
        let ri = s.points.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let ww = wi * s.weights[j];
            num += ww * kernel.eval(ri, s.points.row(j));
            den += ww;
        }
    }
    Some((num / den, den))
}

fn cross_term(kernel: Kernel, a: &WeightedSample, b: &WeightedSample) -> f64 {
    let mut num = 0.0;
    for i in 0..a.len() {
        let ri = a.points.row(i);
        for j in 0..b.len() {
            num += a.weights[i] * b.weights[j] * kernel.eval(ri, b.points.row(j));
        }
    }
    num / (a.total_weight() * b.total_weight())
}

/// Squared weighted MMD with self-pairs excluded inside each group.
///
/// Because the within-group means drop `i == j`, the estimate can be
/// slightly negative and is not zero for `a == b`.
pub fn weighted_mmd2(kernel: Kernel, a: &WeightedSample, b: &WeightedSample) -> Result<MmdEstimate> {
    a.check_compatible(b)?;
    let wa = within_term(kernel, a);
    let wb = within_term(kernel, b);
    let cross = cross_term(kernel, a, b);
    let within_a = wa.map_or(0.0, |v| v.0);
    let within_b = wb.map_or(0.0, |v| v.0);
    Ok(MmdEstimate {
        value: within_a + within_b - 2.0 * cross,
        within_a,
        within_b,
        cross,
        degenerate: wa.is_none() || wb.is_none(),
    })
}

fn within_gradient(kernel: Kernel, s: &WeightedSample, den: f64) -> DenseMatrix {
    let n = s.len();
    let mut g = DenseMatrix::zeros(n, s.dim());
    for i in 0..n {
        let wi = s.weights[i];
        if wi == 0.0 {
            continue;
        }
        let ri = s.points.row(i).to_vec();
        let out = g.row_mut(i);
        for j in 0..n {
            if i == j || s.weights[j] == 0.0 {
                continue;
            }
            // each unordered pair appears twice in the ordered sum
            kernel.add_grad_first(&ri, s.points.row(j), 2.0 * wi * s.weights[j] / den, out);
        }
    }
    g
}

/// As [`weighted_mmd2`], plus the gradient with respect to both point sets.
pub fn weighted_mmd2_gradient(
    kernel: Kernel,
    a: &WeightedSample,
    b: &WeightedSample,
) -> Result<(MmdEstimate, DenseMatrix, DenseMatrix)> {
    let est = weighted_mmd2(kernel, a, b)?;
    let mut ga = match within_term(kernel, a) {
        Some((_, den)) => within_gradient(kernel, a, den),
        None => DenseMatrix::zeros(a.len(), a.dim()),
    };
    let mut gb = match within_term(kernel, b) {
        Some((_, den)) => within_gradient(kernel, b, den),
        None => DenseMatrix::zeros(b.len(), b.dim()),
    };
    let z = -2.0 / (a.total_weight() * b.total_weight());
    for i in 0..a.len() {
        let ri = a.points.row(i);
        for j in 0..b.len() {
            let ww = a.weights[i] * b.weights[j];
            if ww == 0.0 {
                continue;
            }
            let rj = b.points.row(j);
            kernel.add_grad_first(ri, rj, z * ww, ga.row_mut(i));
            kernel.add_grad_first(rj, ri, z * ww, gb.row_mut(j));
        }
    }
    if !ga.is_finite() || !gb.is_finite() {
        return Err(Error::NonFiniteGradient("MMD".into()));
    }
    Ok((est, ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn cloud(rng: &mut ChaCha20Rng, n: usize, d: usize, shift: f64) -> WeightedSample {
        let pts: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>() + shift).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        WeightedSample::new(DenseMatrix::from_vec(n, d, pts).unwrap(), w).unwrap()
    }

    // four-loop textbook form: every (i, j) pair of every block
    fn naive(kernel: Kernel, a: &WeightedSample, b: &WeightedSample) -> f64 {
        let block = |x: &WeightedSample, y: &WeightedSample, skip_diag: bool| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..x.len() {
                for j in 0..y.len() {
                    if skip_diag && i == j {
                        continue;
                    }
                    let ww = x.weights[i] * y.weights[j];
                    num += ww * kernel.eval(x.points.row(i), y.points.row(j));
                    den += ww;
                }
            }
            num / den
        };
        block(a, a, true) + block(b, b, true) - 2.0 * block(a, b, false)
    }

    #[test]
    fn matches_naive_double_loop() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for kernel in [Kernel::Linear, Kernel::Rbf { sigma: 0.1 }, Kernel::Rbf { sigma: 1.0 }] {
            for _ in 0..20 {
                let a = cloud(&mut rng, 5, 3, 0.0);
                let b = cloud(&mut rng, 4, 3, 0.3);
                let v = weighted_mmd2(kernel, &a, &b).unwrap().value;
                assert!((v - naive(kernel, &a, &b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_kernel_is_mean_difference_up_to_self_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = cloud(&mut rng, 6, 2, 0.0);
        let b = cloud(&mut rng, 7, 2, 1.0);
        let mean = |s: &WeightedSample| {
            let tw = s.total_weight();
            (0..s.dim())
                .map(|k| (0..s.len()).map(|i| s.weights[i] * s.points.get(i, k)).sum::<f64>() / tw)
                .collect::<Vec<_>>()
        };
        // sum_{i != j} w_i w_j r_i.r_j = |sum w r|^2 - sum w^2 |r|^2
        let within = |s: &WeightedSample| {
            let tw = s.total_weight();
            let m = mean(s);
            let full = dot(&m, &m) * tw * tw;
            let diag: f64 = (0..s.len())
                .map(|i| s.weights[i].powi(2) * dot(s.points.row(i), s.points.row(i)))
                .sum();
            let pair_mass = tw * tw - s.weights.iter().map(|w| w * w).sum::<f64>();
            (full - diag) / pair_mass
        };
        let (ma, mb) = (mean(&a), mean(&b));
        let expected = within(&a) + within(&b) - 2.0 * dot(&ma, &mb);
        let v = weighted_mmd2(Kernel::Linear, &a, &b).unwrap().value;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_leave_only_the_self_pair_correction() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = cloud(&mut rng, 8, 2, 0.0);
        let est = weighted_mmd2(Kernel::Rbf { sigma: 1.0 }, &a, &a).unwrap();
        // within and cross means differ only by the excluded diagonal
        let tw = a.total_weight();
        let sq: f64 = a.weights.iter().map(|w| w * w).sum();
        let expected = 2.0 * (est.within_a * (tw * tw - sq) + sq) / (tw * tw);
        assert!((2.0 * est.cross - expected).abs() < 1e-12);

        let collapsed = WeightedSample::uniform(DenseMatrix::zeros(4, 3)).unwrap();
        for k in [Kernel::Linear, Kernel::Rbf { sigma: 0.1 }] {
            let (e, ga, gb) = weighted_mmd2_gradient(k, &collapsed, &collapsed).unwrap();
            assert!(e.value.abs() < 1e-12);
            assert!(ga.data().iter().chain(gb.data()).all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn far_clusters_have_no_cross_term() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let a = cloud(&mut rng, 5, 2, 0.0);
        let b = cloud(&mut rng, 5, 2, 50.0);
        let est = weighted_mmd2(Kernel::Rbf { sigma: 0.1 }, &a, &b).unwrap();
        assert_eq!(est.cross, 0.0);
        assert!((est.value - (est.within_a + est.within_b)).abs() < 1e-15);
    }

    #[test]
    fn single_point_groups_are_flagged() {
        let a = WeightedSample::new(DenseMatrix::zeros(2, 1), vec![1.0, 0.0]).unwrap();
        let b = WeightedSample::uniform(DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap()).unwrap();
        let est = weighted_mmd2(Kernel::Linear, &a, &b).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.within_a, 0.0);
        assert!((est.value - (2.0 - 0.0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for kernel in [Kernel::Linear, Kernel::Rbf { sigma: 0.5 }] {
            let a = cloud(&mut rng, 4, 2, 0.0);
            let b = cloud(&mut rng, 3, 2, 0.2);
            let (_, ga, gb) = weighted_mmd2_gradient(kernel, &a, &b).unwrap();
            let h = 1e-6;
            for (which, grad) in [(0, &ga), (1, &gb)] {
                let base = if which == 0 { &a } else { &b };
                for idx in 0..base.points.data().len() {
                    let mut plus = base.clone();
                    plus.points.data_mut()[idx] += h;
                    let mut minus = base.clone();
                    minus.points.data_mut()[idx] -= h;
                    let f = |s: &WeightedSample| {
                        if which == 0 {
                            weighted_mmd2(kernel, s, &b).unwrap().value
                        } else {
                            weighted_mmd2(kernel, &a, s).unwrap().value
                        }
                    };
                    let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                    let g = grad.data()[idx];
                    assert!((fd - g).abs() <= 1e-6 * (1.0 + g.abs()), "{fd} vs {g}");
                }
            }
        }
    }
}
