use crate::error::{Error, Result};
use crate::numcore::{euclidean, DenseMatrix};

use super::WeightedSample;

/// Lower bound applied to every entry of `exp(-lambda M)`.
pub const KERNEL_FLOOR: f64 = 1e-300;

struct Problem {
    /// Row and column indices of the positive-weight atoms.
    rows: Vec<usize>,
    cols: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// n x m, row-major.
    m: Vec<f64>,
    k: Vec<f64>,
    /// Entries where the floor replaced `exp(-lambda M)`.
    floored: Vec<bool>,
}

struct Trace {
    /// `u` before each iteration plus the final one: `S + 1` vectors.
    u: Vec<Vec<f64>>,
    /// `K^T u_s` and `b ./ (K^T u_s)` for each iteration.
    q: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    q_final: Vec<f64>,
    v: Vec<f64>,
    cost: f64,
}

fn positive_atoms(w: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let idx: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let total: f64 = idx.iter().map(|&i| w[i]).sum();
    let p = idx.iter().map(|&i| w[i] / total).collect();
    (idx, p)
}

fn setup(lambda: f64, a: &WeightedSample, b: &WeightedSample) -> Result<Problem> {
    a.check_compatible(b)?;
    let (rows, pa) = positive_atoms(&a.weights);
    let (cols, pb) = positive_atoms(&b.weights);
    let (n, m) = (rows.len(), cols.len());
    let mut dist = vec![0.0; n * m];
    let mut k = vec![0.0; n * m];
    let mut floored = vec![false; n * m];
    for (ii, &i) in rows.iter().enumerate() {
        let ri = a.points.row(i);
        for (jj, &j) in cols.iter().enumerate() {
            let d = euclidean(ri, b.points.row(j));
            let e = (-lambda * d).exp();
            let c = ii * m + jj;
            dist[c] = d;
            if e < KERNEL_FLOOR {
                k[c] = KERNEL_FLOOR;
                floored[c] = true;
            } else {
                k[c] = e;
            }
        }
    }
    for ii in 0..n {
        if (0..m).all(|jj| floored[ii * m + jj]) {
            return Err(Error::KernelUnderflow { axis: "row", index: rows[ii] });
        }
    }
    for jj in 0..m {
        if (0..n).all(|ii| floored[ii * m + jj]) {
            return Err(Error::KernelUnderflow { axis: "column", index: cols[jj] });
        }
    }
    Ok(Problem {
        rows,
        cols,
        a: pa,
        b: pb,
        m: dist,
        k,
        floored,
    })
}

fn kt_times(p: &Problem, u: &[f64]) -> Vec<f64> {
    let (n, m) = (p.a.len(), p.b.len());
    let mut out = vec![0.0; m];
    for i in 0..n {
        let row = &p.k[i * m..(i + 1) * m];
        for j in 0..m {
            out[j] += row[j] * u[i];
        }
    }
    out
}

fn k_times(p: &Problem, z: &[f64]) -> Vec<f64> {
    let m = p.b.len();
    (0..p.a.len())
        .map(|i| p.k[i * m..(i + 1) * m].iter().zip(z).map(|(k, z)| k * z).sum())
        .collect()
}

fn run(p: &Problem, iterations: usize) -> Trace {
    let m = p.b.len();
    let mut u = vec![p.a.clone()];
    let mut qs = Vec::with_capacity(iterations);
    let mut zs = Vec::with_capacity(iterations);
    for s in 0..iterations {
        let q = kt_times(p, &u[s]);
        let z: Vec<f64> = p.b.iter().zip(&q).map(|(b, q)| b / q).collect();
        let y = k_times(p, &z);
        // u = 1 ./ (diag(1/a) K z)
        let next = p.a.iter().zip(&y).map(|(a, y)| a / y).collect();
        qs.push(q);
        zs.push(z);
        u.push(next);
    }
    let uf = &u[iterations];
    let q_final = kt_times(p, uf);
    let v: Vec<f64> = p.b.iter().zip(&q_final).map(|(b, q)| b / q).collect();
    let mut cost = 0.0;
    for i in 0..p.a.len() {
        for j in 0..m {
            let c = i * m + j;
            cost += uf[i] * p.k[c] * v[j] * p.m[c];
        }
    }
    Trace {
        u,
        q: qs,
        z: zs,
        q_final,
        v,
        cost,
    }
}

/// Entropic transport cost `sum_ij u_i K_ij v_j M_ij` after `iterations`
/// Sinkhorn-Knopp updates with `M_ij = |a_i - b_j|` and `K = exp(-lambda M)`.
///
/// Zero-weight atoms are removed first; they carry no mass in either plan.
pub fn sinkhorn_wasserstein(
    lambda: f64,
    iterations: usize,
    a: &WeightedSample,
    b: &WeightedSample,
) -> Result<f64> {
    let p = setup(lambda, a, b)?;
    let t = run(&p, iterations);
    if !t.cost.is_finite() {
        return Err(Error::Diverged(format!("Sinkhorn cost {}", t.cost)));
    }
    Ok(t.cost)
}

/// Value and gradient with respect to both point sets, differentiating
/// through every unrolled iteration.
pub fn sinkhorn_wasserstein_gradient(
    lambda: f64,
    iterations: usize,
    a: &WeightedSample,
    b: &WeightedSample,
) -> Result<(f64, DenseMatrix, DenseMatrix)> {
    let p = setup(lambda, a, b)?;
    let t = run(&p, iterations);
    let (n, m) = (p.a.len(), p.b.len());
    let uf = &t.u[iterations];

    let mut m_bar = vec![0.0; n * m];
    let mut k_bar = vec![0.0; n * m];
    let mut u_bar = vec![0.0; n];
    let mut v_bar = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let c = i * m + j;
            m_bar[c] = uf[i] * p.k[c] * t.v[j];
            k_bar[c] = uf[i] * t.v[j] * p.m[c];
            u_bar[i] += p.k[c] * t.v[j] * p.m[c];
            v_bar[j] += uf[i] * p.k[c] * p.m[c];
        }
    }
    // v = b ./ q
    let q_bar: Vec<f64> = (0..m).map(|j| -v_bar[j] * t.v[j] / t.q_final[j]).collect();
    accumulate_kt(&p, uf, &q_bar, &mut u_bar, &mut k_bar);

    for s in (0..iterations).rev() {
        let un = &t.u[s + 1];
        // u_{s+1} = a ./ y
        let y_bar: Vec<f64> = (0..n).map(|i| -u_bar[i] * un[i] * un[i] / p.a[i]).collect();
        let z = &t.z[s];
        let mut z_bar = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                let c = i * m + j;
                k_bar[c] += y_bar[i] * z[j];
                z_bar[j] += p.k[c] * y_bar[i];
            }
        }
        let q = &t.q[s];
        let q_bar: Vec<f64> = (0..m).map(|j| -z_bar[j] * z[j] / q[j]).collect();
        let mut next = vec![0.0; n];
        accumulate_kt(&p, &t.u[s], &q_bar, &mut next, &mut k_bar);
        u_bar = next;
    }

    for c in 0..n * m {
        if !p.floored[c] {
            m_bar[c] -= lambda * p.k[c] * k_bar[c];
        }
    }

    let mut ga = DenseMatrix::zeros(a.len(), a.dim());
    let mut gb = DenseMatrix::zeros(b.len(), b.dim());
    for (ii, &i) in p.rows.iter().enumerate() {
        let ri = a.points.row(i);
        for (jj, &j) in p.cols.iter().enumerate() {
            let c = ii * m + jj;
            let d = p.m[c];
            if d == 0.0 {
                continue;
            }
            let rj = b.points.row(j);
            let scale = m_bar[c] / d;
            for k in 0..ri.len() {
                let g = scale * (ri[k] - rj[k]);
                ga.row_mut(i)[k] += g;
                gb.row_mut(j)[k] -= g;
            }
        }
    }
    if !t.cost.is_finite() || !ga.is_finite() || !gb.is_finite() {
        return Err(Error::NonFiniteGradient("Sinkhorn".into()));
    }
    Ok((t.cost, ga, gb))
}

/// Backward step of `q = K^T u`: adds `K q_bar` into `u_bar` and
/// `u q_bar^T` into `k_bar`.
fn accumulate_kt(p: &Problem, u: &[f64], q_bar: &[f64], u_bar: &mut [f64], k_bar: &mut [f64]) {
    let m = p.b.len();
    for i in 0..p.a.len() {
        let mut acc = 0.0;
        for j in 0..m {
            let c = i * m + j;
            acc += p.k[c] * q_bar[j];
            k_bar[c] += u[i] * q_bar[j];
        }
        u_bar[i] += acc;
    }
}
