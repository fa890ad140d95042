use crate::error::{Error, Result};
use crate::numcore::{euclidean, DenseMatrix};

use super::WeightedSample;

/// Largest `n * m` accepted by the exact solver.
pub const EXACT_OT_MAX_CELLS: usize = 64;

const EPS: f64 = 1e-15;

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }

    /// Bellman-Ford shortest path over edges with spare capacity. Returns the
    /// edge used to reach each node.
    fn shortest_path(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![None; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap > EPS && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        via
    }
}

/// Optimal coupling between the normalized weights of `a` and `b` under the
/// Euclidean ground cost, by successive shortest augmenting paths.
pub fn exact_ot_plan(a: &WeightedSample, b: &WeightedSample) -> Result<DenseMatrix> {
    a.check_compatible(b)?;
    let (n, m) = (a.len(), b.len());
    if n * m > EXACT_OT_MAX_CELLS {
        return Err(Error::TooLarge {
            n,
            m,
            limit: EXACT_OT_MAX_CELLS,
        });
    }
    let (pa, pb) = (a.probabilities(), b.probabilities());
    let source = 0;
    let sink = n + m + 1;
    let mut g = Graph::new(n + m + 2);
    for (i, &w) in pa.iter().enumerate() {
        g.add(source, 1 + i, w, 0.0);
    }
    for (j, &w) in pb.iter().enumerate() {
        g.add(1 + n + j, sink, w, 0.0);
    }
    let mut cell = vec![0; n * m];
    for i in 0..n {
        for j in 0..m {
            let cost = euclidean(a.points.row(i), b.points.row(j));
            cell[i * m + j] = g.add(1 + i, 1 + n + j, f64::INFINITY, cost);
        }
    }
    loop {
        let via = g.shortest_path(source);
        if via[sink].is_none() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut node = sink;
        while node != source {
            let e = via[node].unwrap();
            push = push.min(g.edges[e].cap);
            node = g.edges[e ^ 1].to;
        }
        if push <= EPS {
            break;
        }
        let mut node = sink;
        while node != source {
            let e = via[node].unwrap();
            g.edges[e].cap -= push;
            g.edges[e ^ 1].cap += push;
            node = g.edges[e ^ 1].to;
        }
    }
    let mut plan = DenseMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            // flow on a forward edge is the capacity of its reverse twin
            plan.set(i, j, g.edges[cell[i * m + j] ^ 1].cap);
        }
    }
    Ok(plan)
}

/// Exact optimal transport cost `min_T sum_ij T_ij |a_i - b_j|`.
pub fn exact_ot_cost(a: &WeightedSample, b: &WeightedSample) -> Result<f64> {
    let plan = exact_ot_plan(a, b)?;
    let mut cost = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            cost += plan.get(i, j) * euclidean(a.points.row(i), b.points.row(j));
        }
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sample(rows: Vec<Vec<f64>>, w: Vec<f64>) -> WeightedSample {
        WeightedSample::new(DenseMatrix::from_rows(&rows).unwrap(), w).unwrap()
    }

    #[test]
    fn single_points() {
        let a = sample(vec![vec![1.0, 1.0]], vec![1.0]);
        let b = sample(vec![vec![4.0, 5.0]], vec![3.0]);
        assert!((exact_ot_cost(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_cost_nothing() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let pts: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(0.1..1.0)).collect();
        let a = sample(pts, w);
        assert!(exact_ot_cost(&a, &a).unwrap().abs() < 1e-14);
    }

    #[test]
    fn two_by_two_is_the_cheaper_vertex() {
        // uniform 2x2: the polytope vertices are the two permutations
        let a = sample(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]);
        let b = sample(vec![vec![0.2], vec![3.0]], vec![1.0, 1.0]);
        let identity: f64 = 0.5 * (0.2 + 2.0);
        let swap = 0.5 * (3.0 + 0.8);
        let c = exact_ot_cost(&a, &b).unwrap();
        assert!((c - identity.min(swap)).abs() < 1e-15);

        // unequal masses: vertices are T11 = min(a1, b1) or T11 = max(0, a1 - b2)
        let a = sample(vec![vec![0.0], vec![1.0]], vec![0.7, 0.3]);
        let b = sample(vec![vec![0.5], vec![2.0]], vec![0.4, 0.6]);
        let m = [[0.5, 2.0], [0.5, 1.0]];
        let cost = |t11: f64| {
            let t12 = 0.7 - t11;
            let t21 = 0.4 - t11;
            let t22 = 0.3 - t21;
            t11 * m[0][0] + t12 * m[0][1] + t21 * m[1][0] + t22 * m[1][1]
        };
        let best = cost(0.4).min(cost(0.1));
        assert!((exact_ot_cost(&a, &b).unwrap() - best).abs() < 1e-14);
    }

    #[test]
    fn plan_has_the_right_marginals() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = sample((0..7).map(|_| vec![rng.gen()]).collect(), (0..7).map(|_| rng.gen()).collect());
        let b = sample((0..9).map(|_| vec![rng.gen()]).collect(), (0..9).map(|_| rng.gen()).collect());
        let plan = exact_ot_plan(&a, &b).unwrap();
        let (pa, pb) = (a.probabilities(), b.probabilities());
        for i in 0..7 {
            let s: f64 = plan.row(i).iter().sum();
            assert!((s - pa[i]).abs() < 1e-12);
        }
        for (j, c) in plan.column_sums().iter().enumerate() {
            assert!((c - pb[j]).abs() < 1e-12);
        }
        assert!(plan.data().iter().all(|&t| t >= -1e-15));
    }

    #[test]
    fn size_limit() {
        let a = WeightedSample::uniform(DenseMatrix::zeros(9, 1)).unwrap();
        let b = WeightedSample::uniform(DenseMatrix::zeros(8, 1)).unwrap();
        assert!(matches!(exact_ot_cost(&a, &b), Err(Error::TooLarge { .. })));
    }
}
