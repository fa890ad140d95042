//! One PASS/FAIL line per acceptance criterion.

mod common;

use std::time::Instant;

use bwcfr::cfr::{export_representations, train_cfr, Architecture, ObjectiveSpec};
use bwcfr::harness::config::{DatasetSource, ExperimentConfig, ToyGrid};
use bwcfr::harness::csvio::write_representation_csv;
use bwcfr::harness::report::result_table;
use bwcfr::harness::{run_experiment, RunRecord, Selection};
use bwcfr::ipm::{exact_ot_cost, sinkhorn_wasserstein, weighted_mmd2, Kernel};
use bwcfr::propensity::train_propensity;
use bwcfr::synthgen::{generate_toy, ToyConfig};
use bwcfr::theorycheck::{kl_and_tvd_check, run_suite, DiscreteInstance, SuiteConfig, SuiteReport};
use bwcfr::{IpmSpec, TrainConfig, WeightScheme, WeightedSample};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, title: &str, start: Instant, r: Outcome) -> bool {
    println!(
        "criterion {id:>2}: {} - {title} ({}; {:.1}s)",
        if r.pass { "PASS" } else { "FAIL" },
        r.detail,
        start.elapsed().as_secs_f64()
    );
    r.pass
}

fn only(check: &str, n: usize) -> SuiteConfig {
    let mut c = SuiteConfig::with_instances(0, 2024);
    match check {
        "balance" => c.balance_instances = n,
        "kl_tvd" => c.kl_instances = n,
        "ipm_bound" => c.ipm_instances = n,
        _ => c.sandwich_instances = n,
    }
    c
}

fn suite_outcome(r: &SuiteReport, limit_s: Option<f64>, start: Instant) -> Outcome {
    let c = &r.checks.iter().find(|c| c.cases > 0).expect("one active check");
    let fast = limit_s.map_or(true, |l| start.elapsed().as_secs_f64() < l);
    Outcome {
        pass: r.pass && fast,
        detail: format!(
            "{} cases, {} failures, worst margin {:.3e}{}",
            c.cases,
            c.failures,
            c.worst_margin.unwrap_or(f64::NAN),
            limit_s.map(|l| format!(", limit {l}s")).unwrap_or_default()
        ),
    }
}

fn c1() -> Outcome {
    let t = Instant::now();
    suite_outcome(&run_suite(&only("balance", 1000)), Some(10.0), t)
}

fn c2() -> Outcome {
    let t = Instant::now();
    let mut out = suite_outcome(&run_suite(&only("kl_tvd", 1000)), Some(30.0), t);
    let tight = DiscreteInstance {
        p: vec![0.2, 0.5, 0.3],
        e: vec![0.3, 0.6, 0.8],
        e_model: vec![0.3, 0.6, 0.8],
        scheme: WeightScheme::Ow,
    };
    let k = kl_and_tvd_check(&tight).unwrap();
    let tight_ok = k.gamma == 1.0 && k.kl.abs() <= 1e-12 && k.tvd.abs() <= 1e-12 && k.kl_bound == 0.0 && k.tvd_bound == 0.0;
    out.pass &= tight_ok;
    out.detail += &format!("; at gamma 1: kl {:.1e}, tvd {:.1e}", k.kl, k.tvd);
    out
}

fn c3() -> Outcome {
    let t = Instant::now();
    suite_outcome(&run_suite(&only("ipm_bound", 500)), Some(120.0), t)
}

fn c4() -> Outcome {
    let t = Instant::now();
    suite_outcome(&run_suite(&only("sandwich", 500)), None, t)
}

fn cloud(rng: &mut ChaCha20Rng, n: usize) -> WeightedSample {
    WeightedSample::uniform(normal_matrix(rng, n, 16, 1.0)).unwrap()
}

fn c5() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (mut worst10, mut worst200) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (a, b) = (cloud(&mut rng, n), cloud(&mut rng, m));
        let exact = exact_ot_cost(&a, &b).unwrap();
        let rel = |s: usize| (sinkhorn_wasserstein(10.0, s, &a, &b).unwrap() - exact).abs() / exact;
        worst10 = worst10.max(rel(10));
        worst200 = worst200.max(rel(200));
    }
    Outcome {
        pass: worst10 < 0.10 && worst200 < 0.01,
        detail: format!("worst relative error {worst10:.2e} at 10 iterations, {worst200:.2e} at 200"),
    }
}

/// Within-group mean over `i != j` in closed form:
/// `(w'Kw - sum w_i^2 k_ii) / ((sum w)^2 - sum w_i^2)`.
fn naive_mmd2(k: impl Fn(&[f64], &[f64]) -> f64, a: &WeightedSample, b: &WeightedSample) -> f64 {
    let gram = |x: &WeightedSample, y: &WeightedSample| {
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                s += x.weights[i] * y.weights[j] * k(x.points.row(i), y.points.row(j));
            }
        }
        s
    };
    let within = |x: &WeightedSample| {
        let diag: f64 = (0..x.len()).map(|i| x.weights[i].powi(2) * k(x.points.row(i), x.points.row(i))).sum();
        let sq: f64 = x.weights.iter().map(|w| w * w).sum();
        (gram(x, x) - diag) / (x.total_weight().powi(2) - sq)
    };
    within(a) + within(b) - 2.0 * gram(a, b) / (a.total_weight() * b.total_weight())
}

fn c6() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let d = rng.gen_range(1..=5);
        let sample = |rng: &mut ChaCha20Rng| {
            let n = rng.gen_range(2..=12);
            let w = (0..n).map(|_| rng.gen_range(0.01..3.0)).collect();
            WeightedSample::new(normal_matrix(rng, n, d, 0.7), w).unwrap()
        };
        let (a, b) = (sample(&mut rng), sample(&mut rng));
        let (kernel, oracle) = if case % 2 == 0 {
            (Kernel::Linear, naive_mmd2(|r, s| r.iter().zip(s).map(|(x, y)| x * y).sum(), &a, &b))
        } else {
            let sigma = [0.1, 1.0, 3.0][case % 3];
            let f = move |r: &[f64], s: &[f64]| {
                (-r.iter().zip(s).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / (sigma * sigma)).exp()
            };
            (Kernel::Rbf { sigma }, naive_mmd2(f, &a, &b))
        };
        let v = weighted_mmd2(kernel, &a, &b).unwrap().value;
        worst = worst.max((v - oracle).abs() / oracle.abs().max(1.0));
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("worst discrepancy {worst:.1e}"),
    }
}

fn c7() -> Outcome {
    let specs = [
        (IpmSpec::wass(), 1.0, 71),
        (IpmSpec::MmdLinear, 1.0, 72),
        (IpmSpec::mmd_rbf(), 0.05, 73),
    ];
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (ipm, scale, seed) in specs {
        let errs = objective_relative_error(ObjectiveSpec { alpha: 1.0, ipm }, scale, seed);
        let w = errs.iter().map(|e| e.0).fold(0.0, f64::max);
        lines.push(format!("{ipm} {w:.1e}"));
        worst = worst.max(w);
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("worst relative error over 10 points: {}", lines.join(", ")),
    }
}

const TOY_GAMMAS: [f64; 3] = [0.0, 2.5, 5.0];

fn toy_records() -> bwcfr::Result<(Vec<RunRecord>, tempfile::TempDir)> {
    let dir = tempfile::tempdir()?;
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Toy(ToyGrid {
            base: ToyConfig::default(),
            gammas: TOY_GAMMAS.to_vec(),
            omegas: vec![20],
        }),
        schemes: vec![WeightScheme::Uniform, WeightScheme::Ow, WeightScheme::Mw],
        repetitions: 10,
        seed: 0,
        selection: Some(Selection::OraclePehe),
        out: dir.path().to_path_buf(),
        workers,
        ..ExperimentConfig::default()
    };
    Ok((run_experiment(&cfg)?, dir))
}

fn per_seed(records: &[RunRecord], gamma: f64, scheme: WeightScheme) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.scheme == scheme && r.dataset.gamma_tilde == Some(gamma))
        .collect();
    v.sort_by_key(|r| r.dataset.replication);
    v
}

fn best_pehe(records: &[RunRecord], gamma: f64, scheme: WeightScheme) -> Vec<f64> {
    per_seed(records, gamma, scheme)
        .iter()
        .map(|r| r.report.as_ref().and_then(|x| x.sqrt_pehe_p).unwrap_or(f64::NAN))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-sided paired t-test of `mean(a - b) > 0`.
fn paired_p_value(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return if m > 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / (sd / n.sqrt());
    1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

fn c8(records: &[RunRecord]) -> Outcome {
    let u: Vec<Vec<f64>> = TOY_GAMMAS.iter().map(|&g| best_pehe(records, g, WeightScheme::Uniform)).collect();
    let mut pass = true;
    let mut detail = format!("uniform means {:?}", u.iter().map(|v| round3(mean(v))).collect::<Vec<_>>());
    for s in [WeightScheme::Ow, WeightScheme::Mw] {
        let w: Vec<Vec<f64>> = TOY_GAMMAS.iter().map(|&g| best_pehe(records, g, s)).collect();
        let gaps: Vec<f64> = (0..3).map(|i| mean(&u[i]) - mean(&w[i])).collect();
        let p = paired_p_value(&u[2], &w[2]);
        let grows = gaps.windows(2).all(|x| x[1] > x[0]);
        pass &= p < 0.05 && grows && gaps[2] > 0.0;
        detail += &format!(
            "; {s} means {:?}, gaps {:?}, p {p:.3}",
            w.iter().map(|v| round3(mean(v))).collect::<Vec<_>>(),
            gaps.iter().map(|&g| round3(g)).collect::<Vec<_>>()
        );
    }
    Outcome { pass, detail }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn c9(records: &[RunRecord]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [WeightScheme::Ow, WeightScheme::Mw] {
        let rs = per_seed(records, 5.0, s);
        let wins = rs
            .iter()
            .filter(|r| {
                let best = r.report.as_ref().and_then(|x| x.sqrt_pehe_p);
                let zero = r.candidate_with_alpha(0.0).and_then(|c| c.test.as_ref()).and_then(|x| x.sqrt_pehe_p);
                matches!((best, zero), (Some(b), Some(z)) if b <= z)
            })
            .count();
        pass &= wins >= 8;
        parts.push(format!("{s}: {wins}/{}", rs.len()));
    }
    Outcome {
        pass,
        detail: format!("seeds where the selected alpha is no worse than alpha 0: {}", parts.join(", ")),
    }
}

fn c10(records: &[RunRecord]) -> Outcome {
    let rs = per_seed(records, 0.0, WeightScheme::Ow);
    let reps: Vec<_> = rs.iter().filter_map(|r| r.report.as_ref()).collect();
    let ate: Vec<f64> = reps.iter().map(|r| r.ate_p_hat).collect();
    let shifts: Vec<f64> = reps.iter().map(|r| r.ate_dr.unwrap_or(f64::NAN) - r.ate_g_hat.unwrap_or(f64::NAN)).collect();
    let m = mean(&ate);
    let finite = shifts.iter().all(|v| v.is_finite());
    Outcome {
        pass: reps.len() == 10 && (m - 3.0).abs() < 0.3 && finite,
        detail: format!(
            "mean ATE {m:.3} over {} seeds; DR shifts {:?}",
            reps.len(),
            shifts.iter().map(|&v| round3(v)).collect::<Vec<_>>()
        ),
    }
}

fn c11() -> bwcfr::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let src = write_csv_benchmark(dir.path(), 3, 5);
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Csv(src),
        schemes: vec![WeightScheme::Mw, WeightScheme::Ow, WeightScheme::truncipw()],
        search: small_search(4),
        training: quick_training(30),
        out: dir.path().join("runs"),
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg)?;
    let summary = bwcfr::harness::emit_report(&records, &dir.path().join("report"))?;
    let table = result_table(&records, "eval");
    let shape_ok = table.rows.len() == 3 && table.columns.len() == 2;
    let filled = table.cells.iter().flatten().all(|c| matches!(c, Some((m, se, 5)) if m.is_finite() && se.is_finite()));
    let tuned = records.iter().all(|r| r.selection == Selection::PeheNn);
    print!("{}", table.markdown());
    Ok(Outcome {
        pass: shape_ok && filled && tuned && summary.n_failed == 0 && summary.table.is_some(),
        detail: format!(
            "{} records, {} failed, table {}x{}",
            summary.n_records,
            summary.n_failed,
            table.rows.len(),
            table.columns.len()
        ),
    })
}

fn c12() -> bwcfr::Result<Outcome> {
    let s = generate_toy(&ToyConfig { gamma_tilde: 2.0, ..ToyConfig::default() })?;
    let prop = train_propensity(&s.train, &quick_propensity(), 1)?.model;
    let arch = Architecture {
        rep_dim: 7,
        ..Architecture::default()
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for scheme in [WeightScheme::Uniform, WeightScheme::Ow] {
        let cfg = TrainConfig {
            scheme,
            alpha: 1.0,
            architecture: arch.clone(),
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let fit = train_cfr(&s.train, &s.val, &prop, &cfg)?;
        let table = export_representations(&fit.model, &prop, scheme, &s.train)?;
        let dir = tempfile::tempdir()?;
        let path = dir.path().join("repr.csv");
        write_representation_csv(&path, &table)?;
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| bwcfr::Error::Io(e.into()))?;
        let width = rdr.headers().map_err(|e| bwcfr::Error::Io(e.into()))?.len();
        let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(|e| bwcfr::Error::Io(e.into()))?;
        ok &= width == 7 + 3 && rows.len() == s.train.len() && rows.iter().all(|r| r.len() == width);
        if scheme == WeightScheme::Uniform {
            ok &= rows.iter().all(|r| &r[7] == "1");
        } else {
            ok &= rows.iter().any(|r| &r[7] != "1");
        }
        detail.push(format!("{scheme}: {} x {width}", rows.len()));
    }
    Ok(Outcome {
        pass: ok,
        detail: detail.join(", "),
    })
}

fn failed(e: bwcfr::Error) -> Outcome {
    Outcome {
        pass: false,
        detail: format!("error: {e}"),
    }
}

fn main() {
    let mut results = Vec::new();
    let mut run = |id: usize, title: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        results.push(report(id, title, t, f()));
    };
    run(1, "balancing property", &c1);
    run(2, "generalized balancing and divergence bounds", &c2);
    run(3, "IPM bounds", &c3);
    run(4, "PEHE sandwich", &c4);
    run(5, "Sinkhorn against exact transport", &c5);
    run(6, "weighted MMD against a direct evaluation", &c6);
    run(7, "objective gradients", &c7);

    let t = Instant::now();
    match toy_records() {
        Ok((records, _dir)) => {
            let elapsed = t.elapsed().as_secs_f64();
            println!("toy grid: {} records in {elapsed:.0}s", records.len());
            run(8, "weighted schemes beat uniform under strong imbalance", &|| c8(&records));
            run(9, "the IPM term helps weighted schemes", &|| c9(&records));
            run(10, "ATE recovery without imbalance", &|| c10(&records));
        }
        Err(e) => {
            let msg = e.to_string();
            for (id, title) in [(8, "toy trend"), (9, "IPM ablation"), (10, "ATE recovery")] {
                run(id, title, &|| failed(bwcfr::Error::Config(msg.clone())));
            }
        }
    }
    run(11, "file-based tuning and evaluation protocol", &|| c11().unwrap_or_else(failed));
    run(12, "representation export", &|| c12().unwrap_or_else(failed));

    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
