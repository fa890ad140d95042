//! A reduced toy grid: two imbalance levels, three schemes, the toy alpha
//! grid, three replications. Records and the report go to the given
//! directory; rerunning resumes from the stored records.
//!
//!     cargo run --release --example toy_grid -- /tmp/toy_grid

use bwcfr::harness::config::{DatasetSource, ExperimentConfig, ToyGrid};
use bwcfr::harness::{emit_report, run_experiment};
use bwcfr::WeightScheme;

fn main() -> bwcfr::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/toy_grid".into());
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Toy(ToyGrid {
            gammas: vec![0.0, 5.0],
            omegas: vec![20],
            ..ToyGrid::default()
        }),
        schemes: vec![WeightScheme::Uniform, WeightScheme::Mw, WeightScheme::Ow],
        repetitions: 3,
        out: out.clone().into(),
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..ExperimentConfig::default()
    };
    let records = run_experiment(&cfg)?;
    let dir = cfg.out.join("report").join(cfg.hash());
    let summary = emit_report(&records, &dir)?;
    println!("{:<8} {:>6} {:>10} {:>8}", "scheme", "gamma", "sqrt PEHE", "stderr");
    for a in summary.aggregates.iter().filter(|a| a.metric == "sqrt_pehe_p") {
        println!("{:<8} {:>6} {:>10.3} {:>8.3}", a.group.scheme, a.group.gamma_tilde, a.mean, a.stderr);
    }
    println!("report in {}", dir.display());
    Ok(())
}
