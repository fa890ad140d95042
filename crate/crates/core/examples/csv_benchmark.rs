//! Tuning on one set of CSV replications and reporting on another, as for
//! a semi-synthetic benchmark distributed as files.
//!
//! With a JSON experiment configuration as argument it runs that; without
//! one it writes a few toy-derived files to a temporary directory first.

use bwcfr::harness::config::{CsvSet, CsvSource, DatasetSource, ExperimentConfig, SearchSpace, TrainingOptions};
use bwcfr::harness::{emit_report, run_experiment, write_csv_dataset};
use bwcfr::synthgen::{generate_toy, ToyConfig};
use bwcfr::WeightScheme;

fn demo_config(dir: &std::path::Path) -> bwcfr::Result<ExperimentConfig> {
    for (phase, count) in [("tune", 3), ("eval", 4)] {
        for i in 1..=count {
            let s = generate_toy(&ToyConfig {
                n_train: 300,
                n_val: 0,
                n_test: 150,
                gamma_tilde: 1.5,
                seed: if phase == "tune" { i } else { 100 + i },
                ..ToyConfig::default()
            })?;
            write_csv_dataset(dir.join(format!("{phase}_{i}.train.csv")), &s.train)?;
            write_csv_dataset(dir.join(format!("{phase}_{i}.test.csv")), &s.test)?;
        }
    }
    let set = |phase: &str, count| CsvSet::Pattern {
        train_pattern: format!("{phase}_{{i}}.train.csv"),
        test_pattern: Some(format!("{phase}_{{i}}.test.csv")),
        first: 1,
        count,
    };
    Ok(ExperimentConfig {
        dataset: DatasetSource::Csv(CsvSource {
            tune: set("tune", 3),
            eval: set("eval", 4),
            base_dir: Some(dir.to_path_buf()),
            ..CsvSource::default()
        }),
        schemes: vec![WeightScheme::Mw, WeightScheme::Ow, WeightScheme::truncipw()],
        search: SearchSpace {
            n_configs: 6,
            encoder_dims: vec![20, 50],
            head_dims: vec![20, 50],
            ..SearchSpace::default()
        },
        training: TrainingOptions {
            max_epochs: 100,
            ..TrainingOptions::default()
        },
        out: dir.join("runs"),
        ..ExperimentConfig::default()
    })
}

fn main() -> bwcfr::Result<()> {
    let tmp = std::env::temp_dir().join("bwcfr_csv_benchmark");
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            std::fs::create_dir_all(&tmp)?;
            demo_config(&tmp)?
        }
    };
    let records = run_experiment(&cfg)?;
    for r in records.iter().filter(|r| r.dataset.phase.as_deref() == Some("eval")) {
        if let Some(c) = r.selected_candidate() {
            println!("{}: alpha {} {} encoder {}", r.key, c.candidate.alpha, c.candidate.ipm, c.candidate.architecture.encoder_dim);
        }
    }
    let summary = emit_report(&records, &cfg.out.join("report").join(cfg.hash()))?;
    if let Some(t) = summary.table {
        print!("{}", t.markdown());
    }
    Ok(())
}
