//! Trains a small model and writes its learned representations with the
//! balancing weight, treatment and outcome of every unit.

use bwcfr::cfr::{export_representations, train_cfr, Architecture};
use bwcfr::harness::csvio::write_representation_csv;
use bwcfr::propensity::{train_propensity, PropensityConfig};
use bwcfr::synthgen::{generate_toy, ToyConfig};
use bwcfr::{TrainConfig, WeightScheme};

fn main() -> bwcfr::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "repr.csv".into());
    let s = generate_toy(&ToyConfig {
        gamma_tilde: 3.0,
        ..ToyConfig::default()
    })?;
    let prop = train_propensity(&s.train, &PropensityConfig::default(), 0)?.model;
    let cfg = TrainConfig {
        alpha: 1.0,
        scheme: WeightScheme::Mw,
        architecture: Architecture {
            rep_dim: 2,
            ..Architecture::default()
        },
        ..TrainConfig::default()
    };
    let fit = train_cfr(&s.train, &s.val, &prop, &cfg)?;
    let table = export_representations(&fit.model, &prop, cfg.scheme, &s.train)?;
    write_representation_csv(&path, &table)?;
    println!("{} rows, columns {:?} -> {path}", table.n_rows(), table.header());
    Ok(())
}
