//! Trains CFR with overlap weights and a Sinkhorn penalty on toy data and
//! prints the evaluation report.

use bwcfr::cfr::train_cfr;
use bwcfr::metrics::evaluate;
use bwcfr::propensity::{train_propensity, PropensityConfig};
use bwcfr::synthgen::{generate_toy, ToyConfig};
use bwcfr::{IpmSpec, TrainConfig, WeightScheme};

fn main() -> bwcfr::Result<()> {
    let s = generate_toy(&ToyConfig {
        gamma_tilde: 2.5,
        seed: 11,
        ..ToyConfig::default()
    })?;
    let prop = train_propensity(&s.train, &PropensityConfig::default(), 11)?.model;
    for scheme in [WeightScheme::Uniform, WeightScheme::Ow] {
        let cfg = TrainConfig {
            alpha: 1.0,
            ipm: IpmSpec::wass(),
            scheme,
            seed: 11,
            ..TrainConfig::default()
        };
        let fit = train_cfr(&s.train, &s.val, &prop, &cfg)?;
        let r = evaluate(&fit.model, &prop, scheme, &s.train, &s.test)?;
        println!(
            "{scheme}: best epoch {}, sqrt PEHE_p {:.3}, ATE_p {:.3} (true {:.3}), DR ATE_g {:.3}",
            fit.trace.best_epoch,
            r.sqrt_pehe_p.unwrap(),
            r.ate_p_hat,
            r.ate_p_true.unwrap(),
            r.ate_dr.unwrap_or(f64::NAN)
        );
        for t in r.targets.iter().filter(|t| t.propensity == "true") {
            println!("    g = {:<8} sqrt PEHE_g {:.3}", t.tilting, t.sqrt_pehe_g.unwrap_or(f64::NAN));
        }
    }
    Ok(())
}
