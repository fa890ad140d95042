//! Randomized checks of the balancing identities and bounds on discrete
//! populations, plus how balance degrades as the propensity model drifts.

use bwcfr::theorycheck::{degradation_curve, run_suite, SuiteConfig};
use bwcfr::WeightScheme;

fn main() -> bwcfr::Result<()> {
    let n = std::env::args().nth(1).map_or(200, |s| s.parse().expect("instances"));
    let report = run_suite(&SuiteConfig::with_instances(n, 1));
    for c in &report.checks {
        println!(
            "{:<10} {:>5} cases {:>3} failures  worst margin {:.3e}",
            c.check,
            c.cases,
            c.failures,
            c.worst_margin.unwrap_or(f64::NAN)
        );
    }
    println!("all passed: {}", report.pass);

    let mags = [0.0, 0.25, 0.5, 1.0, 2.0];
    let curve = degradation_curve(WeightScheme::Ow, &mags, 200, 3)?;
    for (m, kl) in mags.iter().zip(&curve) {
        println!("logit noise scale {m:.2}: mean KL between reweighted arms {kl:.4}");
    }
    Ok(())
}
