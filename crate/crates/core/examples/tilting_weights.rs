//! Tilting functions and balancing weights of every scheme over a range of
//! propensities.

use bwcfr::WeightScheme;

fn main() -> bwcfr::Result<()> {
    let schemes = [
        WeightScheme::Uniform,
        WeightScheme::Ipw,
        WeightScheme::truncipw(),
        WeightScheme::Mw,
        WeightScheme::Ow,
    ];
    println!("{:>6} {:>9} {:>8} {:>8} {:>8}", "e", "scheme", "f(e)", "w(t=1)", "w(t=0)");
    for e in [0.02, 0.1, 0.3, 0.5, 0.7, 0.95] {
        for s in schemes {
            let f = if s == WeightScheme::Uniform { 1.0 } else { s.tilting(e)? };
            println!(
                "{e:>6.2} {:>9} {f:>8.3} {:>8.3} {:>8.3}",
                s.name(),
                s.balancing_weight(e, true)?,
                s.balancing_weight(e, false)?
            );
        }
    }

    // overlap weights: each arm's weight mass, normalized, gives the same
    // tilted population
    let e = [0.2, 0.5, 0.9, 0.6];
    let t = [true, false, true, false];
    let w = WeightScheme::Ow.weights_from_propensity(&e, &t)?;
    println!("overlap weights for e={e:?}, t={t:?}: {w:?}");
    Ok(())
}
