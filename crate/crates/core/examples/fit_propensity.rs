//! Fits the class-balanced propensity network on toy data and compares it
//! with the true assignment probabilities.

use bwcfr::propensity::{train_propensity, PropensityConfig};
use bwcfr::synthgen::{generate_toy, ToyConfig};

fn main() -> bwcfr::Result<()> {
    let gamma_tilde = std::env::args().nth(1).map_or(1.0, |s| s.parse().expect("gamma_tilde"));
    let splits = generate_toy(&ToyConfig {
        gamma_tilde,
        seed: 4,
        ..ToyConfig::default()
    })?;
    let fit = train_propensity(&splits.train, &PropensityConfig::default(), 4)?;
    println!(
        "{} epochs, final loss {:.4}, plateau: {}",
        fit.losses.len(),
        fit.losses.last().copied().unwrap_or(f64::NAN),
        fit.stopped_on_plateau
    );

    let test = &splits.test;
    let e_hat = fit.model.predict(&test.x)?;
    let e_true = test.e_true.as_ref().expect("toy data carries true propensities");
    let mae = e_hat.iter().zip(e_true).map(|(a, b)| (a - b).abs()).sum::<f64>() / e_hat.len() as f64;
    let mean = e_hat.iter().sum::<f64>() / e_hat.len() as f64;
    println!("test units {}, mean prediction {mean:.3}, mean |e_hat - e| {mae:.3}", test.len());
    println!("treated share {:.3}", test.n_treated() as f64 / test.len() as f64);
    for i in 0..5 {
        println!("  unit {i}: t={} e={:.3} e_hat={:.3}", test.t[i] as u8, e_true[i], e_hat[i]);
    }
    Ok(())
}
