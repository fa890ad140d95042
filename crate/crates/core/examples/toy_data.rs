//! Generates one toy dataset, prints its imbalance and writes the CSV
//! splits.
//!
//!     cargo run --example toy_data -- 2.5 20 /tmp/toy

use bwcfr::harness::write_csv_dataset;
use bwcfr::synthgen::{generate_toy, ToyConfig};

fn main() -> bwcfr::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let cfg = ToyConfig {
        gamma_tilde: args.get(1).map_or(2.5, |s| s.parse().expect("gamma_tilde")),
        omega: args.get(2).map_or(20, |s| s.parse().expect("omega")),
        seed: 7,
        ..ToyConfig::default()
    };
    let s = generate_toy(&cfg)?;
    let d = &s.train;
    let (t, c) = (d.treated_indices(), d.control_indices());
    let gap: f64 = (0..d.dim())
        .map(|j| {
            let m = |idx: &[usize]| idx.iter().map(|&i| d.x.get(i, j)).sum::<f64>() / idx.len() as f64;
            (m(&t) - m(&c)).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let tau = d.tau_true().unwrap();
    println!(
        "gamma_tilde {} omega {}: {} treated of {}, |mean gap| {gap:.3}, sample ATE {:.3}",
        cfg.gamma_tilde,
        cfg.omega,
        t.len(),
        d.len(),
        tau.iter().sum::<f64>() / tau.len() as f64
    );
    println!("outcome support {:?}", s.supports.b);
    println!("treatment support {:?}", s.supports.g);

    if let Some(dir) = args.get(3) {
        std::fs::create_dir_all(dir)?;
        for (name, split) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
            write_csv_dataset(format!("{dir}/{name}.csv"), split)?;
        }
        println!("wrote {dir}/{{train,val,test}}.csv");
    }
    Ok(())
}
