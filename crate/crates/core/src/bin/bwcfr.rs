use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bwcfr::harness::csvio::{write_csv_dataset, write_representation_csv};
use bwcfr::harness::experiment::{run_experiment_with, write_atomic, RecordStore};
use bwcfr::harness::job::{report_row, run_train_job, TrainJob, TrainedJob};
use bwcfr::harness::{emit_report, ExperimentConfig};
use bwcfr::synthgen::{build_supports, generate_toy, ToyConfig, ToyManifest};
use bwcfr::theorycheck::{replay, run_suite, CaseInput, SuiteConfig};
use bwcfr::{Error, Result};

#[derive(Parser)]
#[command(name = "bwcfr", version, about = "Balancing-weights counterfactual regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write toy train/val/test CSV files and a manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma_tilde: Option<f64>,
        #[arg(long)]
        omega: Option<usize>,
    },
    /// Train a propensity network and a CFR model; write checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a trained model directory on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Export representations and weights of a trained model.
    ExportRepr {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Run an experiment grid and write its report.
    Grid {
        #[command(flatten)]
        common: Common,
    },
    /// Run the randomized bound checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Instances per suite.
        #[arg(long)]
        instances: Option<usize>,
        /// Recompute one serialized case instead of running the suites.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Rebuild reports from the records under an output directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn read_or_default<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(v)?.as_bytes())
}

fn generate(common: &Common, gamma_tilde: Option<f64>, omega: Option<usize>) -> Result<()> {
    let mut cfg: ToyConfig = read_or_default(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(g) = gamma_tilde {
        cfg.gamma_tilde = g;
    }
    if let Some(o) = omega {
        cfg.omega = o;
    }
    let out = out_dir(common, "data");
    std::fs::create_dir_all(&out)?;
    let splits = generate_toy(&cfg)?;
    for (name, d) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        write_csv_dataset(out.join(format!("{name}.csv")), d)?;
    }
    write_json(&out.join("manifest.json"), &ToyManifest::new(&cfg, &build_supports(&cfg)?))?;
    println!(
        "wrote {} / {} / {} rows to {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        out.display()
    );
    Ok(())
}

fn train(common: &Common) -> Result<()> {
    let mut job: TrainJob = read_or_default(&common.config)?;
    if let Some(s) = common.seed {
        job = job.with_seed(s);
    }
    let out = out_dir(common, "model");
    let (trained, _) = run_train_job(&job)?;
    trained.save(&out)?;
    let t = &trained.trace;
    println!(
        "best epoch {} of {}, validation loss {}{}; checkpoints in {}",
        t.best_epoch,
        t.epochs.len() - 1,
        t.best_val_loss,
        t.aborted.as_ref().map(|a| format!(" (stopped: {a})")).unwrap_or_default(),
        out.display()
    );
    Ok(())
}

fn load_trained(common: &Common) -> Result<(TrainedJob, PathBuf)> {
    let dir = out_dir(common, "model");
    let mut trained = TrainedJob::load(&dir)?;
    if let Some(p) = &common.config {
        trained.job = TrainJob::load(p)?;
    }
    if let Some(s) = common.seed {
        trained.job = trained.job.clone().with_seed(s);
    }
    Ok((trained, dir))
}

fn evaluate(common: &Common, split: &str) -> Result<()> {
    let (trained, dir) = load_trained(common)?;
    let splits = trained.job.splits()?;
    let report = trained.evaluate(&splits, split)?;
    write_json(&dir.join(format!("eval_{split}.json")), &report)?;
    let (h, v) = report_row(&report);
    let mut w = csv::Writer::from_path(dir.join(format!("eval_{split}.csv")))?;
    w.write_record(&h)?;
    w.write_record(&v)?;
    w.flush()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn export(common: &Common, split: &str) -> Result<()> {
    let (trained, dir) = load_trained(common)?;
    let splits = trained.job.splits()?;
    let table = trained.export(&splits, split)?;
    let path = dir.join(format!("repr_{split}.csv"));
    write_representation_csv(&path, &table)?;
    println!("{} rows x {} columns -> {}", table.n_rows(), table.n_columns(), path.display());
    Ok(())
}

fn grid(common: &Common) -> Result<()> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    let hash = cfg.hash();
    eprintln!("config {hash}, writing to {}", cfg.out.display());
    let records = run_experiment_with(&cfg, &|r| {
        let v = r.report.as_ref().and_then(|x| x.sqrt_pehe_p);
        match &r.error {
            Some(e) => eprintln!("{}: failed: {e}", r.key),
            None => eprintln!(
                "{}: alpha {:?}, sqrt pehe_p {:?}, {:.1}s",
                r.key, r.alpha, v, r.wall_time_s
            ),
        }
    })?;
    let dir = cfg.out.join("report").join(&hash);
    let summary = emit_report(&records, &dir)?;
    if let Some(t) = &summary.table {
        println!("{}", t.markdown());
    }
    println!(
        "{} records ({} failed); report in {}",
        summary.n_records,
        summary.n_failed,
        dir.display()
    );
    Ok(())
}

fn verify(common: &Common, instances: Option<usize>, replay_path: &Option<PathBuf>) -> Result<bool> {
    if let Some(p) = replay_path {
        let text = std::fs::read_to_string(p)?;
        let case: CaseInput = match serde_json::from_str(&text) {
            Ok(c) => c,
            Err(_) => {
                let v: serde_json::Value = serde_json::from_str(&text)?;
                serde_json::from_value(v["input"].clone())?
            }
        };
        let report = replay(&case)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(report.pass());
    }
    let mut cfg: SuiteConfig = read_or_default(&common.config)?;
    if let Some(n) = instances {
        cfg = SuiteConfig {
            instance: cfg.instance.clone(),
            ipm_max_support: cfg.ipm_max_support,
            ..SuiteConfig::with_instances(n, cfg.seed)
        };
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let report = run_suite(&cfg);
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out)?;
        write_atomic(&out.join("verify.json"), json.as_bytes())?;
        for (i, f) in report.failures.iter().enumerate() {
            write_json(&out.join(format!("failure_{i}.json")), &f.input)?;
        }
    }
    for c in &report.checks {
        eprintln!(
            "{}: {} cases, {} failures, worst margin {:?}",
            c.check, c.cases, c.failures, c.worst_margin
        );
    }
    println!("{json}");
    Ok(report.pass)
}

fn report(common: &Common) -> Result<()> {
    let out = out_dir(common, "runs");
    let hashes: Vec<String> = match &common.config {
        Some(p) => {
            let mut cfg = ExperimentConfig::load(p)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            vec![cfg.hash()]
        }
        None => {
            let mut v = Vec::new();
            for e in std::fs::read_dir(out.join("records"))? {
                let e = e?;
                if e.file_type()?.is_dir() {
                    v.push(e.file_name().to_string_lossy().into_owned());
                }
            }
            v.sort();
            v
        }
    };
    if hashes.is_empty() {
        return Err(Error::Config(format!("no records under {}", out.display())));
    }
    for hash in hashes {
        let records = RecordStore::new(&out, &hash).load_all()?;
        let dir = out.join("report").join(&hash);
        let summary = emit_report(&records, &dir)?;
        if let Some(t) = &summary.table {
            println!("{}", t.markdown());
        }
        println!("{hash}: {} records -> {}", summary.n_records, dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate {
            common,
            gamma_tilde,
            omega,
        } => generate(common, *gamma_tilde, *omega).map(|_| true),
        Command::Train { common } => train(common).map(|_| true),
        Command::Evaluate { common, split } => evaluate(common, split).map(|_| true),
        Command::ExportRepr { common, split } => export(common, split).map(|_| true),
        Command::Grid { common } => grid(common).map(|_| true),
        Command::Verify {
            common,
            instances,
            replay,
        } => verify(common, *instances, replay),
        Command::Report { common } => report(common).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
