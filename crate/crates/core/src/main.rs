use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use mml_core::experiment::{self, ExperimentConfig};
use mml_core::io::{format_matching, read_market};
use mml_core::market::{sinkhorn_balance, DEFAULT_SINKHORN_MAX_ITERS, DEFAULT_SINKHORN_TOL};
use mml_core::{deferred_acceptance, enumerate_stable, prefs_from_latent, sample_latent, Result, Side};

/// Random two-sided matching markets: balancing, enumeration and
/// Monte Carlo experiments.
#[derive(Parser)]
#[command(name = "mml", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Balance a market file and print its fitness vectors and contiguity constant.
    Balance {
        market: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SINKHORN_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_SINKHORN_MAX_ITERS)]
        max_iters: usize,
    },
    /// Run an experiment config and write trials.csv, summary.json and summary.txt.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw latent values for a market and list all stable matchings.
    Enumerate {
        market: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Print per-statistic summaries of a trials.csv file.
    Summarize { csv: PathBuf },
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(" ")
}

fn balance_cmd(market: PathBuf, tol: f64, max_iters: usize) -> Result<bool> {
    let bal = sinkhorn_balance(&read_market(&market)?, tol, max_iters)?;
    println!("n {}", bal.n());
    println!("iterations {}", bal.sinkhorn_iters());
    println!("residual {:e}", bal.residual());
    println!("contiguity {}", bal.c_bound());
    println!("phi {}", join(bal.phi().iter().copied()));
    println!("psi {}", join(bal.psi().iter().copied()));
    println!("mutual");
    for row in bal.m().rows() {
        println!("{}", join(row.iter().copied()));
    }
    Ok(true)
}

fn run_cmd(config: PathBuf, out: PathBuf) -> Result<bool> {
    let cfg = ExperimentConfig::from_file(&config)?.with_env_overrides()?;
    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = Arc::clone(&cancel);
        // a second handler cannot be installed; running without one is fine
        let _ = ctrlc::set_handler(move || cancel.store(true, Ordering::Relaxed));
    }
    let output = experiment::run_experiment(&cfg, &cancel)?;
    let summary = experiment::build_summary(&output)?;
    experiment::write_outputs(&out, &output, &summary)?;
    print!("{}", experiment::render_summary(&summary));
    if output.interrupted {
        return Err(mml_core::MmlError::InvalidArgument(format!(
            "interrupted; partial results written to {}",
            out.display()
        )));
    }
    Ok(summary.all_pass)
}

fn enumerate_cmd(market: PathBuf, seed: u64) -> Result<bool> {
    let bal = mml_core::balance(&read_market(&market)?)?;
    let values = sample_latent(&bal, seed)?;
    let prefs = prefs_from_latent(&values)?;
    let all = enumerate_stable(&prefs)?;
    let mosm = deferred_acceptance(&prefs, Side::Men).matching;
    let wosm = deferred_acceptance(&prefs, Side::Women).matching;
    println!("# {} stable matchings", all.len());
    for (k, mu) in all.iter().enumerate() {
        let tag = match (mu == &mosm, mu == &wosm) {
            (true, true) => " (man- and woman-optimal)",
            (true, false) => " (man-optimal)",
            (false, true) => " (woman-optimal)",
            _ => "",
        };
        println!("\n# matching {}{tag}", k + 1);
        print!("{}", format_matching(mu));
    }
    Ok(true)
}

fn summarize_cmd(csv: PathBuf) -> Result<bool> {
    let records = experiment::read_records(&csv)?;
    print!("{}", experiment::summary::render_stats(&experiment::summarize(&records)?));
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Balance { market, tol, max_iters } => balance_cmd(market, tol, max_iters),
        Command::Run { config, out } => run_cmd(config, out),
        Command::Enumerate { market, seed } => enumerate_cmd(market, seed),
        Command::Summarize { csv } => summarize_cmd(csv),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
