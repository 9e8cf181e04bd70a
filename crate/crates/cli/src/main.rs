//! Command-line front end for the specmask toolkit.
//!
//! The heavy lifting lives in the `specmask` library; this binary parses
//! arguments, applies config overrides, and prints result tables.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use specmask::basis::build_trig_basis;
use specmask::eval::{emit_report, mse, normalize_groups, ResultTable};
use specmask::experiment::{run_experiment, ExperimentConfig, ModelChoice};
use specmask::filters::ppo_forward;
use specmask::io::{read_signal_matrix_verified, sha256_hex, write_signal_matrix};
use specmask::nn::load_checkpoint;

#[derive(Parser)]
#[command(
    name = "specmask",
    version,
    about = "Spectral filtering with learned soft masks, rule-based projections, and DAE baselines"
)]
struct Cli {
    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides out_dir in the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GenDataArgs {
    /// Destination dataset file.
    path: PathBuf,
    /// Samples per row.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Largest basis frequency index (coefficient count is 2*max_index + 2).
    #[arg(long, default_value_t = 31)]
    max_index: usize,
    #[arg(long, default_value_t = 2000)]
    rows: usize,
    /// Coefficient indices allowed to be non-zero.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7")]
    active: Vec<usize>,
    /// Coefficient amplitude range, low then high.
    #[arg(long, num_args = 2, default_values_t = [-1.0, 1.0], allow_negative_numbers = true)]
    amplitude: Vec<f64>,
}

#[derive(Args)]
struct PrepWavArgs {
    /// Directory of mono 48 kHz WAV files.
    wav_dir: PathBuf,
    /// Destination dataset file.
    path: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic band-limited dataset file.
    GenData(GenDataArgs),
    /// Segment a directory of WAV files into a dataset file.
    PrepWav(PrepWavArgs),
    /// Train one model from the config and write its checkpoint.
    Train {
        /// Model to train: ppo1..ppo3 or dae1..dae3.
        #[arg(long)]
        model: String,
    },
    /// Score a checkpoint against a frozen evaluation pair.
    Eval {
        /// Checkpoint written by `train` or `run`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory holding eval_clean.sig, eval_noisy.sig, eval_hashes.txt.
        #[arg(long)]
        eval_dir: PathBuf,
    },
    /// Run the full experiment from the config file.
    Run,
    /// Re-normalize a raw results CSV and emit the report artifacts.
    Report {
        /// CSV with dataset, scaler, model, and raw_mse columns.
        #[arg(long)]
        raw: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(args) => gen_data(&cli, args),
        Command::PrepWav(args) => prep_wav(args),
        Command::Train { model } => {
            let token: ModelChoice = model.parse()?;
            if matches!(token, ModelChoice::Po(_)) {
                bail!("{model} is rule-based and needs no training; use `run` to evaluate it");
            }
            let mut config = load_config(&cli)?;
            config.models = vec![token];
            run_and_print(&config)
        }
        Command::Eval { checkpoint, eval_dir } => eval_checkpoint(&cli, checkpoint, eval_dir),
        Command::Run => {
            let config = load_config(&cli)?;
            run_and_print(&config)
        }
        Command::Report { raw } => report(&cli, raw),
    }
}

/// Loads the TOML config and applies the global `--seed`/`--out` overrides.
fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .context("this subcommand needs --config <path>")?;
    let mut config = ExperimentConfig::load(path)
        .with_context(|| format!("cannot load config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn run_and_print(config: &ExperimentConfig) -> Result<()> {
    let table = run_experiment(config)?;
    print_table(&table);
    println!("artifacts: {}", config.out_dir.display());
    Ok(())
}

fn print_table(table: &ResultTable) {
    println!(
        "{:<10} {:<10} {:<16} {:>14} {:>12}",
        "dataset", "scaler", "model", "raw_mse", "normalized"
    );
    for row in table.rows() {
        println!(
            "{:<10} {:<10} {:<16} {:>14.6e} {:>12.4}",
            row.dataset, row.scaler, row.model, row.raw_mse, row.normalized_mse
        );
    }
    for (dataset, scaler) in table.degenerate_groups() {
        println!("note: group {dataset}/{scaler} has max MSE 0 (every model is exact); normalized values reported as 0");
    }
}

fn gen_data(cli: &Cli, args: &GenDataArgs) -> Result<()> {
    let basis = build_trig_basis(args.samples, args.max_index)?;
    let (signal, _) = specmask::data::synth_bandlimited_dataset(
        &basis,
        args.rows,
        &args.active,
        (args.amplitude[0], args.amplitude[1]),
        cli.seed.unwrap_or(0),
    )?;
    write_signal_matrix(&args.path, &signal)?;
    println!(
        "wrote {} rows x {} samples to {} (sha256 {})",
        signal.rows(),
        signal.cols(),
        args.path.display(),
        sha256_hex(&args.path)?
    );
    Ok(())
}

fn prep_wav(args: &PrepWavArgs) -> Result<()> {
    let dataset = specmask::experiment::load_wav_dir(&args.wav_dir)?;
    write_signal_matrix(&args.path, &dataset)?;
    println!(
        "wrote {} rows x {} samples to {}",
        dataset.rows(),
        dataset.cols(),
        args.path.display()
    );
    Ok(())
}

fn eval_checkpoint(cli: &Cli, checkpoint: &Path, eval_dir: &Path) -> Result<()> {
    let config = load_config(cli)?;
    let basis = build_trig_basis(config.basis.samples, config.basis.max_index)?;
    let (mlp, _scaler) = load_checkpoint(checkpoint)?;

    let hashes = std::fs::read_to_string(eval_dir.join("eval_hashes.txt"))
        .with_context(|| format!("no eval_hashes.txt in {}", eval_dir.display()))?;
    let lookup = |file: &str| -> Result<String> {
        hashes
            .lines()
            .find_map(|line| line.strip_prefix(&format!("{file} ")))
            .map(str::to_string)
            .with_context(|| format!("{file} missing from eval_hashes.txt"))
    };
    let clean_hash = lookup("eval_clean.sig")?;
    let noisy_hash = lookup("eval_noisy.sig")?;
    let clean = read_signal_matrix_verified(&eval_dir.join("eval_clean.sig"), &clean_hash)?;
    let noisy = read_signal_matrix_verified(&eval_dir.join("eval_noisy.sig"), &noisy_hash)?;

    // The checkpoint's head tells the two families apart: mask models emit
    // one value per coefficient, autoencoders reconstruct the signal.
    let denoised = if mlp.output_dim() == basis.dim() {
        ppo_forward(&basis, &mlp, &noisy)?.0
    } else if mlp.output_dim() == basis.samples() {
        let cache = mlp.forward(noisy.array())?;
        specmask::basis::SignalMatrix::new(cache.output().clone())?
    } else {
        bail!(
            "checkpoint output width {} matches neither the coefficient count {} nor the sample count {}",
            mlp.output_dim(),
            basis.dim(),
            basis.samples()
        );
    };
    println!("eval mse: {:.16e}", mse(&denoised, &clean)?);
    Ok(())
}

fn report(cli: &Cli, raw: &Path) -> Result<()> {
    let out_dir = cli.out.as_deref().context("report needs --out <dir>")?;
    let rows = ResultTable::read_raw_csv(raw)?;
    let table = normalize_groups(&rows)?;
    std::fs::create_dir_all(out_dir)?;
    let files = emit_report(&table, out_dir)?;
    print_table(&table);
    for file in files {
        println!("wrote {}", file.display());
    }
    Ok(())
}
