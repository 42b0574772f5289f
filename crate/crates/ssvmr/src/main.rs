use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ssvmr::commands::{cmd_ablate, cmd_augment, cmd_eval, cmd_gen, cmd_train, Grid};
use ssvmr::config::{default_config_text, load_config};
use ssvmr::report::{ablation_table, eval_table};
use ssvmr::Result;
use ssvmr_core::dataset::SyntheticSpec;

#[derive(Parser)]
#[command(name = "ssvmr", version, about = "Noise-robust video-music retrieval training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Components,
    Spans,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with controlled label noise.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        #[arg(long, default_value_t = 16)]
        latent_dim: usize,
        #[arg(long, default_value_t = 128)]
        d_v: usize,
        #[arg(long, default_value_t = 128)]
        d_m: usize,
        #[arg(long, default_value_t = 8)]
        frames_min: usize,
        #[arg(long, default_value_t = 16)]
        frames_max: usize,
        /// Fraction of training pairs given a wrong music item.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        /// Standard deviation of per-frame feature noise.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the music-to-video model and write the back-retrieval augmented manifest.
    Augment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Recall@K of a checkpoint on a query/gallery split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        videos: PathBuf,
        #[arg(long)]
        music: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 10, 25])]
        ks: Vec<usize>,
        /// JSONL report path; an aligned text table is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the component ablation and/or span-count grids.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        grid: GridArg,
        #[arg(long, default_value_t = 4)]
        max_spans: usize,
        /// Train variants concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Print the default configuration.
    PrintConfig,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { out, pairs, test, latent_dim, d_v, d_m, frames_min, frames_max, noise, sigma, seed } => {
            let spec = SyntheticSpec {
                n_pairs: pairs,
                n_test: test,
                latent_dim,
                d_v,
                d_m,
                frames_min,
                frames_max,
                noise_rate: noise,
                feature_noise_sigma: sigma,
                seed,
            };
            let s = cmd_gen(&out, &spec)?;
            println!(
                "wrote {} training pairs ({} corrupted, {:.3}), {} test pairs, d_v {} d_m {}; config at {}",
                s.train_pairs,
                s.corrupted,
                s.corrupted as f64 / s.train_pairs as f64,
                s.test_pairs,
                s.d_v,
                s.d_m,
                s.config.display()
            );
        }
        Command::Augment { config } => {
            let report = cmd_augment(&load_config(&config)?)?;
            println!("added {} back-retrieved pairs (top-{}, seed {})", report.entries.len(), report.top_k, report.seed);
        }
        Command::Train { config, quiet } => {
            let s = cmd_train(&load_config(&config)?, !quiet)?;
            println!("checkpoint {} ({})", s.checkpoint.display(), s.checkpoint_id);
            if let Some(t) = s.outcome.epochs.last().and_then(|e| e.test.as_ref()) {
                print!("{}", eval_table(t));
            }
        }
        Command::Eval { checkpoint, videos, music, pairs, ks, out } => {
            let r = cmd_eval(&checkpoint, &videos, &music, &pairs, &ks, out.as_deref())?;
            print!("{}", eval_table(&r));
        }
        Command::Ablate { config, grid, max_spans, parallel } => {
            let grid = match grid {
                GridArg::Components => Grid::Components,
                GridArg::Spans => Grid::Spans,
                GridArg::Both => Grid::Both,
            };
            let rows = cmd_ablate(&load_config(&config)?, grid, max_spans, parallel)?;
            print!("{}", ablation_table(&rows));
        }
        Command::PrintConfig => print!("{}", default_config_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
