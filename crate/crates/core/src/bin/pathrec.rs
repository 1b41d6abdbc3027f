//! Command-line front door: corpus generation, statistics, training runs,
//! baselines, and comparisons, all emitting deterministic CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pathrec::corpus::{generate_linear_corpus, load_corpus, GeneratorConfig};
use pathrec::experiment::{
    corpus_stats, run_comparison, run_experiment, stats_to_csv, write_atomic, ExperimentConfig,
    ExperimentError,
};

#[derive(Parser)]
#[command(name = "pathrec", about = "Learning-path recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic linear corpus and print its statistics.
    Generate {
        /// Number of documents.
        #[arg(long)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minimum fresh keywords per document.
        #[arg(long, default_value_t = 2)]
        new_min: usize,
        #[arg(long, default_value_t = 3)]
        new_max: usize,
        /// Minimum reused keywords per document.
        #[arg(long, default_value_t = 2)]
        reuse_min: usize,
        #[arg(long, default_value_t = 3)]
        reuse_max: usize,
        /// How many previous documents to reuse keywords from.
        #[arg(long, default_value_t = 3)]
        window: usize,
        /// Output corpus file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus statistics; optionally write them as CSV.
    Stats {
        corpus: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a training experiment from a config file.
    Train { config: PathBuf },
    /// Run several experiments sharing a corpus and join their final
    /// statistics.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        /// Write the joined CSV here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Generate { docs, seed, new_min, new_max, reuse_min, reuse_max, window, out } => {
            let cfg = GeneratorConfig {
                n_docs: docs,
                new_kw_per_doc: (new_min, new_max),
                reuse_per_doc: (reuse_min, reuse_max),
                reuse_window: window,
                seed,
            };
            let corpus = generate_linear_corpus(&cfg)?;
            write_atomic(&out, &corpus.to_file_format())?;
            let stats = corpus_stats(&corpus);
            println!("wrote {} ({} documents)", out.display(), corpus.doc_count());
            print!("{}", stats_to_csv(&stats));
        }
        Command::Stats { corpus, csv } => {
            let stats = corpus_stats(&load_corpus(&corpus)?);
            print!("{}", stats_to_csv(&stats));
            if let Some(path) = csv {
                write_atomic(&path, &stats_to_csv(&stats))?;
            }
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg)?;
            println!(
                "final return: {:.2} ± {:.2} over {} seeds ({} episodes)",
                out.summary.final_mean,
                out.summary.final_stddev,
                out.curves.len(),
                cfg.train.episodes
            );
            println!("wrote {}", cfg.output_dir.join("curves.csv").display());
            println!("wrote {}", cfg.output_dir.join("summary.csv").display());
        }
        Command::Compare { configs, out } => {
            let mut labeled = Vec::new();
            for path in &configs {
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                labeled.push((label, ExperimentConfig::load(path)?));
            }
            let csv = run_comparison(&labeled)?;
            print!("{csv}");
            if let Some(path) = out {
                write_atomic(&path, &csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
