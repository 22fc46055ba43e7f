use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leishseg::config::Config;
use leishseg::error::Result;
use leishseg::pipeline;

/// Segmentation of Leishmania micrographs: synthetic data, U-Net
/// training, tiled prediction and a pixel/region evaluation report.
///
/// Settings resolve in order: built-in defaults, then LEISHSEG_OUT_ROOT
/// for the output root, then the --config file, then --set overrides.
#[derive(Parser)]
#[command(name = "leishseg", version)]
struct Cli {
    /// Configuration file with one `key = value` per line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one setting, e.g. --set train.lr=3e-4. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with images, label maps and a manifest.
    Synth,
    /// Train the network on the manifest's train split.
    Train,
    /// Write predicted label maps for a split, or for explicit image files.
    Predict {
        /// RGB images to segment instead of the configured split.
        images: Vec<PathBuf>,
    },
    /// Score predictions against ground truth and write report files.
    Evaluate,
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut config = Config::new();
    if let Ok(root) = std::env::var("LEISHSEG_OUT_ROOT") {
        if !root.is_empty() {
            config.set("out", &root)?;
        }
    }
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    for pair in &cli.set {
        config.apply_override(pair)?;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = build_config(cli)?;
    match &cli.command {
        Command::Synth => {
            let summary = pipeline::run_synth(&config)?;
            println!(
                "wrote {} labeled images under {}",
                summary.count,
                summary.dir.display()
            );
            println!("manifest: {}", summary.manifest.display());
        }
        Command::Train => {
            let summary = pipeline::run_train(&config)?;
            println!(
                "ran {} of {} epochs",
                summary.epochs_run, summary.total_epochs
            );
            if let Some(loss) = summary.final_train_loss {
                println!("final train loss: {loss:.6}");
            }
            if let Some(best) = summary.best_val {
                println!("best validation loss: {best:.6}");
            }
            println!("loss log: {}", summary.loss_log.display());
            println!("best checkpoint: {}", summary.best_checkpoint.display());
            println!("last checkpoint: {}", summary.last_checkpoint.display());
        }
        Command::Predict { images } => {
            let summary = pipeline::run_predict(&config, images)?;
            println!(
                "wrote {} label maps under {}",
                summary.written.len(),
                summary.dir.display()
            );
        }
        Command::Evaluate => {
            let summary = pipeline::run_evaluate(&config)?;
            print!("{}", summary.report.render_text());
            println!("report files under {}", summary.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
