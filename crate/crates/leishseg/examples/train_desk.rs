//! Synthesizes the desk-scale dataset and trains on it, using the same
//! settings as `presets/desk.conf`. Expect roughly ten minutes of wall
//! time; pass an output directory to keep the run.
//!
//!     cargo run --release --example train_desk [-- <out_dir>]

use leishseg::config::Config;
use leishseg::error::Result;
use leishseg::pipeline::{run_synth, run_train};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "desk-run".into());
    let mut config = Config::new();
    config.apply_file(concat!(env!("CARGO_MANIFEST_DIR"), "/presets/desk.conf").as_ref())?;
    config.set("out", &out)?;

    let synth = run_synth(&config)?;
    println!("dataset: {} images under {}", synth.count, synth.dir.display());

    let train = run_train(&config)?;
    println!(
        "trained {} epochs, final train loss {:.4}, best val {:.4}",
        train.epochs_run,
        train.final_train_loss.unwrap_or(f64::NAN),
        train.best_val.unwrap_or(f64::NAN),
    );
    println!("loss log: {}", train.loss_log.display());
    println!("best checkpoint: {}", train.best_checkpoint.display());
    Ok(())
}
