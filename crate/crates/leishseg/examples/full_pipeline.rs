//! The whole pipeline on a miniature setup: synthesize a handful of
//! images, train a small network briefly, predict the test split, and
//! print the evaluation report. Finishes in well under a minute; scores
//! are modest at this scale.
//!
//!     cargo run --release --example full_pipeline [-- <out_dir>]

use leishseg::config::Config;
use leishseg::error::Result;
use leishseg::pipeline::{run_evaluate, run_predict, run_synth, run_train};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mini-run".into());
    let mut config = Config::new();
    config.set("out", &out)?;
    config.set("synth.profile", "parasite-dense")?;
    config.set("synth.count", "10")?;
    config.set("patch.size", "64")?;
    config.set("patch.stride", "32")?;
    config.set("sampler.threshold", "0.05")?;
    config.set("sampler.stage1_epochs", "3")?;
    config.set("sampler.stage2_epochs", "3")?;
    config.set("model.depth", "2")?;
    config.set("model.base_filters", "8")?;
    config.set("train.batch", "8")?;
    config.set("train.lr", "1e-3")?;

    let synth = run_synth(&config)?;
    println!("synth:    {} images under {}", synth.count, synth.dir.display());

    let train = run_train(&config)?;
    println!(
        "train:    {} epochs, best val loss {:.4}",
        train.epochs_run,
        train.best_val.unwrap_or(f64::NAN)
    );

    let predict = run_predict(&config, &[])?;
    println!(
        "predict:  {} label maps under {}",
        predict.written.len(),
        predict.dir.display()
    );

    let eval = run_evaluate(&config)?;
    println!("evaluate: report under {}", eval.dir.display());
    println!();
    print!("{}", eval.report.render_text());
    Ok(())
}
