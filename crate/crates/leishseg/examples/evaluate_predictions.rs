//! Scores a directory of predicted label maps against ground truth and
//! prints the full report: per-class pixel metrics, detection fractions
//! by Jaccard threshold, and size-filtered parasite counts.
//!
//! The dataset directory must hold a `manifest.csv` written by the synth
//! stage; predictions are matched to manifest ids by file name.
//!
//!     cargo run --release --example evaluate_predictions -- <dataset_dir> <pred_dir>

use leishseg::config::Config;
use leishseg::error::Result;
use leishseg::pipeline::run_evaluate;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let (dataset, preds) = match (args.next(), args.next()) {
        (Some(d), Some(p)) => (d, p),
        _ => {
            eprintln!("usage: evaluate_predictions <dataset_dir> <pred_dir>");
            std::process::exit(1);
        }
    };

    let mut config = Config::new();
    config.set("data.dir", &dataset)?;
    config.set("eval.pred_dir", &preds)?;
    config.set("out", &std::env::temp_dir().join("leishseg-eval").display().to_string())?;

    let summary = run_evaluate(&config)?;
    print!("{}", summary.report.render_text());
    println!();
    println!("csv files under {}", summary.dir.display());
    Ok(())
}
