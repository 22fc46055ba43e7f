//! Generates a small synthetic dataset and prints what was placed on each
//! canvas: cells, the three parasite kinds, and stain blobs. Images and
//! label maps land under a target directory.
//!
//!     cargo run --example synthesize_dataset [-- <out_dir>]

use std::path::PathBuf;

use leishseg::data::io::{save_labelmap, save_rgb};
use leishseg::data::synth::{synth_generate_detailed, SynthParams};
use leishseg::error::Result;

fn main() -> Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synth-demo".into())
        .into();
    std::fs::create_dir_all(&out).expect("create output directory");

    let mut params = SynthParams::parasite_dense();
    params.count = 6;
    params.seed = 42;

    println!(
        "{:<12} {:>6} {:>14} {:>8} {:>12} {:>6}",
        "image", "cells", "promastigotes", "adhered", "amastigotes", "blobs"
    );
    for output in synth_generate_detailed(&params)? {
        let [pro, adh, ama] = output.parasite_counts;
        println!(
            "{:<12} {:>6} {:>14} {:>8} {:>12} {:>6}",
            output.image.id, output.cell_count, pro, adh, ama, output.blob_count
        );
        save_rgb(&out.join(format!("{}.png", output.image.id)), &output.image.rgb)?;
        save_labelmap(
            &out.join(format!("{}_labels.png", output.image.id)),
            &output.image.labels,
        )?;
    }
    println!();
    println!("wrote images and label maps under {}", out.display());
    Ok(())
}
