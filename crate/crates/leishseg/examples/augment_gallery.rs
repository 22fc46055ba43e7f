//! Applies each of the eight dihedral ops to one synthetic image and
//! writes the results side by side, so the label maps can be checked for
//! pixel-exact co-transformation with the RGB planes.
//!
//!     cargo run --example augment_gallery [-- <out_dir>]

use std::path::PathBuf;

use leishseg::data::augment::{augment, ALL_AUGMENTS};
use leishseg::data::io::{save_labelmap, save_rgb};
use leishseg::data::synth::{synth_generate, SynthParams};
use leishseg::error::Result;

fn main() -> Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "augment-demo".into())
        .into();
    std::fs::create_dir_all(&out).expect("create output directory");

    let mut params = SynthParams::parasite_dense();
    params.count = 1;
    params.seed = 7;
    let image = synth_generate(&params)?.remove(0);

    for op in ALL_AUGMENTS {
        let transformed = augment(&image, op)?;
        save_rgb(&out.join(format!("{}.png", op.name())), &transformed.rgb)?;
        save_labelmap(
            &out.join(format!("{}_labels.png", op.name())),
            &transformed.labels,
        )?;
        println!("{}", op.name());
    }
    println!();
    println!("wrote eight variants under {}", out.display());
    Ok(())
}
