//! Segments one RGB image with a trained checkpoint: tiles it over the
//! patch grid, averages overlapping probabilities, and writes the argmax
//! label map next to the input.
//!
//!     cargo run --release --example predict_image -- <checkpoint> <image.png>

use std::path::{Path, PathBuf};

use leishseg::data::class_name;
use leishseg::data::io::{load_rgb, save_labelmap};
use leishseg::error::Result;
use leishseg::pipeline::predict_image;
use leishseg::unet::checkpoint::load_checkpoint;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let (ckpt_path, image_path) = match (args.next(), args.next()) {
        (Some(c), Some(i)) => (PathBuf::from(c), PathBuf::from(i)),
        _ => {
            eprintln!("usage: predict_image <checkpoint> <image.png>");
            std::process::exit(1);
        }
    };

    let ckpt = load_checkpoint::<f64>(&ckpt_path)?;
    let rgb = load_rgb(&image_path)?;
    let labels = predict_image(&ckpt.model, &rgb, 64, 32)?;

    let mut hist = [0usize; 256];
    for &v in labels.data() {
        hist[v as usize] += 1;
    }
    let total: usize = hist.iter().sum();
    println!("predicted class mix:");
    for (class_id, &count) in hist.iter().enumerate().take(7) {
        if count > 0 {
            println!(
                "  {:<13} {:>8} px  ({:.1} %)",
                class_name(class_id as u8),
                count,
                100.0 * count as f64 / total as f64
            );
        }
    }

    let out = image_path.with_file_name(format!(
        "{}_pred.png",
        Path::new(&image_path).file_stem().unwrap().to_string_lossy()
    ));
    save_labelmap(&out, &labels)?;
    println!("label map: {}", out.display());
    Ok(())
}
