use leishseg::data::io::load_rgb;
use leishseg::data::io::read_manifest;
use leishseg::data::io::load_entry;
use leishseg::data::NUM_CLASSES;
use leishseg::error::Result;
use leishseg::tensor::Tensor;
use leishseg::unet::checkpoint::load_checkpoint;

fn main() -> Result<()> {
    let ckpt = load_checkpoint::<f64>("/tmp/desk-probe/train/last.ckpt".as_ref())?;
    let entries = read_manifest("/tmp/desk-probe/dataset/manifest.csv".as_ref())?;
    let entry = &entries[0];
    let image = load_entry(entry)?;
    let rgb = load_rgb(&entry.rgb)?;
    let (_c, h, w) = rgb.dims3()?;
    let input = Tensor::new(vec![1, 3, h, w], rgb.data().to_vec())?;
    let (probs, _) = ckpt.model.forward(&input)?;

    // mean predicted probability vector per ground-truth class
    let mut sums = vec![[0.0f64; NUM_CLASSES]; NUM_CLASSES];
    let mut counts = vec![0usize; NUM_CLASSES];
    for r in 0..h {
        for c in 0..w {
            let gt = image.labels.get(r, c) as usize;
            counts[gt] += 1;
            for ch in 0..NUM_CLASSES {
                sums[gt][ch] += probs.data()[ch * h * w + r * w + c];
            }
        }
    }
    println!("rows: GT class; cols: mean predicted prob");
    println!("{:<4} {:>8} {:>6}  bg    cyt   nuc   pro   adh   ama   unk", "gt", "px", "");
    for gt in 0..NUM_CLASSES {
        if counts[gt] == 0 {
            continue;
        }
        print!("{:<4} {:>8} {:>6}", gt, counts[gt], "");
        for ch in 0..NUM_CLASSES {
            print!(" {:.3}", sums[gt][ch] / counts[gt] as f64);
        }
        println!();
    }
    Ok(())
}
