//! Sanity check for the training step: drive the loss on one fixed patch
//! toward zero. A correct forward/backward/Adam loop memorizes a single
//! example in a few hundred steps.
//!
//!     cargo run --example overfit_single_patch

use leishseg::data::patch::{extract_patch, plan_patch_grid};
use leishseg::data::sampler::{patch_fraction, FractionMode};
use leishseg::data::synth::{synth_generate, SynthParams};
use leishseg::data::{one_hot, NUM_CLASSES};
use leishseg::error::Result;
use leishseg::loss::generalized_dice_loss;
use leishseg::tensor::{AdamHyper, Scalar, Tensor};
use leishseg::unet::{build_unet, UNetConfig};

fn main() -> Result<()> {
    let mut params = SynthParams::parasite_dense();
    params.count = 1;
    params.seed = 5;
    let image = synth_generate(&params)?.remove(0);

    // pick the patch with the most parasite content
    let grid = plan_patch_grid(image.height(), image.width(), 64, 32)?;
    let mut patches = Vec::new();
    for &(row, col) in &grid.origins {
        patches.push(extract_patch(&image, row, col, 64)?);
    }
    let patch = patches
        .into_iter()
        .max_by(|a, b| {
            let fa = patch_fraction(&a.labels, FractionMode::CombinedSum);
            let fb = patch_fraction(&b.labels, FractionMode::CombinedSum);
            fa.partial_cmp(&fb).unwrap()
        })
        .unwrap();
    println!(
        "training on patch {} (parasite fraction {:.3})",
        patch.id,
        patch_fraction(&patch.labels, FractionMode::CombinedSum)
    );

    let input = Tensor::new(
        vec![1, 3, 64, 64],
        patch.rgb.data().to_vec(),
    )?;
    let onehot = one_hot::<f64>(&patch.labels, NUM_CLASSES)?;
    let target = Tensor::new(vec![1, NUM_CLASSES, 64, 64], onehot.data().to_vec())?;

    let config = UNetConfig {
        depth: 1,
        base_filters: 4,
        seed: 11,
        ..UNetConfig::default()
    };
    let mut net = build_unet::<f64>(&config)?;
    let hyper = AdamHyper::with_lr(1e-3);

    for step in 0..500 {
        let (probs, cache) = net.forward(&input)?;
        let (loss, grad) = generalized_dice_loss(&probs, &target)?;
        let loss = Scalar::to_f64(loss);
        if step % 25 == 0 {
            println!("step {step:>4}  loss {loss:.6}");
        }
        if loss < 0.1 {
            println!("step {step:>4}  loss {loss:.6}  — memorized");
            return Ok(());
        }
        let grads = net.backward(&cache, &grad)?;
        net.zero_grads();
        net.accumulate_grads(&grads)?;
        net.adam_step(&hyper)?;
    }
    println!("loss did not reach 0.1 in 500 steps");
    std::process::exit(1);
}
