//! Builds the full-size network (depth 4, 64 base filters) and prints its
//! layer table: name, weight shape and parameter count per convolution.
//!
//!     cargo run --example network_summary

use leishseg::error::Result;
use leishseg::unet::{build_unet, UNetConfig};

fn main() -> Result<()> {
    let config = UNetConfig {
        depth: 4,
        base_filters: 64,
        ..UNetConfig::default()
    };
    let net = build_unet::<f64>(&config)?;

    println!(
        "depth {} network, {} base filters, {} convolutions",
        config.depth,
        config.base_filters,
        net.layers().len()
    );
    println!();
    println!("{:<22} {:>20} {:>12}", "layer", "weight shape", "params");
    for layer in net.layers() {
        let shape = layer
            .weight
            .value
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        let params = layer.weight.value.len() + layer.bias.value.len();
        println!("{:<22} {:>20} {:>12}", layer.name, shape, params);
    }
    println!();
    println!("total parameters: {}", net.param_count());
    Ok(())
}
