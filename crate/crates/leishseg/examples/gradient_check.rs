//! Runs every finite-difference gradient sweep and prints one line per
//! check: each layer kind in isolation, the loss alone, and the composed
//! network end to end.
//!
//!     cargo run --example gradient_check

use leishseg::error::Result;
use leishseg::verify::{check_end_to_end_gradients, check_layer_gradients, check_loss_gradient};

fn main() -> Result<()> {
    let seed = 17;
    let mut all_passed = true;

    println!("layer sweeps");
    for report in check_layer_gradients(seed)? {
        println!("  {report}");
        all_passed &= report.passed();
    }

    println!("loss sweep");
    let report = check_loss_gradient(seed)?;
    println!("  {report}");
    all_passed &= report.passed();

    println!("end-to-end sweeps");
    for report in check_end_to_end_gradients(seed)? {
        println!("  {report}");
        all_passed &= report.passed();
    }

    println!();
    println!("{}", if all_passed { "all checks passed" } else { "CHECKS FAILED" });
    std::process::exit(if all_passed { 0 } else { 1 });
}
