//! Optimization-based inversion: recover an extended latent whose decode
//! matches a target image, starting from the prior's mean latent.
//!
//! Usage: `cargo run --example invert_photo -- [STEPS]`

use styleid::{invert, Generator, InversionOpts, Result, ToyConfig, ToyGenerator};
use styleid::perceptual::FeatureStack;

fn main() -> Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .map_or(Ok(300), |s| s.parse())
        .expect("STEPS must be a count");

    let g = ToyGenerator::new(ToyConfig::default())?;
    let (h, w, _) = g.output_shape();
    let stack = FeatureStack::toy(h, w, 0)?;

    // The target comes from the generator itself, so a good optimizer can
    // drive the loss far below the mean-latent baseline.
    let target = g.synthesize(&g.sample_prior(42))?;

    let opts = InversionOpts {
        steps,
        ..InversionOpts::default()
    };
    let result = invert(&g, &target, &stack, &opts)?;

    println!("inversion over {steps} step(s):");
    for (i, loss) in result.history.iter().enumerate() {
        if i % (steps.max(10) / 10).max(1) == 0 || i == result.history.len() - 1 {
            println!("  step {i:4}: loss {loss:.6}");
        }
    }
    println!(
        "baseline (mean latent) {:.6} -> best {:.6} ({:.2}% of baseline)",
        result.history[0],
        result.loss,
        100.0 * result.loss / result.history[0]
    );
    Ok(())
}
