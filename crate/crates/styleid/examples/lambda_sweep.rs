//! The style/identity trade-off: sweeping the identity weight shows the
//! final photo-reconstruction loss falling monotonically as lambda grows,
//! at some cost to the style term.
//!
//! Usage: `cargo run --example lambda_sweep`

use styleid::perceptual::FeatureStack;
use styleid::{fine_tune, Generator, InversionOpts, Result, ToyConfig, ToyGenerator, TrainConfig};

fn main() -> Result<()> {
    let pretrained = ToyGenerator::new(ToyConfig::default())?;
    let style_gen = ToyGenerator::new(ToyConfig {
        seed: 23,
        ..ToyConfig::default()
    })?;
    let (h, w, _) = pretrained.output_shape();
    let stack = FeatureStack::toy(h, w, 0)?;

    let refs = (0..3)
        .map(|i| style_gen.synthesize(&style_gen.sample_prior(40 + i)))
        .collect::<Result<Vec<_>>>()?;
    let photo = pretrained.synthesize(&pretrained.sample_prior(77))?;

    let base = TrainConfig {
        epochs: 40,
        inversion: InversionOpts {
            steps: 120,
            ..InversionOpts::default()
        },
        ..TrainConfig::for_layers(pretrained.layer_count())
    };

    println!("lambda     final ref_loss  final feature_loss");
    for lambda in [0.0005, 0.001, 0.01, 0.1] {
        let cfg = TrainConfig {
            lambda_feature: lambda,
            swap: base.swap.clone(),
            inversion: base.inversion,
            ..base
        };
        let outcome = fine_tune(&pretrained, &refs, &photo, &stack, &cfg)?;
        let last = outcome.history.last().expect("nonzero epochs");
        println!(
            "{lambda:<9}  {:<14.6}  {:.6}",
            last.ref_loss, last.feature_loss
        );
    }
    println!("larger lambda -> tighter identity preservation (lower feature loss)");
    Ok(())
}
