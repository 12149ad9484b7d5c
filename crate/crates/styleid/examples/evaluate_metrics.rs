//! Distribution- and structure-level evaluation: Fréchet distance between
//! pooled-feature Gaussians (FID) and mean structural similarity (SSIM).
//!
//! Usage: `cargo run --example evaluate_metrics`

use styleid::perceptual::FeatureStack;
use styleid::{
    fid_score, ssim, Generator, Image, Result, SsimOpts, ToyConfig, ToyGenerator,
};

fn render_set(g: &ToyGenerator, seeds: std::ops::Range<u64>) -> Result<Vec<Image>> {
    seeds.map(|s| g.synthesize(&g.sample_prior(s))).collect()
}

fn main() -> Result<()> {
    let g_a = ToyGenerator::new(ToyConfig::default())?;
    let g_b = ToyGenerator::new(ToyConfig {
        seed: 23,
        ..ToyConfig::default()
    })?;
    let (h, w, _) = g_a.output_shape();
    let stack = FeatureStack::toy(h, w, 0)?;

    let set_a = render_set(&g_a, 0..12)?;
    let set_a2 = render_set(&g_a, 100..112)?;
    let set_b = render_set(&g_b, 0..12)?;

    // Same distribution, disjoint samples: small. Different generator
    // weights: much larger.
    println!("fid(a, a)        = {:.6}", fid_score(&set_a, &set_a, &stack)?);
    println!("fid(a, a')       = {:.6}", fid_score(&set_a2, &set_a, &stack)?);
    println!("fid(b, a)        = {:.6}", fid_score(&set_b, &set_a, &stack)?);

    let opts = SsimOpts::default();
    println!("ssim(x, x)       = {:.6}", ssim(&set_a[0], &set_a[0], &opts)?);
    println!("ssim(x, y same)  = {:.6}", ssim(&set_a[0], &set_a[1], &opts)?);
    println!("ssim(x, y other) = {:.6}", ssim(&set_a[0], &set_b[0], &opts)?);
    Ok(())
}
