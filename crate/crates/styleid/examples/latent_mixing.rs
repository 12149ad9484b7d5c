//! Demonstrates latent decoupling: which rows of an extended latent count
//! as "style", and how mixing blends them while leaving identity rows
//! untouched.
//!
//! Usage: `cargo run --example latent_mixing`

use styleid::latent::decouple;
use styleid::{mix, Generator, LatentCode, MixParams, Result, SwapList, ToyConfig, ToyGenerator};

fn row_l2(w: &LatentCode, row: usize) -> f64 {
    w.row(row).iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() -> Result<()> {
    let g = ToyGenerator::new(ToyConfig::default())?;
    let content = g.sample_prior(1);
    let style = g.sample_prior(2);

    let swap = SwapList::style_rows_default(g.layer_count());
    println!(
        "{} layers; style rows for this depth: {swap}",
        g.layer_count()
    );

    let (identity_rows, style_rows) = decouple(&content, &swap)?;
    println!(
        "decouple: {} identity row(s) zeroed in the style part, {} style row(s) zeroed in the identity part",
        content.layers() - swap.len(),
        swap.len()
    );
    for row in 0..content.layers() {
        println!(
            "  row {row:2}  |identity| = {:.3}  |style| = {:.3}",
            row_l2(&identity_rows, row),
            row_l2(&style_rows, row)
        );
    }

    // Half-blend the style rows toward `style`; identity rows must come
    // through bit-identical.
    let params = MixParams::new(0.5, swap.clone(), 0)?;
    let mixed = mix(&content, &style, &params)?;
    for row in 0..content.layers() {
        let kind = if swap.contains(row) { "style   " } else { "identity" };
        let unchanged = mixed.row(row) == content.row(row);
        println!("  row {row:2} [{kind}] identical to content: {unchanged}");
        assert_eq!(unchanged, !swap.contains(row));
    }
    println!("identity rows pass through untouched; style rows are alpha-blends");
    Ok(())
}
