//! Round-trips the two container formats: `.sidl` latents and `.sidg`
//! generator checkpoints (f32 payloads, little-endian, magic-tagged), plus
//! a PNG save/load showing the 8-bit quantization step.
//!
//! Usage: `cargo run --example file_formats`

use styleid::io::{load_png, read_generator, read_latent, save_png, write_generator, write_latent};
use styleid::{Generator, Result, ToyConfig, ToyGenerator};

fn main() -> Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let g = ToyGenerator::new(ToyConfig::default())?;

    // Latent container: shape header + f32 rows.
    let w = g.sample_prior(3);
    let latent_path = dir.path().join("w.sidl");
    write_latent(&latent_path, &w)?;
    let w2 = read_latent(&latent_path)?;
    println!(
        "latent round trip: {} bytes, shape {:?}, exact after one write/read cycle: {}",
        std::fs::metadata(&latent_path).unwrap().len(),
        w2.shape(),
        // f64 -> f32 quantizes once; a second cycle is the identity.
        {
            let p2 = dir.path().join("w2.sidl");
            write_latent(&p2, &w2)?;
            read_latent(&p2)?.values() == w2.values()
        }
    );

    // Generator checkpoint: dimensions + full parameter vector.
    let ckpt_path = dir.path().join("g.sidg");
    write_generator(&ckpt_path, &g)?;
    let g2 = read_generator(&ckpt_path)?;
    println!(
        "checkpoint round trip: {} bytes, {} params, same output shape: {}",
        std::fs::metadata(&ckpt_path).unwrap().len(),
        g2.params().len(),
        g2.output_shape() == g.output_shape()
    );

    // Checkpoint writes are byte-deterministic.
    let ckpt2 = dir.path().join("g_again.sidg");
    write_generator(&ckpt2, &g2)?;
    let bytes_a = std::fs::read(&ckpt_path).unwrap();
    let bytes_b = std::fs::read(&ckpt2).unwrap();
    println!("re-serialized checkpoint byte-identical: {}", bytes_a == bytes_b);

    // PNG: deterministic quantization to 8 bits per channel.
    let img = g.synthesize(&w)?;
    let png_path = dir.path().join("render.png");
    save_png(&png_path, &img)?;
    let back = load_png(&png_path)?;
    let max_err = img
        .data()
        .iter()
        .zip(back.data())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("png round trip: max abs pixel error {max_err:.6} (8-bit grid is 1/255 = 0.003922)");
    Ok(())
}
