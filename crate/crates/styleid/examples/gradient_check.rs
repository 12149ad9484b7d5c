//! Validates the generator's analytic gradients against central finite
//! differences — the same harness the test suite uses, on both the latent
//! and a random subset of the parameters.
//!
//! Usage: `cargo run --example gradient_check`

use styleid::gradcheck::{check_coordinates, directional_error, subset, Tolerances};
use styleid::{Generator, LatentCode, Result, ToyConfig, ToyGenerator};

fn main() -> Result<()> {
    let g = ToyGenerator::new(ToyConfig::default())?;
    let w = g.sample_prior(5);
    let (h, wd, c) = g.output_shape();

    // Scalar loss: mean squared output (smooth, nonzero gradients a.e.).
    let loss_of_latent = |vals: &[f64]| -> f64 {
        let cand = LatentCode::new(w.layers(), w.dim(), vals.to_vec()).unwrap();
        let img = g.synthesize(&cand).unwrap();
        img.data().iter().map(|v| v * v).sum::<f64>() / (h * wd * c) as f64
    };

    // Analytic gradient via the backward pass with d(loss)/d(pixel).
    let img = g.synthesize(&w)?;
    let grad_out: Vec<f64> = img
        .data()
        .iter()
        .map(|v| 2.0 * v / (h * wd * c) as f64)
        .collect();
    let (grad_latent, grad_params) = g.backward(&w, &grad_out)?;

    let tol = Tolerances::default();
    let coords: Vec<usize> = (0..w.values().len()).collect();
    let report = check_coordinates(
        &loss_of_latent,
        w.values(),
        grad_latent.values(),
        &coords,
        &tol,
    );
    println!(
        "latent: {} coordinate(s) checked, {} skipped, max rel err {:.2e}, ok = {}",
        report.checked,
        report.skipped,
        report.max_rel_err,
        report.ok()
    );
    assert!(report.ok());

    let loss_of_params = |vals: &[f64]| -> f64 {
        let mut gp = g.boxed_clone();
        gp.params_mut().copy_from_slice(vals);
        let img = gp.synthesize(&w).unwrap();
        img.data().iter().map(|v| v * v).sum::<f64>() / (h * wd * c) as f64
    };
    let picks = subset(g.params().len(), 48, 9);
    let report = check_coordinates(&loss_of_params, g.params(), &grad_params, &picks, &tol);
    println!(
        "params: {} coordinate(s) checked, {} skipped, max rel err {:.2e}, ok = {}",
        report.checked,
        report.skipped,
        report.max_rel_err,
        report.ok()
    );
    assert!(report.ok());

    let dir_err = directional_error(&loss_of_latent, w.values(), grad_latent.values(), 3);
    println!("random-direction derivative error: {dir_err:.2e}");
    Ok(())
}
