//! Differentiable generator backends mapping latent codes to images.
//!
//! The built-in [`ToyGenerator`] is a fully specified closed-form decoder
//! small enough for desk-scale experiments: every latent row modulates one
//! spatial frequency band of a fixed base tensor, contributions are mixed
//! into RGB by a small matrix, and a sigmoid keeps pixels in (0, 1). Its
//! gradients with respect to both the latent and the trainable parameters
//! are derived by hand and checked against finite differences in tests.
//!
//! External checkpoints in the flat-weights container format load through
//! [`ToyGenerator::from_parts`]; anything whose parameter vector matches the
//! documented layout for its header dimensions can be driven by the same
//! trainer and inversion code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::latent::{LatentCode, LatentPrior, NormalPrior};
use crate::numeric::sigmoid;

/// An H x W x C image with entries nominally in [0, 1], row-major
/// (height, then width, then channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("image shape must be nonzero"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "image payload has {} entries, expected {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("image entries must be finite"));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }
}

/// Offsets of the toy parameter blocks inside the flat parameter vector.
///
/// Layout, in order: base tensor `B` (H*W*L, laid out y, x, layer), affine
/// weights `A` (L rows of 2 x D), affine biases `b` (L rows of 2), channel
/// mix `M` (L x C).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub base: usize,
    pub affine_w: usize,
    pub affine_b: usize,
    pub mix: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn for_dims(layers: usize, dim: usize, height: usize, width: usize, channels: usize) -> Self {
        let base = 0;
        let affine_w = base + height * width * layers;
        let affine_b = affine_w + layers * 2 * dim;
        let mix = affine_b + layers * 2;
        let total = mix + layers * channels;
        Self { base, affine_w, affine_b, mix, total }
    }
}

/// Construction parameters for the toy backend.
#[derive(Debug, Clone, Copy)]
pub struct ToyConfig {
    pub layers: usize,
    pub dim: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { layers: 8, dim: 16, height: 32, width: 32, seed: 7 }
    }
}

/// Deterministic differentiable decoder from the extended latent space.
///
/// Latent row `k` passes through an affine map producing two amplitudes
/// `(scale_k, quad_k)`; layer `k` contributes `(1 + scale_k) * B[., ., k]
/// + quad_k * Q[., ., k]`, where `B` is the trainable base pattern of the
/// layer's frequency band and `Q` is the fixed quadrature-phase pattern of
/// the same band. Contributions are mixed into channels by `M` and
/// squashed by a sigmoid. Because both amplitudes act inside the layer's
/// own band, every latent row's influence on the output is spectrally
/// local, which the band-energy tests rely on.
#[derive(Debug, Clone)]
pub struct ToyGenerator {
    layers: usize,
    dim: usize,
    height: usize,
    width: usize,
    channels: usize,
    params: Vec<f64>,
    /// Canonical quadrature patterns, H*W*L like the base block. Fixed,
    /// reconstructed from the dimensions alone, never trained.
    quad: Vec<f64>,
}

pub const TOY_CHANNELS: usize = 3;

/// Distinct spatial frequency pair for layer `k`, enumerated low to high so
/// early layers carry coarse structure. All pairs stay below Nyquist so the
/// base patterns are exactly orthogonal and zero-mean on the periodic grid.
fn band_frequency(k: usize, height: usize, width: usize) -> (usize, usize) {
    let max_fx = (width / 2).saturating_sub(1).max(1);
    let max_fy = (height / 2).saturating_sub(1).max(1);
    let mut count = 0;
    // Diagonal sweep over (fx, fy) with fx + fy increasing.
    for total in 2..=(max_fx + max_fy) {
        for fx in 1..=max_fx.min(total - 1) {
            let fy = total - fx;
            if fy >= 1 && fy <= max_fy {
                if count == k {
                    return (fx, fy);
                }
                count += 1;
            }
        }
    }
    // More layers than distinct bands; wrap around.
    band_frequency(k % count.max(1), height, width)
}

/// Canonical quadrature-phase patterns, one unit-amplitude `sin` grid per
/// layer band. A pure function of the dimensions so checkpoints do not
/// need to carry them.
fn quadrature_patterns(layers: usize, height: usize, width: usize) -> Vec<f64> {
    let mut quad = vec![0.0; height * width * layers];
    for k in 0..layers {
        let (fx, fy) = band_frequency(k, height, width);
        for y in 0..height {
            for x in 0..width {
                let t = std::f64::consts::TAU
                    * (fx as f64 * x as f64 / width as f64 + fy as f64 * y as f64 / height as f64);
                quad[(y * width + x) * layers + k] = t.sin();
            }
        }
    }
    quad
}

impl ToyGenerator {
    pub fn new(cfg: ToyConfig) -> Result<Self> {
        if cfg.layers == 0 || cfg.dim == 0 || cfg.height < 4 || cfg.width < 4 {
            return Err(Error::invalid("toy generator needs L, D >= 1 and H, W >= 4"));
        }
        let layout = ParamLayout::for_dims(cfg.layers, cfg.dim, cfg.height, cfg.width, TOY_CHANNELS);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let phase_dist = Uniform::new(0.0, std::f64::consts::TAU);
        let amp_dist = Uniform::new(0.8, 1.2);
        for k in 0..cfg.layers {
            let (fx, fy) = band_frequency(k, cfg.height, cfg.width);
            let phase = phase_dist.sample(&mut rng);
            let amp = amp_dist.sample(&mut rng);
            for y in 0..cfg.height {
                for x in 0..cfg.width {
                    let t = std::f64::consts::TAU
                        * (fx as f64 * x as f64 / cfg.width as f64
                            + fy as f64 * y as f64 / cfg.height as f64)
                        + phase;
                    params[layout.base + (y * cfg.width + x) * cfg.layers + k] = amp * t.cos();
                }
            }
        }

        // Affine maps: modest scale so prior latents land in sigmoid's
        // responsive range. Biases start at zero.
        let affine_scale = 0.8 / (cfg.dim as f64).sqrt();
        for i in 0..cfg.layers * 2 * cfg.dim {
            let n: f64 = StandardNormal.sample(&mut rng);
            params[layout.affine_w + i] = affine_scale * n;
        }

        let mix_scale = 1.0 / (cfg.layers as f64).sqrt();
        for i in 0..cfg.layers * TOY_CHANNELS {
            let n: f64 = StandardNormal.sample(&mut rng);
            params[layout.mix + i] = mix_scale * n;
        }

        Ok(Self {
            layers: cfg.layers,
            dim: cfg.dim,
            height: cfg.height,
            width: cfg.width,
            channels: TOY_CHANNELS,
            params,
            quad: quadrature_patterns(cfg.layers, cfg.height, cfg.width),
        })
    }

    /// Rebuilds a generator from checkpoint header dimensions plus a flat
    /// parameter vector. Rejects payloads that do not match the documented
    /// layout for those dimensions.
    pub fn from_parts(
        layers: usize,
        dim: usize,
        height: usize,
        width: usize,
        channels: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if channels != TOY_CHANNELS {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}; flat-weights backend is {TOY_CHANNELS}-channel"
            )));
        }
        let layout = ParamLayout::for_dims(layers, dim, height, width, channels);
        if params.len() != layout.total {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries but {}x{} latent at {}x{}x{} needs {}",
                params.len(),
                layers,
                dim,
                height,
                width,
                channels,
                layout.total
            )));
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self {
            layers,
            dim,
            height,
            width,
            channels,
            params,
            quad: quadrature_patterns(layers, height, width),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::for_dims(self.layers, self.dim, self.height, self.width, self.channels)
    }

    #[inline]
    fn base_at(&self, layout: &ParamLayout, y: usize, x: usize, k: usize) -> f64 {
        self.params[layout.base + (y * self.width + x) * self.layers + k]
    }

    #[inline]
    fn mix_at(&self, layout: &ParamLayout, k: usize, c: usize) -> f64 {
        self.params[layout.mix + k * self.channels + c]
    }

    #[inline]
    fn quad_at(&self, y: usize, x: usize, k: usize) -> f64 {
        self.quad[(y * self.width + x) * self.layers + k]
    }

    /// Per-layer (scale, quadrature) amplitudes for a latent.
    fn modulation(&self, layout: &ParamLayout, w: &LatentCode) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.layers);
        for k in 0..self.layers {
            let row = w.row(k);
            let wk = &self.params
                [layout.affine_w + k * 2 * self.dim..layout.affine_w + (k + 1) * 2 * self.dim];
            let b = &self.params[layout.affine_b + k * 2..layout.affine_b + k * 2 + 2];
            let mut scale = b[0];
            let mut quad = b[1];
            for d in 0..self.dim {
                scale += wk[d] * row[d];
                quad += wk[self.dim + d] * row[d];
            }
            out.push((scale, quad));
        }
        out
    }

    fn check_latent(&self, w: &LatentCode) -> Result<()> {
        if w.shape() != (self.layers, self.dim) {
            return Err(Error::invalid(format!(
                "latent shape {}x{} does not match generator {}x{}",
                w.layers(),
                w.dim(),
                self.layers,
                self.dim
            )));
        }
        Ok(())
    }

    fn forward(&self, w: &LatentCode) -> Result<Image> {
        self.check_latent(w)?;
        let layout = self.layout();
        let mods = self.modulation(&layout, w);
        let mut img = Image::zeros(self.height, self.width, self.channels);
        for y in 0..self.height {
            for x in 0..self.width {
                // contrib_k = (1 + scale_k) * B[y, x, k] + quad_k * Q[y, x, k]
                for c in 0..self.channels {
                    let mut z = 0.0;
                    for (k, &(scale, quad)) in mods.iter().enumerate() {
                        let contrib = (1.0 + scale) * self.base_at(&layout, y, x, k)
                            + quad * self.quad_at(y, x, k);
                        z += self.mix_at(&layout, k, c) * contrib;
                    }
                    img.set(y, x, c, sigmoid(z));
                }
            }
        }
        Ok(img)
    }

    /// Gradients of a scalar loss with respect to the latent and the flat
    /// parameters, given the loss gradient with respect to the output image.
    /// Recomputes the forward pass internally; the toy decoder is cheap.
    fn backward_impl(&self, w: &LatentCode, grad_output: &[f64]) -> Result<(LatentCode, Vec<f64>)> {
        self.check_latent(w)?;
        let expected = self.height * self.width * self.channels;
        if grad_output.len() != expected {
            return Err(Error::invalid(format!(
                "output gradient has {} entries, expected {expected}",
                grad_output.len()
            )));
        }
        let layout = self.layout();
        let mods = self.modulation(&layout, w);

        let mut grad_params = vec![0.0; layout.total];
        let mut grad_scale = vec![0.0; self.layers];
        let mut grad_quad = vec![0.0; self.layers];

        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    let mut z = 0.0;
                    for (k, &(scale, quad)) in mods.iter().enumerate() {
                        let contrib = (1.0 + scale) * self.base_at(&layout, y, x, k)
                            + quad * self.quad_at(y, x, k);
                        z += self.mix_at(&layout, k, c) * contrib;
                    }
                    let s = sigmoid(z);
                    let gz = grad_output[(y * self.width + x) * self.channels + c] * s * (1.0 - s);
                    if gz == 0.0 {
                        continue;
                    }
                    for (k, &(scale, quad)) in mods.iter().enumerate() {
                        let base = self.base_at(&layout, y, x, k);
                        let q = self.quad_at(y, x, k);
                        let m = self.mix_at(&layout, k, c);
                        let contrib = (1.0 + scale) * base + quad * q;
                        grad_params[layout.mix + k * self.channels + c] += gz * contrib;
                        let gc = gz * m;
                        grad_scale[k] += gc * base;
                        grad_quad[k] += gc * q;
                        grad_params[layout.base + (y * self.width + x) * self.layers + k] +=
                            gc * (1.0 + scale);
                    }
                }
            }
        }

        // Push (scale, quad) gradients through the affine maps.
        let mut grad_latent = LatentCode::zeros(self.layers, self.dim);
        for k in 0..self.layers {
            let row = w.row(k);
            let wk_off = layout.affine_w + k * 2 * self.dim;
            let gl = grad_latent.row_mut(k);
            for d in 0..self.dim {
                grad_params[wk_off + d] += grad_scale[k] * row[d];
                grad_params[wk_off + self.dim + d] += grad_quad[k] * row[d];
                gl[d] = grad_scale[k] * self.params[wk_off + d]
                    + grad_quad[k] * self.params[wk_off + self.dim + d];
            }
            grad_params[layout.affine_b + k * 2] += grad_scale[k];
            grad_params[layout.affine_b + k * 2 + 1] += grad_quad[k];
        }

        Ok((grad_latent, grad_params))
    }
}

/// A differentiable latent-to-image decoder with trainable parameters.
///
/// `synthesize` and `sample_prior` are read-only and safe to call
/// concurrently; mutating parameters requires exclusive access.
pub trait Generator: Send + Sync {
    fn layer_count(&self) -> usize;
    fn style_dim(&self) -> usize;
    /// (height, width, channels) of synthesized images.
    fn output_shape(&self) -> (usize, usize, usize);

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Deterministic differentiable decode of a latent.
    fn synthesize(&self, w: &LatentCode) -> Result<Image>;

    /// Gradients of a scalar loss with respect to (latent, parameters),
    /// given its gradient with respect to the synthesized image (flat,
    /// same layout as [`Image::data`]).
    fn backward(&self, w: &LatentCode, grad_output: &[f64]) -> Result<(LatentCode, Vec<f64>)>;

    /// Deterministic full latent sample from the backend's prior.
    fn sample_prior(&self, seed: u64) -> LatentCode;

    fn boxed_clone(&self) -> Box<dyn Generator>;
}

impl Generator for ToyGenerator {
    fn layer_count(&self) -> usize {
        self.layers
    }

    fn style_dim(&self) -> usize {
        self.dim
    }

    fn output_shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn synthesize(&self, w: &LatentCode) -> Result<Image> {
        self.forward(w)
    }

    fn backward(&self, w: &LatentCode, grad_output: &[f64]) -> Result<(LatentCode, Vec<f64>)> {
        self.backward_impl(w, grad_output)
    }

    fn sample_prior(&self, seed: u64) -> LatentCode {
        NormalPrior { layers: self.layers, dim: self.dim }.sample_latent(seed)
    }

    fn boxed_clone(&self) -> Box<dyn Generator> {
        Box::new(self.clone())
    }
}

impl LatentPrior for ToyGenerator {
    fn latent_shape(&self) -> (usize, usize) {
        (self.layers, self.dim)
    }

    fn sample_latent(&self, seed: u64) -> LatentCode {
        self.sample_prior(seed)
    }
}

impl LatentPrior for dyn Generator + '_ {
    fn latent_shape(&self) -> (usize, usize) {
        (self.layer_count(), self.style_dim())
    }

    fn sample_latent(&self, seed: u64) -> LatentCode {
        self.sample_prior(seed)
    }
}

/// Elementwise mean of `n` prior samples with seeds `seed, seed+1, ...`;
/// the usual starting point for inversion.
pub fn mean_latent(g: &dyn Generator, n: usize, seed: u64) -> Result<LatentCode> {
    if n < 1 {
        return Err(Error::invalid("mean_latent needs n >= 1"));
    }
    let mut acc = LatentCode::zeros(g.layer_count(), g.style_dim());
    for i in 0..n {
        let sample = g.sample_prior(seed.wrapping_add(i as u64));
        for (a, &s) in acc.values_mut().iter_mut().zip(sample.values()) {
            *a += s;
        }
    }
    let inv = 1.0 / n as f64;
    for a in acc.values_mut() {
        *a *= inv;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ToyGenerator {
        ToyGenerator::new(ToyConfig::default()).unwrap()
    }

    #[test]
    fn band_frequencies_are_distinct_and_below_nyquist() {
        let mut seen = std::collections::HashSet::new();
        for k in 0..18 {
            let (fx, fy) = band_frequency(k, 32, 32);
            assert!(fx >= 1 && fx <= 15, "fx {fx}");
            assert!(fy >= 1 && fy <= 15, "fy {fy}");
            assert!(seen.insert((fx, fy)), "duplicate band for k={k}");
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let g = toy();
        let w = g.sample_prior(11);
        let a = g.synthesize(&w).unwrap();
        let b = g.synthesize(&w).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn zero_latent_matches_closed_form_base_image() {
        // Independent oracle: read B and M straight from the parameter
        // vector and evaluate sigmoid(sum_k M[k,c] B[y,x,k]) by hand
        // (affine biases start at zero, so scale = quad = 0).
        let g = toy();
        let layout = g.layout();
        let (h, w_, c_) = g.output_shape();
        let l = g.layer_count();
        let img = g.synthesize(&LatentCode::zeros(l, g.style_dim())).unwrap();
        for y in 0..h {
            for x in 0..w_ {
                for c in 0..c_ {
                    let mut z = 0.0;
                    for k in 0..l {
                        let base = g.params()[layout.base + (y * w_ + x) * l + k];
                        let m = g.params()[layout.mix + k * c_ + c];
                        z += m * base;
                    }
                    let expect = 1.0 / (1.0 + (-z).exp());
                    assert!((img.get(y, x, c) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn perturbing_a_swap_row_changes_the_output() {
        let g = toy();
        let w = g.sample_prior(3);
        let base = g.synthesize(&w).unwrap();
        let mut w2 = w.clone();
        for v in w2.row_mut(7) {
            *v += 0.25;
        }
        let changed = g.synthesize(&w2).unwrap();
        let delta: f64 = base
            .data()
            .iter()
            .zip(changed.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(delta.sqrt() > 1e-6, "row 7 had no effect: {delta}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        use crate::gradcheck::{check_coordinates, directional_error, subset, Tolerances};
        let g = toy();
        let w = g.sample_prior(17);
        let (h, wd, c) = g.output_shape();
        // Fixed random linear functional over pixels as the scalar loss.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let r: Vec<f64> = (0..h * wd * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        let loss = |img: &Image| img.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let (gl, gp) = g.backward(&w, &r).unwrap();
        let tol = Tolerances::default();

        let f_latent = |vals: &[f64]| {
            let wl = LatentCode::new(g.layer_count(), g.style_dim(), vals.to_vec()).unwrap();
            loss(&g.synthesize(&wl).unwrap())
        };
        let coords: Vec<usize> = (0..w.values().len()).collect();
        let rep = check_coordinates(f_latent, w.values(), gl.values(), &coords, &tol);
        assert!(rep.ok(), "latent grad failures: {:?}", rep.failures);
        assert!(directional_error(f_latent, w.values(), gl.values(), 1) < 1e-4);

        let f_params = |vals: &[f64]| {
            let mut g2 = g.clone();
            g2.params_mut().copy_from_slice(vals);
            loss(&g2.synthesize(&w).unwrap())
        };
        // Random subset plus a few indices from every parameter block.
        let layout = g.layout();
        let mut coords = subset(layout.total, 64, 2);
        coords.extend([
            layout.base,
            layout.base + 5,
            layout.affine_w,
            layout.affine_w + 3,
            layout.affine_b,
            layout.affine_b + 1,
            layout.mix,
            layout.mix + 4,
        ]);
        let rep = check_coordinates(f_params, g.params(), &gp, &coords, &tol);
        assert!(rep.ok(), "param grad failures: {:?}", rep.failures);
        assert!(directional_error(f_params, g.params(), &gp, 3) < 1e-4);
    }

    #[test]
    fn outputs_stay_in_unit_interval() {
        let g = toy();
        for seed in 0..20 {
            let w = g.sample_prior(seed);
            let img = g.synthesize(&w).unwrap();
            assert!(img.data().iter().all(|&v| v > 0.0 && v < 1.0 && v.is_finite()));
        }
    }

    #[test]
    fn zeroing_a_row_moves_energy_only_in_its_band() {
        // Zeroing latent row k changes only layer k's (scale, quad)
        // amplitudes, so the change to the pre-sigmoid field lies exactly
        // in band k's cos/sin plane. The sigmoid is invertible per pixel,
        // so the logit of the output recovers that field; its difference,
        // projected onto every band's orthogonal cos/sin pair, must put
        // essentially all energy in band k.
        fn logit(v: f64) -> f64 {
            (v / (1.0 - v)).ln()
        }
        let g = toy();
        let (h, w_px, c_px) = g.output_shape();
        let l = g.layer_count();
        // Canonical unit-norm cos/sin grids per band.
        let mut pairs = Vec::with_capacity(l);
        for band in 0..l {
            let (fx, fy) = band_frequency(band, h, w_px);
            let mut cosg = vec![0.0f64; h * w_px];
            let mut sing = vec![0.0f64; h * w_px];
            for y in 0..h {
                for x in 0..w_px {
                    let t = std::f64::consts::TAU
                        * (fx as f64 * x as f64 / w_px as f64 + fy as f64 * y as f64 / h as f64);
                    cosg[y * w_px + x] = t.cos();
                    sing[y * w_px + x] = t.sin();
                }
            }
            for grid in [&mut cosg, &mut sing] {
                let norm = grid.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in grid.iter_mut() {
                    *v /= norm;
                }
            }
            pairs.push((cosg, sing));
        }
        for seed in [1u64, 5, 9] {
            let w = g.sample_prior(seed);
            let full = g.synthesize(&w).unwrap();
            for k in 0..l {
                let mut wz = w.clone();
                wz.row_mut(k).fill(0.0);
                let zeroed = g.synthesize(&wz).unwrap();
                let mut energies = vec![0.0f64; l];
                for (band, energy) in energies.iter_mut().enumerate() {
                    let (cosg, sing) = &pairs[band];
                    for c in 0..c_px {
                        let (mut pc, mut ps) = (0.0, 0.0);
                        for y in 0..h {
                            for x in 0..w_px {
                                let d = logit(full.get(y, x, c)) - logit(zeroed.get(y, x, c));
                                pc += d * cosg[y * w_px + x];
                                ps += d * sing[y * w_px + x];
                            }
                        }
                        *energy += pc * pc + ps * ps;
                    }
                }
                let total: f64 = energies.iter().sum();
                let argmax = energies
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert_eq!(argmax, k, "seed {seed}: band energies {energies:?}");
                assert!(
                    energies[k] > 0.999999 * total,
                    "seed {seed} row {k}: off-band leakage, energies {energies:?}"
                );
            }
        }
    }

    #[test]
    fn prior_samples_are_seed_deterministic_and_distinct() {
        let g = toy();
        assert_eq!(g.sample_prior(4).values(), g.sample_prior(4).values());
        assert_ne!(g.sample_prior(4).values(), g.sample_prior(5).values());
    }

    #[test]
    fn prior_mean_over_many_seeds_is_near_zero() {
        let g = toy();
        let n = 10_000usize;
        let dims = g.layer_count() * g.style_dim();
        let mut pooled = 0.0;
        for seed in 0..n as u64 {
            pooled += g.sample_prior(seed).values().iter().sum::<f64>();
        }
        pooled /= (n * dims) as f64;
        assert!(pooled.abs() < 0.03, "pooled mean {pooled}");
    }

    #[test]
    fn mean_latent_matches_contracts() {
        let g = toy();
        // n = 1 reduces to sample_prior at the same seed.
        let m1 = mean_latent(&g, 1, 42).unwrap();
        assert_eq!(m1.values(), g.sample_prior(42).values());
        // Deterministic.
        let a = mean_latent(&g, 64, 3).unwrap();
        let b = mean_latent(&g, 64, 3).unwrap();
        assert_eq!(a.values(), b.values());
        // n = 0 rejected.
        assert!(mean_latent(&g, 0, 3).is_err());
    }

    #[test]
    fn mean_latent_concentrates_by_clt() {
        let g = toy();
        let m = mean_latent(&g, 10_000, 0).unwrap();
        for &v in m.values() {
            assert!(v.abs() < 0.05, "entry {v} outside CLT bound");
        }
    }

    #[test]
    fn clone_is_isolated_from_original() {
        let g = toy();
        let w = g.sample_prior(1);
        let before = g.synthesize(&w).unwrap();
        let mut c = g.boxed_clone();
        assert_eq!(c.synthesize(&w).unwrap().data(), before.data());
        // Mutate the clone; original must not move.
        c.params_mut()[0] += 1.0;
        assert_eq!(g.synthesize(&w).unwrap().data(), before.data());
        assert_ne!(c.synthesize(&w).unwrap().data(), before.data());
        // Clone of clone equals clone.
        let cc = c.boxed_clone();
        assert_eq!(cc.params(), c.params());
    }

    #[test]
    fn rejects_mismatched_latents_and_payloads() {
        let g = toy();
        let bad = LatentCode::zeros(4, 4);
        assert!(g.synthesize(&bad).is_err());
        assert!(g.backward(&bad, &vec![0.0; 32 * 32 * 3]).is_err());
        let w = g.sample_prior(0);
        assert!(g.backward(&w, &vec![0.0; 7]).is_err());
        assert!(ToyGenerator::from_parts(8, 16, 32, 32, 3, vec![0.0; 10]).is_err());
        assert!(ToyGenerator::from_parts(8, 16, 32, 32, 4, vec![0.0; 10]).is_err());
    }

    #[test]
    fn from_parts_round_trips_params() {
        let g = toy();
        let rebuilt = ToyGenerator::from_parts(
            g.layer_count(),
            g.style_dim(),
            32,
            32,
            3,
            g.params().to_vec(),
        )
        .unwrap();
        let w = g.sample_prior(8);
        assert_eq!(
            rebuilt.synthesize(&w).unwrap().data(),
            g.synthesize(&w).unwrap().data()
        );
    }
}
