//! Perceptual image distance from multi-depth convolutional features.
//!
//! A [`FeatureStack`] is a short pipeline of fixed convolutional stages.
//! The distance between two images is computed per stage by
//! unit-normalizing the feature vector along channels at every spatial
//! location, taking squared differences, averaging spatially, and summing
//! over stages. The default stack uses seeded random weights so every
//! result is deterministic and self-contained; externally trained backbone
//! weights load through the same interface.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::generator::Image;
use crate::numeric::KahanSum;

const NORM_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Shape of one convolutional stage.
#[derive(Debug, Clone, Copy)]
pub struct StageSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
}

impl StageSpec {
    /// Stride-2 same-ish padding ReLU stage, the default building block.
    pub fn downsampling(out_channels: usize) -> Self {
        Self { out_channels, kernel: 3, stride: 2, padding: 1, activation: Activation::Relu }
    }
}

#[derive(Debug, Clone)]
struct Stage {
    spec: StageSpec,
    in_channels: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    /// out_c x in_c x k x k, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Stage {
    fn weight_count(&self) -> usize {
        self.spec.out_channels * self.in_channels * self.spec.kernel * self.spec.kernel
    }

    #[inline]
    fn w_at(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        let k = self.spec.kernel;
        self.weights[((oc * self.in_channels + ic) * k + ky) * k + kx]
    }
}

/// Flat h x w x c activation buffer.
#[derive(Debug, Clone)]
struct Tensor3 {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c, data: vec![0.0; h * w * c] }
    }

    #[inline]
    fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.w + x) * self.c + c
    }
}

/// Fixed-weight convolutional feature extractor; immutable after
/// construction, so evaluation is pure and thread-safe.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    input_h: usize,
    input_w: usize,
    input_c: usize,
    stages: Vec<Stage>,
    id: String,
}

/// Stage plan of the default desk-scale stack: three stride-2 ReLU stages
/// with channel plan input->8->16->16.
pub fn toy_stage_specs() -> [StageSpec; 3] {
    [
        StageSpec::downsampling(8),
        StageSpec::downsampling(16),
        StageSpec::downsampling(16),
    ]
}

impl FeatureStack {
    /// Default desk-scale stack ([`toy_stage_specs`]) with seeded
    /// He-initialized weights.
    pub fn toy(height: usize, width: usize, seed: u64) -> Result<Self> {
        let mut fs = Self::seeded((height, width, 3), &toy_stage_specs(), seed)?;
        fs.id = format!("toy-conv3-seed{seed}");
        Ok(fs)
    }

    /// Stack with seeded random weights for arbitrary stage specs.
    pub fn seeded(input: (usize, usize, usize), specs: &[StageSpec], seed: u64) -> Result<Self> {
        let mut stack = Self::with_weights(input, specs, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for stage in &mut stack.stages {
            let fan_in = stage.in_channels * stage.spec.kernel * stage.spec.kernel;
            let std = (2.0 / fan_in as f64).sqrt();
            for w in &mut stage.weights {
                let n: f64 = StandardNormal.sample(&mut rng);
                *w = std * n;
            }
            for b in &mut stage.bias {
                let n: f64 = StandardNormal.sample(&mut rng);
                *b = 0.1 * n;
            }
        }
        stack.id = format!("seeded-conv{}-seed{seed}", specs.len());
        Ok(stack)
    }

    /// Stack with externally supplied weights: per stage, all conv weights
    /// (out_c x in_c x k x k) followed by the biases (out_c).
    pub fn from_flat_weights(
        input: (usize, usize, usize),
        specs: &[StageSpec],
        flat: &[f64],
    ) -> Result<Self> {
        let mut stack = Self::with_weights(input, specs, Some(flat))?;
        stack.id = format!("external-conv{}", specs.len());
        Ok(stack)
    }

    fn with_weights(
        input: (usize, usize, usize),
        specs: &[StageSpec],
        flat: Option<&[f64]>,
    ) -> Result<Self> {
        let (h, w, c) = input;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::invalid("feature stack input shape must be nonzero"));
        }
        if specs.is_empty() {
            return Err(Error::invalid("feature stack needs at least one stage"));
        }
        let mut stages = Vec::with_capacity(specs.len());
        let (mut in_h, mut in_w, mut in_c) = (h, w, c);
        for spec in specs {
            if spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0 {
                return Err(Error::invalid("stage kernel, stride, channels must be nonzero"));
            }
            if in_h + 2 * spec.padding < spec.kernel || in_w + 2 * spec.padding < spec.kernel {
                return Err(Error::invalid(format!(
                    "stage kernel {} too large for {}x{} input",
                    spec.kernel, in_h, in_w
                )));
            }
            let out_h = (in_h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
            let out_w = (in_w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
            let stage = Stage {
                spec: *spec,
                in_channels: in_c,
                in_h,
                in_w,
                out_h,
                out_w,
                weights: vec![0.0; spec.out_channels * in_c * spec.kernel * spec.kernel],
                bias: vec![0.0; spec.out_channels],
            };
            in_h = out_h;
            in_w = out_w;
            in_c = spec.out_channels;
            stages.push(stage);
        }
        let mut stack = Self { input_h: h, input_w: w, input_c: c, stages, id: String::new() };
        if let Some(flat) = flat {
            let needed = stack.weight_count();
            if flat.len() != needed {
                return Err(Error::invalid(format!(
                    "flat weight vector has {} entries, stack needs {needed}",
                    flat.len()
                )));
            }
            let mut off = 0;
            for stage in &mut stack.stages {
                let wc = stage.weight_count();
                stage.weights.copy_from_slice(&flat[off..off + wc]);
                off += wc;
                let bc = stage.bias.len();
                stage.bias.copy_from_slice(&flat[off..off + bc]);
                off += bc;
            }
        }
        Ok(stack)
    }

    /// Total number of weights and biases across stages.
    pub fn weight_count(&self) -> usize {
        self.stages.iter().map(|s| s.weight_count() + s.bias.len()).sum()
    }

    /// Weights and biases flattened in loader order.
    pub fn flat_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weight_count());
        for stage in &self.stages {
            out.extend_from_slice(&stage.weights);
            out.extend_from_slice(&stage.bias);
        }
        out
    }

    pub fn stage_specs(&self) -> Vec<StageSpec> {
        self.stages.iter().map(|s| s.spec).collect()
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.input_h, self.input_w, self.input_c)
    }

    /// Identifier recorded in evaluation reports and manifests.
    pub fn identifier(&self) -> &str {
        &self.id
    }

    /// Dimension of [`Self::feature_vector`] outputs.
    pub fn feature_dim(&self) -> usize {
        self.stages.iter().map(|s| s.spec.out_channels).sum()
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        if img.shape() != self.input_shape() {
            let (h, w, c) = img.shape();
            return Err(Error::invalid(format!(
                "image {h}x{w}x{c} does not match feature stack input {}x{}x{}",
                self.input_h, self.input_w, self.input_c
            )));
        }
        Ok(())
    }

    /// Runs the stages, returning every stage's post-activation maps.
    fn activations(&self, img: &Image) -> Vec<Tensor3> {
        let mut cur = Tensor3 {
            h: self.input_h,
            w: self.input_w,
            c: self.input_c,
            data: img.data().to_vec(),
        };
        let mut acts = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let next = conv_forward(stage, &cur);
            acts.push(next.clone());
            cur = next;
        }
        acts
    }

    /// Perceptual distance between two images: per stage, channel-unit-
    /// normalized feature differences squared, spatially averaged, summed
    /// over stages. Nonnegative and symmetric.
    pub fn perc_distance(&self, a: &Image, b: &Image) -> Result<f64> {
        self.check_input(a)?;
        self.check_input(b)?;
        if !a.same_shape(b) {
            return Err(Error::invalid("perc_distance inputs differ in shape"));
        }
        let fa = self.activations(a);
        let fb = self.activations(b);
        let mut total = KahanSum::new();
        for (ta, tb) in fa.iter().zip(&fb) {
            total.add(stage_distance(ta, tb));
        }
        Ok(total.value())
    }

    /// Distance plus its gradient with respect to image `a` (flat, the
    /// layout of [`Image::data`]).
    pub fn perc_distance_with_grad(&self, a: &Image, b: &Image) -> Result<(f64, Vec<f64>)> {
        self.check_input(a)?;
        self.check_input(b)?;
        let fa = self.activations(a);
        let fb = self.activations(b);

        let mut total = KahanSum::new();
        // Gradient of the loss w.r.t. each stage's post-activation output.
        let mut stage_grads: Vec<Tensor3> = Vec::with_capacity(self.stages.len());
        for (ta, tb) in fa.iter().zip(&fb) {
            let (d, g) = stage_distance_with_grad(ta, tb);
            total.add(d);
            stage_grads.push(g);
        }

        // Walk the stages backwards, folding in each stage's direct
        // normalization gradient as we pass its output.
        let mut grad: Option<Tensor3> = None;
        for (si, stage) in self.stages.iter().enumerate().rev() {
            let mut gout = stage_grads[si].clone();
            if let Some(flowing) = grad {
                for (g, f) in gout.data.iter_mut().zip(&flowing.data) {
                    *g += f;
                }
            }
            // Through the activation.
            if stage.spec.activation == Activation::Relu {
                for (g, &act) in gout.data.iter_mut().zip(&fa[si].data) {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grad = Some(conv_backward_input(stage, &gout));
        }
        let grad_a = grad.expect("at least one stage").data;
        Ok((total.value(), grad_a))
    }

    /// Per-image pooled feature vector: for every stage, the spatial mean
    /// of each channel, stages concatenated. Used as the FID extractor.
    pub fn feature_vector(&self, img: &Image) -> Result<Vec<f64>> {
        self.check_input(img)?;
        let acts = self.activations(img);
        let mut out = Vec::with_capacity(self.feature_dim());
        for t in &acts {
            let inv = 1.0 / (t.h * t.w) as f64;
            for c in 0..t.c {
                let mut acc = KahanSum::new();
                for y in 0..t.h {
                    for x in 0..t.w {
                        acc.add(t.data[t.idx(y, x, c)]);
                    }
                }
                out.push(acc.value() * inv);
            }
        }
        Ok(out)
    }
}

fn conv_forward(stage: &Stage, input: &Tensor3) -> Tensor3 {
    let k = stage.spec.kernel;
    let s = stage.spec.stride;
    let p = stage.spec.padding as isize;
    let mut out = Tensor3::zeros(stage.out_h, stage.out_w, stage.spec.out_channels);
    for oy in 0..stage.out_h {
        for ox in 0..stage.out_w {
            for oc in 0..stage.spec.out_channels {
                let mut acc = stage.bias[oc];
                for ky in 0..k {
                    let iy = (oy * s) as isize - p + ky as isize;
                    if iy < 0 || iy >= input.h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s) as isize - p + kx as isize;
                        if ix < 0 || ix >= input.w as isize {
                            continue;
                        }
                        for ic in 0..input.c {
                            acc += stage.w_at(oc, ic, ky, kx)
                                * input.data[input.idx(iy as usize, ix as usize, ic)];
                        }
                    }
                }
                if stage.spec.activation == Activation::Relu && acc < 0.0 {
                    acc = 0.0;
                }
                let oi = out.idx(oy, ox, oc);
                out.data[oi] = acc;
            }
        }
    }
    out
}

/// Scatters a gradient at the conv output back onto the conv input.
fn conv_backward_input(stage: &Stage, grad_out: &Tensor3) -> Tensor3 {
    let k = stage.spec.kernel;
    let s = stage.spec.stride;
    let p = stage.spec.padding as isize;
    let mut grad_in = Tensor3::zeros(stage.in_h, stage.in_w, stage.in_channels);
    for oy in 0..stage.out_h {
        for ox in 0..stage.out_w {
            for oc in 0..stage.spec.out_channels {
                let g = grad_out.data[grad_out.idx(oy, ox, oc)];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..k {
                    let iy = (oy * s) as isize - p + ky as isize;
                    if iy < 0 || iy >= stage.in_h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s) as isize - p + kx as isize;
                        if ix < 0 || ix >= stage.in_w as isize {
                            continue;
                        }
                        for ic in 0..stage.in_channels {
                            let gi = grad_in.idx(iy as usize, ix as usize, ic);
                            grad_in.data[gi] += g * stage.w_at(oc, ic, ky, kx);
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Channel-normalized squared difference, averaged over locations.
fn stage_distance(a: &Tensor3, b: &Tensor3) -> f64 {
    let inv_area = 1.0 / (a.h * a.w) as f64;
    let mut acc = KahanSum::new();
    let mut fa = vec![0.0; a.c];
    let mut fb = vec![0.0; b.c];
    for y in 0..a.h {
        for x in 0..a.w {
            for c in 0..a.c {
                fa[c] = a.data[a.idx(y, x, c)];
                fb[c] = b.data[b.idx(y, x, c)];
            }
            let na = norm_factor(&fa);
            let nb = norm_factor(&fb);
            let mut loc = 0.0;
            for c in 0..a.c {
                let d = fa[c] / na - fb[c] / nb;
                loc += d * d;
            }
            acc.add(loc);
        }
    }
    acc.value() * inv_area
}

fn stage_distance_with_grad(a: &Tensor3, b: &Tensor3) -> (f64, Tensor3) {
    let inv_area = 1.0 / (a.h * a.w) as f64;
    let mut acc = KahanSum::new();
    let mut grad = Tensor3::zeros(a.h, a.w, a.c);
    let mut fa = vec![0.0; a.c];
    let mut fb = vec![0.0; b.c];
    for y in 0..a.h {
        for x in 0..a.w {
            for c in 0..a.c {
                fa[c] = a.data[a.idx(y, x, c)];
                fb[c] = b.data[b.idx(y, x, c)];
            }
            let na = norm_factor(&fa);
            let nb = norm_factor(&fb);
            let mut loc = 0.0;
            // dL/d fhat_a = 2 (fhat_a - fhat_b) * inv_area; pull back
            // through fhat = f / sqrt(|f|^2 + eps).
            let mut dot = 0.0;
            let mut gh = vec![0.0; a.c];
            for c in 0..a.c {
                let ha = fa[c] / na;
                let hb = fb[c] / nb;
                let d = ha - hb;
                loc += d * d;
                gh[c] = 2.0 * d * inv_area;
                dot += fa[c] * gh[c];
            }
            let inv_na = 1.0 / na;
            let inv_na3 = inv_na * inv_na * inv_na;
            for c in 0..a.c {
                let gi = grad.idx(y, x, c);
                grad.data[gi] = gh[c] * inv_na - fa[c] * dot * inv_na3;
            }
            acc.add(loc);
        }
    }
    (acc.value() * inv_area, grad)
}

#[inline]
fn norm_factor(f: &[f64]) -> f64 {
    let sq: f64 = f.iter().map(|&v| v * v).sum();
    (sq + NORM_EPS).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use proptest::prelude::*;
    use rand::Rng;

    fn rand_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(0.0..1.0)).collect();
        Image::new(h, w, c, data).unwrap()
    }

    #[test]
    fn distance_to_self_is_zero() {
        let fs = FeatureStack::toy(16, 16, 3).unwrap();
        let img = rand_image(16, 16, 3, 1);
        assert_eq!(fs.perc_distance(&img, &img).unwrap(), 0.0);
    }

    #[test]
    fn distance_is_symmetric() {
        let fs = FeatureStack::toy(16, 16, 3).unwrap();
        let a = rand_image(16, 16, 3, 1);
        let b = rand_image(16, 16, 3, 2);
        let dab = fs.perc_distance(&a, &b).unwrap();
        let dba = fs.perc_distance(&b, &a).unwrap();
        assert!(dab > 0.0);
        assert!((dab - dba).abs() < 1e-15);
    }

    #[test]
    fn identity_single_stage_hand_case() {
        // 1x1 identity kernel on 1x1x2 images a=(1,0), b=(0,1): the
        // channel-normalized feature vectors are the inputs themselves,
        // so the squared difference sums to 2.
        let spec = [StageSpec {
            out_channels: 2,
            kernel: 1,
            stride: 1,
            padding: 0,
            activation: Activation::Relu,
        }];
        // Identity weights: out0 <- in0, out1 <- in1, zero bias.
        let flat = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let fs = FeatureStack::from_flat_weights((1, 1, 2), &spec, &flat).unwrap();
        let a = Image::new(1, 1, 2, vec![1.0, 0.0]).unwrap();
        let b = Image::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let d = fs.perc_distance(&a, &b).unwrap();
        assert!((d - 2.0).abs() < 1e-9, "distance {d}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fs = FeatureStack::toy(16, 16, 3).unwrap();
        let b = rand_image(16, 16, 3, 7);
        for seed in [11u64, 12, 13] {
            let a = rand_image(16, 16, 3, seed);
            let (_, grad) = fs.perc_distance_with_grad(&a, &b).unwrap();
            let f = |x: &[f64]| {
                let img = Image::new(16, 16, 3, x.to_vec()).unwrap();
                fs.perc_distance(&img, &b).unwrap()
            };
            let report = gradcheck::check_coordinates(
                f,
                a.data(),
                &grad,
                &gradcheck::subset(a.data().len(), 64, seed),
                &gradcheck::Tolerances::default(),
            );
            assert!(report.ok(), "seed {seed}: {report:?}");
            let dir_err = gradcheck::directional_error(f, a.data(), &grad, seed);
            assert!(dir_err < 1e-4, "seed {seed}: directional rel err {dir_err}");
        }
    }

    #[test]
    fn with_grad_distance_agrees_with_plain_distance() {
        let fs = FeatureStack::toy(16, 16, 3).unwrap();
        let a = rand_image(16, 16, 3, 21);
        let b = rand_image(16, 16, 3, 22);
        let d0 = fs.perc_distance(&a, &b).unwrap();
        let (d1, _) = fs.perc_distance_with_grad(&a, &b).unwrap();
        assert_eq!(d0, d1);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let fs = FeatureStack::toy(16, 16, 3).unwrap();
        let a = rand_image(16, 16, 3, 1);
        let bad = rand_image(8, 8, 3, 1);
        assert!(fs.perc_distance(&a, &bad).is_err());
        assert!(fs.feature_vector(&bad).is_err());
    }

    #[test]
    fn flat_weight_round_trip_preserves_distances() {
        let fs = FeatureStack::toy(16, 16, 5).unwrap();
        let flat = fs.flat_weights();
        let fs2 =
            FeatureStack::from_flat_weights(fs.input_shape(), &fs.stage_specs(), &flat).unwrap();
        let a = rand_image(16, 16, 3, 1);
        let b = rand_image(16, 16, 3, 2);
        assert_eq!(
            fs.perc_distance(&a, &b).unwrap(),
            fs2.perc_distance(&a, &b).unwrap()
        );
        assert!(FeatureStack::from_flat_weights(
            fs.input_shape(),
            &fs.stage_specs(),
            &flat[1..]
        )
        .is_err());
    }

    #[test]
    fn feature_vector_has_declared_dimension() {
        let fs = FeatureStack::toy(16, 16, 3).unwrap();
        let v = fs.feature_vector(&rand_image(16, 16, 3, 4)).unwrap();
        assert_eq!(v.len(), fs.feature_dim());
        assert_eq!(v.len(), 8 + 16 + 16);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn distance_nonnegative_and_symmetric(sa in 0u64..500, sb in 0u64..500) {
            let fs = FeatureStack::toy(8, 8, 3).unwrap();
            let a = rand_image(8, 8, 3, sa);
            let b = rand_image(8, 8, 3, sb);
            let dab = fs.perc_distance(&a, &b).unwrap();
            let dba = fs.perc_distance(&b, &a).unwrap();
            prop_assert!(dab >= 0.0);
            prop_assert!((dab - dba).abs() < 1e-12);
        }
    }
}
