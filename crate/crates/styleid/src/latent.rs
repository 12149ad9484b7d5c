//! Latent-space algebra: extended latent codes, swap lists, and the
//! style-mixing operations used during fine-tuning.
//!
//! A latent code is an `L x D` matrix: one `D`-dimensional style row per
//! generator layer. The rows named by a [`SwapList`] carry the artistic
//! style; decoupling splits a code into that part and the rest, and mixing
//! blends the style rows of a reference code with freshly sampled ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// An `L x D` matrix in a generator's extended latent space, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    layers: usize,
    dim: usize,
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(layers: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if layers == 0 || dim == 0 {
            return Err(Error::invalid("latent shape must be nonzero"));
        }
        if values.len() != layers * dim {
            return Err(Error::invalid(format!(
                "latent payload has {} entries, expected {}x{}",
                values.len(),
                layers,
                dim
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("latent entries must be finite"));
        }
        Ok(Self { layers, dim, values })
    }

    pub fn zeros(layers: usize, dim: usize) -> Self {
        Self {
            layers,
            dim,
            values: vec![0.0; layers * dim],
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.layers, self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.values[layer * self.dim..(layer + 1) * self.dim]
    }

    pub fn row_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.values[layer * self.dim..(layer + 1) * self.dim]
    }

    pub fn same_shape(&self, other: &LatentCode) -> bool {
        self.layers == other.layers && self.dim == other.dim
    }

    fn check_same_shape(&self, other: &LatentCode, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::invalid(format!(
                "{what}: shape {}x{} does not match {}x{}",
                self.layers, self.dim, other.layers, other.dim
            )));
        }
        Ok(())
    }
}

/// Strictly increasing, duplicate-free generator layer indices whose latent
/// rows carry the artistic style.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapList {
    indices: Vec<usize>,
}

impl SwapList {
    /// Builds a swap list from arbitrary-order indices. Duplicates are
    /// rejected; the stored form is sorted ascending.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("swap list contains duplicate indices"));
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    /// All layers of an `L`-layer generator.
    pub fn full(layers: usize) -> Self {
        Self {
            indices: (0..layers).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.indices.binary_search(&layer).is_ok()
    }

    /// Errors unless every index addresses a valid layer of an `L`-layer code.
    pub fn validate_for_layers(&self, layers: usize) -> Result<()> {
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= layers) {
            return Err(Error::invalid(format!(
                "swap index {bad} out of range for {layers} layers"
            )));
        }
        Ok(())
    }

    /// Default style rows for an `L`-layer backend: the mid-to-fine rows
    /// that carry texture and color rather than pose. Deep generators get
    /// the 18-layer profile `[7, 9, 11, 15, 16, 17]`; shallow backends get
    /// `[3, 4, 5, 7]` clipped to their depth.
    pub fn style_rows_default(layers: usize) -> SwapList {
        let profile: &[usize] = if layers >= 18 { &[7, 9, 11, 15, 16, 17] } else { &[3, 4, 5, 7] };
        SwapList {
            indices: profile.iter().copied().filter(|&i| i < layers).collect(),
        }
    }

    /// Drops indices that do not fit an `L`-layer backend, warning once per
    /// dropped index. Lets a deep-generator profile run on a shallow backend.
    pub fn clipped_to(&self, layers: usize) -> SwapList {
        let (keep, drop): (Vec<usize>, Vec<usize>) =
            self.indices.iter().partition(|&&i| i < layers);
        for idx in &drop {
            log::warn!("swap index {idx} exceeds backend layer count {layers}; dropped");
        }
        SwapList { indices: keep }
    }
}

impl std::fmt::Display for SwapList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl std::str::FromStr for SwapList {
    type Err = Error;

    /// Parses "7,9,11" style comma-separated indices; empty string is the
    /// empty swap list.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(SwapList::empty());
        }
        let indices = s
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad swap index {part:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        SwapList::new(indices)
    }
}

/// Parameters of the style mix: blend factor, swap rows, and the seed for
/// the random style sample.
#[derive(Debug, Clone)]
pub struct MixParams {
    pub alpha: f64,
    pub swap: SwapList,
    pub seed: u64,
}

impl MixParams {
    pub fn new(alpha: f64, swap: SwapList, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { alpha, swap, seed })
    }
}

/// Source of full `L x D` latent samples; generator backends implement this
/// so random style rows stay on the backend's latent manifold.
pub trait LatentPrior {
    /// (layers, dim) of produced latents.
    fn latent_shape(&self) -> (usize, usize);

    /// Deterministic full latent sample for the seed.
    fn sample_latent(&self, seed: u64) -> LatentCode;
}

/// Standard-normal prior over every entry. This is the toy backend's prior
/// and the default for tests.
#[derive(Debug, Clone, Copy)]
pub struct NormalPrior {
    pub layers: usize,
    pub dim: usize,
}

impl LatentPrior for NormalPrior {
    fn latent_shape(&self) -> (usize, usize) {
        (self.layers, self.dim)
    }

    fn sample_latent(&self, seed: u64) -> LatentCode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..self.layers * self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        LatentCode {
            layers: self.layers,
            dim: self.dim,
            values,
        }
    }
}

/// Splits `w` into its style-independent and style-related parts.
///
/// The related part keeps exactly the swap rows of `w` (zero elsewhere),
/// the independent part keeps the rest, and the two always sum back to `w`.
pub fn decouple(w: &LatentCode, swap: &SwapList) -> Result<(LatentCode, LatentCode)> {
    swap.validate_for_layers(w.layers)?;
    let mut independent = w.clone();
    let mut related = LatentCode::zeros(w.layers, w.dim);
    for &layer in swap.indices() {
        related.row_mut(layer).copy_from_slice(w.row(layer));
        independent.row_mut(layer).fill(0.0);
    }
    Ok((independent, related))
}

/// Blends the style rows of `w_s` with the random style rows of `w_rand`:
/// swap rows become `alpha * w_s + (1 - alpha) * w_rand`, all other rows
/// are returned bit-identical to `w_s`.
///
/// `w_rand` is expected to be zero outside the swap rows; produce it via
/// [`sample_random_style`].
pub fn mix(w_s: &LatentCode, w_rand: &LatentCode, params: &MixParams) -> Result<LatentCode> {
    w_s.check_same_shape(w_rand, "mix")?;
    params.swap.validate_for_layers(w_s.layers)?;
    let mut out = w_s.clone();
    let a = params.alpha;
    for &layer in params.swap.indices() {
        let src = w_s.row(layer);
        let rnd = w_rand.row(layer);
        for ((o, &s), &r) in out.row_mut(layer).iter_mut().zip(src).zip(rnd) {
            *o = a * s + (1.0 - a) * r;
        }
    }
    Ok(out)
}

/// Draws a fresh style tensor: a full prior sample masked to the swap rows,
/// zero everywhere else. Pure function of (shape, swap, seed).
pub fn sample_random_style<P: LatentPrior + ?Sized>(
    template: &LatentCode,
    swap: &SwapList,
    seed: u64,
    prior: &P,
) -> Result<LatentCode> {
    swap.validate_for_layers(template.layers)?;
    let (pl, pd) = prior.latent_shape();
    if (pl, pd) != template.shape() {
        return Err(Error::invalid(format!(
            "prior produces {pl}x{pd} latents but template is {}x{}",
            template.layers, template.dim
        )));
    }
    let full = prior.sample_latent(seed);
    let mut out = LatentCode::zeros(template.layers, template.dim);
    for &layer in swap.indices() {
        out.row_mut(layer).copy_from_slice(full.row(layer));
    }
    Ok(out)
}
