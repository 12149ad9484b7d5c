//! Distribution- and structure-level image comparison metrics.
//!
//! [`fid_score`] fits a Gaussian to pooled feature vectors of each image
//! set and reports the Fréchet distance between the two fits; [`ssim`]
//! compares two images window by window. Both are evaluation-only and
//! carry no gradients.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::generator::Image;
use crate::numeric::KahanSum;
use crate::perceptual::FeatureStack;

/// Eigenvalues of a nominally PSD matrix below this are reported before
/// being clipped to zero; above (i.e. small negatives) they are clipped
/// silently as ordinary round-off.
const EIG_CLIP_WARN: f64 = -1e-6;

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
}

impl GaussianStats {
    /// Wraps precomputed statistics. The covariance must be square,
    /// symmetric to round-off, and sized like the mean.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("gaussian statistics need dimension >= 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid(format!(
                "covariance is {}x{} but the mean has dimension {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !mean.iter().all(|v| v.is_finite()) || !cov.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("gaussian statistics must be finite"));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::invalid(format!("covariance is asymmetric (max gap {asym:.3e})")));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Sample mean and unbiased (n - 1) covariance of feature vectors.
pub fn fit_gaussian(samples: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("covariance estimation needs at least 2 samples"));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::invalid("feature vectors must be non-empty"));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(Error::invalid(format!(
                "sample {i} has dimension {}, expected {d}",
                s.len()
            )));
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} contains non-finite entries")));
        }
    }

    let mut mean = vec![0.0; d];
    for (j, m) in mean.iter_mut().enumerate() {
        let mut acc = KahanSum::new();
        for s in samples {
            acc.add(s[j]);
        }
        *m = acc.value() / n as f64;
    }

    let denom = (n - 1) as f64;
    let cov = DMatrix::from_fn(d, d, |i, j| {
        let mut acc = KahanSum::new();
        for s in samples {
            acc.add((s[i] - mean[i]) * (s[j] - mean[j]));
        }
        acc.value() / denom
    });
    GaussianStats::new(mean, cov)
}

/// Symmetric PSD square root via eigendecomposition; small negative
/// eigenvalues from round-off are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("matrix square root needs a square matrix"));
    }
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| {
        if l < EIG_CLIP_WARN {
            log::warn!("clipping eigenvalue {l:.3e} to zero in matrix square root");
        }
        l.max(0.0).sqrt()
    });
    let q = eig.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Fréchet distance between two Gaussians:
/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))`.
///
/// The cross term is computed as the trace of the square root of the
/// symmetrized product `S1^(1/2) S2 S1^(1/2)`, which shares its spectrum
/// with `S1 S2` but stays symmetric PSD, so a symmetric eigensolver
/// applies.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "gaussian dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dmu2 = KahanSum::new();
    for (x, y) in a.mean.iter().zip(&b.mean) {
        dmu2.add((x - y) * (x - y));
    }

    let s1h = psd_sqrt(&a.cov)?;
    let inner = &s1h * &b.cov * &s1h;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner);
    let mut tr_sqrt = KahanSum::new();
    for &l in eig.eigenvalues.iter() {
        if l < EIG_CLIP_WARN {
            log::warn!("clipping eigenvalue {l:.3e} to zero in Fréchet cross term");
        }
        tr_sqrt.add(l.max(0.0).sqrt());
    }

    let d = dmu2.value() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt.value();
    if !d.is_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            message: format!("Fréchet distance evaluated to {d}"),
        });
    }
    Ok(d)
}

/// Fréchet distance between Gaussians fit to the pooled feature vectors of
/// two image sets, extracted with `stack`.
pub fn fid_score(generated: &[Image], reference: &[Image], stack: &FeatureStack) -> Result<f64> {
    let features = |set: &[Image], name: &str| -> Result<Vec<Vec<f64>>> {
        if set.len() < 2 {
            return Err(Error::invalid(format!(
                "{name} set has {} images; need at least 2 to fit a covariance",
                set.len()
            )));
        }
        set.iter().map(|img| stack.feature_vector(img)).collect()
    };
    let ga = fit_gaussian(&features(generated, "generated")?)?;
    let gb = fit_gaussian(&features(reference, "reference")?)?;
    frechet_distance(&ga, &gb)
}

/// Settings for [`ssim`].
#[derive(Debug, Clone, Copy)]
pub struct SsimOpts {
    /// Side of the uniform square window.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the pixel values (1.0 for unit-interval images).
    pub data_range: f64,
}

impl Default for SsimOpts {
    fn default() -> Self {
        Self { window: 7, k1: 0.01, k2: 0.03, data_range: 1.0 }
    }
}

/// Mean structural similarity over all valid uniform windows and channels.
/// Symmetric, 1.0 for identical images, bounded by [-1, 1].
pub fn ssim(a: &Image, b: &Image, opts: &SsimOpts) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (h, w, c) = a.shape();
    if opts.window < 2 || opts.window > h.min(w) {
        return Err(Error::invalid(format!(
            "window {} invalid for {h}x{w} images (need 2..=min(h, w))",
            opts.window
        )));
    }
    if !(opts.data_range > 0.0) || !(opts.k1 > 0.0) || !(opts.k2 > 0.0) {
        return Err(Error::invalid("data_range, k1, k2 must be positive"));
    }
    let c1 = (opts.k1 * opts.data_range).powi(2);
    let c2 = (opts.k2 * opts.data_range).powi(2);
    let win = opts.window;
    let wn = (win * win) as f64;

    let mut acc = KahanSum::new();
    let mut count = 0usize;
    for ch in 0..c {
        for y0 in 0..=(h - win) {
            for x0 in 0..=(w - win) {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in y0..y0 + win {
                    for x in x0..x0 + win {
                        let va = a.get(y, x, ch);
                        let vb = b.get(y, x, ch);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let ma = sa / wn;
                let mb = sb / wn;
                let var_a = saa / wn - ma * ma;
                let var_b = sbb / wn - mb * mb;
                let cov = sab / wn - ma * mb;
                let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let strct = (2.0 * cov + c2) / (var_a + var_b + c2);
                acc.add(lum * strct);
                count += 1;
            }
        }
    }
    Ok(acc.value() / count as f64)
}
