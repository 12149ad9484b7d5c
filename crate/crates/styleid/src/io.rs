//! On-disk formats: latent codes, generator checkpoints, and PNG images.
//!
//! Both binary containers are little-endian with a 5-byte ASCII magic,
//! u32 header fields, and an f32 payload, so files are portable across
//! platforms and byte-identical for identical inputs:
//!
//! * latents: `SIDL1`, header `(layers, dim)`, payload row-major values;
//! * checkpoints: `SIDG1`, header `(layers, dim, height, width, channels,
//!   param_count)`, payload the flat parameter vector;
//! * external feature-stack weights reuse the `SIDG1` container with
//!   header `(stages, feature_dim, height, width, channels, weight_count)`.
//!
//! PNG handling goes through the `image` crate. [`load_png_fitted`]
//! adapts arbitrary input sizes with a bilinear resize of the shorter
//! side followed by a center crop, logging whenever it reshapes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::generator::{Generator, Image, ToyGenerator};
use crate::latent::LatentCode;
use crate::perceptual::{toy_stage_specs, FeatureStack};

const LATENT_MAGIC: &[u8; 5] = b"SIDL1";
const GENERATOR_MAGIC: &[u8; 5] = b"SIDG1";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path, e.to_string())
}

fn push_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} exceeds u32 range")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Sequential little-endian reader with format-error context.
struct Cursor<'a> {
    path: &'a Path,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(
                self.path,
                format!("truncated while reading {what} (need {n} bytes at offset {})", self.pos),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expect: &[u8; 5]) -> Result<()> {
        let got = self.take(5, "magic")?;
        if got != expect {
            return Err(Error::format(
                self.path,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expect)
                ),
            ));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32_vec(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count * 4, what)?;
        let mut out = Vec::with_capacity(count);
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::format(self.path, format!("non-finite {what} at index {i}")));
            }
            out.push(f64::from(v));
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::format(
                self.path,
                format!("{} trailing bytes after payload", self.data.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| io_err(path, e))?;
    Ok(buf)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

/// Serializes a latent code to the `SIDL1` container.
pub fn write_latent(path: impl AsRef<Path>, w: &LatentCode) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(13 + w.values().len() * 4);
    buf.extend_from_slice(LATENT_MAGIC);
    push_u32(&mut buf, w.layers())?;
    push_u32(&mut buf, w.dim())?;
    for &v in w.values() {
        push_f32(&mut buf, v);
    }
    write_all(path, &buf)
}

/// Reads a `SIDL1` latent code.
pub fn read_latent(path: impl AsRef<Path>) -> Result<LatentCode> {
    let path = path.as_ref();
    let data = read_all(path)?;
    let mut cur = Cursor { path, data: &data, pos: 0 };
    cur.magic(LATENT_MAGIC)?;
    let layers = cur.u32("layer count")?;
    let dim = cur.u32("style dimension")?;
    if layers == 0 || dim == 0 {
        return Err(Error::format(path, format!("degenerate latent shape {layers}x{dim}")));
    }
    let values = cur.f32_vec(layers * dim, "latent values")?;
    cur.finish()?;
    LatentCode::new(layers, dim, values)
}

/// Serializes a generator checkpoint to the `SIDG1` container.
pub fn write_generator(path: impl AsRef<Path>, g: &dyn Generator) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = g.output_shape();
    let params = g.params();
    let mut buf = Vec::with_capacity(29 + params.len() * 4);
    buf.extend_from_slice(GENERATOR_MAGIC);
    push_u32(&mut buf, g.layer_count())?;
    push_u32(&mut buf, g.style_dim())?;
    push_u32(&mut buf, h)?;
    push_u32(&mut buf, w)?;
    push_u32(&mut buf, c)?;
    push_u32(&mut buf, params.len())?;
    for &v in params {
        push_f32(&mut buf, v);
    }
    write_all(path, &buf)
}

/// Serializes a feature stack's weights into the same `SIDG1` container
/// used for checkpoints: header `(stage_count, feature_dim, input height,
/// input width, input channels, weight_count)`, payload the flat weights.
pub fn write_extractor(path: impl AsRef<Path>, stack: &FeatureStack) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = stack.input_shape();
    let weights = stack.flat_weights();
    let mut buf = Vec::with_capacity(29 + weights.len() * 4);
    buf.extend_from_slice(GENERATOR_MAGIC);
    push_u32(&mut buf, stack.stage_specs().len())?;
    push_u32(&mut buf, stack.feature_dim())?;
    push_u32(&mut buf, h)?;
    push_u32(&mut buf, w)?;
    push_u32(&mut buf, c)?;
    push_u32(&mut buf, weights.len())?;
    for &v in &weights {
        push_f32(&mut buf, v);
    }
    write_all(path, &buf)
}

/// Reads externally supplied feature-stack weights. The container does not
/// carry stage shapes, so only weights for the default architecture
/// ([`toy_stage_specs`]) can be rebuilt; anything else is rejected.
pub fn read_extractor(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let path = path.as_ref();
    let data = read_all(path)?;
    let mut cur = Cursor { path, data: &data, pos: 0 };
    cur.magic(GENERATOR_MAGIC)?;
    let stages = cur.u32("stage count")?;
    let feature_dim = cur.u32("feature dimension")?;
    let h = cur.u32("input height")?;
    let w = cur.u32("input width")?;
    let c = cur.u32("input channel count")?;
    let count = cur.u32("weight count")?;
    let weights = cur.f32_vec(count, "weights")?;
    cur.finish()?;

    let specs = toy_stage_specs();
    if stages != specs.len() {
        return Err(Error::invalid(format!(
            "extractor container describes {stages} stage(s); only the default {}-stage architecture can be loaded",
            specs.len()
        )));
    }
    let stack = FeatureStack::from_flat_weights((h, w, c), &specs, &weights)?;
    if stack.feature_dim() != feature_dim {
        return Err(Error::invalid(format!(
            "extractor container claims feature dimension {feature_dim}, architecture yields {}",
            stack.feature_dim()
        )));
    }
    Ok(stack)
}

/// Reads a `SIDG1` checkpoint into the flat-weights backend.
pub fn read_generator(path: impl AsRef<Path>) -> Result<ToyGenerator> {
    let path = path.as_ref();
    let data = read_all(path)?;
    let mut cur = Cursor { path, data: &data, pos: 0 };
    cur.magic(GENERATOR_MAGIC)?;
    let layers = cur.u32("layer count")?;
    let dim = cur.u32("style dimension")?;
    let h = cur.u32("height")?;
    let w = cur.u32("width")?;
    let c = cur.u32("channel count")?;
    let count = cur.u32("parameter count")?;
    let params = cur.f32_vec(count, "parameters")?;
    cur.finish()?;
    ToyGenerator::from_parts(layers, dim, h, w, c, params)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn to_rgb8(img: &Image) -> Result<image::RgbImage> {
    let (h, w, c) = img.shape();
    if c != 3 {
        return Err(Error::invalid(format!("PNG export needs 3 channels, image has {c}")));
    }
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|ch| {
                let v = img.get(y, x, ch).clamp(0.0, 1.0);
                (v * 255.0).round() as u8
            });
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(out)
}

fn from_rgb8(rgb: &image::RgbImage) -> Image {
    let (w, h) = rgb.dimensions();
    let mut img = Image::zeros(h as usize, w as usize, 3);
    for y in 0..h {
        for x in 0..w {
            let px = rgb.get_pixel(x, y);
            for ch in 0..3 {
                img.set(y as usize, x as usize, ch, f64::from(px[ch]) / 255.0);
            }
        }
    }
    img
}

/// Writes an image as 8-bit RGB PNG; values are clamped to [0, 1] first.
pub fn save_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    to_rgb8(img)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, e.to_string()))
}

/// Distinguishes "cannot read the file" from "file is not a decodable
/// image"; both exit with code 3 but the report should name the real cause.
fn map_image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Loads a PNG (or any format the backend decodes) as unit-interval RGB.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|e| map_image_error(path, e))?;
    Ok(from_rgb8(&dynimg.to_rgb8()))
}

/// Loads a PNG and fits it to `height` x `width`: bilinear resize so the
/// image covers the target, then center crop. A no-op for images already
/// at the target size.
pub fn load_png_fitted(path: impl AsRef<Path>, height: usize, width: usize) -> Result<Image> {
    let path = path.as_ref();
    if height == 0 || width == 0 {
        return Err(Error::invalid("target size must be nonzero"));
    }
    let dynimg = image::open(path).map_err(|e| map_image_error(path, e))?;
    let rgb = dynimg.to_rgb8();
    let (w0, h0) = rgb.dimensions();
    if (h0 as usize, w0 as usize) == (height, width) {
        return Ok(from_rgb8(&rgb));
    }
    let scale = (height as f64 / h0 as f64).max(width as f64 / w0 as f64);
    let rw = ((w0 as f64 * scale).round() as u32).max(width as u32);
    let rh = ((h0 as f64 * scale).round() as u32).max(height as u32);
    log::info!(
        "fitting {} from {w0}x{h0} to {width}x{height} (resize to {rw}x{rh}, center crop)",
        path.display()
    );
    let resized =
        image::imageops::resize(&rgb, rw, rh, image::imageops::FilterType::Triangle);
    let x0 = (rw - width as u32) / 2;
    let y0 = (rh - height as u32) / 2;
    let cropped =
        image::imageops::crop_imm(&resized, x0, y0, width as u32, height as u32).to_image();
    Ok(from_rgb8(&cropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::ToyConfig;
    use crate::latent::LatentPrior;
    use crate::latent::NormalPrior;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn latent_round_trip_is_exact_at_f32_precision() {
        let dir = tmp();
        let p = dir.path().join("w.sidl");
        let w = NormalPrior { layers: 8, dim: 16 }.sample_latent(3);
        write_latent(&p, &w).unwrap();
        let r = read_latent(&p).unwrap();
        assert_eq!(r.shape(), w.shape());
        for (a, b) in r.values().iter().zip(w.values()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
    }

    #[test]
    fn generator_round_trip_preserves_synthesis() {
        let dir = tmp();
        let p = dir.path().join("g.sidg");
        let g = ToyGenerator::new(ToyConfig::default()).unwrap();
        write_generator(&p, &g).unwrap();
        let r = read_generator(&p).unwrap();
        assert_eq!(r.output_shape(), g.output_shape());
        // Parameters survive up to f32; synthesized images must agree to
        // the same precision.
        let w = g.sample_prior(5);
        let a = g.synthesize(&w).unwrap();
        let b = r.synthesize(&w).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn extractor_round_trip_preserves_the_stack() {
        let dir = tmp();
        let p = dir.path().join("e.sidg");
        let stack = FeatureStack::toy(16, 16, 42).unwrap();
        write_extractor(&p, &stack).unwrap();
        let r = read_extractor(&p).unwrap();
        assert_eq!(r.input_shape(), stack.input_shape());
        assert_eq!(r.feature_dim(), stack.feature_dim());
        for (a, b) in r.flat_weights().iter().zip(stack.flat_weights()) {
            assert_eq!(*a, f64::from(b as f32));
        }

        // A generator checkpoint shares the container but describes a
        // different architecture; loading it as an extractor must fail
        // loudly instead of misreading the header.
        let gp = dir.path().join("g.sidg");
        write_generator(&gp, &ToyGenerator::new(ToyConfig::default()).unwrap()).unwrap();
        assert!(matches!(read_extractor(&gp), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn writes_are_byte_identical_across_calls() {
        let dir = tmp();
        let (p1, p2) = (dir.path().join("a"), dir.path().join("b"));
        let w = NormalPrior { layers: 4, dim: 6 }.sample_latent(9);
        write_latent(&p1, &w).unwrap();
        write_latent(&p2, &w).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_bytes() {
        let dir = tmp();
        let p = dir.path().join("w.sidl");
        let w = NormalPrior { layers: 2, dim: 3 }.sample_latent(0);
        write_latent(&p, &w).unwrap();
        let good = fs::read(&p).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&p, &bad).unwrap();
        assert!(matches!(read_latent(&p), Err(Error::Format { .. })));

        fs::write(&p, &good[..good.len() - 2]).unwrap();
        assert!(matches!(read_latent(&p), Err(Error::Format { .. })));

        let mut long = good.clone();
        long.push(0);
        fs::write(&p, &long).unwrap();
        assert!(matches!(read_latent(&p), Err(Error::Format { .. })));

        // NaN payload entry.
        let mut nan = good;
        let off = 13;
        nan[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, &nan).unwrap();
        assert!(matches!(read_latent(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(read_latent("/nonexistent/path.sidl"), Err(Error::Io { .. })));
        assert!(matches!(read_generator("/nonexistent/path.sidg"), Err(Error::Io { .. })));
    }

    #[test]
    fn png_round_trip_preserves_8bit_values() {
        let dir = tmp();
        let p = dir.path().join("img.png");
        let mut img = Image::zeros(8, 8, 3);
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    let v = ((y * 8 + x) * 3 + c) % 256;
                    img.set(y, x, c, v as f64 / 255.0);
                }
            }
        }
        save_png(&p, &img).unwrap();
        let r = load_png(&p).unwrap();
        assert_eq!(r.shape(), img.shape());
        assert_eq!(r.data(), img.data());
    }

    #[test]
    fn fitted_load_resizes_and_crops_to_target() {
        let dir = tmp();
        let p = dir.path().join("big.png");
        let mut img = Image::zeros(48, 40, 3);
        for v in img.data_mut().iter_mut() {
            *v = 0.5;
        }
        save_png(&p, &img).unwrap();
        let r = load_png_fitted(&p, 32, 32).unwrap();
        assert_eq!(r.shape(), (32, 32, 3));
        // Constant image stays constant under resize + crop.
        assert!(r.data().iter().all(|&v| (v - 0.5).abs() < 0.01));
        // Exact-size input is untouched.
        let q = dir.path().join("exact.png");
        save_png(&q, &Image::zeros(32, 32, 3)).unwrap();
        assert_eq!(load_png_fitted(&q, 32, 32).unwrap().shape(), (32, 32, 3));
    }
}
