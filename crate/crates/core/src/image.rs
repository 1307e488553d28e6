//! Image container and the linear measurement operators.
//!
//! Intensities live on a nominal `[0, 255]` real scale regardless of the bit
//! depth they were stored with. The super-resolution forward model uses the
//! block mean `D` ([`block_downsample`]) and its scaled adjoint, pixel
//! replication `U` ([`replicate_upsample`]), which satisfy
//! `<u, D v> = <U u, v> / L²` and `D U = I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row-major grid of finite real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = checked_area(width, height)?;
        if pixels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {n} pixels, got {}",
                pixels.len()
            )));
        }
        if let Some(index) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        let n = checked_area(width, height)?;
        Image::new(width, height, vec![value; n])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Image::filled(width, height, 0.0)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let n = checked_area(width, height)?;
        let mut pixels = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image::new(width, height, pixels)
    }

    /// Builds an image from pixels produced by a crate operator. Dimensions
    /// must already be consistent; finiteness is the caller's concern.
    pub(crate) fn from_parts(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Index of the first non-finite pixel, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.pixels.iter().position(|p| !p.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_parts(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| f(p)).collect(),
        )
    }

    /// Elementwise combination of two images of equal dimensions.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_dims(other)?;
        Ok(Image::from_parts(
            self.width,
            self.height,
            self.pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Euclidean norm of the pixel vector.
    pub fn norm(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// Copies the `w`×`h` rectangle with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.row(y)[x0..x0 + w]);
        }
        Ok(Image::from_parts(w, h, pixels))
    }
}

pub(crate) fn checked_area(width: usize, height: usize) -> Result<usize> {
    width
        .checked_mul(height)
        .ok_or_else(|| Error::DimensionOverflow(format!("{width}x{height}")))
}

/// Set of measured pixel positions of a sparse acquisition.
///
/// Indices are row-major, strictly increasing and in range, so the implied
/// `M×N` selection matrix has one 1 per row and at most one per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskFile", into = "MaskFile")]
pub struct SamplingMask {
    width: usize,
    height: usize,
    indices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskFile {
    width: usize,
    height: usize,
    indices: Vec<usize>,
}

impl TryFrom<MaskFile> for SamplingMask {
    type Error = Error;

    fn try_from(f: MaskFile) -> Result<Self> {
        SamplingMask::new(f.width, f.height, f.indices)
    }
}

impl From<SamplingMask> for MaskFile {
    fn from(m: SamplingMask) -> Self {
        MaskFile {
            width: m.width,
            height: m.height,
            indices: m.indices,
        }
    }
}

impl SamplingMask {
    pub fn new(width: usize, height: usize, indices: Vec<usize>) -> Result<Self> {
        let n = checked_area(width, height)?;
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "mask indices must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::invalid(format!(
                    "mask index {last} out of range for {width}x{height}"
                )));
            }
        }
        Ok(SamplingMask {
            width,
            height,
            indices,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Dense per-pixel flag, `true` where measured.
    pub fn to_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.width * self.height];
        for &i in &self.indices {
            flags[i] = true;
        }
        flags
    }

    /// Applies the selection matrix `A` to `x`.
    pub fn apply(&self, x: &Image) -> Result<Vec<f64>> {
        if x.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, image is {}x{}",
                self.width,
                self.height,
                x.width(),
                x.height()
            )));
        }
        Ok(self.indices.iter().map(|&i| x.pixels()[i]).collect())
    }
}

/// Measurement geometry, i.e. the matrix `A` in `y = Ax + ε`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardModel {
    /// Block averaging over `factor`×`factor` neighborhoods.
    SuperResolution { factor: usize },
    /// Direct observation of the masked pixels.
    SparseSample(SamplingMask),
}

/// Observed data together with the forward model that produced it.
///
/// For super-resolution `y` is the low-resolution image. For sparse sampling
/// `y` is an `M`×1 image holding the measured values in mask order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    y: Image,
    model: ForwardModel,
    sigma_w: f64,
}

impl MeasurementSet {
    pub fn super_resolution(y: Image, factor: usize, sigma_w: f64) -> Result<Self> {
        if factor < 2 {
            return Err(Error::invalid(format!(
                "super-resolution factor must be at least 2, got {factor}"
            )));
        }
        check_sigma_w(sigma_w)?;
        checked_area(y.width() * factor, y.height() * factor)?;
        Ok(MeasurementSet {
            y,
            model: ForwardModel::SuperResolution { factor },
            sigma_w,
        })
    }

    pub fn sparse(values: Vec<f64>, mask: SamplingMask, sigma_w: f64) -> Result<Self> {
        check_sigma_w(sigma_w)?;
        if values.len() != mask.count() {
            return Err(Error::DimensionMismatch(format!(
                "{} measured values for a mask of {} pixels",
                values.len(),
                mask.count()
            )));
        }
        let y = Image::new(values.len(), 1, values)?;
        Ok(MeasurementSet {
            y,
            model: ForwardModel::SparseSample(mask),
            sigma_w,
        })
    }

    pub fn y(&self) -> &Image {
        &self.y
    }

    pub fn values(&self) -> &[f64] {
        self.y.pixels()
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn with_sigma_w(mut self, sigma_w: f64) -> Result<Self> {
        check_sigma_w(sigma_w)?;
        self.sigma_w = sigma_w;
        Ok(self)
    }

    /// Dimensions of the image being reconstructed.
    pub fn target_dims(&self) -> (usize, usize) {
        match &self.model {
            ForwardModel::SuperResolution { factor } => {
                (self.y.width() * factor, self.y.height() * factor)
            }
            ForwardModel::SparseSample(mask) => (mask.width(), mask.height()),
        }
    }

    /// Number of measured values `M`.
    pub fn count(&self) -> usize {
        self.y.len()
    }

    /// Applies this set's forward model (without noise) to `x`.
    pub fn forward(&self, x: &Image) -> Result<Vec<f64>> {
        match &self.model {
            ForwardModel::SuperResolution { factor } => {
                Ok(block_downsample(x, *factor)?.into_pixels())
            }
            ForwardModel::SparseSample(mask) => mask.apply(x),
        }
    }
}

fn check_sigma_w(sigma_w: f64) -> Result<()> {
    if !(sigma_w.is_finite() && sigma_w >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma_w must be finite and nonnegative, got {sigma_w}"
        )));
    }
    Ok(())
}

/// Block mean over `factor`×`factor` neighborhoods (the averaging PSF).
pub fn block_downsample(x: &Image, factor: usize) -> Result<Image> {
    if factor == 0 || !x.width().is_multiple_of(factor) || !x.height().is_multiple_of(factor) {
        return Err(Error::NotDivisible {
            width: x.width(),
            height: x.height(),
            factor,
        });
    }
    let (ow, oh) = (x.width() / factor, x.height() / factor);
    let n = (factor * factor) as f64;
    let mut out = Vec::with_capacity(ow * oh);
    for by in 0..oh {
        for bx in 0..ow {
            // Offsets from the block's first pixel keep the mean of a
            // constant block exact, so D(U y) == y bit for bit.
            let anchor = x.get(bx * factor, by * factor);
            let mut acc = 0.0;
            for y in by * factor..(by + 1) * factor {
                for &p in &x.row(y)[bx * factor..(bx + 1) * factor] {
                    acc += p - anchor;
                }
            }
            out.push(anchor + acc / n);
        }
    }
    Ok(Image::from_parts(ow, oh, out))
}

/// Copies every pixel into a `factor`×`factor` block.
pub fn replicate_upsample(y: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::invalid("replication factor must be at least 1"));
    }
    let ow = y
        .width()
        .checked_mul(factor)
        .ok_or_else(|| Error::DimensionOverflow(format!("{} * {factor}", y.width())))?;
    let oh = y
        .height()
        .checked_mul(factor)
        .ok_or_else(|| Error::DimensionOverflow(format!("{} * {factor}", y.height())))?;
    checked_area(ow, oh)?;
    let mut out = Vec::with_capacity(ow * oh);
    for sy in 0..y.height() {
        let start = out.len();
        for &v in y.row(sy) {
            out.extend(std::iter::repeat_n(v, factor));
        }
        for _ in 1..factor {
            out.extend_from_within(start..start + ow);
        }
    }
    Ok(Image::from_parts(ow, oh, out))
}

/// Number of pixels a sampling fraction selects from `n`.
pub fn sample_count(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "sampling fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let m = (fraction * n as f64).round() as usize;
    if m == 0 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {n} pixels selects nothing"
        )));
    }
    Ok(m.min(n))
}

/// Measures `round(fraction * N)` pixels of `x` chosen uniformly without
/// replacement under `seed`.
pub fn sample_sparse(x: &Image, fraction: f64, seed: u64) -> Result<(MeasurementSet, SamplingMask)> {
    let n = x.len();
    let m = sample_count(fraction, n)?;
    let mut rng = rng::seeded(seed);
    let indices = rng::sample_indices(&mut rng, n, m);
    let mask = SamplingMask::new(x.width(), x.height(), indices)?;
    let values = mask.apply(x)?;
    let meas = MeasurementSet::sparse(values, mask.clone(), 0.0)?;
    Ok((meas, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = rng::seeded(seed);
        Image::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)).unwrap()
    }

    fn block_mean_oracle(x: &Image, l: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for by in 0..x.height() / l {
            for bx in 0..x.width() / l {
                let mut s = 0.0;
                for dy in 0..l {
                    for dx in 0..l {
                        s += x.get(bx * l + dx, by * l + dy);
                    }
                }
                out.push(s / (l * l) as f64);
            }
        }
        out
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Image::new(0, 2, vec![]).is_err());
        assert!(matches!(
            Image::new(2, 2, vec![0.0; 3]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Image::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn block_mean_of_constant_is_constant() {
        let x = Image::filled(12, 8, 37.5).unwrap();
        for l in [1, 2, 4] {
            let d = block_downsample(&x, l).unwrap();
            assert!(d.pixels().iter().all(|&p| p == 37.5));
        }
    }

    #[test]
    fn block_mean_small_case() {
        let x = Image::new(2, 2, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let d = block_downsample(&x, 2).unwrap();
        assert_eq!(d.pixels(), &[3.0]);
    }

    #[test]
    fn block_mean_matches_scalar_oracle() {
        let x = random_image(8, 8, 11);
        let d = block_downsample(&x, 4).unwrap();
        let expected = block_mean_oracle(&x, 4);
        for (a, b) in d.pixels().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn block_mean_rejects_non_divisible() {
        let x = Image::zeros(6, 4).unwrap();
        assert!(matches!(
            block_downsample(&x, 4),
            Err(Error::NotDivisible { factor: 4, .. })
        ));
    }

    #[test]
    fn replication_cases() {
        let y = Image::new(1, 1, vec![5.0]).unwrap();
        let u = replicate_upsample(&y, 2).unwrap();
        assert_eq!(u.dims(), (2, 2));
        assert_eq!(u.pixels(), &[5.0; 4]);

        let y = random_image(3, 3, 5);
        let u = replicate_upsample(&y, 2).unwrap();
        for yy in 0..6 {
            for xx in 0..6 {
                assert_eq!(u.get(xx, yy), y.get(xx / 2, yy / 2));
            }
        }

        let y = random_image(4, 4, 6);
        let back = block_downsample(&replicate_upsample(&y, 3).unwrap(), 3).unwrap();
        assert_eq!(back, y);
    }

    #[test]
    fn replication_overflow_is_reported() {
        let y = Image::zeros(2, 1).unwrap();
        assert!(matches!(
            replicate_upsample(&y, usize::MAX),
            Err(Error::DimensionOverflow(_))
        ));
    }

    #[test]
    fn sparse_sampling_counts_and_reproducibility() {
        let x = random_image(10, 10, 1);
        let (m, mask) = sample_sparse(&x, 1.0, 3).unwrap();
        assert_eq!(mask.count(), 100);
        assert_eq!(m.values(), x.pixels());

        let x = random_image(100, 100, 2);
        let (_, a) = sample_sparse(&x, 0.05, 42).unwrap();
        let (_, b) = sample_sparse(&x, 0.05, 42).unwrap();
        let (_, c) = sample_sparse(&x, 0.05, 43).unwrap();
        assert_eq!(a.count(), 500);
        assert_eq!(a, b);
        assert_ne!(a, c);

        assert!(sample_sparse(&x, 0.0, 1).is_err());
        assert!(sample_sparse(&x, 1.5, 1).is_err());
    }

    #[test]
    fn mask_validation() {
        assert!(SamplingMask::new(2, 2, vec![0, 0]).is_err());
        assert!(SamplingMask::new(2, 2, vec![1, 0]).is_err());
        assert!(SamplingMask::new(2, 2, vec![4]).is_err());
        assert!(SamplingMask::new(2, 2, vec![0, 3]).is_ok());
    }

    proptest! {
        #[test]
        fn block_mean_is_linear(seed in 0u64..1000, alpha in -10.0f64..10.0, beta in -10.0f64..10.0) {
            let a = random_image(8, 4, seed);
            let b = random_image(8, 4, seed + 7919);
            let combo = a.zip_map(&b, |p, q| alpha * p + beta * q).unwrap();
            let lhs = block_downsample(&combo, 2).unwrap();
            let da = block_downsample(&a, 2).unwrap();
            let db = block_downsample(&b, 2).unwrap();
            for i in 0..lhs.len() {
                let rhs = alpha * da.pixels()[i] + beta * db.pixels()[i];
                let scale = lhs.pixels()[i].abs().max(rhs.abs()).max(1.0);
                prop_assert!((lhs.pixels()[i] - rhs).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn adjoint_identity(seed in 0u64..1000, l in 1usize..5) {
            let lo = random_image(3, 2, seed);
            let hi = random_image(3 * l, 2 * l, seed ^ 0xabcdef);
            let dv = block_downsample(&hi, l).unwrap();
            let uu = replicate_upsample(&lo, l).unwrap();
            let lhs: f64 = lo.pixels().iter().zip(dv.pixels()).map(|(a, b)| a * b).sum();
            let rhs: f64 = uu.pixels().iter().zip(hi.pixels()).map(|(a, b)| a * b).sum::<f64>()
                / (l * l) as f64;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn downsample_after_replication_is_identity(seed in 0u64..1000, l in 1usize..6) {
            let y = random_image(4, 3, seed);
            let back = block_downsample(&replicate_upsample(&y, l).unwrap(), l).unwrap();
            prop_assert_eq!(back, y);
        }
    }
}
