//! Prior-model denoisers `H(·; σ_n)`.
//!
//! - Library NLM: every pixel's patch is compared against every patch of an
//!   external high-resolution [`PatchLibrary`]; the output is the weighted mean
//!   of the library center pixels with Gaussian weights
//!   `exp(-‖P_s - L_r‖² / (2 N_p² σ_n²))`, normalized to sum to one.
//! - Internal NLM: the classic filter over patches from a search window of the
//!   image itself. With `symmetrize` the weight matrix also goes through
//!   Sinkhorn row/column balancing, which stands in for doubly-stochastic NLM
//!   (reported as "DSG-NLM-approx").
//!
//! All filters are parallel over output pixels with a fixed per-pixel
//! reduction order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::patchlib::{extract_patch_into, PatchLibrary};

/// A denoising operator usable as the prior step of plug-and-play ADMM.
pub trait Denoiser: Sync {
    fn denoise(&self, v: &Image, sigma_n: f64) -> Result<Image>;

    /// Short name recorded in reports.
    fn label(&self) -> String;
}

/// `H(v) = v`. Turns the ADMM loop into a pure data-consistency projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Denoiser for Identity {
    fn denoise(&self, v: &Image, _sigma_n: f64) -> Result<Image> {
        Ok(v.clone())
    }

    fn label(&self) -> String {
        "identity".into()
    }
}

/// Library-based non-local means.
#[derive(Debug, Clone)]
pub struct LibraryNlm {
    pub library: PatchLibrary,
}

impl LibraryNlm {
    pub fn new(library: PatchLibrary) -> Self {
        LibraryNlm { library }
    }
}

impl Denoiser for LibraryNlm {
    fn denoise(&self, v: &Image, sigma_n: f64) -> Result<Image> {
        lbnlm_denoise(v, &self.library, sigma_n)
    }

    fn label(&self) -> String {
        "LB-NLM".into()
    }
}

pub const DEFAULT_SEARCH_RADIUS: usize = 5;
pub const DEFAULT_SINKHORN_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    LibraryNlm,
    InternalNlm,
}

/// Standalone denoiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub sigma_n: f64,
    pub variant: Variant,
    pub patch_size: usize,
    pub search_radius: usize,
    pub symmetrize: bool,
    pub sinkhorn_iters: usize,
}

impl DenoiserConfig {
    pub fn internal(sigma_n: f64, symmetrize: bool) -> Self {
        DenoiserConfig {
            sigma_n,
            variant: Variant::InternalNlm,
            patch_size: crate::patchlib::DEFAULT_PATCH_SIZE,
            search_radius: DEFAULT_SEARCH_RADIUS,
            symmetrize,
            sinkhorn_iters: DEFAULT_SINKHORN_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma_n)?;
        if self.search_radius < 1 {
            return Err(Error::invalid("search radius must be at least 1"));
        }
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "patch size must be odd and positive, got {}",
                self.patch_size
            )));
        }
        Ok(())
    }
}

/// Internal-patch NLM as a [`Denoiser`]; σ_n is supplied per call.
#[derive(Debug, Clone)]
pub struct InternalNlm {
    pub patch_size: usize,
    pub search_radius: usize,
    pub symmetrize: bool,
    pub sinkhorn_iters: usize,
}

impl InternalNlm {
    pub fn plain() -> Self {
        InternalNlm {
            patch_size: crate::patchlib::DEFAULT_PATCH_SIZE,
            search_radius: DEFAULT_SEARCH_RADIUS,
            symmetrize: false,
            sinkhorn_iters: 0,
        }
    }

    pub fn symmetric() -> Self {
        InternalNlm {
            symmetrize: true,
            sinkhorn_iters: DEFAULT_SINKHORN_ITERS,
            ..InternalNlm::plain()
        }
    }

    fn config(&self, sigma_n: f64) -> DenoiserConfig {
        DenoiserConfig {
            sigma_n,
            variant: Variant::InternalNlm,
            patch_size: self.patch_size,
            search_radius: self.search_radius,
            symmetrize: self.symmetrize,
            sinkhorn_iters: self.sinkhorn_iters,
        }
    }
}

impl Denoiser for InternalNlm {
    fn denoise(&self, v: &Image, sigma_n: f64) -> Result<Image> {
        internal_nlm_denoise(v, &self.config(sigma_n))
    }

    fn label(&self) -> String {
        if self.symmetrize {
            "DSG-NLM-approx".into()
        } else {
            "NLM".into()
        }
    }
}

fn check_sigma(sigma_n: f64) -> Result<()> {
    if !(sigma_n.is_finite() && sigma_n > 0.0) {
        return Err(Error::invalid(format!(
            "sigma_n must be finite and positive, got {sigma_n}"
        )));
    }
    Ok(())
}

/// Squared Euclidean distance with eight independent accumulators so the
/// loop vectorizes; the reduction order is fixed.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exponent scale `1 / (2 N_p² σ_n²)`.
#[inline]
fn kernel_scale(patch_len: usize, sigma_n: f64) -> f64 {
    1.0 / (2.0 * patch_len as f64 * sigma_n * sigma_n)
}

/// Normalized library weights of one patch.
///
/// The largest exponent is subtracted before exponentiation so at least one
/// unnormalized weight is exactly 1.
pub fn lbnlm_weights(patch: &[f64], lib: &PatchLibrary, sigma_n: f64) -> Result<Vec<f64>> {
    check_sigma(sigma_n)?;
    if patch.len() != lib.patch_len() {
        return Err(Error::DimensionMismatch(format!(
            "patch has {} values, library patches have {}",
            patch.len(),
            lib.patch_len()
        )));
    }
    let scale = kernel_scale(lib.patch_len(), sigma_n);
    let dists: Vec<f64> = (0..lib.len()).map(|r| sq_dist(patch, lib.patch(r))).collect();
    let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = dists.iter().map(|d| (-(d - dmin) * scale).exp()).collect();
    let mut total = CompensatedSum::default();
    for &x in &w {
        total.add(x);
    }
    let total = total.value();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Library-based NLM filter: each output pixel is the weighted mean of the
/// library center pixels, weights as in [`lbnlm_weights`].
///
/// Sums are compensated, so the output is invariant to library order up to
/// about one ulp per pixel. Results are clamped to the center-pixel range.
pub fn lbnlm_denoise(v: &Image, lib: &PatchLibrary, sigma_n: f64) -> Result<Image> {
    check_sigma(sigma_n)?;
    let (w, h) = v.dims();
    let np = lib.patch_size();
    let len = lib.patch_len();
    let scale = kernel_scale(len, sigma_n);
    let centers = lib.centers();
    let zmin = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let zmax = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let flat = lib.patches_flat();

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each_init(
        || (vec![0.0; len], vec![0.0; lib.len()]),
        |(patch, dists), (y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                extract_patch_into(v, x, y, np, patch);
                let mut dmin = f64::INFINITY;
                for (d, lp) in dists.iter_mut().zip(flat.chunks_exact(len)) {
                    *d = sq_dist(patch, lp);
                    dmin = dmin.min(*d);
                }
                let mut num = CompensatedSum::default();
                let mut den = CompensatedSum::default();
                for (&d, &z) in dists.iter().zip(centers) {
                    let wt = (-(d - dmin) * scale).exp();
                    num.add(wt * z);
                    den.add(wt);
                }
                *o = (num.value() / den.value()).clamp(zmin, zmax);
            }
        },
    );
    Ok(Image::from_parts(w, h, out))
}

/// Window offsets `(dx, dy)` of a square search window, row-major.
fn window_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect()
}

/// Row-normalized kernel weights of pixel `(x, y)` over the search window,
/// zero for offsets falling outside the image.
#[allow(clippy::too_many_arguments)]
fn internal_row(
    v: &Image,
    patches: &[f64],
    len: usize,
    offsets: &[(isize, isize)],
    scale: f64,
    x: usize,
    y: usize,
    out: &mut [f64],
) {
    let (w, h) = v.dims();
    let s = y * w + x;
    let ps = &patches[s * len..(s + 1) * len];
    let mut total = 0.0;
    for (o, &(dx, dy)) in out.iter_mut().zip(offsets) {
        let (tx, ty) = (x as isize + dx, y as isize + dy);
        *o = if tx < 0 || ty < 0 || tx >= w as isize || ty >= h as isize {
            0.0
        } else {
            let t = ty as usize * w + tx as usize;
            (-sq_dist(ps, &patches[t * len..(t + 1) * len]) * scale).exp()
        };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Internal-patch NLM, optionally Sinkhorn-symmetrized.
///
/// Each Sinkhorn iteration is a column normalization followed by a row
/// normalization, so the final weights are row-stochastic. With
/// `sinkhorn_iters == 0` the result is bit-identical to plain NLM.
pub fn internal_nlm_denoise(v: &Image, cfg: &DenoiserConfig) -> Result<Image> {
    cfg.validate()?;
    if cfg.variant != Variant::InternalNlm {
        return Err(Error::invalid("internal NLM called with a library-NLM config"));
    }
    let weights = internal_nlm_weights(v, cfg)?;
    let (w, h) = v.dims();
    let offsets = window_offsets(cfg.search_radius);
    let k = offsets.len();
    let px = v.pixels();
    let mut out = vec![0.0; w * h];
    out.par_iter_mut().enumerate().for_each(|(s, o)| {
        let (x, y) = ((s % w) as isize, (s / w) as isize);
        let mut acc = 0.0;
        for (&wt, &(dx, dy)) in weights[s * k..(s + 1) * k].iter().zip(&offsets) {
            if wt != 0.0 {
                acc += wt * px[((y + dy) as usize) * w + (x + dx) as usize];
            }
        }
        *o = acc;
    });
    Ok(Image::from_parts(w, h, out))
}

/// The internal-NLM weight matrix in window layout: row `s` holds the
/// weights of pixel `s` toward each search-window offset (zero outside the
/// image).
pub fn internal_nlm_weights(v: &Image, cfg: &DenoiserConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (w, h) = v.dims();
    let n = w * h;
    let len = cfg.patch_size * cfg.patch_size;
    let scale = kernel_scale(len, cfg.sigma_n);
    let offsets = window_offsets(cfg.search_radius);
    let k = offsets.len();

    let mut patches = vec![0.0; n * len];
    patches
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(s, p)| extract_patch_into(v, s % w, s / w, cfg.patch_size, p));

    let mut weights = vec![0.0; n * k];
    weights.par_chunks_mut(k).enumerate().for_each(|(s, row)| {
        internal_row(v, &patches, len, &offsets, scale, s % w, s / w, row)
    });

    if cfg.symmetrize {
        let mut colsum = vec![0.0; n];
        for _ in 0..cfg.sinkhorn_iters {
            // column sums gathered per target pixel in a fixed order
            colsum.par_iter_mut().enumerate().for_each(|(t, c)| {
                let (tx, ty) = ((t % w) as isize, (t / w) as isize);
                let mut acc = 0.0;
                for (j, &(dx, dy)) in offsets.iter().enumerate() {
                    let (sx, sy) = (tx - dx, ty - dy);
                    if sx >= 0 && sy >= 0 && sx < w as isize && sy < h as isize {
                        acc += weights[(sy as usize * w + sx as usize) * k + j];
                    }
                }
                *c = acc;
            });
            weights.par_chunks_mut(k).enumerate().for_each(|(s, row)| {
                let (x, y) = ((s % w) as isize, (s / w) as isize);
                let mut total = 0.0;
                for (wt, &(dx, dy)) in row.iter_mut().zip(&offsets) {
                    if *wt != 0.0 {
                        *wt /= colsum[((y + dy) as usize) * w + (x + dx) as usize];
                        total += *wt;
                    }
                }
                for wt in row.iter_mut() {
                    *wt /= total;
                }
            });
        }
    }
    Ok(weights)
}

/// Applies the denoiser described by `cfg`; `lib` is required for the
/// library variant.
pub fn denoise_with(v: &Image, cfg: &DenoiserConfig, lib: Option<&PatchLibrary>) -> Result<Image> {
    match cfg.variant {
        Variant::LibraryNlm => {
            let lib = lib.ok_or_else(|| Error::invalid("library NLM needs a patch library"))?;
            lbnlm_denoise(v, lib, cfg.sigma_n)
        }
        Variant::InternalNlm => internal_nlm_denoise(v, cfg),
    }
}
