//! Inversion operators `F(x̃; σ_λ)`: the proximal map of the data term
//! `l(x) = ‖y - Ax‖² / (2σ_w²)` (with `l = +∞` for negative pixels) at
//! penalty `‖x - x̃‖² / (2σ_λ²)`.
//!
//! For `σ_w = 0` both geometries use the explicit clipped projections
//! `[x̃ + U(y - D x̃)]₊` (super-resolution, `D` block mean, `U` replication)
//! and `[x̃ + Aᵗ(y - A x̃)]₊` (sparse sampling).
//!
//! For `σ_w > 0` the minimizer is computed exactly, nonnegativity included.
//! Sparse sampling is separable per pixel. Super-resolution decouples into
//! independent `L×L` blocks whose Hessian `I/σ_λ² + 11ᵀ/(σ_w² L⁴)` is a
//! rank-one update of the identity, so the unconstrained solution shifts every
//! pixel of the block by the same amount (Sherman–Morrison). With the
//! positivity constraint the block solution is `max(0, x̃ᵢ + τ)` where the
//! common shift `τ` solves a monotone piecewise-linear equation, found
//! exactly from the sorted breakpoints.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{replicate_upsample, block_downsample, ForwardModel, Image, MeasurementSet};

/// Measurements plus the ADMM penalty scale.
#[derive(Debug, Clone)]
pub struct InversionProblem<'a> {
    pub measurements: &'a MeasurementSet,
    pub sigma_lambda: f64,
}

impl<'a> InversionProblem<'a> {
    pub fn new(measurements: &'a MeasurementSet, sigma_lambda: f64) -> Result<Self> {
        if !(sigma_lambda.is_finite() && sigma_lambda > 0.0) {
            return Err(Error::invalid(format!(
                "sigma_lambda must be finite and positive, got {sigma_lambda}"
            )));
        }
        Ok(InversionProblem {
            measurements,
            sigma_lambda,
        })
    }

    pub fn target_dims(&self) -> (usize, usize) {
        self.measurements.target_dims()
    }

    /// Applies the inversion operator matching the measurement geometry.
    pub fn apply(&self, x_tilde: &Image) -> Result<Image> {
        match self.measurements.model() {
            ForwardModel::SuperResolution { .. } => sr_inversion(x_tilde, self),
            ForwardModel::SparseSample(_) => sparse_inversion(x_tilde, self),
        }
    }

    fn check_dims(&self, x_tilde: &Image) -> Result<()> {
        let (w, h) = self.target_dims();
        if x_tilde.dims() != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "x_tilde is {}x{}, measurements describe {w}x{h}",
                x_tilde.width(),
                x_tilde.height()
            )));
        }
        Ok(())
    }
}

/// Super-resolution inversion operator.
pub fn sr_inversion(x_tilde: &Image, prob: &InversionProblem<'_>) -> Result<Image> {
    let meas = prob.measurements;
    let ForwardModel::SuperResolution { factor } = *meas.model() else {
        return Err(Error::invalid("sr_inversion needs a super-resolution measurement set"));
    };
    prob.check_dims(x_tilde)?;
    let y = meas.y();
    let sigma_w = meas.sigma_w();

    if sigma_w == 0.0 {
        let residual = y.zip_map(&block_downsample(x_tilde, factor)?, |a, b| a - b)?;
        let correction = replicate_upsample(&residual, factor)?;
        return x_tilde.zip_map(&correction, |a, c| (a + c).max(0.0));
    }

    // k = σ_w² L² / σ_λ²: curvature of the proximal term relative to the data
    // term, per unit of block-mean shift.
    let n = factor * factor;
    let k = sigma_w * sigma_w * n as f64 / (prob.sigma_lambda * prob.sigma_lambda);
    let (w, h) = x_tilde.dims();
    let bw = w / factor;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w * factor)
        .enumerate()
        .for_each_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(block, sorted), (by, rows)| {
                for bx in 0..bw {
                    for dy in 0..factor {
                        let src = &x_tilde.row(by * factor + dy)[bx * factor..(bx + 1) * factor];
                        block[dy * factor..(dy + 1) * factor].copy_from_slice(src);
                    }
                    let tau = block_shift(block, sorted, y.get(bx, by), k);
                    for dy in 0..factor {
                        let dst = &mut rows[dy * w + bx * factor..dy * w + (bx + 1) * factor];
                        for (d, &s) in dst.iter_mut().zip(&block[dy * factor..(dy + 1) * factor]) {
                            *d = (s + tau).max(0.0);
                        }
                    }
                }
            },
        );
    Ok(Image::from_parts(w, h, out))
}

/// Common shift `τ` of one block: the root of
/// `g(τ) = k τ + mean(max(0, x̃ᵢ + τ)) - y`, which is continuous and strictly
/// increasing. When no pixel clips this is `(y - mean(x̃)) / (1 + k)`.
fn block_shift(block: &[f64], sorted: &mut [f64], y: f64, k: f64) -> f64 {
    let n = block.len() as f64;
    sorted.copy_from_slice(block);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));

    // Active set = pixels with x̃ᵢ + τ > 0, i.e. the largest `j` values. On the
    // segment with `j` active pixels g is linear: k τ + (S_j + j τ)/n - y.
    let g_at = |tau: f64, j: usize, s: f64| k * tau + (s + j as f64 * tau) / n - y;
    let mut prefix = 0.0;
    for (j, &xj) in sorted.iter().enumerate() {
        // breakpoint where pixel j becomes active; pixels 0..j are active there
        if g_at(-xj, j, prefix) >= 0.0 {
            return (y - prefix / n) / (k + j as f64 / n);
        }
        prefix += xj;
    }
    let j = sorted.len();
    (y - prefix / n) / (k + j as f64 / n)
}

/// Sparse-sampling inversion operator.
pub fn sparse_inversion(x_tilde: &Image, prob: &InversionProblem<'_>) -> Result<Image> {
    let meas = prob.measurements;
    let ForwardModel::SparseSample(mask) = meas.model() else {
        return Err(Error::invalid("sparse_inversion needs a sparse measurement set"));
    };
    prob.check_dims(x_tilde)?;
    let sigma_w = meas.sigma_w();
    let mut out: Vec<f64> = x_tilde.pixels().iter().map(|p| p.max(0.0)).collect();
    if sigma_w == 0.0 {
        for (&i, &v) in mask.indices().iter().zip(meas.values()) {
            out[i] = v.max(0.0);
        }
    } else {
        let pw = 1.0 / (sigma_w * sigma_w);
        let pl = 1.0 / (prob.sigma_lambda * prob.sigma_lambda);
        for (&i, &v) in mask.indices().iter().zip(meas.values()) {
            out[i] = ((v * pw + x_tilde.pixels()[i] * pl) / (pw + pl)).max(0.0);
        }
    }
    Ok(Image::from_parts(x_tilde.width(), x_tilde.height(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::SamplingMask;
    use crate::rng;
    use rand::Rng;

    fn rand_img(w: usize, h: usize, lo: f64, hi: f64, seed: u64) -> Image {
        let mut r = rng::seeded(seed);
        Image::from_fn(w, h, |_, _| r.random_range(lo..hi)).unwrap()
    }

    #[test]
    fn consistent_input_is_unchanged() {
        let x = rand_img(8, 8, 0.0, 255.0, 1);
        let m = MeasurementSet::super_resolution(block_downsample(&x, 2).unwrap(), 2, 0.0).unwrap();
        let p = InversionProblem::new(&m, 8.0).unwrap();
        let out = sr_inversion(&x, &p).unwrap();
        for (a, b) in out.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_replicates_constant() {
        let m = MeasurementSet::super_resolution(Image::filled(3, 2, 40.0).unwrap(), 4, 0.0).unwrap();
        let p = InversionProblem::new(&m, 8.0).unwrap();
        let out = sr_inversion(&Image::zeros(12, 8).unwrap(), &p).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 40.0));
    }

    #[test]
    fn sr_projection_identity_and_idempotence() {
        let x = rand_img(8, 8, 100.0, 200.0, 2);
        let y = rand_img(4, 4, 100.0, 200.0, 3);
        let m = MeasurementSet::super_resolution(y.clone(), 2, 0.0).unwrap();
        let p = InversionProblem::new(&m, 8.0).unwrap();
        let once = sr_inversion(&x, &p).unwrap();
        let d = block_downsample(&once, 2).unwrap();
        for (a, b) in d.pixels().iter().zip(y.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        let twice = sr_inversion(&once, &p).unwrap();
        for (a, b) in twice.pixels().iter().zip(once.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sr_unconstrained_block_solution() {
        // interior case: closed-form Sherman–Morrison shift
        let x = rand_img(4, 4, 100.0, 150.0, 4);
        let y = rand_img(2, 2, 100.0, 150.0, 5);
        let (sw, sl) = (5.0, 8.0);
        let m = MeasurementSet::super_resolution(y.clone(), 2, sw).unwrap();
        let out = sr_inversion(&x, &InversionProblem::new(&m, sl).unwrap()).unwrap();
        let dx = block_downsample(&x, 2).unwrap();
        for yy in 0..4 {
            for xx in 0..4 {
                let (bx, by) = (xx / 2, yy / 2);
                let shift = (y.get(bx, by) - dx.get(bx, by)) * sl * sl / (sl * sl + sw * sw * 4.0);
                assert!((out.get(xx, yy) - (x.get(xx, yy) + shift)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sr_active_constraint_block() {
        // y far below the block mean drives low pixels to zero
        let x = Image::new(2, 2, vec![1.0, 100.0, 120.0, 200.0]).unwrap();
        let y = Image::new(1, 1, vec![0.0]).unwrap();
        let m = MeasurementSet::super_resolution(y, 2, 1.0).unwrap();
        let out = sr_inversion(&x, &InversionProblem::new(&m, 4.0).unwrap()).unwrap();
        // KKT: k τ = y - mean(out) with k = σ_w² L² / σ_λ²; the two low
        // pixels sit at the bound
        let k = 1.0 * 4.0 / 16.0;
        let tau = out.get(1, 1) - 200.0;
        assert!((out.get(0, 1) - (120.0 + tau)).abs() < 1e-12);
        let mean = out.pixels().iter().sum::<f64>() / 4.0;
        assert!((k * tau - (0.0 - mean)).abs() < 1e-12);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(1, 0), 0.0);
        assert!(tau < -100.0);
    }

    #[test]
    fn sigma_w_to_zero_approaches_projection() {
        let x = rand_img(8, 8, 50.0, 200.0, 6);
        let y = rand_img(4, 4, 50.0, 200.0, 7);
        let base = MeasurementSet::super_resolution(y, 2, 0.0).unwrap();
        let proj = sr_inversion(&x, &InversionProblem::new(&base, 8.0).unwrap()).unwrap();
        let mut last = f64::INFINITY;
        for sw in [1.0, 0.1, 0.01] {
            let m = base.clone().with_sigma_w(sw).unwrap();
            let out = sr_inversion(&x, &InversionProblem::new(&m, 8.0).unwrap()).unwrap();
            let gap = out.zip_map(&proj, |a, b| a - b).unwrap().norm();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn sparse_projection() {
        let x = rand_img(5, 5, -20.0, 255.0, 8);
        let mask = SamplingMask::new(5, 5, vec![0, 7, 12, 24]).unwrap();
        let vals = vec![10.0, 20.0, 30.0, 40.0];
        let m = MeasurementSet::sparse(vals.clone(), mask.clone(), 0.0).unwrap();
        let p = InversionProblem::new(&m, 8.0).unwrap();
        let out = sparse_inversion(&x, &p).unwrap();
        assert_eq!(mask.apply(&out).unwrap(), vals);
        assert!(out.min() >= 0.0);
        assert_eq!(sparse_inversion(&out, &p).unwrap(), out);

        let full = SamplingMask::new(5, 5, (0..25).collect()).unwrap();
        let y = rand_img(5, 5, -10.0, 255.0, 9);
        let m = MeasurementSet::sparse(y.pixels().to_vec(), full, 0.0).unwrap();
        let out = sparse_inversion(&x, &InversionProblem::new(&m, 8.0).unwrap()).unwrap();
        assert_eq!(out, y.map(|v| v.max(0.0)));
    }

    #[test]
    fn sparse_equal_sigmas_average() {
        let x = rand_img(3, 3, 0.0, 255.0, 10);
        let mask = SamplingMask::new(3, 3, vec![1, 4, 8]).unwrap();
        let vals = vec![5.0, 100.0, 250.0];
        let m = MeasurementSet::sparse(vals.clone(), mask.clone(), 6.0).unwrap();
        let out = sparse_inversion(&x, &InversionProblem::new(&m, 6.0).unwrap()).unwrap();
        for (&i, &v) in mask.indices().iter().zip(&vals) {
            let expected = ((v + x.pixels()[i]) / 2.0).max(0.0);
            assert!((out.pixels()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn nonexpansive_on_random_pairs() {
        let y = rand_img(4, 4, 100.0, 200.0, 11);
        let m = MeasurementSet::super_resolution(y, 2, 3.0).unwrap();
        let p = InversionProblem::new(&m, 8.0).unwrap();
        for s in 0..20 {
            let a = rand_img(8, 8, 100.0, 200.0, 100 + s);
            let b = rand_img(8, 8, 100.0, 200.0, 200 + s);
            let fa = sr_inversion(&a, &p).unwrap();
            let fb = sr_inversion(&b, &p).unwrap();
            let lhs = fa.zip_map(&fb, |u, v| u - v).unwrap().norm();
            let rhs = a.zip_map(&b, |u, v| u - v).unwrap().norm();
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let m = MeasurementSet::super_resolution(Image::zeros(2, 2).unwrap(), 2, 0.0).unwrap();
        let p = InversionProblem::new(&m, 1.0).unwrap();
        assert!(sr_inversion(&Image::zeros(5, 4).unwrap(), &p).is_err());
        assert!(sparse_inversion(&Image::zeros(4, 4).unwrap(), &p).is_err());
        assert!(InversionProblem::new(&m, 0.0).is_err());
    }
}
