//! Baseline reconstructions: bicubic upsampling for super-resolution and
//! Shepard inverse-distance weighting for sparse samples. Both also serve as
//! the ADMM initializer.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{checked_area, ForwardModel, Image, MeasurementSet};

/// Keys cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

/// Number of nearest measured pixels used per Shepard estimate.
pub const SHEPARD_NEIGHBORS: usize = 16;

/// Inverse-distance exponent.
pub const SHEPARD_POWER: f64 = 2.0;

/// Keys cubic convolution kernel with parameter [`CUBIC_A`].
pub fn cubic_kernel(t: f64) -> f64 {
    let a = CUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four taps `(source index, weight)` of one output coordinate along an axis
/// of length `len`, with edge clamping.
fn taps(out_coord: usize, factor: usize, len: usize) -> [(usize, f64); 4] {
    // Each low-res sample sits at the center of its factor-wide block.
    let u = (out_coord as f64 + 0.5) / factor as f64 - 0.5;
    let base = u.floor();
    let frac = u - base;
    let base = base as isize;
    let mut t = [(0usize, 0.0); 4];
    for (k, tap) in t.iter_mut().enumerate() {
        let offset = k as isize - 1;
        let idx = (base + offset).clamp(0, len as isize - 1) as usize;
        *tap = (idx, cubic_kernel(frac - offset as f64));
    }
    t
}

/// Bicubic upsampling by an integer factor, clipped at zero.
pub fn bicubic_interpolate(y: &Image, factor: usize) -> Result<Image> {
    if factor < 2 {
        return Err(Error::invalid(format!(
            "bicubic factor must be at least 2, got {factor}"
        )));
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

    let xtaps: Vec<_> = (0..ow).map(|x| taps(x, factor, y.width())).collect();

    // Horizontal pass on every source row, then vertical pass per output row.
    let mut horiz = vec![0.0; ow * y.height()];
    horiz
        .par_chunks_mut(ow)
        .enumerate()
        .for_each(|(sy, out)| {
            let row = y.row(sy);
            for (o, t) in out.iter_mut().zip(&xtaps) {
                *o = t.iter().map(|&(i, w)| w * row[i]).sum();
            }
        });

    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(oy, dst)| {
        let yt = taps(oy, factor, y.height());
        for (x, d) in dst.iter_mut().enumerate() {
            let v: f64 = yt.iter().map(|&(j, w)| w * horiz[j * ow + x]).sum();
            *d = v.max(0.0);
        }
    });
    Ok(Image::from_parts(ow, oh, out))
}

/// Uniform grid of buckets over measured positions for nearest-neighbor
/// queries.
struct BucketGrid {
    cell: usize,
    gw: usize,
    gh: usize,
    /// Measured points `(x, y, value)` per bucket, row-major bucket order.
    buckets: Vec<Vec<(usize, usize, f64)>>,
}

impl BucketGrid {
    fn new(width: usize, height: usize, points: impl Iterator<Item = (usize, usize, f64)>, count: usize) -> Self {
        // Aim for a handful of points per bucket.
        let density = count as f64 / (width * height) as f64;
        let cell = ((SHEPARD_NEIGHBORS as f64 / density.max(1e-12)).sqrt() / 2.0)
            .ceil()
            .clamp(1.0, width.max(height) as f64) as usize;
        let gw = width.div_ceil(cell);
        let gh = height.div_ceil(cell);
        let mut buckets = vec![Vec::new(); gw * gh];
        for (x, y, v) in points {
            buckets[(y / cell) * gw + x / cell].push((x, y, v));
        }
        BucketGrid {
            cell,
            gw,
            gh,
            buckets,
        }
    }

    /// The `k` nearest points to `(px, py)` as `(squared distance, x, y, value)`,
    /// ordered by distance then by row-major position.
    fn nearest(&self, px: usize, py: usize, k: usize, out: &mut Vec<(usize, usize, usize, f64)>) {
        out.clear();
        let (bx, by) = ((px / self.cell) as isize, (py / self.cell) as isize);
        let max_ring = self.gw.max(self.gh) as isize;
        for ring in 0..=max_ring {
            for gy in by - ring..=by + ring {
                if gy < 0 || gy >= self.gh as isize {
                    continue;
                }
                for gx in bx - ring..=bx + ring {
                    if gx < 0 || gx >= self.gw as isize {
                        continue;
                    }
                    // only the ring's perimeter is new
                    if (gy - by).abs() != ring && (gx - bx).abs() != ring {
                        continue;
                    }
                    for &(x, y, v) in &self.buckets[gy as usize * self.gw + gx as usize] {
                        let dx = x.abs_diff(px);
                        let dy = y.abs_diff(py);
                        out.push((dx * dx + dy * dy, y, x, v));
                    }
                }
            }
            if out.len() >= k {
                out.sort_unstable_by_key(|a| (a.0, a.1, a.2));
                // Points in unvisited buckets are farther than ring * cell.
                let bound = ring as usize * self.cell;
                if out[k - 1].0 <= bound * bound {
                    out.truncate(k);
                    return;
                }
            }
        }
        out.sort_unstable_by_key(|a| (a.0, a.1, a.2));
        out.truncate(k);
    }
}

/// Shepard interpolation of a sparse measurement set: measured pixels keep
/// their values, every other pixel is the inverse-squared-distance weighted
/// mean of its [`SHEPARD_NEIGHBORS`] nearest measurements.
pub fn shepard_interpolate(meas: &MeasurementSet) -> Result<Image> {
    let ForwardModel::SparseSample(mask) = meas.model() else {
        return Err(Error::invalid("Shepard interpolation needs a sparse measurement set"));
    };
    if mask.count() == 0 {
        return Err(Error::invalid("Shepard interpolation needs at least one measured pixel"));
    }
    let (w, h) = (mask.width(), mask.height());
    let values = meas.values();

    let mut out = vec![f64::NAN; w * h];
    for (&i, &v) in mask.indices().iter().zip(values) {
        out[i] = v;
    }
    let grid = BucketGrid::new(
        w,
        h,
        mask.indices().iter().zip(values).map(|(&i, &v)| (i % w, i / w, v)),
        mask.count(),
    );
    let k = SHEPARD_NEIGHBORS.min(mask.count());

    out.par_chunks_mut(w).enumerate().for_each_init(Vec::new, |buf, (y, row)| {
        for (x, p) in row.iter_mut().enumerate() {
            if !p.is_nan() {
                continue;
            }
            grid.nearest(x, y, k, buf);
            let mut num = 0.0;
            let mut den = 0.0;
            for &(d2, _, _, v) in buf.iter() {
                let wgt = (d2 as f64).powf(-SHEPARD_POWER / 2.0);
                num += wgt * v;
                den += wgt;
            }
            *p = num / den;
        }
    });
    Ok(Image::from_parts(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::SamplingMask;
    use crate::rng;
    use rand::Rng;

    /// Direct 2D evaluation of the same kernel, no separable split.
    fn bicubic_oracle(y: &Image, l: usize) -> Vec<f64> {
        let (w, h) = (y.width() as isize, y.height() as isize);
        let mut out = Vec::new();
        for oy in 0..y.height() * l {
            for ox in 0..y.width() * l {
                let u = (ox as f64 + 0.5) / l as f64 - 0.5;
                let v = (oy as f64 + 0.5) / l as f64 - 0.5;
                let (iu, iv) = (u.floor() as isize, v.floor() as isize);
                let mut s = 0.0;
                for j in iv - 1..=iv + 2 {
                    for i in iu - 1..=iu + 2 {
                        let sx = i.clamp(0, w - 1) as usize;
                        let sy = j.clamp(0, h - 1) as usize;
                        s += cubic_kernel(u - i as f64) * cubic_kernel(v - j as f64) * y.get(sx, sy);
                    }
                }
                out.push(s.max(0.0));
            }
        }
        out
    }

    fn shepard_oracle(w: usize, h: usize, pts: &[(usize, f64)], k: usize) -> Vec<f64> {
        (0..w * h)
            .map(|i| {
                if let Some(&(_, v)) = pts.iter().find(|p| p.0 == i) {
                    return v;
                }
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                let mut d: Vec<(i64, usize, f64)> = pts
                    .iter()
                    .map(|&(j, v)| {
                        let (px, py) = ((j % w) as i64, (j / w) as i64);
                        ((px - x).pow(2) + (py - y).pow(2), j, v)
                    })
                    .collect();
                d.sort_by_key(|a| (a.0, a.1));
                let (mut num, mut den) = (0.0, 0.0);
                for &(d2, _, v) in d.iter().take(k) {
                    let wgt = 1.0 / d2 as f64;
                    num += wgt * v;
                    den += wgt;
                }
                num / den
            })
            .collect()
    }

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..=20 {
            let f = i as f64 / 20.0;
            let s: f64 = (-1..=2).map(|k| cubic_kernel(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
    }

    #[test]
    fn bicubic_constant_is_constant() {
        let y = Image::filled(5, 3, 42.0).unwrap();
        for l in [2, 3, 4, 8] {
            let out = bicubic_interpolate(&y, l).unwrap();
            assert_eq!(out.dims(), (5 * l, 3 * l));
            assert!(out.pixels().iter().all(|&p| (p - 42.0).abs() < 1e-12));
        }
    }

    #[test]
    fn bicubic_reproduces_linear_ramp_in_interior() {
        let l = 4;
        let y = Image::from_fn(10, 10, |_, r| r as f64).unwrap();
        let out = bicubic_interpolate(&y, l).unwrap();
        // interior rows are at least two low-res samples from the border
        for oy in 2 * l + l / 2..(10 - 2) * l - l / 2 {
            let expected = (oy as f64 + 0.5) / l as f64 - 0.5;
            for ox in 0..out.width() {
                assert!((out.get(ox, oy) - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bicubic_matches_scalar_oracle() {
        let mut r = rng::seeded(4);
        let y = Image::from_fn(4, 4, |_, _| r.random_range(0.0..255.0)).unwrap();
        let out = bicubic_interpolate(&y, 2).unwrap();
        for (a, b) in out.pixels().iter().zip(bicubic_oracle(&y, 2)) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!(bicubic_interpolate(&y, 1).is_err());
    }

    #[test]
    fn bicubic_clips_overshoot_at_zero() {
        let y = Image::new(4, 1, vec![0.0, 0.0, 255.0, 255.0]).unwrap();
        let out = bicubic_interpolate(&y, 4).unwrap();
        assert!(out.min() >= 0.0);
    }

    #[test]
    fn shepard_single_sample_is_constant() {
        let mask = SamplingMask::new(6, 5, vec![13]).unwrap();
        let m = MeasurementSet::sparse(vec![77.0], mask, 0.0).unwrap();
        let out = shepard_interpolate(&m).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 77.0));
    }

    #[test]
    fn shepard_full_mask_is_identity() {
        let mut r = rng::seeded(2);
        let x = Image::from_fn(9, 7, |_, _| r.random_range(0.0..255.0)).unwrap();
        let mask = SamplingMask::new(9, 7, (0..63).collect()).unwrap();
        let m = MeasurementSet::sparse(x.pixels().to_vec(), mask, 0.0).unwrap();
        assert_eq!(shepard_interpolate(&m).unwrap(), x);
    }

    #[test]
    fn shepard_equidistant_pair_averages() {
        // pixels (0,0) and (4,0) in a 5x1 image; (2,0) is equidistant
        let mask = SamplingMask::new(5, 1, vec![0, 4]).unwrap();
        let m = MeasurementSet::sparse(vec![10.0, 30.0], mask, 0.0).unwrap();
        let out = shepard_interpolate(&m).unwrap();
        assert!((out.get(2, 0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn shepard_matches_brute_force_and_stays_in_range() {
        let (w, h) = (23, 17);
        let mut r = rng::seeded(8);
        let idx = rng::sample_indices(&mut r, w * h, 40);
        let vals: Vec<f64> = idx.iter().map(|_| r.random_range(0.0..255.0)).collect();
        let mask = SamplingMask::new(w, h, idx.clone()).unwrap();
        let m = MeasurementSet::sparse(vals.clone(), mask, 0.0).unwrap();
        let out = shepard_interpolate(&m).unwrap();
        let pts: Vec<_> = idx.into_iter().zip(vals.iter().copied()).collect();
        let expected = shepard_oracle(w, h, &pts, SHEPARD_NEIGHBORS);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in out.pixels().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            assert!(*a >= lo - 1e-12 && *a <= hi + 1e-12);
        }
    }

    #[test]
    fn shepard_rejects_super_resolution_input() {
        let m = MeasurementSet::super_resolution(Image::zeros(2, 2).unwrap(), 2, 0.0).unwrap();
        assert!(shepard_interpolate(&m).is_err());
    }
}
