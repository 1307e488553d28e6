//! High-resolution patch library used as the prior model.
//!
//! Patches are raw intensities (no mean removal or contrast normalization),
//! flattened row-major. Library files are a raw-f64 blob of all patches with a
//! JSON header `<path>.json` holding the patch size, count and provenance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{raw_header_path, read_json, write_json};
use crate::rng;

pub const DEFAULT_PATCH_SIZE: usize = 7;
pub const DEFAULT_STRIDE: usize = 2;
pub const DEFAULT_MAX_PATCHES: usize = 20_000;

/// Reflect-101 border index: `-1 -> 1`, `n -> n - 2`, edge pixels not repeated.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn check_patch_size(patch_size: usize) -> Result<()> {
    if patch_size == 0 || patch_size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "patch size must be odd and positive, got {patch_size}"
        )));
    }
    Ok(())
}

/// The `patch_size`×`patch_size` patch centered at `(cx, cy)`, borders
/// resolved by reflect-101.
pub fn extract_patch(img: &Image, cx: usize, cy: usize, patch_size: usize) -> Result<Vec<f64>> {
    check_patch_size(patch_size)?;
    if cx >= img.width() || cy >= img.height() {
        return Err(Error::invalid(format!(
            "patch center ({cx}, {cy}) outside {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let mut out = vec![0.0; patch_size * patch_size];
    extract_patch_into(img, cx, cy, patch_size, &mut out);
    Ok(out)
}

/// Unchecked variant of [`extract_patch`] writing into `out`.
#[inline]
pub(crate) fn extract_patch_into(img: &Image, cx: usize, cy: usize, patch_size: usize, out: &mut [f64]) {
    let half = (patch_size / 2) as isize;
    let (w, h) = img.dims();
    let interior = cx as isize >= half
        && cy as isize >= half
        && cx + (half as usize) < w
        && cy + (half as usize) < h;
    if interior {
        let x0 = cx - half as usize;
        for (dy, dst) in out.chunks_exact_mut(patch_size).enumerate() {
            let row = img.row(cy - half as usize + dy);
            dst.copy_from_slice(&row[x0..x0 + patch_size]);
        }
        return;
    }
    for (dy, dst) in out.chunks_exact_mut(patch_size).enumerate() {
        let sy = reflect101(cy as isize - half + dy as isize, h);
        let row = img.row(sy);
        for (dx, d) in dst.iter_mut().enumerate() {
            *d = row[reflect101(cx as isize - half + dx as isize, w)];
        }
    }
}

/// Immutable set of `N_l` patches with their center pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLibrary {
    patch_size: usize,
    patches: Vec<f64>,
    centers: Vec<f64>,
    source_meta: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryHeader {
    patch_size: usize,
    count: usize,
    provenance: Vec<String>,
}

impl PatchLibrary {
    /// Builds a library from flattened patches (`count * patch_size²` values).
    pub fn from_patches(patch_size: usize, patches: Vec<f64>, source_meta: Vec<String>) -> Result<Self> {
        check_patch_size(patch_size)?;
        let len = patch_size * patch_size;
        if patches.is_empty() || !patches.len().is_multiple_of(len) {
            return Err(Error::invalid(format!(
                "{} values do not form a nonempty set of {patch_size}x{patch_size} patches",
                patches.len()
            )));
        }
        if let Some(index) = patches.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let centers = patches.chunks_exact(len).map(|p| p[len / 2]).collect();
        Ok(PatchLibrary {
            patch_size,
            patches,
            centers,
            source_meta,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn patch(&self, r: usize) -> &[f64] {
        let len = self.patch_len();
        &self.patches[r * len..(r + 1) * len]
    }

    pub fn patches_flat(&self) -> &[f64] {
        &self.patches
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn source_meta(&self) -> &[String] {
        &self.source_meta
    }

    /// Same library with patches reordered: entry `i` becomes old entry `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::invalid("permutation length differs from library size"));
        }
        let mut patches = Vec::with_capacity(self.patches.len());
        for &r in order {
            patches.extend_from_slice(self.patch(r));
        }
        PatchLibrary::from_patches(self.patch_size, patches, self.source_meta.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut data = Vec::with_capacity(self.patches.len() * 8);
        for p in &self.patches {
            data.extend_from_slice(&p.to_le_bytes());
        }
        fs::write(path, data).map_err(|e| Error::io(path, e))?;
        write_json(
            raw_header_path(path),
            &LibraryHeader {
                patch_size: self.patch_size,
                count: self.len(),
                provenance: self.source_meta.clone(),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let header: LibraryHeader = read_json(raw_header_path(path))?;
        let expected = header
            .count
            .checked_mul(header.patch_size * header.patch_size)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::DimensionOverflow(format!("{} patches", header.count)))?;
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        if data.len() < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                found: data.len(),
            });
        }
        let patches = data[..expected]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        PatchLibrary::from_patches(header.patch_size, patches, header.provenance)
    }
}

/// Extracts patches centered on a `stride`-spaced grid over the interior of
/// each image, starting at offset `(patch_size - 1) / 2`. When more than
/// `max_patches` result, a uniform subsample of exactly `max_patches` drawn
/// under `seed` is kept (in extraction order).
pub fn build_library(
    images: &[Image],
    patch_size: usize,
    stride: usize,
    max_patches: Option<usize>,
    seed: u64,
) -> Result<PatchLibrary> {
    check_patch_size(patch_size)?;
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if max_patches == Some(0) {
        return Err(Error::invalid("max_patches must be at least 1"));
    }
    if images.is_empty() {
        return Err(Error::invalid("no library images given"));
    }
    let len = patch_size * patch_size;
    let half = patch_size / 2;
    let mut patches = Vec::new();
    let mut meta = Vec::new();
    for (i, img) in images.iter().enumerate() {
        if img.width() < patch_size || img.height() < patch_size {
            return Err(Error::invalid(format!(
                "library image {i} is {}x{}, smaller than the {patch_size}x{patch_size} patch",
                img.width(),
                img.height()
            )));
        }
        let before = patches.len() / len;
        let mut buf = vec![0.0; len];
        for cy in (half..img.height() - half).step_by(stride) {
            for cx in (half..img.width() - half).step_by(stride) {
                extract_patch_into(img, cx, cy, patch_size, &mut buf);
                patches.extend_from_slice(&buf);
            }
        }
        meta.push(format!(
            "image {i}: {}x{}, {} patches (size {patch_size}, stride {stride})",
            img.width(),
            img.height(),
            patches.len() / len - before
        ));
    }
    let total = patches.len() / len;
    if let Some(max) = max_patches.filter(|&m| m < total) {
        let mut r = rng::seeded(seed);
        let keep = rng::sample_indices(&mut r, total, max);
        let mut kept = Vec::with_capacity(max * len);
        for k in keep {
            kept.extend_from_slice(&patches[k * len..(k + 1) * len]);
        }
        patches = kept;
        meta.push(format!("subsampled {max} of {total} patches, seed {seed}"));
    }
    PatchLibrary::from_patches(patch_size, patches, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn reflect101_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect101(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect101(-4, 1), 0);
    }

    #[test]
    fn constant_image_patch() {
        let img = Image::filled(4, 4, 9.0).unwrap();
        let p = extract_patch(&img, 0, 3, 5).unwrap();
        assert!(p.iter().all(|&v| v == 9.0));
    }

    #[test]
    fn corner_patch_matches_index_oracle() {
        let img = Image::from_fn(5, 5, |x, y| (10 * y + x) as f64).unwrap();
        let p = extract_patch(&img, 0, 0, 3).unwrap();
        // reflect-101: row/col -1 maps to 1
        let expected: Vec<f64> = [[11, 10, 11], [1, 0, 1], [11, 10, 11]]
            .iter()
            .flatten()
            .map(|&v| v as f64)
            .collect();
        assert_eq!(p, expected);

        let p = extract_patch(&img, 4, 2, 3).unwrap();
        let expected: Vec<f64> = [[13, 14, 13], [23, 24, 23], [33, 34, 33]]
            .iter()
            .flatten()
            .map(|&v| v as f64)
            .collect();
        assert_eq!(p, expected);
    }

    #[test]
    fn unit_patch_is_center_pixel() {
        let img = Image::from_fn(3, 3, |x, y| (x * 3 + y) as f64).unwrap();
        assert_eq!(extract_patch(&img, 2, 1, 1).unwrap(), vec![7.0]);
        assert!(extract_patch(&img, 1, 1, 2).is_err());
        assert!(extract_patch(&img, 3, 1, 3).is_err());
    }

    #[test]
    fn library_counts() {
        let mut r = rng::seeded(1);
        let img = Image::from_fn(10, 10, |_, _| r.random_range(0.0..255.0)).unwrap();
        let lib = build_library(std::slice::from_ref(&img), 3, 1, None, 0).unwrap();
        assert_eq!(lib.len(), 64);
        for (r, &c) in lib.centers().iter().enumerate() {
            assert_eq!(c, lib.patch(r)[4]);
        }

        let a = build_library(std::slice::from_ref(&img), 3, 1, Some(50), 7).unwrap();
        let b = build_library(std::slice::from_ref(&img), 3, 1, Some(50), 7).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);

        assert!(build_library(std::slice::from_ref(&img), 3, 1, Some(0), 7).is_err());
        assert!(build_library(std::slice::from_ref(&img), 11, 1, None, 7).is_err());
    }

    #[test]
    fn stride_one_covers_every_interior_patch_once() {
        let img = Image::from_fn(8, 6, |x, y| (y * 8 + x) as f64).unwrap();
        let lib = build_library(std::slice::from_ref(&img), 3, 1, None, 0).unwrap();
        let mut centers = lib.centers().to_vec();
        let mut expected: Vec<f64> = (1..5)
            .flat_map(|y| (1..7).map(move |x| (y * 8 + x) as f64))
            .collect();
        centers.sort_by(f64::total_cmp);
        expected.sort_by(f64::total_cmp);
        assert_eq!(centers, expected);
    }

    #[test]
    fn constant_library_centers() {
        let img = Image::filled(9, 9, 33.0).unwrap();
        let lib = build_library(&[img], 7, 2, None, 0).unwrap();
        assert!(lib.centers().iter().all(|&c| c == 33.0));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.raw");
        let img = Image::from_fn(12, 9, |x, y| (x * y) as f64 * 0.3).unwrap();
        let lib = build_library(&[img], 5, 2, None, 0).unwrap();
        lib.save(&path).unwrap();
        assert_eq!(PatchLibrary::load(&path).unwrap(), lib);
    }
}
