use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use mdf::baselines::{bicubic_interpolate, shepard_interpolate};
use mdf::denoise::{lbnlm_denoise, lbnlm_weights};
use mdf::forward::{sparse_inversion, sr_inversion, InversionProblem};
use mdf::image::block_downsample;
use mdf::io::{load_image, save_image, ImageFormat};
use mdf::patchlib::{extract_patch, reflect101, PatchLibrary};
use mdf::rng;
use mdf::{Image, MeasurementSet, SamplingMask};

fn image(w: usize, h: usize, lo: f64, hi: f64, seed: u64) -> Image {
    let mut r = rng::seeded(seed);
    Image::from_fn(w, h, |_, _| r.random_range(lo..hi)).unwrap()
}

fn library(n: usize, np: usize, seed: u64) -> PatchLibrary {
    let mut r = rng::seeded(seed);
    let flat = (0..n * np * np).map(|_| r.random_range(0.0..255.0)).collect();
    PatchLibrary::from_patches(np, flat, vec![]).unwrap()
}

fn random_mask(w: usize, h: usize, seed: u64) -> SamplingMask {
    let mut r = rng::seeded(seed);
    let m = r.random_range(1..=w * h);
    SamplingMask::new(w, h, rng::sample_indices(&mut r, w * h, m)).unwrap()
}

/// KKT conditions of `min (1/2σw²)‖y − Ax‖² + (1/2σλ²)‖x − x̃‖²` over `x ≥ 0`
/// given the gradient at `x`: zero where `x > 0`, nonnegative where `x = 0`.
fn assert_kkt(x: &[f64], grad: &[f64], scale: f64) -> Result<(), TestCaseError> {
    for (xi, gi) in x.iter().zip(grad) {
        prop_assert!(*xi >= 0.0);
        if *xi > 0.0 {
            prop_assert!(gi.abs() <= 1e-9 * scale, "interior gradient {gi}");
        } else {
            prop_assert!(*gi >= -1e-9 * scale, "active gradient {gi}");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lbnlm_output_is_a_convex_combination(
        w in 1usize..10, h in 1usize..10, n in 1usize..30, sigma in 0.5f64..200.0, seed in any::<u64>()
    ) {
        let v = image(w, h, -20.0, 280.0, seed);
        let lib = library(n, 5, seed ^ 1);
        let out = lbnlm_denoise(&v, &lib, sigma).unwrap();
        let z = lib.centers();
        let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for p in out.pixels() {
            prop_assert!(*p >= lo && *p <= hi);
        }
        let wts = lbnlm_weights(&extract_patch(&v, w / 2, h / 2, 5).unwrap(), &lib, sigma).unwrap();
        prop_assert!((wts.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lbnlm_ignores_library_order(n in 2usize..25, sigma in 1.0f64..100.0, seed in any::<u64>()) {
        let v = image(7, 6, 0.0, 255.0, seed);
        let lib = library(n, 3, seed ^ 2);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(seed ^ 3));
        let a = lbnlm_denoise(&v, &lib, sigma).unwrap();
        let b = lbnlm_denoise(&v, &lib.permuted(&order).unwrap(), sigma).unwrap();
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn sr_inversion_satisfies_kkt(
        l in 2usize..5, bw in 1usize..4, bh in 1usize..4,
        sw in 0.2f64..8.0, sl in 0.5f64..20.0, seed in any::<u64>()
    ) {
        let (w, h) = (bw * l, bh * l);
        let y = image(bw, bh, -10.0, 255.0, seed);
        let xt = image(w, h, -150.0, 255.0, seed ^ 4);
        let meas = MeasurementSet::super_resolution(y.clone(), l, sw).unwrap();
        let x = sr_inversion(&xt, &InversionProblem::new(&meas, sl).unwrap()).unwrap();
        let dx = block_downsample(&x, l).unwrap();
        let n = (l * l) as f64;
        let grad: Vec<f64> = (0..w * h)
            .map(|i| {
                let b = (i / w / l) * bw + (i % w) / l;
                (dx.pixels()[b] - y.pixels()[b]) / (sw * sw * n) + (x.pixels()[i] - xt.pixels()[i]) / (sl * sl)
            })
            .collect();
        assert_kkt(x.pixels(), &grad, 1.0 / (sl * sl))?;
    }

    #[test]
    fn sparse_inversion_satisfies_kkt(
        w in 1usize..9, h in 1usize..9, sw in 0.2f64..8.0, sl in 0.5f64..20.0, seed in any::<u64>()
    ) {
        let mask = random_mask(w, h, seed);
        let mut r = rng::seeded(seed ^ 5);
        let vals: Vec<f64> = (0..mask.count()).map(|_| r.random_range(-30.0..255.0)).collect();
        let xt = image(w, h, -150.0, 255.0, seed ^ 6);
        let meas = MeasurementSet::sparse(vals.clone(), mask.clone(), sw).unwrap();
        let x = sparse_inversion(&xt, &InversionProblem::new(&meas, sl).unwrap()).unwrap();
        let mut grad: Vec<f64> = x.pixels().iter().zip(xt.pixels()).map(|(a, b)| (a - b) / (sl * sl)).collect();
        for (&i, &v) in mask.indices().iter().zip(&vals) {
            grad[i] += (x.pixels()[i] - v) / (sw * sw);
        }
        assert_kkt(x.pixels(), &grad, 1.0 / (sl * sl) + 1.0 / (sw * sw))?;
    }

    #[test]
    fn shepard_passes_samples_through_and_stays_in_range(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let mask = random_mask(w, h, seed);
        let mut r = rng::seeded(seed ^ 7);
        let vals: Vec<f64> = (0..mask.count()).map(|_| r.random_range(0.0..255.0)).collect();
        let meas = MeasurementSet::sparse(vals.clone(), mask.clone(), 0.0).unwrap();
        let out = shepard_interpolate(&meas).unwrap();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (&i, &v) in mask.indices().iter().zip(&vals) {
            prop_assert_eq!(out.pixels()[i], v);
        }
        for p in out.pixels() {
            prop_assert!(*p >= lo - 1e-9 && *p <= hi + 1e-9);
        }
    }

    #[test]
    fn bicubic_keeps_constants(bw in 1usize..8, bh in 1usize..8, l in 2usize..6, c in 0.0f64..255.0) {
        let y = Image::filled(bw, bh, c).unwrap();
        let x = bicubic_interpolate(&y, l).unwrap();
        prop_assert_eq!(x.dims(), (bw * l, bh * l));
        for p in x.pixels() {
            prop_assert!((p - c).abs() <= 1e-9);
        }
    }

    #[test]
    fn raw_files_round_trip_bit_exactly(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let img = image(w, h, -1e6, 1e6, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.raw");
        save_image(&img, &p, ImageFormat::RawF64).unwrap();
        prop_assert_eq!(load_image(&p, ImageFormat::RawF64).unwrap(), img);
    }

    #[test]
    fn reflect101_stays_in_bounds(i in -1000isize..1000, n in 1usize..50) {
        let r = reflect101(i, n);
        prop_assert!(r < n);
        if (0..n as isize).contains(&i) {
            prop_assert_eq!(r, i as usize);
        }
    }
}
