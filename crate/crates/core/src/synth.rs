//! Deterministic synthetic microscopy scenes and acquisition experiments.
//!
//! Scenes are isotropic Gaussian spots on a jittered hexagonal lattice over a
//! constant background (an atomic-resolution stand-in), optionally crossed by
//! a dark wavy crack. An experiment measures the scene over the full field of
//! view at low resolution (or sparsely) and also crops one region at full
//! resolution to serve as the patch-library source.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{block_downsample, sample_sparse, Image, MeasurementSet};
use crate::metrics::{acquisition_stats, AcquisitionStats};
use crate::rng;

const JITTER_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Spots are evaluated out to this many standard deviations.
const SPOT_RADIUS_SIGMAS: f64 = 6.0;

fn default_background() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crack {
    /// Vertical position of the crack's center line as a fraction of height.
    pub row: f64,
    pub depth: f64,
    pub half_width: f64,
    /// Amplitude (pixels) and period (pixels) of the center line's sine wave.
    pub waviness: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub spot_spacing: f64,
    pub spot_sigma: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "default_background")]
    pub background: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crack: Option<Crack>,
}

impl SceneConfig {
    /// Lattice scene with the settings used by the bundled experiments.
    pub fn lattice(width: usize, height: usize, seed: u64) -> Self {
        SceneConfig {
            width,
            height,
            spot_spacing: 9.0,
            spot_sigma: 1.6,
            amplitude: 170.0,
            jitter: 0.6,
            background: default_background(),
            seed,
            crack: None,
        }
    }

    /// Non-fatal concerns about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.spot_spacing <= 2.0 * self.spot_sigma {
            w.push(format!(
                "spot spacing {} is not above twice the spot sigma {}; spots will merge",
                self.spot_spacing, self.spot_sigma
            ));
        }
        w
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "scene dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        for (name, v) in [("spot_spacing", self.spot_spacing), ("spot_sigma", self.spot_sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("jitter", self.jitter),
            ("background", self.background),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if self.jitter < 0.0 {
            return Err(Error::invalid("jitter must be nonnegative"));
        }
        Ok(())
    }
}

/// Renders a lattice scene, clipped to `[0, 255]`.
pub fn gen_lattice_scene(cfg: &SceneConfig) -> Result<Image> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut px = vec![0.0; w * h];

    let a = cfg.spot_spacing;
    let row_step = a * 3f64.sqrt() / 2.0;
    let reach = SPOT_RADIUS_SIGMAS * cfg.spot_sigma;
    let (ox, oy) = ((w / 2) as f64, (h / 2) as f64);
    let margin = reach + cfg.jitter + a;
    let j_lo = ((-oy - margin) / row_step).floor() as i64;
    let j_hi = ((h as f64 - oy + margin) / row_step).ceil() as i64;
    let i_lo = ((-ox - margin) / a).floor() as i64 - 1;
    let i_hi = ((w as f64 - ox + margin) / a).ceil() as i64 + 1;

    let mut jitter = rng::stream(cfg.seed, JITTER_STREAM);
    let inv2s2 = 1.0 / (2.0 * cfg.spot_sigma * cfg.spot_sigma);
    let r = reach.ceil() as i64;
    for j in j_lo..=j_hi {
        let shift = if j.rem_euclid(2) == 1 { a / 2.0 } else { 0.0 };
        for i in i_lo..=i_hi {
            let (jx, jy) = if cfg.jitter > 0.0 {
                (
                    jitter.random_range(-cfg.jitter..=cfg.jitter),
                    jitter.random_range(-cfg.jitter..=cfg.jitter),
                )
            } else {
                (0.0, 0.0)
            };
            let cx = ox + i as f64 * a + shift + jx;
            let cy = oy + j as f64 * row_step + jy;
            let (px0, py0) = (cx.round() as i64, cy.round() as i64);
            for y in (py0 - r).max(0)..=(py0 + r).min(h as i64 - 1) {
                for x in (px0 - r).max(0)..=(px0 + r).min(w as i64 - 1) {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    if d2 <= reach * reach {
                        px[y as usize * w + x as usize] += cfg.amplitude * (-d2 * inv2s2).exp();
                    }
                }
            }
        }
    }

    for (idx, p) in px.iter_mut().enumerate() {
        let mut v = cfg.background + *p;
        if let Some(c) = &cfg.crack {
            let (x, y) = ((idx % w) as f64, (idx / w) as f64);
            let center = c.row * h as f64 + c.waviness * (2.0 * PI * x / c.period).sin();
            let d = y - center;
            v -= c.depth * (-d * d / (2.0 * c.half_width * c.half_width)).exp();
        }
        *p = v.clamp(0.0, 255.0);
    }
    Image::new(w, h, px)
}

/// Measurement geometry of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Block-average downsampling by `factor`.
    Sr { factor: usize },
    /// Uniform random sampling of `fraction` of the pixels.
    Sparse { fraction: f64, seed: u64 },
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// Pixel counts of an acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_recon: usize,
    pub m_low: usize,
    pub m_high: usize,
}

impl Counts {
    pub fn stats(&self) -> Result<AcquisitionStats> {
        acquisition_stats(self.n_recon, self.m_low, self.m_high)
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub ground_truth: Image,
    pub measurements: MeasurementSet,
    /// Full-resolution crop acquired for the patch library.
    pub library_image: Image,
    pub counts: Counts,
}

/// Simulates the dual-resolution acquisition of `scene`.
///
/// The library region may overlap the area later used for evaluation.
/// Gaussian noise of standard deviation `sigma_w` (stream derived from
/// `noise_seed`) is added to the measurements when positive.
pub fn gen_experiment(
    scene: &Image,
    mode: &Mode,
    library_region: Region,
    sigma_w: f64,
    noise_seed: u64,
) -> Result<Experiment> {
    let Region {
        x,
        y,
        width,
        height,
    } = library_region;
    if width == 0 || height == 0 || x + width > scene.width() || y + height > scene.height() {
        return Err(Error::invalid(format!(
            "library region {width}x{height}+{x}+{y} outside {}x{} scene",
            scene.width(),
            scene.height()
        )));
    }
    let library_image = scene.crop(x, y, width, height)?;
    let n = scene.len();

    let measurements = match *mode {
        Mode::Sr { factor } => {
            let low = block_downsample(scene, factor)?;
            let low = add_noise(low, sigma_w, noise_seed)?;
            MeasurementSet::super_resolution(low, factor, sigma_w)?
        }
        Mode::Sparse { fraction, seed } => {
            let (meas, mask) = sample_sparse(scene, fraction, seed)?;
            let vals = add_noise(meas.y().clone(), sigma_w, noise_seed)?.into_pixels();
            MeasurementSet::sparse(vals, mask, sigma_w)?
        }
    };
    let counts = Counts {
        n_recon: n,
        m_low: measurements.count(),
        m_high: library_region.area(),
    };
    Ok(Experiment {
        ground_truth: scene.clone(),
        measurements,
        library_image,
        counts,
    })
}

fn add_noise(img: Image, sigma_w: f64, seed: u64) -> Result<Image> {
    if !(sigma_w.is_finite() && sigma_w >= 0.0) {
        return Err(Error::invalid(format!("sigma_w must be nonnegative, got {sigma_w}")));
    }
    if sigma_w == 0.0 {
        return Ok(img);
    }
    let normal = Normal::new(0.0, sigma_w).map_err(|e| Error::invalid(e.to_string()))?;
    let mut r = rng::stream(seed, NOISE_STREAM);
    let (w, h) = img.dims();
    let px = img.into_pixels().into_iter().map(|p| p + normal.sample(&mut r)).collect();
    Image::new(w, h, px)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_spot(jitter: f64) -> SceneConfig {
        SceneConfig {
            width: 21,
            height: 21,
            spot_spacing: 1000.0,
            spot_sigma: 2.0,
            amplitude: 150.0,
            jitter,
            background: 30.0,
            seed: 3,
            crack: None,
        }
    }

    #[test]
    fn zero_amplitude_is_background() {
        let mut cfg = SceneConfig::lattice(32, 24, 1);
        cfg.amplitude = 0.0;
        let img = gen_lattice_scene(&cfg).unwrap();
        assert!(img.pixels().iter().all(|&p| p == cfg.background));
    }

    #[test]
    fn centered_spot_peak() {
        let img = gen_lattice_scene(&single_spot(0.0)).unwrap();
        assert_eq!(img.get(10, 10), 180.0);
        assert_eq!(img.max(), 180.0);
    }

    #[test]
    fn seed_reproduces_scene() {
        let cfg = SceneConfig::lattice(64, 48, 9);
        let a = gen_lattice_scene(&cfg).unwrap();
        let b = gen_lattice_scene(&cfg).unwrap();
        assert_eq!(a, b);
        let c = gen_lattice_scene(&SceneConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn values_are_clipped() {
        let mut cfg = SceneConfig::lattice(40, 40, 2);
        cfg.amplitude = 400.0;
        cfg.crack = Some(Crack {
            row: 0.5,
            depth: 300.0,
            half_width: 2.0,
            waviness: 3.0,
            period: 25.0,
        });
        let img = gen_lattice_scene(&cfg).unwrap();
        assert!(img.min() >= 0.0 && img.max() <= 255.0);
        assert_eq!(img.min(), 0.0);
    }

    #[test]
    fn spacing_warning() {
        let mut cfg = SceneConfig::lattice(8, 8, 0);
        assert!(cfg.warnings().is_empty());
        cfg.spot_spacing = 3.0;
        assert_eq!(cfg.warnings().len(), 1);
        cfg.width = 0;
        assert!(gen_lattice_scene(&cfg).is_err());
    }

    #[test]
    fn sr_experiment_composition_and_counts() {
        let scene = gen_lattice_scene(&SceneConfig::lattice(256, 256, 4)).unwrap();
        let region = Region {
            x: 100,
            y: 100,
            width: 20,
            height: 20,
        };
        let e = gen_experiment(&scene, &Mode::Sr { factor: 4 }, region, 0.0, 0).unwrap();
        assert_eq!(e.measurements.y(), &block_downsample(&scene, 4).unwrap());
        assert_eq!(e.measurements.y().dims(), (64, 64));
        assert_eq!(e.library_image, scene.crop(100, 100, 20, 20).unwrap());
        let s = e.counts.stats().unwrap();
        assert_eq!(e.counts.m_high, 400);
        assert!((s.rho - 400.0 / 4096.0).abs() < 1e-15);

        let big = Region {
            width: 64,
            height: 64,
            ..region
        };
        let e = gen_experiment(&scene, &Mode::Sr { factor: 4 }, big, 0.0, 0).unwrap();
        assert_eq!(e.counts.stats().unwrap().rho, 1.0);

        let outside = Region { x: 250, ..region };
        assert!(gen_experiment(&scene, &Mode::Sr { factor: 4 }, outside, 0.0, 0).is_err());
    }

    #[test]
    fn sparse_experiment_counts_and_noise() {
        let scene = gen_lattice_scene(&SceneConfig::lattice(100, 100, 5)).unwrap();
        let region = Region {
            x: 0,
            y: 0,
            width: 10,
            height: 10,
        };
        let mode = Mode::Sparse {
            fraction: 0.05,
            seed: 7,
        };
        let e = gen_experiment(&scene, &mode, region, 0.0, 0).unwrap();
        assert_eq!(e.counts.m_low, 500);
        let noisy = gen_experiment(&scene, &mode, region, 2.0, 11).unwrap();
        assert_ne!(noisy.measurements.values(), e.measurements.values());
        assert_eq!(noisy.measurements.sigma_w(), 2.0);
        let again = gen_experiment(&scene, &mode, region, 2.0, 11).unwrap();
        assert_eq!(again.measurements, noisy.measurements);
    }
}
