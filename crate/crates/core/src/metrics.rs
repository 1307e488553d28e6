//! Reconstruction quality and acquisition cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Dynamic range used to express RMSE as a percentage (8-bit scale).
pub const DYNAMIC_RANGE: f64 = 255.0;

/// `100 · ‖a − b‖₂ / (√N · 255)`.
pub fn rmse_percent(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(100.0 * (sse / a.len() as f64).sqrt() / DYNAMIC_RANGE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionStats {
    /// High-resolution pixels acquired per low-resolution pixel acquired.
    pub rho: f64,
    /// Reconstructed pixels per measured pixel.
    pub speedup: f64,
}

/// `rho = M_high / M_low`, `speedup = N / (M_low + M_high)`.
pub fn acquisition_stats(n_recon: usize, m_low: usize, m_high: usize) -> Result<AcquisitionStats> {
    if n_recon == 0 || m_low == 0 {
        return Err(Error::invalid(format!(
            "acquisition counts need N > 0 and M_low > 0 (N={n_recon}, M_low={m_low})"
        )));
    }
    if m_low + m_high > n_recon {
        return Err(Error::invalid(format!(
            "measured pixels {} exceed reconstructed pixels {n_recon}",
            m_low + m_high
        )));
    }
    Ok(AcquisitionStats {
        rho: m_high as f64 / m_low as f64,
        speedup: n_recon as f64 / (m_low + m_high) as f64,
    })
}

/// Speedup for super-resolution by `factor` at a given `rho`, in the ideal
/// pixel-count limit: `factor² / (1 + rho)`.
pub fn ideal_sr_speedup(factor: usize, rho: f64) -> f64 {
    (factor * factor) as f64 / (1.0 + rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rmse_fixed_points() {
        let a = Image::zeros(4, 3).unwrap();
        assert_eq!(rmse_percent(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse_percent(&a, &Image::filled(4, 3, 255.0).unwrap()).unwrap(), 100.0);
        assert_eq!(rmse_percent(&a, &Image::filled(4, 3, 127.5).unwrap()).unwrap(), 50.0);
        assert!(rmse_percent(&a, &Image::zeros(3, 4).unwrap()).is_err());
    }

    #[test]
    fn acquisition_counts() {
        let s = acquisition_stats(256 * 256, 64 * 64, 0).unwrap();
        assert_eq!(s.rho, 0.0);
        assert_eq!(s.speedup, 16.0);
        let s = acquisition_stats(256 * 256, 4096, 400).unwrap();
        assert!((s.rho - 400.0 / 4096.0).abs() < 1e-15);
        assert!(acquisition_stats(0, 1, 0).is_err());
        assert!(acquisition_stats(10, 0, 1).is_err());
        assert!(acquisition_stats(10, 8, 3).is_err());
    }

    #[test]
    fn speedup_decreases_with_library_size() {
        let mut last = f64::INFINITY;
        for m_high in (0..=4096).step_by(128) {
            let s = acquisition_stats(65536, 4096, m_high).unwrap().speedup;
            assert!(s < last);
            last = s;
        }
    }

    fn img(seed: u64) -> Image {
        let mut r = rng::seeded(seed);
        Image::from_fn(6, 5, |_, _| r.random_range(0.0..255.0)).unwrap()
    }

    proptest! {
        #[test]
        fn rmse_is_a_metric(s in 0u64..10_000) {
            let (a, b, c) = (img(s), img(s + 1), img(s + 2));
            let ab = rmse_percent(&a, &b).unwrap();
            prop_assert_eq!(ab, rmse_percent(&b, &a).unwrap());
            prop_assert!(ab > 0.0);
            prop_assert_eq!(rmse_percent(&a, &a).unwrap(), 0.0);
            let ac = rmse_percent(&a, &c).unwrap();
            let bc = rmse_percent(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
