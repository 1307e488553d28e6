//! Plug-and-play ADMM.
//!
//! Each iteration runs
//!
//! ```text
//! x̃ ← v̂ − u
//! x̂ ← F(x̃; σ_λ)
//! ṽ ← x̂ + u
//! v̂ ← H(ṽ; σ_n)
//! u ← u + (x̂ − v̂)
//! ```
//!
//! with `σ_n = √β · σ_λ`, `u` starting at zero and `v̂` at a baseline
//! reconstruction. Convergence is tracked with the normalized residue
//! `‖x̂ − v̂‖ / ‖x̂^(∞)‖`; during the run the current `‖x̂‖` stands in for the
//! unknown final norm, and the exact values are recomputed once the final
//! `x̂` is known.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::forward::InversionProblem;
use crate::image::Image;
use crate::patchlib::reflect101;

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-4;

/// Side of the window used by [`estimate_sigma_lambda`].
pub const SIGMA_WINDOW: usize = 7;

/// σ_λ² values used for the published microscope experiments.
pub mod reference_sigma_lambda_sq {
    pub const SPARSE_INTERPOLATION: f64 = 64.0;
    pub const HINEA_BRASILIANA: f64 = 55.0;
    pub const GOLD_ATOMS: f64 = 72.0;
}

/// β values selected for the published microscope experiments.
pub mod reference_beta {
    pub const SPARSE_INTERPOLATION_MDF: f64 = 0.42;
    pub const SPARSE_INTERPOLATION_DSG_NLM: f64 = 0.39;
    pub const HINEA_BRASILIANA: f64 = 0.51;
    pub const GOLD_ATOMS: f64 = 0.36;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaLambda {
    /// Estimated from the initial reconstruction by [`estimate_sigma_lambda`].
    Auto,
    Fixed(f64),
}

/// Controls of the ADMM loop. σ_n is never stored: it is always derived from
/// β and the resolved σ_λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnPConfig {
    beta: f64,
    sigma_lambda: SigmaLambda,
    sigma_w: Option<f64>,
    max_iters: usize,
    residual_tol: f64,
    record_history: bool,
}

impl PnPConfig {
    pub fn new(beta: f64) -> Result<Self> {
        check_positive("beta", beta)?;
        Ok(PnPConfig {
            beta,
            sigma_lambda: SigmaLambda::Auto,
            sigma_w: None,
            max_iters: DEFAULT_MAX_ITERS,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            record_history: true,
        })
    }

    pub fn with_sigma_lambda(mut self, sigma_lambda: SigmaLambda) -> Result<Self> {
        if let SigmaLambda::Fixed(s) = sigma_lambda {
            check_positive("sigma_lambda", s)?;
        }
        self.sigma_lambda = sigma_lambda;
        Ok(self)
    }

    /// Overrides the noise level carried by the measurement set.
    pub fn with_sigma_w(mut self, sigma_w: Option<f64>) -> Result<Self> {
        if let Some(s) = sigma_w {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid(format!("sigma_w must be nonnegative, got {s}")));
            }
        }
        self.sigma_w = sigma_w;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        check_positive("beta", beta)?;
        self.beta = beta;
        Ok(self)
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        self.max_iters = max_iters;
        Ok(self)
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Result<Self> {
        check_positive("residual_tol", tol)?;
        self.residual_tol = tol;
        Ok(self)
    }

    pub fn with_record_history(mut self, record: bool) -> Self {
        self.record_history = record;
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma_lambda(&self) -> SigmaLambda {
        self.sigma_lambda
    }

    pub fn sigma_w(&self) -> Option<f64> {
        self.sigma_w
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    pub fn record_history(&self) -> bool {
        self.record_history
    }

    /// `σ_n = √β · σ_λ`.
    pub fn sigma_n(&self, sigma_lambda: f64) -> f64 {
        self.beta.sqrt() * sigma_lambda
    }

    /// Resolves σ_λ (estimating it from `baseline` when automatic) and the
    /// matching σ_n.
    pub fn resolve(&self, baseline: &Image) -> Sigmas {
        let sigma_lambda = match self.sigma_lambda {
            SigmaLambda::Auto => estimate_sigma_lambda(baseline),
            SigmaLambda::Fixed(s) => s,
        };
        Sigmas {
            sigma_lambda,
            sigma_n: self.sigma_n(sigma_lambda),
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(format!("{name} must be finite and positive, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmas {
    pub sigma_lambda: f64,
    pub sigma_n: f64,
}

/// Iterates of the loop. `u` starts at zero and `v_hat` at the initializer.
#[derive(Debug, Clone)]
pub struct PnPState {
    pub x_hat: Image,
    pub v_hat: Image,
    pub u: Image,
    pub k: usize,
    pub residual_history: Vec<f64>,
}

impl PnPState {
    pub fn new(init: Image) -> Self {
        let u = init.map(|_| 0.0);
        PnPState {
            x_hat: init.clone(),
            v_hat: init,
            u,
            k: 0,
            residual_history: Vec::new(),
        }
    }
}

/// Everything one iteration produced, handed to an observer.
#[derive(Debug)]
pub struct IterationTrace<'a> {
    pub k: usize,
    pub sigma_lambda: f64,
    /// The σ_n actually passed to the denoiser.
    pub sigma_n: f64,
    pub beta: f64,
    pub x_tilde: &'a Image,
    pub v_tilde: &'a Image,
    pub u_prev: &'a Image,
    pub state: &'a PnPState,
    /// Residual normalized by the current `‖x̂‖`.
    pub running_residual: f64,
}

/// Run settings echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub prior: String,
    pub beta: f64,
    pub sigma_lambda: f64,
    pub sigma_lambda_auto: bool,
    pub sigma_n: f64,
    pub sigma_w: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub method: String,
    /// Normalized residue per iteration, relative to the final `‖x̂‖`.
    pub residual_history: Vec<f64>,
    /// Residual as used by the stopping rule, relative to the current `‖x̂‖`.
    pub running_history: Vec<f64>,
    pub final_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the residual sequence ever increased.
    pub non_monotone: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub speedup: Option<f64>,
    /// Wall-clock seconds. Left out of serialized reports unless requested,
    /// so that repeated runs produce identical files.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<ConfigEcho>,
}

impl ReconstructionReport {
    /// Report for a non-iterative method.
    pub fn direct(method: impl Into<String>) -> Self {
        ReconstructionReport {
            method: method.into(),
            residual_history: Vec::new(),
            running_history: Vec::new(),
            final_residual: 0.0,
            iterations: 0,
            converged: true,
            non_monotone: false,
            rmse_percent: None,
            rho: None,
            speedup: None,
            wall_time: None,
            config: None,
        }
    }

    /// Residual CSV: `k,r_running,r_final`, one row per iteration.
    pub fn residual_csv(&self) -> String {
        let mut s = String::from("k,r_running,r_final\n");
        for (k, (r, e)) in self.running_history.iter().zip(&self.residual_history).enumerate() {
            s.push_str(&format!("{},{r:e},{e:e}\n", k + 1));
        }
        s
    }
}

/// `‖x̂ − v̂‖₂ / ‖x_ref‖₂`.
pub fn normalized_residual(x_hat: &Image, v_hat: &Image, x_ref: &Image) -> Result<f64> {
    x_hat.ensure_same_dims(v_hat)?;
    x_hat.ensure_same_dims(x_ref)?;
    let denom = x_ref.norm();
    if denom == 0.0 {
        return Err(Error::invalid("reference image has zero norm"));
    }
    Ok(diff_norm(x_hat, v_hat) / denom)
}

fn diff_norm(a: &Image, b: &Image) -> f64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// σ_λ from the local variation of a baseline: `σ_λ²` is the mean over
/// pixels of the population variance in a 7×7 window (reflect-101 borders),
/// floored at 1.
pub fn estimate_sigma_lambda(baseline: &Image) -> f64 {
    let (w, h) = baseline.dims();
    let half = (SIGMA_WINDOW / 2) as isize;
    let n = (SIGMA_WINDOW * SIGMA_WINDOW) as f64;
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for dy in -half..=half {
                let row = baseline.row(reflect101(y + dy, h));
                for dx in -half..=half {
                    let v = row[reflect101(x + dx, w)];
                    s += v;
                    s2 += v * v;
                }
            }
            let mean = s / n;
            total += (s2 / n - mean * mean).max(0.0);
        }
    }
    (total / (w * h) as f64).max(1.0).sqrt()
}

/// Runs the loop to convergence or `max_iters`. Returns the final `x̂`.
pub fn pnp_reconstruct(
    meas: &crate::image::MeasurementSet,
    prior: &dyn Denoiser,
    cfg: &PnPConfig,
    init: &Image,
) -> Result<(Image, ReconstructionReport)> {
    pnp_reconstruct_observed(meas, prior, cfg, init, |_| {})
}

/// [`pnp_reconstruct`] with a callback after every iteration.
pub fn pnp_reconstruct_observed(
    meas: &crate::image::MeasurementSet,
    prior: &dyn Denoiser,
    cfg: &PnPConfig,
    init: &Image,
    mut observer: impl FnMut(&IterationTrace<'_>),
) -> Result<(Image, ReconstructionReport)> {
    let started = Instant::now();
    let meas_owned;
    let meas = match cfg.sigma_w() {
        Some(sw) if sw != meas.sigma_w() => {
            meas_owned = meas.clone().with_sigma_w(sw)?;
            &meas_owned
        }
        _ => meas,
    };
    if init.dims() != meas.target_dims() {
        return Err(Error::DimensionMismatch(format!(
            "initializer is {}x{}, measurements describe {}x{}",
            init.width(),
            init.height(),
            meas.target_dims().0,
            meas.target_dims().1
        )));
    }
    if let Some(index) = init.first_non_finite() {
        return Err(Error::NonFinite { index });
    }

    let sigmas = cfg.resolve(init);
    let problem = InversionProblem::new(meas, sigmas.sigma_lambda)?;
    let mut state = PnPState::new(init.clone());
    let mut diff_norms = Vec::new();
    let mut converged = false;

    while state.k < cfg.max_iters() {
        let x_tilde = state.v_hat.zip_map(&state.u, |v, u| v - u)?;
        state.x_hat = problem.apply(&x_tilde)?;
        let v_tilde = state.x_hat.zip_map(&state.u, |x, u| x + u)?;
        let sigma_n = cfg.sigma_n(sigmas.sigma_lambda);
        state.v_hat = prior.denoise(&v_tilde, sigma_n)?;
        state.v_hat.ensure_same_dims(&state.x_hat)?;
        let u_new = state.u.zip_map(
            &state.x_hat.zip_map(&state.v_hat, |x, v| x - v)?,
            |u, d| u + d,
        )?;
        let u_prev = std::mem::replace(&mut state.u, u_new);
        state.k += 1;

        for (name, img) in [("x_hat", &state.x_hat), ("v_hat", &state.v_hat), ("u", &state.u)] {
            if let Some(i) = img.first_non_finite() {
                return Err(Error::Runtime(format!(
                    "non-finite {name} at pixel {i} in iteration {}",
                    state.k
                )));
            }
        }

        let dn = diff_norm(&state.x_hat, &state.v_hat);
        let xn = state.x_hat.norm();
        let running = ratio(dn, xn, state.k)?;
        diff_norms.push(dn);
        state.residual_history.push(running);

        observer(&IterationTrace {
            k: state.k,
            sigma_lambda: sigmas.sigma_lambda,
            sigma_n,
            beta: cfg.beta(),
            x_tilde: &x_tilde,
            v_tilde: &v_tilde,
            u_prev: &u_prev,
            state: &state,
            running_residual: running,
        });

        if running < cfg.residual_tol() {
            converged = true;
            break;
        }
    }

    let final_norm = state.x_hat.norm();
    let exact: Vec<f64> = diff_norms
        .iter()
        .map(|&d| ratio(d, final_norm, state.k))
        .collect::<Result<_>>()?;
    let final_residual = *exact.last().expect("at least one iteration");
    let non_monotone = exact.windows(2).any(|w| w[1] > w[0]);
    let residual_history = if cfg.record_history() {
        exact
    } else {
        vec![final_residual]
    };
    let running_history = if cfg.record_history() {
        state.residual_history.clone()
    } else {
        vec![*state.residual_history.last().expect("at least one iteration")]
    };

    let report = ReconstructionReport {
        method: "pnp".into(),
        residual_history,
        running_history,
        final_residual,
        iterations: state.k,
        converged,
        non_monotone,
        rmse_percent: None,
        rho: None,
        speedup: None,
        wall_time: Some(started.elapsed().as_secs_f64()),
        config: Some(ConfigEcho {
            prior: prior.label(),
            beta: cfg.beta(),
            sigma_lambda: sigmas.sigma_lambda,
            sigma_lambda_auto: cfg.sigma_lambda() == SigmaLambda::Auto,
            sigma_n: cfg.sigma_n(sigmas.sigma_lambda),
            sigma_w: meas.sigma_w(),
            max_iters: cfg.max_iters(),
            residual_tol: cfg.residual_tol(),
        }),
    };
    Ok((state.x_hat, report))
}

fn ratio(diff: f64, norm: f64, k: usize) -> Result<f64> {
    if norm > 0.0 {
        Ok(diff / norm)
    } else if diff == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Runtime(format!(
            "x_hat vanished while x_hat != v_hat at iteration {k}"
        )))
    }
}
