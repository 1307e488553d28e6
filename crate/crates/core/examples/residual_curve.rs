//! Watching the ADMM loop: per-iteration residuals, σ values and the dual
//! variable, plus an SVG residual plot.
//!
//! ```text
//! cargo run --release --example residual_curve [out.svg]
//! ```

use mdf::baselines::bicubic_interpolate;
use mdf::denoise::LibraryNlm;
use mdf::patchlib::build_library;
use mdf::pnp::{pnp_reconstruct_observed, PnPConfig};
use mdf::svg::residual_plot;
use mdf::synth::{gen_experiment, gen_lattice_scene, Mode, Region, SceneConfig};

fn main() -> mdf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "residuals.svg".into());

    let scene = gen_lattice_scene(&SceneConfig::lattice(128, 128, 9))?;
    let region = Region { x: 50, y: 50, width: 20, height: 20 };
    let exp = gen_experiment(&scene, &Mode::Sr { factor: 4 }, region, 3.0, 0)?;
    let init = bicubic_interpolate(exp.measurements.y(), 4)?;
    let prior = LibraryNlm::new(build_library(&[exp.library_image], 7, 1, None, 0)?);

    let cfg = PnPConfig::new(0.5)?;
    let (_, report) = pnp_reconstruct_observed(&exp.measurements, &prior, &cfg, &init, |t| {
        if t.k == 1 {
            println!("sigma_lambda = {:.3}, sigma_n = {:.3}", t.sigma_lambda, t.sigma_n);
        }
        if t.k % 5 == 1 {
            println!("k = {:>3}  r = {:.3e}  |u| = {:.1}", t.k, t.running_residual, t.state.u.norm());
        }
    })?;
    println!(
        "stopped after {} iterations (converged: {}, non-monotone: {})",
        report.iterations, report.converged, report.non_monotone
    );

    let svg = residual_plot(
        "MDF residual, 4x",
        &[("final norm", &report.residual_history), ("running", &report.running_history)],
    );
    std::fs::write(&out, svg).map_err(|e| mdf::Error::Runtime(e.to_string()))?;
    println!("wrote {out}");
    Ok(())
}
