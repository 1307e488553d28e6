//! 4x super-resolution of a synthetic lattice: bicubic versus MDF.
//!
//! ```text
//! cargo run --release --example super_resolution [beta]
//! ```

use mdf::baselines::bicubic_interpolate;
use mdf::denoise::LibraryNlm;
use mdf::metrics::rmse_percent;
use mdf::patchlib::build_library;
use mdf::pnp::{pnp_reconstruct, PnPConfig};
use mdf::synth::{gen_experiment, gen_lattice_scene, Mode, Region, SceneConfig};

fn main() -> mdf::Result<()> {
    let beta: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.36);

    let scene = gen_lattice_scene(&SceneConfig::lattice(256, 256, 7))?;
    let region = Region { x: 118, y: 118, width: 20, height: 20 };
    let exp = gen_experiment(&scene, &Mode::Sr { factor: 4 }, region, 3.0, 0)?;

    let bicubic = bicubic_interpolate(exp.measurements.y(), 4)?;
    let library = build_library(std::slice::from_ref(&exp.library_image), 7, 1, None, 0)?;
    println!("library: {} patches from a 20x20 crop", library.len());

    let t = std::time::Instant::now();
    let (x, report) = pnp_reconstruct(&exp.measurements, &LibraryNlm::new(library), &PnPConfig::new(beta)?, &bicubic)?;

    let stats = exp.counts.stats()?;
    println!("rho = {:.4}, speedup = {:.2}x", stats.rho, stats.speedup);
    println!("bicubic rmse% = {:.3}", rmse_percent(&bicubic, &exp.ground_truth)?);
    println!(
        "MDF     rmse% = {:.3}  (beta {beta}, {} iterations, r = {:.2e}, {:.1}s)",
        rmse_percent(&x, &exp.ground_truth)?,
        report.iterations,
        report.final_residual,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
