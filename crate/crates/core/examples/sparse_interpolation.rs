//! Reconstruction from 5% randomly sampled pixels: Shepard, MDF, and
//! optionally the symmetrized internal NLM prior (slow at this size).
//!
//! ```text
//! cargo run --release --example sparse_interpolation [--with-nlm-sym]
//! ```

use mdf::baselines::shepard_interpolate;
use mdf::denoise::{Denoiser, InternalNlm, LibraryNlm};
use mdf::metrics::rmse_percent;
use mdf::patchlib::build_library;
use mdf::pnp::{pnp_reconstruct, reference_beta, PnPConfig};
use mdf::synth::{gen_experiment, gen_lattice_scene, Mode, Region, SceneConfig};

fn main() -> mdf::Result<()> {
    let with_sym = std::env::args().any(|a| a == "--with-nlm-sym");

    let scene = gen_lattice_scene(&SceneConfig::lattice(256, 256, 7))?;
    let region = Region { x: 118, y: 118, width: 20, height: 20 };
    let mode = Mode::Sparse { fraction: 0.05, seed: 3 };
    let exp = gen_experiment(&scene, &mode, region, 0.0, 0)?;
    println!("{} of {} pixels measured", exp.measurements.count(), scene.len());

    let shepard = shepard_interpolate(&exp.measurements)?;
    println!("{:<16} rmse% = {:.3}", "Shepard", rmse_percent(&shepard, &exp.ground_truth)?);

    let library = build_library(std::slice::from_ref(&exp.library_image), 7, 1, None, 0)?;
    let mut runs: Vec<(Box<dyn Denoiser>, f64)> =
        vec![(Box::new(LibraryNlm::new(library)), reference_beta::SPARSE_INTERPOLATION_MDF)];
    if with_sym {
        runs.push((Box::new(InternalNlm::symmetric()), reference_beta::SPARSE_INTERPOLATION_DSG_NLM));
    }
    for (prior, beta) in runs {
        let (x, report) = pnp_reconstruct(&exp.measurements, prior.as_ref(), &PnPConfig::new(beta)?, &shepard)?;
        println!(
            "{:<16} rmse% = {:.3}  (beta {beta}, {} iterations, r = {:.2e})",
            prior.label(),
            rmse_percent(&x, &exp.ground_truth)?,
            report.iterations,
            report.final_residual
        );
    }
    Ok(())
}
