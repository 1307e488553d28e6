//! Denoising a noisy lattice with patches from a clean crop (LB-NLM) versus
//! patches from the noisy image itself (plain and symmetrized NLM).
//!
//! ```text
//! cargo run --release --example denoise_with_library
//! ```

use rand_distr::{Distribution, Normal};

use mdf::denoise::{lbnlm_denoise, Denoiser, InternalNlm};
use mdf::metrics::rmse_percent;
use mdf::patchlib::build_library;
use mdf::rng;
use mdf::synth::{gen_lattice_scene, SceneConfig};
use mdf::Image;

fn main() -> mdf::Result<()> {
    let clean = gen_lattice_scene(&SceneConfig::lattice(96, 96, 5))?;
    let sigma = 20.0;
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut r = rng::seeded(1);
    let noisy = Image::new(96, 96, clean.pixels().iter().map(|p| p + normal.sample(&mut r)).collect())?;
    println!("noisy            rmse% = {:.3}", rmse_percent(&noisy, &clean)?);

    let crop: Image = clean.crop(30, 30, 24, 24)?;
    let library = build_library(&[crop], 7, 1, None, 0)?;
    let lb = lbnlm_denoise(&noisy, &library, sigma)?;
    println!("LB-NLM ({:>3} p.) rmse% = {:.3}", library.len(), rmse_percent(&lb, &clean)?);

    for prior in [InternalNlm::plain(), InternalNlm::symmetric()] {
        let out = prior.denoise(&noisy, sigma)?;
        println!("{:<16} rmse% = {:.3}", prior.label(), rmse_percent(&out, &clean)?);
    }
    Ok(())
}
