//! The file-based workflow behind the `mdf` binary: simulate from a config,
//! reconstruct with each method, score, and sweep β.
//!
//! ```text
//! cargo run --release --example manifest_workflow [config.json] [out_dir]
//! ```

use std::path::PathBuf;

use mdf::pipeline::{self, Method, ReconstructParams};

fn main() -> mdf::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/cracked_sr4.json")
    });
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/manifest_workflow"));

    let manifest = pipeline::simulate(&config, &out)?;
    println!("simulated -> {}", manifest.display());

    let results = out.join("results.csv");
    let _ = std::fs::remove_file(&results);
    let ground_truth = out.join("ground_truth.raw");

    let mut mdf_params = ReconstructParams::new(Method::Mdf);
    mdf_params.library.stride = 1;
    let sweep = pipeline::sweep_beta(&manifest, &mdf_params, &[0.36, 0.5, 0.75], &out)?;
    println!("beta sweep picked {} (rmse% {:.3})", sweep.best_beta, sweep.best_rmse_percent);
    mdf_params.beta = Some(sweep.best_beta);

    for params in [ReconstructParams::new(Method::Cubic), mdf_params] {
        let (files, report) = pipeline::reconstruct(&manifest, &params, &out)?;
        let plot = files.residuals.as_ref().map(|r| (r.clone(), out.join("mdf_residuals.svg")));
        let plot = plot.as_ref().map(|(r, s)| (r.as_path(), s.as_path()));
        let e = pipeline::evaluate(&files.image, &ground_truth, Some(&manifest), &results, plot)?;
        println!("{:<6} rmse% = {:.3} ({} iterations)", report.method, e.rmse_percent, report.iterations);
    }
    println!("results in {}", results.display());
    Ok(())
}
