use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mdf::denoise::{DenoiserConfig, Variant};
use mdf::io::{load_image, save_image, ImageFormat};
use mdf::pipeline::{self, LibraryParams, Method, ReconstructParams};
use mdf::pnp::SigmaLambda;
use mdf::{Error, Result};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "mdf", version, about = "Super-resolution and sparse interpolation with a patch-library prior")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct LibArgs {
    /// Patch side length (odd).
    #[arg(long, default_value_t = mdf::patchlib::DEFAULT_PATCH_SIZE)]
    patch_size: usize,
    #[arg(long, default_value_t = mdf::patchlib::DEFAULT_STRIDE)]
    stride: usize,
    /// Cap on the library size; 0 keeps every patch.
    #[arg(long, default_value_t = mdf::patchlib::DEFAULT_MAX_PATCHES)]
    max_patches: usize,
    #[arg(long, default_value_t = 0)]
    library_seed: u64,
}

impl LibArgs {
    fn params(&self) -> LibraryParams {
        LibraryParams {
            patch_size: self.patch_size,
            stride: self.stride,
            max_patches: (self.max_patches > 0).then_some(self.max_patches),
            seed: self.library_seed,
        }
    }
}

#[derive(clap::Args, Clone)]
struct PnpArgs {
    /// Fixed σ_λ; estimated from the initial reconstruction when omitted.
    #[arg(long)]
    sigma_lambda: Option<f64>,
    #[arg(long, default_value_t = mdf::pnp::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = mdf::pnp::DEFAULT_RESIDUAL_TOL)]
    tol: f64,
    /// Prebuilt library file (otherwise built from the manifest's library image).
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, default_value_t = mdf::denoise::DEFAULT_SEARCH_RADIUS)]
    search_radius: usize,
    #[arg(long, default_value_t = mdf::denoise::DEFAULT_SINKHORN_ITERS)]
    sinkhorn_iters: usize,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    lib: LibArgs,
}

impl PnpArgs {
    fn params(&self, method: Method, beta: Option<f64>) -> ReconstructParams {
        ReconstructParams {
            beta,
            sigma_lambda: self.sigma_lambda.map_or(SigmaLambda::Auto, SigmaLambda::Fixed),
            max_iters: self.max_iters,
            residual_tol: self.tol,
            library: self.lib.params(),
            library_file: self.library.clone(),
            search_radius: self.search_radius,
            sinkhorn_iters: self.sinkhorn_iters,
            record_timing: self.timing,
            ..ReconstructParams::new(method)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Cubic,
    Shepard,
}

#[derive(Clone, Copy, ValueEnum)]
enum IterMethod {
    Mdf,
    Cubic,
    Shepard,
    NlmSym,
}

impl From<IterMethod> for Method {
    fn from(m: IterMethod) -> Method {
        match m {
            IterMethod::Mdf => Method::Mdf,
            IterMethod::Cubic => Method::Cubic,
            IterMethod::Shepard => Method::Shepard,
            IterMethod::NlmSym => Method::NlmSym,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Prior {
    Lbnlm,
    Nlm,
    NlmSym,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render an experiment config into a directory with a manifest.
    Simulate {
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Extract a patch library from one or more images.
    BuildLibrary {
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        lib: LibArgs,
    },
    /// Run a non-iterative baseline on a manifest.
    Baseline {
        manifest: PathBuf,
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Reconstruct from a manifest's measurements.
    Reconstruct {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "mdf")]
        method: IterMethod,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        pnp: PnpArgs,
    },
    /// Denoise a single image.
    Denoise {
        input: PathBuf,
        #[arg(long, value_enum)]
        prior: Prior,
        #[arg(long)]
        sigma_n: f64,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, default_value_t = mdf::patchlib::DEFAULT_PATCH_SIZE)]
        patch_size: usize,
        #[arg(long, default_value_t = mdf::denoise::DEFAULT_SEARCH_RADIUS)]
        search_radius: usize,
        #[arg(long, default_value_t = mdf::denoise::DEFAULT_SINKHORN_ITERS)]
        sinkhorn_iters: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Apply the data-term inversion operator to an image.
    Invert {
        manifest: PathBuf,
        input: PathBuf,
        #[arg(long)]
        sigma_lambda: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score an output against ground truth and append to a results CSV.
    Evaluate {
        output: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
        /// Residual CSV to plot; requires --svg.
        #[arg(long, requires = "svg")]
        residuals: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Grid search over β by RMSE against ground truth.
    SweepBeta {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "mdf")]
        method: IterMethod,
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        pnp: PnpArgs,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { config, out } => {
            let m = pipeline::simulate(&config, &out)?;
            println!("{}", m.display());
        }
        Cmd::BuildLibrary { images, out, lib } => {
            let l = pipeline::build_library_files(&images, &lib.params(), &out)?;
            println!("{} patches of {}x{} -> {}", l.len(), l.patch_size(), l.patch_size(), out.display());
        }
        Cmd::Baseline { manifest, method, out } => {
            let method = match method {
                BaselineMethod::Cubic => Method::Cubic,
                BaselineMethod::Shepard => Method::Shepard,
            };
            let (files, _) = pipeline::reconstruct(&manifest, &ReconstructParams::new(method), &out)?;
            println!("{}", files.image.display());
        }
        Cmd::Reconstruct {
            manifest,
            method,
            beta,
            out,
            pnp,
        } => {
            let (files, report) = pipeline::reconstruct(&manifest, &pnp.params(method.into(), beta), &out)?;
            let rmse = report.rmse_percent.map_or("n/a".into(), |r| format!("{r:.4}"));
            println!(
                "{}: {} iterations, r = {:e}, rmse% = {rmse}",
                files.image.display(),
                report.iterations,
                report.final_residual
            );
        }
        Cmd::Denoise {
            input,
            prior,
            sigma_n,
            library,
            patch_size,
            search_radius,
            sinkhorn_iters,
            out,
        } => {
            let cfg = DenoiserConfig {
                sigma_n,
                variant: match prior {
                    Prior::Lbnlm => Variant::LibraryNlm,
                    _ => Variant::InternalNlm,
                },
                patch_size,
                search_radius,
                symmetrize: matches!(prior, Prior::NlmSym),
                sinkhorn_iters,
            };
            pipeline::denoise_file(&input, &cfg, library.as_deref(), &out)?;
        }
        Cmd::Invert {
            manifest,
            input,
            sigma_lambda,
            out,
        } => {
            let x = load_image(&input, ImageFormat::from_path(&input))?;
            let v = pipeline::invert(&manifest, &x, sigma_lambda)?;
            save_image(&v, &out, ImageFormat::from_path(&out))?;
        }
        Cmd::Evaluate {
            output,
            ground_truth,
            manifest,
            results,
            residuals,
            svg,
        } => {
            let plot = residuals.as_deref().zip(svg.as_deref());
            let e = pipeline::evaluate(&output, &ground_truth, manifest.as_deref(), &results, plot)?;
            match e.acquisition {
                Some(a) => println!("rmse% = {:.4}, rho = {:.4}, speedup = {:.2}", e.rmse_percent, a.rho, a.speedup),
                None => println!("rmse% = {:.4}", e.rmse_percent),
            }
        }
        Cmd::SweepBeta {
            manifest,
            method,
            betas,
            out,
            pnp,
        } => {
            let r = pipeline::sweep_beta(&manifest, &pnp.params(method.into(), None), &betas, &out)?;
            for row in &r.rows {
                println!("beta = {:<6} rmse% = {:.4}  iterations = {}", row.beta, row.rmse_percent, row.iterations);
            }
            println!("best beta = {} (rmse% = {:.4})", r.best_beta, r.best_rmse_percent);
        }
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Some(n) = pipeline::threads_from_env()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli.cmd)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdf: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
