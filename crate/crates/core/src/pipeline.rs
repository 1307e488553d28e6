//! Manifest-driven batch operations.
//!
//! An experiment is described by one JSON config. `simulate` renders it into
//! a directory holding the ground truth, the measurements, the library image
//! and a `manifest.json` that every later step reads. All file names in a
//! manifest are relative to the manifest's directory. Every emitted file is a
//! pure function of the config and the step parameters.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{bicubic_interpolate, shepard_interpolate};
use crate::denoise::{self, Denoiser, DenoiserConfig, InternalNlm, LibraryNlm};
use crate::error::{Error, Result};
use crate::forward::InversionProblem;
use crate::image::{ForwardModel, Image, MeasurementSet, SamplingMask};
use crate::io::{self, load_image, read_json, save_image, write_json, ImageFormat};
use crate::metrics::{acquisition_stats, rmse_percent, AcquisitionStats};
use crate::patchlib::{self, build_library, PatchLibrary};
use crate::pnp::{pnp_reconstruct, PnPConfig, ReconstructionReport, SigmaLambda};
use crate::svg;
use crate::synth::{gen_experiment, gen_lattice_scene, Counts, Mode, Region, SceneConfig};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "MDF_THREADS";

pub const MANIFEST_FILE: &str = "manifest.json";

/// Input of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scene: SceneConfig,
    pub mode: Mode,
    pub library_region: Region,
    #[serde(default)]
    pub sigma_w: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub ground_truth: String,
    pub measurements: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library_image: Option<String>,
}

/// Output of `simulate`, input of every later step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub config: ExperimentConfig,
    pub width: usize,
    pub height: usize,
    pub sigma_w: f64,
    pub counts: Counts,
    pub acquisition: AcquisitionStats,
    pub files: ManifestFiles,
}

/// A manifest with its files loaded.
#[derive(Debug, Clone)]
pub struct LoadedExperiment {
    pub manifest: Manifest,
    pub dir: PathBuf,
    pub ground_truth: Option<Image>,
    pub measurements: MeasurementSet,
    pub library_image: Option<Image>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<(Manifest, PathBuf)> {
        let path = path.as_ref();
        let m: Manifest = read_json(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, dir))
    }

    pub fn load_experiment(path: impl AsRef<Path>) -> Result<LoadedExperiment> {
        let (manifest, dir) = Manifest::load(path)?;
        let f = &manifest.files;
        let truth_path = dir.join(&f.ground_truth);
        let ground_truth = if truth_path.exists() {
            Some(load_image(&truth_path, ImageFormat::RawF64)?)
        } else {
            None
        };
        let y = load_image(dir.join(&f.measurements), ImageFormat::RawF64)?;
        let measurements = match manifest.config.mode {
            Mode::Sr { factor } => MeasurementSet::super_resolution(y, factor, manifest.sigma_w)?,
            Mode::Sparse { .. } => {
                let mask_name = f.mask.as_ref().ok_or_else(|| Error::Config {
                    path: dir.join(MANIFEST_FILE),
                    reason: "sparse manifest without a mask file".into(),
                })?;
                let mask: SamplingMask = io::load_mask(dir.join(mask_name))?;
                MeasurementSet::sparse(y.into_pixels(), mask, manifest.sigma_w)?
            }
        };
        if measurements.target_dims() != (manifest.width, manifest.height) {
            return Err(Error::DimensionMismatch(format!(
                "manifest declares {}x{}, measurements describe {}x{}",
                manifest.width,
                manifest.height,
                measurements.target_dims().0,
                measurements.target_dims().1
            )));
        }
        let library_image = match &f.library_image {
            Some(name) => Some(load_image(dir.join(name), ImageFormat::RawF64)?),
            None => None,
        };
        Ok(LoadedExperiment {
            manifest,
            dir,
            ground_truth,
            measurements,
            library_image,
        })
    }
}

fn save_with_preview(img: &Image, dir: &Path, stem: &str) -> Result<String> {
    let raw = format!("{stem}.raw");
    save_image(img, dir.join(&raw), ImageFormat::RawF64)?;
    save_image(img, dir.join(format!("{stem}.pgm")), ImageFormat::Pgm8)?;
    Ok(raw)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Renders an experiment config into `out_dir`, returning the manifest path.
pub fn simulate(config_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let cfg: ExperimentConfig = read_json(config_path.as_ref())?;
    simulate_config(&cfg, out_dir)
}

pub fn simulate_config(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = out_dir.as_ref();
    create_dir(dir)?;
    let scene = gen_lattice_scene(&cfg.scene)?;
    let exp = gen_experiment(&scene, &cfg.mode, cfg.library_region, cfg.sigma_w, cfg.noise_seed)?;

    let ground_truth = save_with_preview(&exp.ground_truth, dir, "ground_truth")?;
    let library_image = save_with_preview(&exp.library_image, dir, "library_image")?;
    let (measurements, mask) = match exp.measurements.model() {
        ForwardModel::SuperResolution { .. } => {
            (save_with_preview(exp.measurements.y(), dir, "measurements")?, None)
        }
        ForwardModel::SparseSample(mask) => {
            let raw = "measurements.raw".to_string();
            save_image(exp.measurements.y(), dir.join(&raw), ImageFormat::RawF64)?;
            io::save_mask(mask, dir.join("mask.json"))?;
            // measured pixels on black, for viewing
            let mut px = vec![0.0; mask.width() * mask.height()];
            for (&i, &v) in mask.indices().iter().zip(exp.measurements.values()) {
                px[i] = v;
            }
            let preview = Image::new(mask.width(), mask.height(), px)?;
            save_image(&preview, dir.join("measurements.pgm"), ImageFormat::Pgm8)?;
            (raw, Some("mask.json".to_string()))
        }
    };

    let manifest = Manifest {
        name: cfg.name.clone(),
        config: cfg.clone(),
        width: exp.ground_truth.width(),
        height: exp.ground_truth.height(),
        sigma_w: cfg.sigma_w,
        counts: exp.counts,
        acquisition: exp.counts.stats()?,
        files: ManifestFiles {
            ground_truth,
            measurements,
            mask,
            library_image: Some(library_image),
        },
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Library construction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryParams {
    pub patch_size: usize,
    pub stride: usize,
    pub max_patches: Option<usize>,
    pub seed: u64,
}

impl Default for LibraryParams {
    fn default() -> Self {
        LibraryParams {
            patch_size: patchlib::DEFAULT_PATCH_SIZE,
            stride: patchlib::DEFAULT_STRIDE,
            max_patches: Some(patchlib::DEFAULT_MAX_PATCHES),
            seed: 0,
        }
    }
}

/// Builds a library from image files and writes it to `out`.
pub fn build_library_files(images: &[PathBuf], params: &LibraryParams, out: impl AsRef<Path>) -> Result<PatchLibrary> {
    let imgs = images
        .iter()
        .map(|p| load_image(p, ImageFormat::from_path(p)))
        .collect::<Result<Vec<_>>>()?;
    let lib = build_library(&imgs, params.patch_size, params.stride, params.max_patches, params.seed)?;
    lib.save(out)?;
    Ok(lib)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// P&P with the library NLM prior.
    Mdf,
    Cubic,
    Shepard,
    /// P&P with Sinkhorn-symmetrized internal NLM.
    NlmSym,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mdf => "mdf",
            Method::Cubic => "cubic",
            Method::Shepard => "shepard",
            Method::NlmSym => "nlm-sym",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructParams {
    pub method: Method,
    /// Required for the iterative methods.
    pub beta: Option<f64>,
    pub sigma_lambda: SigmaLambda,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub library: LibraryParams,
    /// Prebuilt library file; otherwise built from the manifest's library image.
    pub library_file: Option<PathBuf>,
    pub search_radius: usize,
    pub sinkhorn_iters: usize,
    /// Include wall-clock time in the report file.
    pub record_timing: bool,
}

impl ReconstructParams {
    pub fn new(method: Method) -> Self {
        ReconstructParams {
            method,
            beta: None,
            sigma_lambda: SigmaLambda::Auto,
            max_iters: crate::pnp::DEFAULT_MAX_ITERS,
            residual_tol: crate::pnp::DEFAULT_RESIDUAL_TOL,
            library: LibraryParams::default(),
            library_file: None,
            search_radius: denoise::DEFAULT_SEARCH_RADIUS,
            sinkhorn_iters: denoise::DEFAULT_SINKHORN_ITERS,
            record_timing: false,
        }
    }

    fn pnp_config(&self) -> Result<PnPConfig> {
        let beta = self
            .beta
            .ok_or_else(|| Error::invalid(format!("method {} needs --beta", self.method.name())))?;
        PnPConfig::new(beta)?
            .with_sigma_lambda(self.sigma_lambda)?
            .with_max_iters(self.max_iters)?
            .with_residual_tol(self.residual_tol)
    }
}

/// The baseline matching the measurement geometry; also the P&P initializer.
pub fn baseline_for(meas: &MeasurementSet) -> Result<Image> {
    match meas.model() {
        ForwardModel::SuperResolution { factor } => bicubic_interpolate(meas.y(), *factor),
        ForwardModel::SparseSample(_) => shepard_interpolate(meas),
    }
}

fn library_for(exp: &LoadedExperiment, params: &ReconstructParams) -> Result<PatchLibrary> {
    if let Some(path) = &params.library_file {
        return PatchLibrary::load(path);
    }
    let img = exp.library_image.as_ref().ok_or_else(|| {
        Error::invalid("method mdf needs a library: the manifest has no library image and no library file was given")
    })?;
    let l = &params.library;
    build_library(std::slice::from_ref(img), l.patch_size, l.stride, l.max_patches, l.seed)
}

/// Runs one reconstruction method on a loaded experiment, in memory.
pub fn run_method(exp: &LoadedExperiment, params: &ReconstructParams) -> Result<(Image, ReconstructionReport)> {
    let meas = &exp.measurements;
    let (img, mut report) = match params.method {
        Method::Cubic => {
            let ForwardModel::SuperResolution { factor } = meas.model() else {
                return Err(Error::invalid("cubic interpolation needs a super-resolution manifest"));
            };
            (bicubic_interpolate(meas.y(), *factor)?, ReconstructionReport::direct("cubic"))
        }
        Method::Shepard => {
            if !matches!(meas.model(), ForwardModel::SparseSample(_)) {
                return Err(Error::invalid("Shepard interpolation needs a sparse manifest"));
            }
            (shepard_interpolate(meas)?, ReconstructionReport::direct("shepard"))
        }
        Method::Mdf | Method::NlmSym => {
            let cfg = params.pnp_config()?;
            let prior: Box<dyn Denoiser> = match params.method {
                Method::Mdf => Box::new(LibraryNlm::new(library_for(exp, params)?)),
                _ => Box::new(InternalNlm {
                    patch_size: params.library.patch_size,
                    search_radius: params.search_radius,
                    symmetrize: true,
                    sinkhorn_iters: params.sinkhorn_iters,
                }),
            };
            let init = baseline_for(meas)?;
            let (img, mut report) = pnp_reconstruct(meas, prior.as_ref(), &cfg, &init)?;
            report.method = params.method.name().into();
            (img, report)
        }
    };
    let c = exp.manifest.counts;
    let stats = acquisition_stats(c.n_recon, c.m_low, c.m_high)?;
    report.rho = Some(stats.rho);
    report.speedup = Some(stats.speedup);
    if let Some(gt) = &exp.ground_truth {
        report.rmse_percent = Some(rmse_percent(&img, gt)?);
    }
    if !params.record_timing {
        report.wall_time = None;
    }
    Ok((img, report))
}

/// Paths written by [`reconstruct`].
#[derive(Debug, Clone)]
pub struct ReconstructOutput {
    pub image: PathBuf,
    pub report: PathBuf,
    pub residuals: Option<PathBuf>,
}

/// Runs a method and writes `<method>.raw` (+ `.pgm`), `<method>_report.json`
/// and, for iterative methods, `<method>_residuals.csv` into `out_dir`.
pub fn reconstruct(
    manifest_path: impl AsRef<Path>,
    params: &ReconstructParams,
    out_dir: impl AsRef<Path>,
) -> Result<(ReconstructOutput, ReconstructionReport)> {
    let exp = Manifest::load_experiment(manifest_path)?;
    let dir = out_dir.as_ref();
    create_dir(dir)?;
    let (img, report) = run_method(&exp, params)?;
    let stem = params.method.name();
    let image = dir.join(save_with_preview(&img, dir, stem)?);
    let report_path = dir.join(format!("{stem}_report.json"));
    write_json(&report_path, &report)?;
    let residuals = if matches!(params.method, Method::Mdf | Method::NlmSym) {
        let p = dir.join(format!("{stem}_residuals.csv"));
        fs::write(&p, report.residual_csv()).map_err(|e| Error::io(&p, e))?;
        Some(p)
    } else {
        None
    };
    Ok((
        ReconstructOutput {
            image,
            report: report_path,
            residuals,
        },
        report,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub rmse_percent: f64,
    pub iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_beta: f64,
    pub best_rmse_percent: f64,
}

/// Runs an iterative method for every β in `betas` and picks the one with the
/// lowest RMSE against the ground truth (first wins on ties).
pub fn sweep_beta_experiment(exp: &LoadedExperiment, params: &ReconstructParams, betas: &[f64]) -> Result<SweepResult> {
    if betas.is_empty() {
        return Err(Error::invalid("beta sweep needs at least one value"));
    }
    if exp.ground_truth.is_none() {
        return Err(Error::invalid("beta sweep needs the manifest's ground truth"));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let p = ReconstructParams {
            beta: Some(beta),
            ..params.clone()
        };
        let (_, report) = run_method(exp, &p)?;
        rows.push(SweepRow {
            beta,
            rmse_percent: report.rmse_percent.expect("ground truth present"),
            iterations: report.iterations,
            final_residual: report.final_residual,
        });
    }
    let best = rows
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.rmse_percent <= r.rmse_percent => Some(b),
            _ => Some(r),
        })
        .expect("nonempty");
    Ok(SweepResult {
        best_beta: best.beta,
        best_rmse_percent: best.rmse_percent,
        rows,
    })
}

/// File-level β sweep; writes `sweep_<method>.csv` and `.json` to `out_dir`.
pub fn sweep_beta(
    manifest_path: impl AsRef<Path>,
    params: &ReconstructParams,
    betas: &[f64],
    out_dir: impl AsRef<Path>,
) -> Result<SweepResult> {
    let exp = Manifest::load_experiment(manifest_path)?;
    let result = sweep_beta_experiment(&exp, params, betas)?;
    let dir = out_dir.as_ref();
    create_dir(dir)?;
    let stem = format!("sweep_{}", params.method.name());
    let mut csv = String::from("beta,rmse_percent,iterations,final_residual\n");
    for r in &result.rows {
        csv.push_str(&format!("{},{},{},{:e}\n", r.beta, r.rmse_percent, r.iterations, r.final_residual));
    }
    let p = dir.join(format!("{stem}.csv"));
    fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
    write_json(dir.join(format!("{stem}.json")), &result)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub output: String,
    pub rmse_percent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<AcquisitionStats>,
}

pub const RESULTS_HEADER: &str = "output,ground_truth,rmse_percent,rho,speedup";

/// Scores `output` against `ground_truth`, appends one row to `results_csv`
/// (creating it with a header) and optionally renders the residual curve of
/// `residual_csv` to `svg_out`.
pub fn evaluate(
    output: impl AsRef<Path>,
    ground_truth: impl AsRef<Path>,
    manifest: Option<&Path>,
    results_csv: impl AsRef<Path>,
    plot: Option<(&Path, &Path)>,
) -> Result<Evaluation> {
    let (output, ground_truth) = (output.as_ref(), ground_truth.as_ref());
    if !ground_truth.exists() {
        return Err(Error::invalid(format!("ground truth {} not found", ground_truth.display())));
    }
    let out_img = load_image(output, ImageFormat::from_path(output))?;
    let gt = load_image(ground_truth, ImageFormat::from_path(ground_truth))?;
    let rmse = rmse_percent(&out_img, &gt)?;
    let acquisition = match manifest {
        Some(m) => {
            let (m, _) = Manifest::load(m)?;
            Some(acquisition_stats(m.counts.n_recon, m.counts.m_low, m.counts.m_high)?)
        }
        None => None,
    };

    let results_csv = results_csv.as_ref();
    let fresh = !results_csv.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(results_csv)
        .map_err(|e| Error::io(results_csv, e))?;
    let mut row = String::new();
    if fresh {
        row.push_str(RESULTS_HEADER);
        row.push('\n');
    }
    let (rho, speedup) = acquisition.map_or((String::new(), String::new()), |a| {
        (a.rho.to_string(), a.speedup.to_string())
    });
    row.push_str(&format!(
        "{},{},{rmse},{rho},{speedup}\n",
        output.display(),
        ground_truth.display()
    ));
    f.write_all(row.as_bytes()).map_err(|e| Error::io(results_csv, e))?;

    if let Some((residual_csv, svg_out)) = plot {
        let (running, exact) = read_residual_csv(residual_csv)?;
        let title = format!("P&P residual: {}", output.display());
        let doc = svg::residual_plot(&title, &[("r (final-norm)", &exact), ("r running", &running)]);
        fs::write(svg_out, doc).map_err(|e| Error::io(svg_out, e))?;
    }

    Ok(Evaluation {
        output: output.display().to_string(),
        rmse_percent: rmse,
        acquisition,
    })
}

fn read_residual_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut running = Vec::new();
    let mut exact = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Config {
                path: path.to_path_buf(),
                reason: format!("line {}: bad number {s:?}", line_no + 1),
            })
        };
        if cols.len() != 3 {
            return Err(Error::Config {
                path: path.to_path_buf(),
                reason: format!("line {}: expected 3 columns", line_no + 1),
            });
        }
        running.push(parse(cols[1])?);
        exact.push(parse(cols[2])?);
    }
    Ok((running, exact))
}

/// Applies the inversion operator of a manifest's measurements to `x_tilde`.
pub fn invert(manifest_path: impl AsRef<Path>, x_tilde: &Image, sigma_lambda: f64) -> Result<Image> {
    let exp = Manifest::load_experiment(manifest_path)?;
    InversionProblem::new(&exp.measurements, sigma_lambda)?.apply(x_tilde)
}

/// Standalone denoising of one image file.
pub fn denoise_file(
    input: impl AsRef<Path>,
    cfg: &DenoiserConfig,
    library: Option<&Path>,
    out: impl AsRef<Path>,
) -> Result<Image> {
    let input = input.as_ref();
    let img = load_image(input, ImageFormat::from_path(input))?;
    let lib = library.map(PatchLibrary::load).transpose()?;
    let den = denoise::denoise_with(&img, cfg, lib.as_ref())?;
    let out = out.as_ref();
    save_image(&den, out, ImageFormat::from_path(out))?;
    Ok(den)
}

/// Reads the thread count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}
