//! End-to-end experiment: calibrate, assemble, solve, compensate, render, score.
//!
//! Every stage is a plain function over immutable artifacts so the command-line
//! verbs can run them one at a time.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calib::{
    decode_correspondences, fill_holes, fit_gamma, geometric_correspondences, simulate_ramp_measurements,
    CorrespondenceMap, DecodeOptions, GammaFit, GammaFitOptions, GammaModel, HoleFillOptions,
};
use crate::error::{Error, Result, StageContext};
use crate::raster::{load_png, save_mask_png, save_png, Raster};
use crate::render::{evaluate, render_patterns, QualityReport, RecombinedImage};
use crate::scene::SceneDescription;
use crate::solver::{solve_eo, solve_lf, ChainStats, LfOptions, SolveOptions, SolverBounds};
use crate::system::{
    assemble, build_inverse_projection, load_targets, Convention, PatternImage, SparseSystem, TargetImage,
};

/// A pattern-generation method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Global least squares with range normalization.
    Lf,
    /// Epipolar chains with box constraints.
    Eo(SolverBounds),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Lf => "LF".into(),
            Method::Eo(b) => b.label(),
        }
    }

    /// The comparison grid of the paper: LF, EO over [0,255] and over [-100,255].
    pub fn paper_grid() -> Vec<Method> {
        vec![
            Method::Lf,
            Method::Eo(SolverBounds::default()),
            Method::Eo(SolverBounds {
                lower: -100.0,
                upper: 255.0,
            }),
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `lf`, `eo` (bounds 0..255) or `eo:A:B`.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let mut parts = lower.split(':');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("lf"), None, None, None) => Ok(Method::Lf),
            (Some("eo"), None, None, None) => Ok(Method::Eo(SolverBounds::default())),
            (Some("eo"), Some(a), Some(b), None) => {
                let parse = |v: &str| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad bound {v:?} in method {s:?}")))
                };
                Ok(Method::Eo(SolverBounds::new(parse(a)?, parse(b)?)?))
            }
            _ => Err(Error::Config(format!("unknown method {s:?} (use lf, eo or eo:A:B)"))),
        }
    }
}

/// How correspondences are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrespondenceSource {
    /// Simulated Gray-code capture, decoding and hole filling.
    #[default]
    Decoded,
    /// Exact geometric projection (the decoding oracle).
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub source: CorrespondenceSource,
    pub decode: DecodeOptions,
    pub hole_fill: HoleFillOptions,
    /// Drive levels in the simulated gray-ramp measurement.
    pub ramp_samples: usize,
    /// Relative Gaussian noise on ramp measurements.
    pub ramp_noise: f64,
    pub gamma_fit: GammaFitOptions,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            source: CorrespondenceSource::Decoded,
            decode: DecodeOptions::default(),
            hole_fill: HoleFillOptions::default(),
            ramp_samples: 32,
            ramp_noise: 0.01,
            gamma_fit: GammaFitOptions::default(),
            seed: 0,
        }
    }
}

/// Geometric and photometric calibration results.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// One map per (layer, projector) pair that lights anything.
    pub maps: Vec<CorrespondenceMap>,
    /// Fitted responses, `gamma[j][channel]`.
    pub gamma: Vec<Vec<GammaFit>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GammaRecord {
    projector: usize,
    channel: usize,
    a: f64,
    b: f64,
    c: f64,
    rms: f64,
    iterations: usize,
}

impl Calibration {
    pub fn fitted(&self, projector: usize, channel: usize) -> &GammaModel {
        let per = &self.gamma[projector];
        &per[channel.min(per.len() - 1)].model
    }

    fn map_name(projector: usize, layer: usize) -> String {
        format!("map_p{projector}_l{layer}.dcm")
    }

    /// Writes `map_p<j>_l<layer>.dcm`, a text dump beside each, and `gamma.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for m in &self.maps {
            let name = Self::map_name(m.projector, m.layer);
            m.write_binary(&dir.join(&name))?;
            m.write_dump(&dir.join(name.replace(".dcm", ".txt")))?;
        }
        let records: Vec<GammaRecord> = self
            .gamma
            .iter()
            .enumerate()
            .flat_map(|(j, fits)| {
                fits.iter().enumerate().map(move |(ch, f)| GammaRecord {
                    projector: j,
                    channel: ch,
                    a: f.model.a,
                    b: f.model.b,
                    c: f.model.c,
                    rms: f.rms,
                    iterations: f.iterations,
                })
            })
            .collect();
        write_json(&dir.join("gamma.json"), &records)
    }

    pub fn load(dir: &Path, scene: &SceneDescription) -> Result<Self> {
        let mut maps = Vec::new();
        for layer in scene.layers() {
            for j in 0..scene.projectors.len() {
                let p = dir.join(Self::map_name(j, layer));
                if p.exists() {
                    maps.push(CorrespondenceMap::read_binary(&p)?);
                }
            }
        }
        let path = dir.join("gamma.json");
        let records: Vec<GammaRecord> =
            serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| Error::Format {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        let mut gamma: Vec<Vec<GammaFit>> = vec![Vec::new(); scene.projectors.len()];
        for r in records {
            let slot = gamma.get_mut(r.projector).ok_or_else(|| Error::Format {
                path: path.clone(),
                reason: format!("unknown projector {}", r.projector),
            })?;
            if slot.len() != r.channel {
                return Err(Error::Format {
                    path: path.clone(),
                    reason: "channels out of order".into(),
                });
            }
            slot.push(GammaFit {
                model: GammaModel::new(r.a, r.b, r.c)?,
                rms: r.rms,
                iterations: r.iterations,
            });
        }
        if gamma.iter().any(Vec::is_empty) {
            return Err(Error::Format {
                path,
                reason: "missing projector".into(),
            });
        }
        Ok(Self { maps, gamma })
    }

    /// Fraction of camera pixels seeing a surface that received a correspondence.
    pub fn defined_fraction(&self, scene: &SceneDescription) -> f64 {
        let seen: usize = scene
            .layers()
            .iter()
            .map(|&l| {
                (0..scene.camera.height)
                    .flat_map(|y| (0..scene.camera.width).map(move |x| (x, y)))
                    .filter(|&(x, y)| scene.camera_hit(l, x, y).is_some())
                    .count()
            })
            .sum::<usize>()
            * scene.projectors.len();
        let defined: usize = self.maps.iter().map(|m| m.defined_count()).sum();
        if seen == 0 {
            0.0
        } else {
            defined as f64 / seen as f64
        }
    }
}

/// Recovers correspondences for every layer and projector, and fits each
/// projector's response from a simulated noisy gray ramp.
pub fn calibrate(scene: &SceneDescription, channels: usize, options: &CalibrationOptions) -> Result<Calibration> {
    let mut maps = Vec::new();
    for layer in scene.layers() {
        for j in 0..scene.projectors.len() {
            let map = match options.source {
                CorrespondenceSource::Geometric => geometric_correspondences(scene, layer, j)?,
                CorrespondenceSource::Decoded => match decode_correspondences(scene, layer, j, &options.decode) {
                    Ok(m) => fill_holes(&m, &options.hole_fill),
                    Err(Error::DegenerateScene(msg)) => {
                        log::warn!("{msg}");
                        continue;
                    }
                    Err(e) => return Err(e),
                },
            };
            if map.defined_count() > 0 {
                maps.push(map);
            }
        }
    }
    if maps.is_empty() {
        return Err(Error::DegenerateScene("no projector lights any visible surface".into()));
    }
    let gamma = scene
        .projectors
        .iter()
        .map(|p| {
            (0..channels)
                .map(|ch| {
                    let seed = options.seed ^ ((p.id as u64) << 32 | ch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    let samples =
                        simulate_ramp_measurements(p.gamma_for(ch), options.ramp_samples, options.ramp_noise, seed);
                    fit_gamma(&samples, &options.gamma_fit)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration { maps, gamma })
}

/// The assembled system together with its targets.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: SparseSystem,
    pub targets: Vec<TargetImage>,
}

pub fn build_problem(scene: &SceneDescription, calibration: &Calibration) -> Result<Problem> {
    let targets = load_targets(scene)?;
    let q = build_inverse_projection(scene, &calibration.maps)?;
    let system = assemble(scene, &q, &targets)?;
    Ok(Problem { system, targets })
}

/// Solved linear-intensity patterns for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub method: Method,
    pub patterns: Vec<PatternImage>,
    /// Stacked per-channel values indexed by system column.
    pub values: Vec<Vec<f64>>,
    /// Min and max over pattern pixels that appear in the system.
    pub value_range: (f64, f64),
    /// LF only: range of the solution before normalization.
    pub raw_range: Option<(f64, f64)>,
    pub chains: Vec<ChainStats>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

pub fn solve(system: &SparseSystem, method: Method) -> Result<Solution> {
    let used = system.used_columns();
    let range = |values: &[Vec<f64>]| {
        values
            .iter()
            .flat_map(|v| v.iter().zip(&used).filter(|(_, &u)| u).map(|(&x, _)| x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
    };
    match method {
        Method::Lf => {
            let lf = solve_lf(system, &LfOptions::default())?;
            let raw_range = lf
                .raw_range
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(lo, hi)| {
                    (a.min(lo), b.max(hi))
                });
            Ok(Solution {
                method,
                value_range: range(&lf.values),
                patterns: lf.patterns,
                values: lf.values,
                raw_range: Some(raw_range),
                chains: Vec::new(),
                iterations: lf.iterations.iter().copied().max().unwrap_or(0),
                warnings: lf.warnings,
            })
        }
        Method::Eo(bounds) => {
            let eo = solve_eo(system, &bounds, &SolveOptions::default())?;
            Ok(Solution {
                method,
                value_range: range(&eo.values),
                patterns: eo.patterns,
                values: eo.values,
                raw_range: None,
                iterations: eo.chains.iter().map(|c| c.iterations).max().unwrap_or(0),
                chains: eo.chains,
                warnings: eo.warnings,
            })
        }
    }
}

/// Gamma-compensates linear patterns with the fitted responses and quantizes them
/// to 8-bit drive values. Negative values emit no light.
pub fn compensate_patterns(patterns: &[PatternImage], calibration: &Calibration) -> Vec<PatternImage> {
    patterns
        .iter()
        .map(|p| PatternImage {
            projector: p.projector,
            channels: p
                .channels
                .iter()
                .enumerate()
                .map(|(ch, r)| {
                    let g = calibration.fitted(p.projector, ch);
                    r.map(|&v| g.compensate(v.clamp(0.0, 255.0)).round().clamp(0.0, 255.0))
                })
                .collect(),
        })
        .collect()
}

/// Light actually emitted for the given drive images, through the true responses.
pub fn emitted_light(scene: &SceneDescription, drive: &[PatternImage]) -> Vec<PatternImage> {
    drive
        .iter()
        .map(|p| {
            let proj = &scene.projectors[p.projector];
            PatternImage {
                projector: p.projector,
                channels: p
                    .channels
                    .iter()
                    .enumerate()
                    .map(|(ch, r)| {
                        let g = proj.gamma_for(ch);
                        r.map(|&d| g.linearize(d))
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Everything needed to run the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub methods: Vec<Method>,
    pub output: PathBuf,
    /// Overrides the scene's attenuation convention.
    pub convention: Option<Convention>,
    pub calibration: CalibrationOptions,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    /// Simulate the photometric path (compensation, 8-bit drive, true response).
    pub photometric: bool,
    pub write_images: bool,
}

impl RunConfig {
    pub fn new(scene: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            scene: scene.into(),
            methods: vec![Method::Lf, Method::Eo(SolverBounds::default())],
            output: output.into(),
            convention: None,
            calibration: CalibrationOptions::default(),
            threads: None,
            photometric: true,
            write_images: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        Ok(())
    }
}

/// Image files written for one surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageFiles {
    pub recombined: String,
    pub difference: String,
    pub mask: String,
}

/// One row of the metrics report: a surface under a method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub method: String,
    pub surface: usize,
    /// `null` when the recombined image equals the target exactly.
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub value_min: f64,
    pub value_max: f64,
    pub masked_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<ImageFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub iterations: usize,
    pub chains: usize,
    pub max_chain_variables: usize,
    pub unconverged_chains: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_max: Option<f64>,
    pub warnings: Vec<String>,
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub channels: usize,
    pub infeasible_rows: usize,
    pub culled_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSummary {
    pub projector: usize,
    pub channel: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scene: String,
    pub convention: Convention,
    pub seed: u64,
    pub correspondences: CorrespondenceSource,
    pub defined_fraction: f64,
    pub gamma: Vec<GammaSummary>,
    pub system: SystemSummary,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<MetricRecord>,
}

/// In-memory results of a run, for callers that inspect more than the report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub calibration: Calibration,
    pub problem: Problem,
    pub solutions: Vec<Solution>,
    pub recombined: Vec<Vec<RecombinedImage>>,
    pub quality: Vec<Vec<QualityReport>>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
}

/// Loads the scene named in `config` and runs every stage, writing artifacts
/// under `config.output`. Nothing is written if the scene fails to load.
pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let scene = SceneDescription::load(&config.scene).stage("load")?;
    let label = config.scene.display().to_string();
    run_scene(&scene, &label, config)
}

/// Runs the pipeline on an in-memory scene.
pub fn run_scene(scene: &SceneDescription, label: &str, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_inner(scene, label, config)),
        None => run_inner(scene, label, config),
    }
}

fn run_inner(scene: &SceneDescription, label: &str, config: &RunConfig) -> Result<RunOutcome> {
    let mut scene = scene.clone();
    if let Some(c) = config.convention {
        scene.convention = c;
    }
    scene.validate().stage("load")?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        let s = clock.elapsed().as_secs_f64();
        log::info!("{name}: {s:.2} s");
        timings.push((name.to_string(), s));
        clock = Instant::now();
    };

    let channels = load_targets(&scene)
        .stage("load")?
        .first()
        .map_or(1, |t| t.channels.len());
    let calibration = calibrate(&scene, channels, &config.calibration).stage("calibrate")?;
    lap("calibrate", &mut timings);
    let problem = build_problem(&scene, &calibration).stage("assemble")?;
    lap("assemble", &mut timings);

    let out = &config.output;
    if config.write_images {
        fs::create_dir_all(out).stage("output")?;
        calibration.save(&out.join("calibration")).stage("output")?;
    }

    let mut solutions = Vec::new();
    let mut recombined = Vec::new();
    let mut quality = Vec::new();
    let mut records = Vec::new();
    let mut methods = Vec::new();
    for &method in &config.methods {
        let name = method.label();
        let sol = solve(&problem.system, method).stage("solve")?;
        lap(&format!("solve {name}"), &mut timings);
        let (drive, light) = if config.photometric {
            let drive = compensate_patterns(&sol.patterns, &calibration);
            let light = emitted_light(&scene, &drive);
            (drive, light)
        } else {
            (sol.patterns.clone(), sol.patterns.clone())
        };
        let images = render_patterns(&scene, &light).stage("render")?;
        let scores = evaluate(&problem.targets, &images, sol.value_range).stage("evaluate")?;
        lap(&format!("render {name}"), &mut timings);

        let mut pattern_files = Vec::new();
        let mut image_files = Vec::new();
        if config.write_images {
            let dir = out.join(&name);
            pattern_files = write_solution(&dir, &problem.system, &sol, &drive)
                .stage("output")?
                .into_iter()
                .map(|f| format!("{name}/{f}"))
                .collect();
            image_files = write_recombined(&dir, &images, &problem.targets).stage("output")?;
        }
        for (k, (img, q)) in images.iter().zip(&scores).enumerate() {
            let files = image_files.get(k).map(|f| ImageFiles {
                recombined: format!("{name}/{}", f.recombined),
                difference: format!("{name}/{}", f.difference),
                mask: format!("{name}/{}", f.mask),
            });
            debug_assert_eq!(img.surface, q.surface);
            records.push(MetricRecord {
                method: name.clone(),
                surface: q.surface,
                psnr_db: q.psnr.is_finite().then_some(q.psnr),
                ssim: q.ssim,
                value_min: q.value_range.0,
                value_max: q.value_range.1,
                masked_pixels: q.masked_pixels,
                images: files,
            });
        }
        methods.push(MethodSummary {
            method: name.clone(),
            iterations: sol.iterations,
            chains: sol.chains.len(),
            max_chain_variables: sol.chains.iter().map(|c| c.variables).max().unwrap_or(0),
            unconverged_chains: sol.chains.iter().filter(|c| !c.converged).count(),
            raw_min: sol.raw_range.map(|r| r.0),
            raw_max: sol.raw_range.map(|r| r.1),
            warnings: sol.warnings.clone(),
            patterns: pattern_files,
        });
        solutions.push(sol);
        recombined.push(images);
        quality.push(scores);
    }

    let sys = &problem.system;
    let report = RunReport {
        scene: label.to_string(),
        convention: scene.convention,
        seed: config.calibration.seed,
        correspondences: config.calibration.source,
        defined_fraction: calibration.defined_fraction(&scene),
        gamma: calibration
            .gamma
            .iter()
            .enumerate()
            .flat_map(|(j, fits)| {
                fits.iter().enumerate().map(move |(ch, f)| GammaSummary {
                    projector: j,
                    channel: ch,
                    a: f.model.a,
                    b: f.model.b,
                    c: f.model.c,
                    rms: f.rms,
                })
            })
            .collect(),
        system: SystemSummary {
            rows: sys.num_rows(),
            columns: sys.num_cols(),
            nonzeros: sys.nnz(),
            channels: sys.channels(),
            infeasible_rows: sys.infeasible_rows().len(),
            culled_entries: sys.culled_entries(),
        },
        methods,
        records,
    };
    if config.write_images {
        write_json(&out.join("metrics.json"), &report).stage("output")?;
        let t: Vec<serde_json::Value> = timings
            .iter()
            .map(|(n, s)| serde_json::json!({ "stage": n, "seconds": s }))
            .collect();
        write_json(&out.join("timings.json"), &t).stage("output")?;
    }
    Ok(RunOutcome {
        report,
        calibration,
        problem,
        solutions,
        recombined,
        quality,
        timings,
    })
}

#[derive(Serialize)]
struct ChainRecord {
    id: usize,
    variables: usize,
    rows: usize,
    iterations: usize,
    residual_rms: f64,
    converged: bool,
}

#[derive(Serialize)]
struct SolverSidecar {
    method: String,
    infeasible_rows: usize,
    value_min: f64,
    value_max: f64,
    warnings: Vec<String>,
    chains: Vec<ChainRecord>,
}

fn solver_sidecar(system: &SparseSystem, sol: &Solution) -> SolverSidecar {
    let channels = system.channels().max(1) as f64;
    SolverSidecar {
        method: sol.method.label(),
        infeasible_rows: system.infeasible_rows().len(),
        value_min: sol.value_range.0,
        value_max: sol.value_range.1,
        warnings: sol.warnings.clone(),
        chains: sol
            .chains
            .iter()
            .map(|c| ChainRecord {
                id: c.id,
                variables: c.variables,
                rows: c.rows,
                iterations: c.iterations,
                residual_rms: (c.objective / (c.rows.max(1) as f64 * channels)).sqrt(),
                converged: c.converged,
            })
            .collect(),
    }
}

/// Writes drive patterns as `pattern_p<j>.png` and the per-chain `solver.json`
/// sidecar into `dir`. Returns the pattern file names.
pub fn write_solution(
    dir: &Path,
    system: &SparseSystem,
    sol: &Solution,
    drive: &[PatternImage],
) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for p in drive {
        let f = format!("pattern_p{}.png", p.projector);
        save_png(&p.channels, &dir.join(&f))?;
        files.push(f);
    }
    write_json(&dir.join("solver.json"), &solver_sidecar(system, sol))?;
    Ok(files)
}

/// Reads `pattern_p<j>.png` for every projector of the scene.
pub fn load_drive_patterns(dir: &Path, scene: &SceneDescription) -> Result<Vec<PatternImage>> {
    scene
        .projectors
        .iter()
        .map(|p| {
            let size = (p.pinhole.width, p.pinhole.height);
            let path = dir.join(format!("pattern_p{}.png", p.id));
            let channels = load_png(&path, None)?;
            if channels[0].dims() != size {
                return Err(Error::Format {
                    path,
                    reason: format!("expected {}x{} pixels", size.0, size.1),
                });
            }
            Ok(PatternImage {
                projector: p.id,
                channels,
            })
        })
        .collect()
}

/// Writes `recombined_s<k>.png`, `mask_s<k>.png` and, when the surface has a
/// target, `difference_s<k>.png` into `dir`.
pub fn write_recombined(dir: &Path, images: &[RecombinedImage], targets: &[TargetImage]) -> Result<Vec<ImageFiles>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for img in images {
        let k = img.surface;
        let f = ImageFiles {
            recombined: format!("recombined_s{k}.png"),
            difference: format!("difference_s{k}.png"),
            mask: format!("mask_s{k}.png"),
        };
        save_png(&img.channels, &dir.join(&f.recombined))?;
        save_mask_png(&img.mask, &dir.join(&f.mask))?;
        if let Some(target) = targets.iter().find(|t| t.surface == k) {
            let diff: Vec<Raster<f64>> = img
                .channels
                .iter()
                .zip(&target.channels)
                .map(|(a, b)| {
                    Raster::from_fn(a.width(), a.height(), |x, y| {
                        if *img.mask.get(x, y) {
                            (a.get(x, y).clamp(0.0, 255.0) - b.get(x, y)).abs()
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            save_png(&diff, &dir.join(&f.difference))?;
        }
        files.push(f);
    }
    Ok(files)
}

/// Reads back images written by [`write_recombined`] for every surface of the scene.
pub fn load_recombined(dir: &Path, scene: &SceneDescription) -> Result<Vec<RecombinedImage>> {
    let size = (scene.camera.width, scene.camera.height);
    scene
        .surfaces
        .iter()
        .map(|s| {
            let k = s.id;
            let channels = load_png(&dir.join(format!("recombined_s{k}.png")), None)?;
            let mask_path = dir.join(format!("mask_s{k}.png"));
            let mask = load_png(&mask_path, None)?.swap_remove(0);
            if channels[0].dims() != size || mask.dims() != size {
                return Err(Error::Format {
                    path: mask_path,
                    reason: format!("expected {}x{} pixels", size.0, size.1),
                });
            }
            Ok(RecombinedImage {
                surface: k,
                channels,
                mask: mask.map(|&v| v > 127.0),
            })
        })
        .collect()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    fs::write(path, text + "\n")?;
    Ok(())
}
