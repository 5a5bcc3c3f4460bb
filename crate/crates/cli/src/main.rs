//! `depthcast`: run the depth-dependent projection pipeline from the shell.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use depthcast_core::pipeline::{
    build_problem, calibrate, compensate_patterns, emitted_light, load_drive_patterns, load_recombined, run_pipeline,
    solve, write_recombined, write_solution, Calibration, CalibrationOptions, CorrespondenceSource, Method, RunConfig,
};
use depthcast_core::render::{evaluate, render_patterns};
use depthcast_core::system::load_targets;
use depthcast_core::{make_demo_scene, Convention, DemoKind, DemoParams, SceneDescription, SolverBounds};

#[derive(Parser)]
#[command(
    name = "depthcast",
    version,
    about = "Depth-dependent multi-projector pattern generation"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover correspondences and projector responses, and save them.
    Calibrate(CalibrateArgs),
    /// Solve for gamma-compensated projector patterns.
    Solve(SolveArgs),
    /// Simulate what the camera sees for a set of drive patterns.
    Render(RenderArgs),
    /// Score recombined images against the scene's targets.
    Eval(EvalArgs),
    /// Write a built-in demo scene, and optionally run it.
    Demo(DemoArgs),
    /// Run every stage and write the metrics report.
    Run(RunArgs),
}

#[derive(Args)]
struct SceneArgs {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Attenuation convention, overriding the scene file.
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
}

#[derive(Args)]
struct CalibrationArgs {
    /// Read correspondences off the geometry instead of decoding Gray codes.
    #[arg(long)]
    geometric: bool,
    /// Seed for the simulated photometric measurements.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CalibrationArgs {
    fn options(&self) -> CalibrationOptions {
        CalibrationOptions {
            source: if self.geometric {
                CorrespondenceSource::Geometric
            } else {
                CorrespondenceSource::Decoded
            },
            seed: self.seed,
            ..CalibrationOptions::default()
        }
    }
}

#[derive(Args)]
struct MethodArgs {
    /// `lf`, `eo` (bounds from --a/--b) or `eo:A:B`; repeatable.
    #[arg(long = "method", default_values_t = ["lf".to_string(), "eo".to_string()])]
    methods: Vec<String>,
    /// Lower drive bound for plain `eo`.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Upper drive bound for plain `eo`.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
}

impl MethodArgs {
    fn methods(&self, scene_bounds: Option<SolverBounds>) -> Result<Vec<Method>> {
        let default = scene_bounds.unwrap_or_default();
        let bounds = SolverBounds::new(self.a.unwrap_or(default.lower), self.b.unwrap_or(default.upper))?;
        self.methods
            .iter()
            .map(|m| {
                Ok(match m.parse::<Method>()? {
                    Method::Eo(_) if m.trim().eq_ignore_ascii_case("eo") => Method::Eo(bounds),
                    other => other,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Paper,
    Physical,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => Convention::Paper,
            ConventionArg::Physical => Convention::Physical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Small,
    Medium,
    Paper,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    methods: MethodArgs,
    /// Calibration directory written by `calibrate`; calibrates afresh if absent.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[command(flatten)]
    calibration_args: CalibrationArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Directory holding `pattern_p<j>.png` drive images.
    #[arg(long)]
    patterns: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Directory holding `recombined_s<k>.png` and `mask_s<k>.png`.
    #[arg(long)]
    images: PathBuf,
    /// Where to write the JSON scores (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, value_enum)]
    kind: DemoKindArg,
    #[arg(long, value_enum, default_value = "small")]
    scale: Scale,
    /// Number of vertically stacked projectors.
    #[arg(long, default_value_t = 2)]
    projectors: usize,
    /// Projector spacing in metres.
    #[arg(long, default_value_t = 0.1)]
    baseline: f64,
    /// Seed for procedural targets and measurement noise.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; the scene is written to `<out>/scene.toml`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    /// Also run the pipeline into `<out>/run`.
    #[arg(long)]
    run: bool,
    #[command(flatten)]
    methods: MethodArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoKindArg {
    TwoPlanes,
    ThreePlanes,
    HeadAndBox,
}

impl From<DemoKindArg> for DemoKind {
    fn from(k: DemoKindArg) -> Self {
        match k {
            DemoKindArg::TwoPlanes => DemoKind::TwoPlanes,
            DemoKindArg::ThreePlanes => DemoKind::ThreePlanes,
            DemoKindArg::HeadAndBox => DemoKind::HeadAndBox,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    methods: MethodArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    /// Skip the photometric simulation (compensation, 8-bit drive, true response).
    #[arg(long)]
    linear: bool,
}

fn load_scene(args: &SceneArgs) -> Result<SceneDescription> {
    load_scene_path(&args.scene, args.convention)
}

fn load_scene_path(path: &Path, convention: Option<ConventionArg>) -> Result<SceneDescription> {
    let mut scene = SceneDescription::load(path).with_context(|| format!("loading scene {}", path.display()))?;
    if let Some(c) = convention {
        scene.convention = c.into();
    }
    Ok(scene)
}

fn channels(scene: &SceneDescription) -> Result<usize> {
    Ok(load_targets(scene)?.first().map_or(1, |t| t.channels.len()))
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let cal = calibrate(&scene, channels(&scene)?, &args.calibration.options())?;
    cal.save(&args.scene.out)?;
    println!(
        "calibrated {} maps, {:.1}% of visible pixels defined -> {}",
        cal.maps.len(),
        100.0 * cal.defined_fraction(&scene),
        args.scene.out.display()
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let methods = args.methods.methods(Some(scene.bounds))?;
    let cal = match &args.calibration {
        Some(dir) => Calibration::load(dir, &scene).with_context(|| format!("loading {}", dir.display()))?,
        None => calibrate(&scene, channels(&scene)?, &args.calibration_args.options())?,
    };
    let problem = build_problem(&scene, &cal)?;
    for method in methods {
        let sol = solve(&problem.system, method)?;
        let drive = compensate_patterns(&sol.patterns, &cal);
        let dir = args.scene.out.join(method.label());
        write_solution(&dir, &problem.system, &sol, &drive)?;
        for w in &sol.warnings {
            log::warn!("{method}: {w}");
        }
        println!(
            "{method}: values {:.1}..{:.1}, {} chains -> {}",
            sol.value_range.0,
            sol.value_range.1,
            sol.chains.len(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let drive = load_drive_patterns(&args.patterns, &scene)?;
    let images = render_patterns(&scene, &emitted_light(&scene, &drive))?;
    let targets = load_targets(&scene)?;
    write_recombined(&args.scene.out, &images, &targets)?;
    println!("rendered {} surfaces -> {}", images.len(), args.scene.out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct Score {
    surface: usize,
    psnr_db: Option<f64>,
    ssim: f64,
    masked_pixels: usize,
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let scene = load_scene_path(&args.scene, None)?;
    let images = load_recombined(&args.images, &scene)?;
    let targets = load_targets(&scene)?;
    let scores: Vec<Score> = evaluate(&targets, &images, (f64::NAN, f64::NAN))?
        .into_iter()
        .map(|q| Score {
            surface: q.surface,
            psnr_db: q.psnr.is_finite().then_some(q.psnr),
            ssim: q.ssim,
            masked_pixels: q.masked_pixels,
        })
        .collect();
    let text = serde_json::to_string_pretty(&scores)? + "\n";
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_demo(args: &DemoArgs, threads: Option<usize>) -> Result<()> {
    let mut params = match args.scale {
        Scale::Small => DemoParams::small(),
        Scale::Medium => DemoParams::medium(),
        Scale::Paper => DemoParams::paper(),
    };
    params.projectors = args.projectors;
    params.baseline = args.baseline;
    params.seed = args.seed;
    if let Some(c) = args.convention {
        params.convention = c.into();
    }
    let kind = DemoKind::from(args.kind);
    let scene = make_demo_scene(kind, &params)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("scene.toml");
    scene.save(&path)?;
    println!("{kind} scene -> {}", path.display());
    if args.run {
        let mut config = RunConfig::new(&path, args.out.join("run"));
        config.methods = args.methods.methods(Some(scene.bounds))?;
        config.threads = threads;
        config.calibration.seed = args.seed;
        report(&run_pipeline(&config)?.report, &config.output);
    }
    Ok(())
}

fn cmd_run(args: &RunArgs, threads: Option<usize>) -> Result<()> {
    let mut config = RunConfig::new(&args.scene.scene, &args.scene.out);
    // A scene that fails to load is reported by the pipeline itself.
    let bounds = SceneDescription::load(&args.scene.scene).ok().map(|s| s.bounds);
    config.methods = args.methods.methods(bounds)?;
    config.convention = args.scene.convention.map(Into::into);
    config.calibration = args.calibration.options();
    config.threads = threads;
    config.photometric = !args.linear;
    report(&run_pipeline(&config)?.report, &config.output);
    Ok(())
}

fn report(report: &depthcast_core::RunReport, out: &Path) {
    for r in &report.records {
        let psnr = r.psnr_db.map_or("inf".to_string(), |p| format!("{p:.2}"));
        println!(
            "{:<14} surface {}  PSNR {psnr:>6} dB  SSIM {:.3}",
            r.method, r.surface, r.ssim
        );
    }
    println!("metrics -> {}", out.join("metrics.json").display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = (|| -> Result<()> {
        if let Some(n) = cli.threads {
            if n == 0 {
                bail!("--threads must be positive");
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        match &cli.command {
            Command::Calibrate(a) => cmd_calibrate(a),
            Command::Solve(a) => cmd_solve(a),
            Command::Render(a) => cmd_render(a),
            Command::Eval(a) => cmd_eval(a),
            Command::Demo(a) => cmd_demo(a, cli.threads),
            Command::Run(a) => cmd_run(a, cli.threads),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors repeat their cause in their own message; skip
            // causes already shown.
            let mut shown = String::new();
            for cause in e.chain() {
                let msg = cause.to_string();
                if !shown.contains(&msg) {
                    if !shown.is_empty() {
                        shown.push_str(": ");
                    }
                    shown.push_str(&msg);
                }
            }
            eprintln!("error: {shown}");
            ExitCode::FAILURE
        }
    }
}
