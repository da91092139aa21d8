//! Command-line entry point.
//!
//! Every flag can also be set through an environment variable named
//! `POSEGUIDE_<FLAG>` (upper case, dashes as underscores), for example
//! `POSEGUIDE_SEED=7`.
//!
//! Exit codes: 0 on success, 1 when the run itself fails, 2 for usage or
//! input errors. Errors are printed to stderr as one JSON object.

use std::fs;
use std::io::BufReader;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde_json::json;

use poseguide::calibration::{calibrate, read_observations, write_observations, SolverConfig};
use poseguide::geometry::{BoardSpec, Pose};
use poseguide::pose_space::{PoseSearchSpace, ScoringConfig};
use poseguide::service::{
    self, read_document, render_document, render_event_log, serve_session, write_document,
    ArtifactStore, CalibrationFile, CameraFile, DisconnectPolicy, PoseSetFile, ServiceError,
    SessionHost, SpaceFile,
};
use poseguide::session::{
    begin_session, default_match_threshold, finalize, CaptureMode, SessionConfig,
};
use poseguide::synthetic::{
    drive_session, run_table1_experiment, ExperimentConfig, ExperimentReport, NoiseModel,
    SimulatedOperator, VirtualCamera,
};
use poseguide::SCHEMA_VERSION;

#[derive(Parser)]
#[command(name = "poseguide", version, about = "Pose-guided camera calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select the best-scoring pose set for a space and camera.
    Optimize(OptimizeArgs),
    /// Run the candidate-ranking experiment and write its report.
    Simulate(SimulateArgs),
    /// Drive a guided session with a simulated operator and calibrate.
    Rehearse(RehearseArgs),
    /// Serve a guided session over TCP.
    Serve(ServeArgs),
    /// Calibrate from stored observations.
    Calibrate(CalibrateArgs),
    /// Write a built-in camera or space definition.
    Preset(PresetArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Space file, or a preset name (dms, smartphone, desk).
    #[arg(long, env = "POSEGUIDE_SPACE", default_value = "dms")]
    space: String,
    /// Camera file, or a preset name (lens1, lens2).
    #[arg(long, env = "POSEGUIDE_CAMERA", default_value = "lens1")]
    camera: String,
    /// Poses per set.
    #[arg(long, env = "POSEGUIDE_N", default_value_t = 20,
          value_parser = clap::value_parser!(u64).range(3..))]
    n: u64,
    /// Number of random candidate sets.
    #[arg(long = "k-sets", env = "POSEGUIDE_K_SETS", default_value_t = 200,
          value_parser = clap::value_parser!(u64).range(1..))]
    k_sets: u64,
    /// Admissible poses sampled before drawing sets.
    #[arg(long = "pool-size", env = "POSEGUIDE_POOL_SIZE", default_value_t = 500)]
    pool_size: u64,
    #[arg(long, env = "POSEGUIDE_SEED", default_value_t = 0)]
    seed: u64,
    /// Corner noise standard deviation, pixels.
    #[arg(
        long = "noise-sigma",
        env = "POSEGUIDE_NOISE_SIGMA",
        default_value_t = 0.1
    )]
    noise_sigma: f64,
    #[arg(long, env = "POSEGUIDE_ALPHA", default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, env = "POSEGUIDE_BETA", default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Output pose-set file.
    #[arg(long, env = "POSEGUIDE_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Output directory for report.json and table.csv.
    #[arg(long, env = "POSEGUIDE_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct SessionArgs {
    /// Pose-set file written by `optimize`.
    #[arg(long, env = "POSEGUIDE_POSES")]
    poses: PathBuf,
    /// Outer-corner match threshold, pixels. Defaults to 15 px per 1280 px of width.
    #[arg(long = "match-threshold", env = "POSEGUIDE_MATCH_THRESHOLD")]
    match_threshold: Option<f64>,
    #[arg(
        long = "capture-mode",
        env = "POSEGUIDE_CAPTURE_MODE",
        value_enum,
        default_value = "auto"
    )]
    capture_mode: ModeArg,
    /// Consecutive matched updates before an auto capture.
    #[arg(long = "dwell-frames", env = "POSEGUIDE_DWELL_FRAMES", default_value_t = 5,
          value_parser = clap::value_parser!(u64).range(1..))]
    dwell_frames: u64,
}

#[derive(Args)]
struct RehearseArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Camera the operator is filmed with (file or preset name).
    #[arg(long, env = "POSEGUIDE_CAMERA", default_value = "lens1")]
    camera: String,
    #[arg(long, env = "POSEGUIDE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(
        long = "noise-sigma",
        env = "POSEGUIDE_NOISE_SIGMA",
        default_value_t = 0.1
    )]
    noise_sigma: f64,
    /// Fraction of the remaining offset the operator covers per frame.
    #[arg(
        long = "step-fraction",
        env = "POSEGUIDE_STEP_FRACTION",
        default_value_t = 0.3
    )]
    step_fraction: f64,
    /// Hand jitter, pixels.
    #[arg(long, env = "POSEGUIDE_JITTER", default_value_t = 1.0)]
    jitter: f64,
    #[arg(
        long = "max-ticks",
        env = "POSEGUIDE_MAX_TICKS",
        default_value_t = 20_000
    )]
    max_ticks: usize,
    /// Output directory.
    #[arg(long, env = "POSEGUIDE_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, env = "POSEGUIDE_LISTEN", default_value = "127.0.0.1:7878")]
    listen: String,
    /// Artifact store directory.
    #[arg(long = "data-dir", env = "POSEGUIDE_DATA_DIR")]
    data_dir: PathBuf,
    /// Defaults to a hash of the pose-set file.
    #[arg(long = "session-id", env = "POSEGUIDE_SESSION_ID")]
    session_id: Option<String>,
    #[arg(
        long = "on-disconnect",
        env = "POSEGUIDE_ON_DISCONNECT",
        value_enum,
        default_value = "abort"
    )]
    on_disconnect: DisconnectArg,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Line-delimited observations.
    #[arg(long, env = "POSEGUIDE_OBSERVATIONS")]
    observations: PathBuf,
    #[arg(long, env = "POSEGUIDE_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(value_enum)]
    kind: PresetKind,
    /// Preset name: lens1, lens2 for cameras; dms, smartphone, desk for spaces.
    name: String,
    /// Camera whose image size a space preset uses.
    #[arg(long, env = "POSEGUIDE_CAMERA", default_value = "lens1")]
    camera: String,
    #[arg(long, env = "POSEGUIDE_OUT")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetKind {
    Camera,
    Space,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Manual,
}

#[derive(Clone, Copy, ValueEnum)]
enum DisconnectArg {
    Abort,
    Suspend,
}

/// A failure, with the exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn input(e: ServiceError) -> Self {
        Self {
            code: 2,
            kind: e.kind(),
            message: e.to_string(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }

    fn run(e: impl Into<ServiceError>) -> Self {
        let e = e.into();
        Self {
            code: 1,
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            return report(Failure::usage(e.to_string().trim_end()));
        }
    };
    let outcome = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Simulate(a) => simulate(a),
        Command::Rehearse(a) => rehearse(a),
        Command::Serve(a) => serve(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Preset(a) => preset(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let body = json!({
        "schema_version": SCHEMA_VERSION,
        "error": f.kind,
        "message": f.message,
    });
    eprintln!("{body}");
    ExitCode::from(f.code)
}

fn camera_preset(name: &str) -> Option<VirtualCamera> {
    match name {
        "lens1" => Some(VirtualCamera::lens1()),
        "lens2" => Some(VirtualCamera::lens2()),
        _ => None,
    }
}

fn space_preset(name: &str, camera: &VirtualCamera) -> Option<PoseSearchSpace> {
    let board = BoardSpec::default();
    match name {
        "dms" => Some(PoseSearchSpace::dms(camera.image, board)),
        "smartphone" => Some(PoseSearchSpace::smartphone(camera.image, board)),
        "desk" => Some(PoseSearchSpace::desk(camera.image, board)),
        _ => None,
    }
}

fn load_camera(arg: &str) -> Result<VirtualCamera, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        return camera_preset(arg).ok_or_else(|| {
            Failure::usage(format!("camera '{arg}' is neither a file nor a preset"))
        });
    }
    let file: CameraFile = read_document(path).map_err(Failure::input)?;
    VirtualCamera::new(file.camera.truth, file.camera.image)
        .map_err(|e| Failure::input(ServiceError::InvalidInput(format!("{arg}: {e}"))))
}

fn load_space(arg: &str, camera: &VirtualCamera) -> Result<PoseSearchSpace, Failure> {
    let path = Path::new(arg);
    let space = if path.exists() {
        read_document::<SpaceFile>(path)
            .map_err(Failure::input)?
            .space
    } else {
        space_preset(arg, camera).ok_or_else(|| {
            Failure::usage(format!("space '{arg}' is neither a file nor a preset"))
        })?
    };
    space
        .validate()
        .map_err(|e| Failure::input(ServiceError::InvalidInput(format!("{arg}: {e}"))))?;
    if space.image != camera.image {
        return Err(Failure::input(ServiceError::InvalidInput(
            "space and camera image sizes differ".into(),
        )));
    }
    Ok(space)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Failure::run)?;
    }
    fs::write(path, bytes)
        .map_err(|e| Failure::run(ServiceError::Io(format!("{}: {e}", path.display()))))
}

fn run_sweep(
    args: &SweepArgs,
) -> Result<(VirtualCamera, PoseSearchSpace, ExperimentReport), Failure> {
    let camera = load_camera(&args.camera)?;
    let space = load_space(&args.space, &camera)?;
    if !(args.noise_sigma >= 0.0 && args.noise_sigma.is_finite()) {
        return Err(Failure::usage("--noise-sigma must be non-negative"));
    }
    let config = ExperimentConfig {
        n: args.n as usize,
        k_sets: args.k_sets as usize,
        pool_size: args.pool_size as usize,
        seed: args.seed,
        scoring: ScoringConfig::with_weights(args.alpha, args.beta),
    };
    config
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let noise = NoiseModel::gaussian(args.noise_sigma, args.seed);
    let report = run_table1_experiment(&camera, &space, &config, &noise).map_err(Failure::run)?;
    Ok((camera, space, report))
}

fn print_rows(report: &ExperimentReport) {
    println!(
        "{:<10} {:>20} {:>10} {:>10} {:>10}",
        "label", "set_seed", "mre", "score", "param_err"
    );
    for r in &report.rows {
        println!(
            "{:<10} {:>20} {:>10.4} {:>10.4} {:>10.4}",
            r.label, r.set_seed, r.mre, r.score, r.param_err
        );
    }
}

fn optimize(a: OptimizeArgs) -> Outcome {
    let (camera, space, report) = run_sweep(&a.sweep)?;
    let file = PoseSetFile::from_report(&camera, &space, &report);
    write_document(&a.out, &file).map_err(Failure::run)?;
    print_rows(&report);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Outcome {
    let (_, _, report) = run_sweep(&a.sweep)?;
    write_bytes(&a.out.join("report.json"), &render_document(&report))?;
    write_bytes(&a.out.join("table.csv"), report.to_csv().as_bytes())?;
    print_rows(&report);
    Ok(())
}

fn session_config(args: &SessionArgs) -> Result<SessionConfig, Failure> {
    let file: PoseSetFile = read_document(&args.poses).map_err(Failure::input)?;
    let mut config = file.session_config();
    config.match_threshold = args
        .match_threshold
        .unwrap_or_else(|| default_match_threshold(&file.image));
    config.capture_mode = match args.capture_mode {
        ModeArg::Auto => CaptureMode::Auto,
        ModeArg::Manual => CaptureMode::Manual,
    };
    config.dwell_frames = args.dwell_frames as usize;
    config
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    Ok(config)
}

fn rehearse(a: RehearseArgs) -> Outcome {
    let config = session_config(&a.session)?;
    let camera = load_camera(&a.camera)?;
    if camera.image != config.image {
        return Err(Failure::input(ServiceError::InvalidInput(
            "camera and pose-set image sizes differ".into(),
        )));
    }
    let state = begin_session(config).map_err(Failure::run)?;
    let mut operator = SimulatedOperator::new(
        a.step_fraction,
        a.jitter,
        poseguide::seed::derive(a.seed, 2),
    )
    .map_err(|e| Failure::usage(e.to_string()))?;
    let noise = NoiseModel::gaussian(a.noise_sigma, poseguide::seed::derive(a.seed, 3));
    noise
        .validate()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let board = state.config().board;
    let depth = state
        .plan
        .targets
        .iter()
        .map(|t| t.pose.transform_point(&board.center()).z)
        .sum::<f64>()
        / state.total_targets() as f64;
    let start = Pose::new(
        Vector3::zeros(),
        Vector3::new(0.0, 0.0, depth) - board.center(),
    );
    let run = drive_session(state, &mut operator, &camera, &noise, start, a.max_ticks)
        .map_err(Failure::run)?;
    fs::create_dir_all(&a.out).map_err(Failure::run)?;
    write_bytes(
        &a.out.join("events.jsonl"),
        &render_event_log("rehearsal", &run.events),
    )?;
    let mut obs = Vec::new();
    write_observations(&mut obs, &run.state.captured).map_err(Failure::run)?;
    write_bytes(&a.out.join("observations.jsonl"), &obs)?;
    if !run.state.is_complete() {
        return Err(Failure::run(ServiceError::InvalidInput(format!(
            "session incomplete after {} ticks ({} of {} captured)",
            run.ticks,
            run.state.captured.len(),
            run.state.total_targets()
        ))));
    }
    let result = finalize(&run.state, &SolverConfig::default()).map_err(Failure::run)?;
    let summary = json!({
        "ticks": run.ticks,
        "captured": run.state.captured.len(),
        "mre": result.mre,
        "param_err": poseguide::calibration::param_error(&result.intrinsics, &camera.truth),
    });
    write_document(
        &a.out.join("calibration.json"),
        &CalibrationFile::new(Some("rehearsal".into()), result),
    )
    .map_err(Failure::run)?;
    println!("{summary}");
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let config = session_config(&a.session)?;
    let session_id = match a.session_id {
        Some(id) => id,
        None => {
            let bytes = fs::read(&a.session.poses).map_err(Failure::run)?;
            let r = service::artifact_ref(&bytes);
            let hex = r.trim_start_matches("sha256:");
            format!("session-{}", &hex[..16])
        }
    };
    let store = Arc::new(ArtifactStore::open(&a.data_dir).map_err(Failure::run)?);
    let host = SessionHost::new(session_id.clone(), config, SolverConfig::default())
        .and_then(|h| h.with_store(store))
        .map_err(Failure::run)?;
    let listener = TcpListener::bind(&a.listen)
        .map_err(|e| Failure::usage(format!("cannot listen on {}: {e}", a.listen)))?;
    let addr = listener.local_addr().map_err(Failure::run)?;
    println!(
        "{}",
        json!({ "listening": addr.to_string(), "session_id": session_id })
    );
    let policy = match a.on_disconnect {
        DisconnectArg::Abort => DisconnectPolicy::Abort,
        DisconnectArg::Suspend => DisconnectPolicy::Suspend,
    };
    let host = serve_session(host, listener, policy).map_err(Failure::run)?;
    println!(
        "{}",
        json!({
            "session_id": host.session_id(),
            "phase": host.state().phase,
            "result_ref": host.result_ref(),
        })
    );
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Outcome {
    let file = fs::File::open(&a.observations).map_err(|e| {
        Failure::input(ServiceError::Io(format!(
            "{}: {e}",
            a.observations.display()
        )))
    })?;
    let views = read_observations(BufReader::new(file))
        .map_err(|e| Failure::input(ServiceError::Calibration(e)))?;
    let result = calibrate(&views, &SolverConfig::default()).map_err(Failure::run)?;
    let mre = result.mre;
    write_document(&a.out, &CalibrationFile::new(None, result)).map_err(Failure::run)?;
    println!("{}", json!({ "views": views.len(), "mre": mre }));
    Ok(())
}

fn preset(a: PresetArgs) -> Outcome {
    let bytes = match a.kind {
        PresetKind::Camera => {
            let camera = camera_preset(&a.name)
                .ok_or_else(|| Failure::usage(format!("unknown camera preset '{}'", a.name)))?;
            render_document(&CameraFile::new(camera))
        }
        PresetKind::Space => {
            let camera = load_camera(&a.camera)?;
            let space = space_preset(&a.name, &camera)
                .ok_or_else(|| Failure::usage(format!("unknown space preset '{}'", a.name)))?;
            render_document(&SpaceFile::new(space))
        }
    };
    write_bytes(&a.out, &bytes)
}
