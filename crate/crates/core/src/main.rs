use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use harp_core::align::{frame_from_anchors, frame_from_marker, world_to_device, MarkerPose, RigidFrame};
use harp_core::apps::inspector::{inspector_run, vertical_sweep, InspectorConfig};
use harp_core::apps::live::{simon_host_run, LiveConfig};
use harp_core::apps::resize::{default_trials, resize_session, Controller, ResizeSettings, VIRTUAL_GROUND_Z};
use harp_core::apps::simon::{simon_round_run, PlayerInput, PlayerSpec, PlayerStrategy, RoundConfig, SimonMode};
use harp_core::device::{DeviceDescriptor, HandScript, PerceptionParams};
use harp_core::model::{Quat, Vec3};
use harp_core::render::{RepresentationSpec, Strategy};
use harp_core::session::{transport, Service};

#[derive(Parser)]
#[command(name = "harp", version, about = "Mid-air haptic rendering and shared AR sessions")]
struct Cli {
    /// Log filter, e.g. `info` or `harp_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a hand script over catalog figures and report what is felt.
    Inspect(InspectArgs),
    /// Play a Simon round with scripted players, or host one on a running service.
    Simon(SimonArgs),
    /// Run the resize-to-height task and tabulate offsets.
    Resize(ResizeArgs),
    /// Run the session service.
    Serve(ServeArgs),
    /// Compute the device frame from anchors or a marker pose.
    Align(AlignArgs),
}

#[derive(Args)]
struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DeviceArgs {
    /// Device tick rate, Hz.
    #[arg(long, default_value_t = 100.0)]
    tick_rate: f64,
    /// Perception model as `sigma,tau,r` in meters.
    #[arg(long, value_parser = parse_perception)]
    perception: Option<PerceptionParams>,
}

impl DeviceArgs {
    fn device(&self) -> DeviceDescriptor {
        DeviceDescriptor {
            tick_rate: self.tick_rate,
            ..Default::default()
        }
    }

    fn perception(&self) -> PerceptionParams {
        self.perception.unwrap_or_default()
    }
}

#[derive(Args)]
struct InspectArgs {
    /// Comma-separated figure names; all ten by default.
    #[arg(long, value_delimiter = ',')]
    figures: Vec<String>,
    /// `feature_based`, `vertex_based`, `edge_based` or `volume_based`
    #[arg(long, default_value = "volume_based")]
    strategy: Strategy,
    /// Grid resolution `n` or `nx,ny,nz`.
    #[arg(long, default_value = "16", value_parser = parse_grid)]
    grid: [usize; 3],
    /// Hand script JSON; a vertical sweep through the volume by default.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Duration of the default sweep, s.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    /// Shuffle the figure order with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fill the inside of closed figures for `edge_based`
    #[arg(long)]
    interior: bool,
    #[command(flatten)]
    device: DeviceArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimonArgs {
    /// Round length, s
    #[arg(long, default_value_t = 150.0)]
    duration: f64,
    /// Seed for the color sequence
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// `solo` or `turn-taking`
    #[arg(long, default_value = "solo")]
    mode: SimonMode,
    /// Scripted players as `strategy:input` pairs, e.g. `perfect:hand,perfect:touch`.
    #[arg(long, value_delimiter = ',', value_parser = parse_player, default_value = "perfect:hand")]
    players: Vec<PlayerSpec>,
    /// Colors in the first sequence
    #[arg(long, default_value_t = 3)]
    initial_length: usize,
    /// Host the round on the service at this address instead of simulating players.
    #[arg(long)]
    connect: Option<String>,
    /// With `--connect`, join this session instead of creating one.
    #[arg(long, requires = "connect")]
    session: Option<String>,
    #[command(flatten)]
    device: DeviceArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ResizeArgs {
    /// Comma-separated figures; the default five otherwise.
    #[arg(long, value_delimiter = ',')]
    figures: Vec<String>,
    /// Target heights in meters, one per figure.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
    /// `ideal`, `first-contact` or `dwell` (needs `--script`).
    #[arg(long, default_value = "ideal")]
    controller: String,
    /// Height error added by the `ideal` controller, m.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    bias: f64,
    /// Palm trajectory for the `dwell` controller.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Ramp the anchor intensity with palm proximity.
    #[arg(long)]
    graded: bool,
    /// Print the offset table as TSV instead of the JSON report.
    #[arg(long)]
    tsv: bool,
    /// Row label in the offset table
    #[arg(long, default_value = "controller")]
    label: String,
    #[command(flatten)]
    device: DeviceArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ServeArgs {
    /// Address to listen on for WebSocket and framed TCP clients
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: SocketAddr,
    /// Housekeeping period, ms.
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
}

#[derive(Args)]
struct AlignArgs {
    /// Nine numbers `x0,y0,z0,x1,y1,z1,x2,y2,z2`: origin corner, +x corner, +y corner.
    #[arg(long, value_parser = parse_anchors, conflicts_with = "marker_pose", allow_hyphen_values = true)]
    anchors: Option<[Vec3; 3]>,
    /// Marker pose `x,y,z,qx,qy,qz,qw` in world coordinates.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    marker_pose: Option<RigidFrame>,
    /// Device pose relative to the marker, `x,y,z,qx,qy,qz,qw`.
    #[arg(long, value_parser = parse_pose, requires = "marker_pose", allow_hyphen_values = true)]
    offset: Option<RigidFrame>,
    /// World points `x,y,z` to express in device coordinates.
    #[arg(long = "point", value_parser = parse_vec3, allow_hyphen_values = true)]
    points: Vec<Vec3>,
    #[command(flatten)]
    output: Output,
}

fn floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_perception(s: &str) -> Result<PerceptionParams, String> {
    let v = floats(s, 3)?;
    Ok(PerceptionParams {
        sigma: v[0],
        tau: v[1],
        palm_radius: v[2],
    })
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [n] => Ok([*n; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err("grid is `n` or `nx,ny,nz`".into()),
    }
}

fn parse_player(s: &str) -> Result<PlayerSpec, String> {
    let (strategy, input) = s.split_once(':').unwrap_or((s, "hand"));
    let input = match input {
        "hand" => PlayerInput::Hand,
        "touch" => PlayerInput::Touch,
        other => return Err(format!("unknown input `{other}` (hand or touch)")),
    };
    Ok(PlayerSpec {
        strategy: strategy.parse::<PlayerStrategy>()?,
        input,
    })
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v = floats(s, 3)?;
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn parse_anchors(s: &str) -> Result<[Vec3; 3], String> {
    let v = floats(s, 9)?;
    Ok([
        Vec3::new(v[0], v[1], v[2]),
        Vec3::new(v[3], v[4], v[5]),
        Vec3::new(v[6], v[7], v[8]),
    ])
}

fn parse_pose(s: &str) -> Result<RigidFrame, String> {
    let v = floats(s, 7)?;
    let q = Quat {
        x: v[3],
        y: v[4],
        z: v[5],
        w: v[6],
    };
    let frame = RigidFrame::new(Vec3::new(v[0], v[1], v[2]), q.normalized());
    frame.validate().map_err(|e| e.to_string())?;
    Ok(frame)
}

fn read_script(path: &Path) -> Result<HandScript, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let script: HandScript = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    script.validate().map_err(|e| e.to_string())?;
    Ok(script)
}

fn write_report<T: Serialize>(out: &Output, report: &T) -> Result<(), String> {
    let json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    write_text(out, &(json + "\n"))
}

fn write_text(out: &Output, text: &str) -> Result<(), String> {
    match &out.out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn inspect(a: InspectArgs) -> Result<(), String> {
    let mut cfg = InspectorConfig {
        spec: RepresentationSpec {
            strategy: a.strategy,
            resolution: a.grid,
            include_interior: a.interior,
            ..Default::default()
        },
        device: a.device.device(),
        perception: a.device.perception(),
        seed: a.seed.unwrap_or(0),
        shuffle: a.seed.is_some(),
        ..Default::default()
    };
    if !a.figures.is_empty() {
        cfg.figures = a.figures;
    }
    cfg.script = match &a.script {
        Some(p) => read_script(p)?,
        None => vertical_sweep(&cfg.volume, 2.0 * cfg.perception.tau, a.duration),
    };
    let report = inspector_run(&cfg).map_err(|e| e.to_string())?;
    write_report(&a.output, &report)
}

fn simon(a: SimonArgs) -> Result<(), String> {
    let report = match &a.connect {
        Some(addr) => {
            let cfg = LiveConfig {
                session: a.session.clone(),
                duration: a.duration,
                seed: a.seed,
                initial_length: a.initial_length,
                mode: a.mode,
            };
            simon_host_run(addr.as_str(), &cfg, |sid| eprintln!("simon session ready: {sid}"))
        }
        None => {
            let cfg = RoundConfig {
                duration: a.duration,
                seed: a.seed,
                initial_length: a.initial_length,
                mode: a.mode,
                players: a.players.clone(),
                device: a.device.device(),
                perception: a.device.perception(),
                ..Default::default()
            };
            simon_round_run(&cfg)
        }
    }
    .map_err(|e| e.to_string())?;
    write_report(&a.output, &report)
}

fn resize(a: ResizeArgs) -> Result<(), String> {
    let trials = if a.figures.is_empty() && a.targets.is_empty() {
        default_trials()
    } else {
        if a.figures.len() != a.targets.len() {
            return Err(format!(
                "{} figures but {} targets; give one target per figure",
                a.figures.len(),
                a.targets.len()
            ));
        }
        a.figures.iter().cloned().zip(a.targets.iter().copied()).collect()
    };
    let controller = match a.controller.as_str() {
        "ideal" => Controller::biased(a.bias),
        "first-contact" | "first_contact" => Controller::FirstContact {
            speed: 0.02,
            start_z: VIRTUAL_GROUND_Z,
        },
        "dwell" => {
            let path = a.script.as_ref().ok_or("the dwell controller needs --script")?;
            Controller::Dwell {
                script: read_script(path)?,
                dwell: 1.0,
                tolerance: 0.002,
            }
        }
        other => return Err(format!("unknown controller `{other}`")),
    };
    let settings = ResizeSettings {
        graded_anchor: a.graded,
        device: a.device.device(),
        perception: a.device.perception(),
        ..Default::default()
    };
    let report = resize_session(&trials, &[(a.label.clone(), controller)], &settings).map_err(|e| e.to_string())?;
    if a.tsv {
        write_text(&a.output, &report.table.to_tsv())
    } else {
        write_report(&a.output, &report)
    }
}

fn serve(a: ServeArgs) -> Result<(), String> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.listen)
            .await
            .map_err(|e| format!("{}: {e}", a.listen))?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!("harp/1 service listening on {addr} (WebSocket and length-prefixed TCP)");
        let service = Service::with_system_clock();
        tokio::select! {
            _ = transport::serve(listener, Arc::clone(&service), Duration::from_millis(a.tick_ms.max(1))) => {}
            _ = tokio::signal::ctrl_c() => eprintln!("shutting down"),
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct AlignReport {
    frame: RigidFrame,
    points: Vec<Vec3>,
}

fn align(a: AlignArgs) -> Result<(), String> {
    let frame = match (a.anchors, a.marker_pose) {
        (Some([p0, p1, p2]), None) => frame_from_anchors(p0, p1, p2).map_err(|e| e.to_string())?,
        (None, Some(marker)) => frame_from_marker(&MarkerPose {
            marker,
            device_offset: a.offset.unwrap_or_default(),
        }),
        _ => return Err("give either --anchors or --marker-pose".into()),
    };
    let points = a.points.iter().map(|p| world_to_device(*p, &frame)).collect();
    write_report(&a.output, &AlignReport { frame, points })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log_level)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Inspect(a) => inspect(a),
        Command::Simon(a) => simon(a),
        Command::Resize(a) => resize(a),
        Command::Serve(a) => serve(a),
        Command::Align(a) => align(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
