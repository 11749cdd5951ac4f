//! Command-line surface: scenario generation, tracking, evaluation,
//! benchmarking and overlay rendering, each emitting a run manifest
//! beside its output.

use crate::fmf::Aggregator;
use crate::io::{self, SequenceDir};
use crate::metrics::{self, MetricsReport};
use crate::render;
use crate::simulator::{self, ScenarioConfig};
use crate::tracker::{self, FrameBundle, TrackerConfig, TrackerMode};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser)]
#[command(name = "fmftrack", version, about = "Motion-field multi-object tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario and export it as a sequence directory
    Simulate(SimulateArgs),
    /// Run the tracker over an exported sequence directory
    Track(TrackArgs),
    /// CLEAR-MOT evaluation of a hypothesis file against ground truth
    Eval(EvalArgs),
    /// Time per-frame association across object counts
    Bench(BenchArgs),
    /// Render a static overlay of detected and predicted boxes
    Render(RenderArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Plain key=value scenario config file; flags win over file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory (seqinfo.ini, det/, fmf/, faf/)
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value = "fmf_faf", value_parser = parse_mode)]
    mode: TrackerMode,
    #[arg(long, default_value_t = 0.45)]
    tau1: f64,
    #[arg(long, default_value_t = 0.5)]
    tau2: f64,
    #[arg(long, default_value = "median", value_parser = parse_aggregator)]
    aggregator: Aggregator,
    #[arg(long, default_value_t = 1)]
    max_age: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth file (MOTChallenge gt layout)
    #[arg(long)]
    gt: PathBuf,
    /// Hypothesis file (submission layout)
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated object counts
    #[arg(long, default_value = "10,25,50,100", value_delimiter = ',')]
    objects: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    seq: PathBuf,
    /// Hypothesis file whose frame-N boxes are predicted forward
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    frame: usize,
    /// Output path; .svg for vector output, .ppm for a raw raster
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<TrackerMode, String> {
    match s {
        "fmf" | "fmf_only" => Ok(TrackerMode::FmfOnly),
        "faf" | "faf_only" => Ok(TrackerMode::FafOnly),
        "fmf_faf" => Ok(TrackerMode::FmfFaf),
        _ => Err(format!("unknown mode {s:?} (expected fmf, faf or fmf_faf)")),
    }
}

fn parse_aggregator(s: &str) -> Result<Aggregator, String> {
    match s {
        "mean" => Ok(Aggregator::Mean),
        "median" => Ok(Aggregator::Median),
        _ => Err(format!("unknown aggregator {s:?} (expected mean or median)")),
    }
}

struct Manifest {
    command: String,
    entries: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self { command: command.to_string(), entries: Vec::new(), timings: Vec::new() }
    }

    fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn time(&mut self, stage: &str, seconds: f64) {
        self.timings.push((stage.to_string(), seconds));
    }

    fn write_beside(&self, out: &Path) -> Result<(), String> {
        let mut text = format!(
            "command={}\ntool_version={}\n",
            self.command,
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in &self.entries {
            let _ = writeln!(text, "{k}={v}");
        }
        for (stage, secs) in &self.timings {
            let _ = writeln!(text, "time_{stage}_s={secs:.6}");
        }
        let path = if out.is_dir() {
            out.join("manifest.txt")
        } else {
            let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(".manifest.txt");
            out.with_file_name(name)
        };
        std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Entry point: parse arguments, dispatch, map failures to exit codes.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendered help/usage text but our exit convention
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Track(args) => cmd_track(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Render(args) => cmd_render(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_DATA
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), String> {
    let mut manifest = Manifest::new("simulate");
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            manifest.record("config_file", path.display());
            ScenarioConfig::parse(&text).map_err(|e| e.to_string())?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    manifest.record("seed", cfg.seed);
    manifest.record("out", args.out.display());

    let start = Instant::now();
    let scenario = simulator::generate(&cfg).map_err(|e| e.to_string())?;
    manifest.time("generate", start.elapsed().as_secs_f64());

    let start = Instant::now();
    let dir = SequenceDir::new(&args.out);
    scenario.export(&dir).map_err(|e| e.to_string())?;
    dir.write_file(&args.out.join("scenario.cfg"), cfg.to_key_values().as_bytes())
        .map_err(|e| e.to_string())?;
    manifest.time("export", start.elapsed().as_secs_f64());
    manifest.write_beside(&args.out)?;
    println!("exported {} frames to {}", cfg.frame_count, args.out.display());
    Ok(())
}

/// Discover the frame-pair stride from the field files on disk.
fn detect_stride(seq: &SequenceDir) -> Result<usize, String> {
    for stride in 1..=8 {
        if seq.field_path(1, 1 + stride).exists() {
            return Ok(stride);
        }
    }
    Err(format!("no motion field files found under {}", seq.root.join("fmf").display()))
}

/// Load per-pair bundles lazily while running the tracker; returns the
/// result and per-frame association timings.
fn run_tracker_over_dir(
    seq: &SequenceDir,
    cfg: &TrackerConfig,
) -> Result<(tracker::SequenceResult, Vec<f64>), String> {
    let info = seq.read_seqinfo().map_err(|e| format!("{}: {e}", seq.root.display()))?;
    let detections = seq.read_detections().map_err(|e| e.to_string())?.by_frame;
    let stride = detect_stride(seq)?;

    let first = detections.get(&1).cloned().unwrap_or_default();
    let mut state = tracker::TrackerState::init(&first);
    let mut reports = Vec::new();
    let mut timings = Vec::new();

    let mut from = 1usize;
    while from + stride <= info.frame_count {
        let to = from + stride;
        let field = seq.read_field(from, to).map_err(|e| e.to_string())?;
        let fmap_prev = seq.read_fmap(from).map_err(|e| e.to_string())?;
        let fmap_next = seq.read_fmap(to).map_err(|e| e.to_string())?;
        let feature_scale = ((info.image_width + fmap_prev.width - 1) / fmap_prev.width) as f64;
        let bundle = FrameBundle {
            frame_index: to,
            detections: detections.get(&to).cloned().unwrap_or_default(),
            field,
            fmap_prev,
            fmap_next,
            feature_scale,
        };
        let start = Instant::now();
        let report = tracker::advance(&mut state, &bundle, cfg).map_err(|e| e.to_string())?;
        timings.push(start.elapsed().as_secs_f64());
        reports.push(report);
        from = to;
    }
    Ok((tracker::SequenceResult { tracks: state.tracks, reports }, timings))
}

fn cmd_track(args: TrackArgs) -> Result<(), String> {
    let cfg = TrackerConfig {
        tau1: args.tau1,
        tau2: args.tau2,
        aggregator: args.aggregator,
        max_age: args.max_age,
        mode: args.mode,
    };
    let mut manifest = Manifest::new("track");
    manifest.record("seq", args.seq.display());
    manifest.record("mode", format!("{:?}", cfg.mode));
    manifest.record("tau1", cfg.tau1);
    manifest.record("tau2", cfg.tau2);
    manifest.record("max_age", cfg.max_age);

    let seq = SequenceDir::new(&args.seq);
    let start = Instant::now();
    let (result, timings) = run_tracker_over_dir(&seq, &cfg)?;
    manifest.time("track", start.elapsed().as_secs_f64());

    let hz = metrics::throughput(&timings);
    manifest.record("association_hz", format!("{hz:.1}"));
    manifest.record("tracks", result.tracks.len());

    let text = io::write_results(&result.tracks);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
    }
    std::fs::write(&args.out, text).map_err(|e| format!("{}: {e}", args.out.display()))?;
    manifest.write_beside(&args.out)?;
    println!("{} tracks, association {hz:.1} Hz -> {}", result.tracks.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), String> {
    let mut manifest = Manifest::new("eval");
    manifest.record("gt", args.gt.display());
    manifest.record("hyp", args.hyp.display());
    manifest.record("iou", args.iou);

    let gt_file = std::fs::File::open(&args.gt).map_err(|e| format!("{}: {e}", args.gt.display()))?;
    let gt = io::parse_ground_truth(std::io::BufReader::new(gt_file)).map_err(|e| e.to_string())?;
    let gt_map: std::collections::BTreeMap<usize, Vec<(u64, crate::geometry::BBox)>> = gt
        .iter()
        .map(|(&f, v)| (f, v.iter().map(|e| (e.identity, e.bbox)).collect()))
        .collect();
    let hyp_file = std::fs::File::open(&args.hyp).map_err(|e| format!("{}: {e}", args.hyp.display()))?;
    let hyp = io::parse_results(std::io::BufReader::new(hyp_file)).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let report = metrics::evaluate(&gt_map, &hyp, args.iou).map_err(|e| e.to_string())?;
    manifest.time("evaluate", start.elapsed().as_secs_f64());

    let csv = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.to_csv_row());
    std::fs::write(&args.out, csv).map_err(|e| format!("{}: {e}", args.out.display()))?;
    manifest.write_beside(&args.out)?;
    print!("{}", report.to_key_values());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), String> {
    let mut manifest = Manifest::new("bench");
    manifest.record("seed", args.seed);
    manifest.record("frames", args.frames);

    let mut counts = args.objects.clone();
    counts.sort_unstable();
    let mut csv = String::from("objects,mean_ms,p95_ms,hz\n");
    for &objects in &counts {
        let cfg = ScenarioConfig {
            seed: args.seed,
            frame_count: args.frames,
            width: 1280,
            height: 720,
            agent_count: objects,
            box_min: 20.0,
            box_max: 40.0,
            ..Default::default()
        };
        let scenario = simulator::generate(&cfg).map_err(|e| e.to_string())?;
        let mut state = tracker::TrackerState::init(&scenario.detections_at(1));
        let tracker_cfg = TrackerConfig::default();
        let mut timings = Vec::new();
        for from in 1..cfg.frame_count {
            let bundle = scenario.bundle_for(from);
            let start = Instant::now();
            tracker::advance(&mut state, &bundle, &tracker_cfg).map_err(|e| e.to_string())?;
            timings.push(start.elapsed().as_secs_f64());
        }
        let mean_ms = 1000.0 * timings.iter().sum::<f64>() / timings.len() as f64;
        let mut sorted = timings.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p95_ms = 1000.0 * sorted[(sorted.len() * 95 / 100).min(sorted.len() - 1)];
        let hz = metrics::throughput(&timings);
        let _ = writeln!(csv, "{objects},{mean_ms:.3},{p95_ms:.3},{hz:.1}");
        manifest.record(&format!("hz_{objects}"), format!("{hz:.1}"));
    }
    std::fs::write(&args.out, csv).map_err(|e| format!("{}: {e}", args.out.display()))?;
    manifest.write_beside(&args.out)?;
    println!("benchmark written to {}", args.out.display());
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), String> {
    let mut manifest = Manifest::new("render");
    manifest.record("seq", args.seq.display());
    manifest.record("hyp", args.hyp.display());
    manifest.record("frame", args.frame);

    let hyp_file = std::fs::File::open(&args.hyp).map_err(|e| format!("{}: {e}", args.hyp.display()))?;
    let hyp = io::parse_results(std::io::BufReader::new(hyp_file)).map_err(|e| e.to_string())?;
    let seq = SequenceDir::new(&args.seq);
    let start = Instant::now();
    let scene = render::render_overlay(&seq, &hyp, args.frame).map_err(|e| e.to_string())?;
    manifest.time("render", start.elapsed().as_secs_f64());

    let bytes = if args.out.extension().and_then(|e| e.to_str()) == Some("ppm") {
        scene.to_ppm()
    } else {
        scene.to_svg().into_bytes()
    };
    std::fs::write(&args.out, bytes).map_err(|e| format!("{}: {e}", args.out.display()))?;
    manifest.write_beside(&args.out)?;
    println!("overlay written to {}", args.out.display());
    Ok(())
}
