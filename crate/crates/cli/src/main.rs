use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use corrtrack::correlation::{
    bench_operator, caption_ratio, table_ratio, BenchOperator, BenchRow, BenchSize, CorrParams,
    BENCH_CSV_HEADER,
};
use corrtrack::gradcheck::{run_suite, GradComponent, GradcheckOptions, GRADCHECK_TOLERANCE};
use corrtrack::io::{
    detections_from_parsed, generate_scenario, parse_features, parse_mot, write_features,
    write_mot_detections, write_mot_ground_truth, write_mot_results, FeatureMode, ParsedMot,
    ScenarioSpec,
};
use corrtrack::metrics::{clear_mot_evaluate, EvalReport, DEFAULT_IOU_THRESHOLD};
use corrtrack::tracker::{track_sequence, TrackerConfig};

/// Process exit statuses. These values are a stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    CheckFailed = 1,
    MissingInput = 2,
    ParseError = 3,
}

#[derive(Debug)]
struct Failure {
    status: Status,
    message: String,
}

impl Failure {
    fn new(status: Status, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<corrtrack::Error> for Failure {
    fn from(e: corrtrack::Error) -> Self {
        use corrtrack::Error as E;
        let status = match e {
            E::Parse { .. } | E::InvalidRow(_) | E::Spec(_) | E::Feature(_) => Status::ParseError,
            E::InvalidArgument(_) => Status::MissingInput,
            _ => Status::CheckFailed,
        };
        Failure::new(status, e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Operators {
    Local,
    Nonlocal,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Single,
    Crossing,
}

#[derive(Debug, Parser)]
#[command(
    name = "corrtrack",
    version,
    about = "Local correlation kernels, tracking, and MOT evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track a MOTChallenge detection file and write results.
    Track(TrackArgs),
    /// Compute CLEAR-MOT and IDF1 for result files against ground truth.
    Eval(EvalArgs),
    /// Time the local and non-local correlation kernels next to their FLOPs counts.
    Bench(BenchArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic ground truth, detection file, and feature sidecar.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    dets: PathBuf,
    /// Feature sidecar: one comma-separated row per non-blank detection line.
    #[arg(long)]
    feats: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 30)]
    tau_loss: u32,
    #[arg(long, default_value_t = 0.1)]
    ema_beta: f64,
    #[arg(long, default_value_t = 0.7)]
    gate: f64,
    #[arg(long, default_value_t = 0.4)]
    min_conf: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth file; repeat together with --res for several sequences.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    #[arg(long, required = true)]
    res: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Radii to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    radius: Vec<usize>,
    /// Map height and width.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, value_enum, default_value_t = Operators::Both)]
    operator: Operators,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    radius: usize,
    #[arg(long, default_value_t = 2)]
    dilation: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Negates one component's analytic gradient.
    #[arg(long, hide = true)]
    sign_flip: Option<String>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// key=value scenario file; overrides --preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Crossing)]
    preset: Preset,
    /// orthogonal, identical, or noisy:SIGMA
    #[arg(long, default_value = "orthogonal")]
    features: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving gt.txt, det.txt, det.feat, and scenario.cfg.
    #[arg(long)]
    out: PathBuf,
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::new(
            Status::MissingInput,
            format!("cannot read {}: {e}", path.display()),
        )
    })
}

fn write_output(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| {
        Failure::new(
            Status::MissingInput,
            format!("cannot write {}: {e}", path.display()),
        )
    })
}

fn read_mot(path: &Path) -> CliResult<ParsedMot> {
    let parsed = parse_mot(&read_input(path)?)
        .map_err(|e| Failure::new(Status::ParseError, format!("{}: {e}", path.display())))?;
    for r in &parsed.rejected {
        eprintln!(
            "warning: {}: line {} skipped: {}",
            path.display(),
            r.line,
            r.reason
        );
    }
    Ok(parsed)
}

#[derive(Serialize)]
struct TrackSummary {
    frames: u64,
    tracks_created: u64,
    tracks_removed: u64,
    rows: usize,
    wall_time_ms: f64,
}

fn cmd_track(a: &TrackArgs) -> CliResult<()> {
    let parsed = read_mot(&a.dets)?;
    let features = match &a.feats {
        Some(p) => Some(
            parse_features(&read_input(p)?)
                .map_err(|e| Failure::new(Status::ParseError, format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let dets = detections_from_parsed(&parsed, features.as_deref())?;
    let cfg = TrackerConfig {
        alpha: a.alpha,
        tau_loss: a.tau_loss,
        ema_beta: a.ema_beta,
        gate: a.gate,
        min_confidence: a.min_conf,
        ..TrackerConfig::default()
    };
    let start = Instant::now();
    let (rows, stats) = track_sequence(&dets, &cfg)?;
    let wall = start.elapsed();
    write_output(&a.out, &write_mot_results(&rows)?)?;
    let summary = TrackSummary {
        frames: stats.frames,
        tracks_created: stats.tracks_created,
        tracks_removed: stats.tracks_removed,
        rows: rows.len(),
        wall_time_ms: wall.as_secs_f64() * 1e3,
    };
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    if a.gt.len() != a.res.len() {
        return Err(Failure::new(
            Status::MissingInput,
            format!("{} --gt files but {} --res files", a.gt.len(), a.res.len()),
        ));
    }
    let mut sequences = BTreeMap::new();
    for (i, (g, r)) in a.gt.iter().zip(&a.res).enumerate() {
        let gt = read_mot(g)?;
        let res = read_mot(r)?;
        let m = clear_mot_evaluate(&gt.rows, &res.rows, a.iou)?;
        let mut name = r.display().to_string();
        if sequences.contains_key(&name) {
            name = format!("{name}#{i}");
        }
        sequences.insert(name, m);
    }
    let report = EvalReport::new(sequences);
    match a.format {
        Format::Csv => print!("{}", report.csv()),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRecord {
    #[serde(flatten)]
    row: BenchRow,
    flops_ratio: f64,
    flops_ratio_exact: String,
    caption_ratio: Option<f64>,
}

fn ratio_f64(r: num_rational::Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    if a.radius.is_empty() || a.size == 0 || a.channels == 0 {
        return Err(Failure::new(
            Status::MissingInput,
            "bench needs a radius, --size >= 1, and --channels >= 1",
        ));
    }
    let sizes: Vec<BenchSize> = a
        .radius
        .iter()
        .map(|&r| BenchSize {
            h: a.size,
            w: a.size,
            c: a.channels,
            r,
        })
        .collect();
    let ops: &[BenchOperator] = match a.operator {
        Operators::Local => &[BenchOperator::Local],
        Operators::Nonlocal => &[BenchOperator::NonLocal],
        Operators::Both => &[BenchOperator::Local, BenchOperator::NonLocal],
    };
    let mut records = Vec::new();
    for &op in ops {
        let rows = match a.precision {
            Precision::F32 => bench_operator::<f32>(op, &sizes, a.repeats)?,
            Precision::F64 => bench_operator::<f64>(op, &sizes, a.repeats)?,
        };
        for row in rows {
            let (h, w, r) = (row.h as u64, row.w as u64, row.r as u64);
            let exact = table_ratio(h, w, r);
            records.push(BenchRecord {
                flops_ratio: ratio_f64(exact),
                flops_ratio_exact: exact.to_string(),
                caption_ratio: caption_ratio(h, w, r).map(ratio_f64),
                row,
            });
        }
    }
    match a.format {
        Format::Csv => {
            println!("{BENCH_CSV_HEADER},flops_ratio,flops_ratio_exact,caption_ratio");
            for rec in &records {
                let caption = rec
                    .caption_ratio
                    .map(|c| format!("{c:.4}"))
                    .unwrap_or_default();
                println!(
                    "{},{:.4},{},{caption}",
                    rec.row.csv(),
                    rec.flops_ratio,
                    rec.flops_ratio_exact
                );
            }
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&records).expect("bench rows serialize")
        ),
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let sign_flip = match &a.sign_flip {
        Some(name) => Some(GradComponent::parse(name).ok_or_else(|| {
            Failure::new(Status::MissingInput, format!("unknown component {name:?}"))
        })?),
        None => None,
    };
    let opts = GradcheckOptions {
        seed: a.seed,
        params: CorrParams::new(a.radius, a.dilation, 0)?,
        levels: a.levels,
        sign_flip,
        ..GradcheckOptions::default()
    };
    let results = run_suite(&opts)?;
    match a.format {
        Format::Csv => {
            println!("component,max_rel_error,entries,pass");
            for r in &results {
                println!(
                    "{},{:e},{},{}",
                    r.component,
                    r.max_rel_error,
                    r.entries,
                    r.passed(GRADCHECK_TOLERANCE)
                );
            }
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&results).expect("results serialize")
        ),
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed(GRADCHECK_TOLERANCE))
        .map(|r| format!("{} ({:e})", r.component, r.max_rel_error))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            Status::CheckFailed,
            format!(
                "gradient check failed (tolerance {GRADCHECK_TOLERANCE:e}): {}",
                failed.join(", ")
            ),
        ))
    }
}

fn cmd_scenario(a: &ScenarioArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(p) => ScenarioSpec::parse(&read_input(p)?)?,
        None => {
            let mode: FeatureMode = a.features.parse()?;
            match a.preset {
                Preset::Single => ScenarioSpec {
                    feature_mode: mode,
                    ..ScenarioSpec::default()
                },
                Preset::Crossing => ScenarioSpec::crossing(mode),
            }
        }
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let s = generate_scenario(&spec)?;
    fs::create_dir_all(&a.out).map_err(|e| {
        Failure::new(
            Status::MissingInput,
            format!("cannot create {}: {e}", a.out.display()),
        )
    })?;
    write_output(&a.out.join("gt.txt"), &write_mot_ground_truth(&s.gt))?;
    write_output(&a.out.join("det.txt"), &write_mot_detections(&s.dets))?;
    write_output(&a.out.join("det.feat"), &write_features(&s.features))?;
    write_output(&a.out.join("scenario.cfg"), &spec.to_text())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Scenario(a) => cmd_scenario(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.status as u8)
        }
    }
}
