//! Batch command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (unknown flags, values out
//! of their domain), 2 for I/O or data errors. `NFA_THREADS` caps the worker
//! count (`0` or unset: one per core).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::baselines::{baseline_regions, connected_components, BaselineMode, Region};
use crate::detector::{self, DetectorParams};
use crate::error::Error;
use crate::eval::{detection_regions, match_objects, EvalReport, MatchCounts};
use crate::scoremap_io::{
    load_detections, load_mask, load_scoremap, save_detections, save_records, ScoreFormat, ScoreMap,
};
use crate::synth::{read_manifest, write_corpus, CorpusSpec, NoiseLaw, Target, TargetProfile};
use crate::transform::{PixelRect, TransformParams};

pub const THREADS_ENV: &str = "NFA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "acontrario",
    version,
    about = "A-contrario small-target detection on score maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect significant targets on a score map.
    Detect(DetectCmd),
    /// Fixed-threshold baseline (s) or threshold + opening (sf).
    Baseline(BaselineCmd),
    /// Object-level precision/recall/F1 of detection files against masks.
    Eval(EvalCmd),
    /// Generate a synthetic corpus of score maps and masks.
    Synth(SynthCmd),
    /// Run a method over a corpus while sweeping one parameter.
    Bench(BenchCmd),
}

#[derive(Debug, Args)]
struct DetectorArgs {
    /// Score floor; scores at or below it are ignored.
    #[arg(long, default_value_t = crate::transform::DEFAULT_TAU)]
    tau: f64,
    /// Number of z-levels of the transformed score axis.
    #[arg(long, default_value_t = crate::transform::DEFAULT_BINS)]
    bins: usize,
    /// Maximal 2D footprint area of a target, in pixels.
    #[arg(long = "max-area", default_value_t = detector::DEFAULT_MAX_AREA)]
    max_area: usize,
    /// Minimal significance (-ln of the NFA threshold).
    #[arg(long = "s-min", default_value_t = detector::DEFAULT_S_MIN, allow_negative_numbers = true)]
    s_min: f64,
    /// Keep detections above this fraction of the top significance.
    #[arg(long = "relative-factor", default_value_t = detector::DEFAULT_RELATIVE_FACTOR)]
    relative_factor: f64,
}

impl DetectorArgs {
    fn params(&self) -> Result<DetectorParams, CliError> {
        let transform = TransformParams::new(self.tau, self.bins).map_err(CliError::usage)?;
        DetectorParams::new(self.max_area, self.s_min, self.relative_factor, transform)
            .map_err(CliError::usage)
    }
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Score map (.pgm, .png or .smap).
    #[arg(long = "in")]
    input: PathBuf,
    /// Input format; guessed from the extension when absent.
    #[arg(long, value_parser = ["pgm", "png", "smap"])]
    format: Option<String>,
}

impl InputArgs {
    fn load(&self) -> Result<ScoreMap, CliError> {
        let format = match &self.format {
            Some(f) => f.parse().map_err(CliError::usage)?,
            None => ScoreFormat::from_path(&self.input).ok_or_else(|| {
                CliError::Usage(format!(
                    "cannot guess the format of {}; pass --format",
                    self.input.display()
                ))
            })?,
        };
        Ok(load_scoremap(&self.input, format)?)
    }
}

#[derive(Debug, Args)]
struct DetectCmd {
    #[command(flatten)]
    input: InputArgs,
    /// Detection file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Merge detections whose footprints overlap with IoU > 0.5.
    #[arg(long = "merge-overlaps")]
    merge_overlaps: bool,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// `s` (threshold) or `sf` (threshold + opening).
    #[arg(long, default_value = "s")]
    mode: String,
    #[arg(long, default_value_t = crate::baselines::DEFAULT_THETA)]
    theta: f64,
    /// Opening radius; the structuring element is a square of side 2r+1.
    #[arg(long, default_value_t = crate::baselines::DEFAULT_RADIUS)]
    radius: usize,
}

impl BaselineArgs {
    fn validated(&self) -> Result<(BaselineMode, f64, usize), CliError> {
        let mode = self.mode.parse().map_err(CliError::usage)?;
        check_theta(self.theta)?;
        if self.radius == 0 {
            return Err(CliError::Usage("--radius must be at least 1".into()));
        }
        Ok((mode, self.theta, self.radius))
    }
}

fn check_theta(theta: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(CliError::Usage(format!(
            "--theta must lie in [0, 1], got {theta}"
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
struct BaselineCmd {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    baseline: BaselineArgs,
}

#[derive(Debug, Args)]
struct EvalCmd {
    /// Detection files, or directories of `.txt` detection files.
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    /// Ground-truth masks (.pgm/.png), or directories of masks.
    #[arg(long, required = true, num_args = 1..)]
    gt: Vec<PathBuf>,
    /// Machine-readable report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthCmd {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of map/mask pairs.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    /// `uniform:lo,hi` or `beta:a,b`.
    #[arg(long, default_value = "uniform:0,1")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target present in every map: `cx,cy,w,h,intensity`. Repeatable.
    #[arg(long)]
    target: Vec<String>,
    /// Number of randomly placed targets per map.
    #[arg(long = "random-targets", default_value_t = 0)]
    random_targets: usize,
    /// Size of random targets, `WxH`.
    #[arg(long = "target-size", default_value = "5x5")]
    target_size: String,
    /// Intensity of random targets.
    #[arg(long, default_value_t = 0.9)]
    intensity: f64,
    /// Gaussian intensity profile instead of solid rectangles.
    #[arg(long)]
    gaussian: bool,
}

#[derive(Debug, Args)]
struct BenchCmd {
    /// Corpus directory written by `synth`.
    #[arg(long)]
    corpus: PathBuf,
    /// `nfa`, `s` or `sf`.
    #[arg(long, default_value = "nfa")]
    method: String,
    /// `s-min:v1,v2,...` (nfa) or `theta:v1,v2,...` (s, sf).
    #[arg(long)]
    sweep: String,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, default_value_t = crate::baselines::DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = crate::baselines::DEFAULT_RADIUS)]
    radius: usize,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print 0 in the wall-time column so tables can be diffed.
    #[arg(long = "omit-timing")]
    omit_timing: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    fn usage(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = thread_count().and_then(|threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        pool.install(|| dispatch(cli.command))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn thread_count() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}='{v}' is not a worker count"))),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Detect(c) => cmd_detect(c),
        Command::Baseline(c) => cmd_baseline(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Synth(c) => cmd_synth(c),
        Command::Bench(c) => cmd_bench(c),
    }
}

fn cmd_detect(c: DetectCmd) -> Result<(), CliError> {
    let params = c.detector.params()?;
    let map = c.input.load()?;
    let run = detector::run(&map, &params);
    if run.saturated {
        eprintln!("warning: point cloud fills its bounding volume (p >= 1); no detection possible");
    }
    let detections = if c.merge_overlaps {
        detector::merge_overlaps(&run.detections)
    } else {
        run.detections
    };
    save_detections(&detections, &c.out)?;
    eprintln!(
        "{}: {} points, p = {:.6}, {} candidates, {} detections",
        c.input.input.display(),
        run.num_points,
        run.p,
        run.candidates.len(),
        detections.len()
    );
    Ok(())
}

fn cmd_baseline(c: BaselineCmd) -> Result<(), CliError> {
    let (mode, theta, radius) = c.baseline.validated()?;
    let map = c.input.load()?;
    let regions = baseline_regions(&map, mode, theta, radius);
    let records: Vec<_> = regions.iter().map(|r| r.record(&map)).collect();
    save_records(&records, &c.out)?;
    eprintln!("{}: {} regions", c.input.input.display(), regions.len());
    Ok(())
}

/// Expands directories into their sorted files with one of `extensions`.
fn expand(paths: &[PathBuf], extensions: &[&str]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn record_regions(path: &Path) -> Result<Vec<Region>, CliError> {
    Ok(load_detections(path)?
        .into_iter()
        .map(|r| {
            Region::from_rect(PixelRect {
                x0: r.x,
                y0: r.y,
                width: r.w.max(1),
                height: r.h.max(1),
            })
        })
        .collect())
}

fn cmd_eval(c: EvalCmd) -> Result<(), CliError> {
    let preds = expand(&c.pred, &["txt"])?;
    let gts = expand(&c.gt, &["pgm", "png"])?;
    if preds.len() != gts.len() {
        return Err(CliError::Usage(format!(
            "{} prediction files but {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(CliError::Usage("nothing to evaluate".into()));
    }
    let mut report = String::new();
    let mut total = MatchCounts::default();
    for (i, (p, g)) in preds.iter().zip(&gts).enumerate() {
        let predictions = record_regions(p)?;
        let truth = connected_components(&load_mask(g)?);
        let counts = match_objects(&predictions, &truth);
        total = total + counts;
        let r = EvalReport::from(counts);
        println!("[{i}] {} vs {}: {r}", p.display(), g.display());
        let _ = writeln!(report, "image={i} {}", r.record());
    }
    let overall = EvalReport::from(total);
    println!("micro-average over {} images: {overall}", preds.len());
    let _ = writeln!(report, "total images={} {}", preds.len(), overall.record());
    if let Some(out) = &c.out {
        fs::write(out, report).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("bad size '{s}', expected WxH"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
}

fn cmd_synth(c: SynthCmd) -> Result<(), CliError> {
    let noise: NoiseLaw = c.noise.parse().map_err(CliError::usage)?;
    let fixed_targets = c
        .target
        .iter()
        .map(|t| t.parse::<Target>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::usage)?;
    if !(c.intensity > 0.0 && c.intensity <= 1.0) {
        return Err(CliError::Usage(format!(
            "--intensity must lie in (0, 1], got {}",
            c.intensity
        )));
    }
    if c.width == 0 || c.height == 0 {
        return Err(CliError::Usage(
            "--width and --height must be positive".into(),
        ));
    }
    let corpus = CorpusSpec {
        count: c.n,
        width: c.width,
        height: c.height,
        noise,
        profile: if c.gaussian {
            TargetProfile::Gaussian
        } else {
            TargetProfile::Solid
        },
        fixed_targets,
        random_targets: c.random_targets,
        random_size: parse_size(&c.target_size)?,
        random_intensity: c.intensity,
        seed: c.seed,
    };
    // parameter problems are usage errors, filesystem ones data errors
    corpus.item(0).map_err(CliError::usage)?;
    let entries = write_corpus(&corpus, &c.out)?;
    eprintln!(
        "wrote {} map/mask pairs to {}",
        entries.len(),
        c.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BenchMethod {
    Nfa,
    Baseline(BaselineMode),
}

fn parse_sweep(s: &str) -> Result<(String, Vec<f64>), CliError> {
    let bad = || CliError::Usage(format!("bad sweep '{s}', expected name:v1,v2,..."));
    let (name, values) = s.split_once(':').ok_or_else(bad)?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok((name.to_string(), values))
}

/// One row of the bench table.
struct BenchRow {
    value: f64,
    report: EvalReport,
    mean_detections: f64,
    wall_ms: f64,
}

fn cmd_bench(c: BenchCmd) -> Result<(), CliError> {
    let method = match c.method.as_str() {
        "nfa" => BenchMethod::Nfa,
        m => BenchMethod::Baseline(m.parse().map_err(CliError::usage)?),
    };
    let (param, values) = parse_sweep(&c.sweep)?;
    match (method, param.as_str()) {
        (BenchMethod::Nfa, "s-min") | (BenchMethod::Baseline(_), "theta") => {}
        _ => {
            return Err(CliError::Usage(format!(
                "cannot sweep '{param}' with method '{}'",
                c.method
            )))
        }
    }
    let base = c.detector.params()?;
    check_theta(c.theta)?;
    if c.radius == 0 {
        return Err(CliError::Usage("--radius must be at least 1".into()));
    }
    for &v in &values {
        match method {
            BenchMethod::Nfa => {
                base.with_s_min(v).map_err(CliError::usage)?;
            }
            BenchMethod::Baseline(_) => check_theta(v)?,
        }
    }

    let entries = read_manifest(&c.corpus)?;
    let corpus = entries
        .iter()
        .map(|e| {
            let map = load_scoremap(&e.map, ScoreFormat::RawF32)?;
            let truth = connected_components(&load_mask(&e.mask)?);
            Ok((map, truth))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    if corpus.is_empty() {
        return Err(CliError::Data(Error::Format(
            "corpus manifest lists no images".into(),
        )));
    }

    let rows: Vec<BenchRow> = values
        .iter()
        .map(|&value| {
            let start = Instant::now();
            let per_image: Vec<(MatchCounts, usize)> = corpus
                .par_iter()
                .map(|(map, truth)| {
                    let predictions = match method {
                        BenchMethod::Nfa => {
                            let params = base.with_s_min(value).expect("validated");
                            detection_regions(&detector::detect(map, &params))
                        }
                        BenchMethod::Baseline(mode) => baseline_regions(map, mode, value, c.radius),
                    };
                    (match_objects(&predictions, truth), predictions.len())
                })
                .collect();
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let total = per_image
                .iter()
                .fold(MatchCounts::default(), |a, (m, _)| a + *m);
            let detections: usize = per_image.iter().map(|(_, n)| n).sum();
            BenchRow {
                value,
                report: total.into(),
                mean_detections: detections as f64 / corpus.len() as f64,
                wall_ms: if c.omit_timing { 0.0 } else { wall_ms },
            }
        })
        .collect();

    let mut table = String::from("param\tvalue\tprecision\trecall\tf1\tmean_detections\twall_ms\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{param}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.1}",
            r.value, r.report.precision, r.report.recall, r.report.f1, r.mean_detections, r.wall_ms
        );
    }
    print!("{table}");
    if let Some(out) = &c.out {
        fs::write(out, &table).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }
    Ok(())
}
