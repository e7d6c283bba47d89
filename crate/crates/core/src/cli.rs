//! `tsmap`: batch saliency, evaluation, spectrum and decomposition runs over
//! a dataset manifest.
//!
//! Exit codes: 0 on success, 1 when an entry or a write failed, 2 on usage
//! errors (bad flags, invalid settings, manifest lacking a needed column).
//!
//! Entries are processed in parallel on a pool of `--workers` threads, but
//! every kernel is sequential and reports are written in manifest order, so
//! outputs do not depend on the worker count. Wall-clock timings go to a
//! separate `timing.csv`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::decomp::{hooi, HooiOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::io::{
    read_image, read_mask, read_tensor, read_vector, write_array, write_image, write_report, ArrayValue,
    Cell, DatasetManifest, ManifestEntry, Report,
};
use crate::metrics::{
    average_drop, average_increase, embedding_mse, miou, spectrum_report, threshold_sweep, BinaryMask,
    ConfidencePair, EmbeddingPair, SpectrumReport, DEFAULT_SPECTRUM_DEPTH, DEFAULT_SWEEP, DEFAULT_THRESHOLD,
};
use crate::saliency::{
    apply_mask, centered_svd_spectrum, compute, render_overlay, tucker_spectrum, upsample_bilinear, Method,
    SaliencyMap,
};
use crate::tensor::DenseMatrix;

#[derive(Debug, Parser)]
#[command(name = "tsmap", version, about = "Label-independent saliency maps from feature tensors")]
pub struct Cli {
    /// Log per-entry progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute one saliency map per manifest entry.
    Saliency(SaliencyArgs),
    /// Evaluate saliency maps with AD, AI, embedding MSE and mIoU.
    Eval(EvalArgs),
    /// Report leading singular value ratios of both decompositions.
    Spectrum(SpectrumArgs),
    /// Tucker-decompose a single tensor file.
    Decompose(DecomposeArgs),
}

#[derive(Debug, Args)]
struct HooiArgs {
    /// HOOI stopping tolerance on the relative change of the core norm.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,

    /// HOOI iteration cap.
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

impl HooiArgs {
    fn options(&self, ranks: Option<[usize; 3]>) -> Result<HooiOptions, CliError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(CliError::Usage("--max-iter must be at least 1".into()));
        }
        Ok(HooiOptions {
            ranks,
            tol: self.tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[arg(long)]
    manifest: PathBuf,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, default_value_t = 1)]
    workers: usize,

    #[command(flatten)]
    hooi: HooiArgs,
}

#[derive(Debug, Args)]
struct SaliencyArgs {
    #[command(flatten)]
    batch: BatchArgs,

    #[arg(long, default_value_t = Method::Tsm)]
    method: Method,

    /// Write `<id>.overlay.png` for entries with an image.
    #[arg(long)]
    overlay: bool,

    /// Write `<id>.masked.png` (image times upsampled map) for entries with
    /// an image.
    #[arg(long)]
    mask_output: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    batch: BatchArgs,

    /// Comma-separated subset of ad, ai, mse, miou. Defaults to every
    /// metric whose manifest columns are filled for all entries.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,

    /// Method used to compute maps for mIoU when --saliency-dir is absent.
    #[arg(long, default_value_t = Method::Tsm)]
    method: Method,

    /// Read `<id>.saliency.npy` maps from here instead of recomputing.
    #[arg(long)]
    saliency_dir: Option<PathBuf>,

    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,

    /// Also write an mIoU threshold sweep; without a value the grid is
    /// 0.4 to 0.9 in steps of 0.1.
    #[arg(long, num_args = 0..=1, require_equals = true, value_name = "T1,T2,...")]
    sweep: Option<Option<String>>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[command(flatten)]
    batch: BatchArgs,

    /// Number of leading singular values reported.
    #[arg(long, default_value_t = DEFAULT_SPECTRUM_DEPTH)]
    k: usize,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    tensor: PathBuf,

    #[arg(long)]
    out: PathBuf,

    /// Per-mode ranks as `r1,r2,r3`; full rank when omitted.
    #[arg(long, value_parser = parse_ranks, value_name = "R1,R2,R3")]
    ranks: Option<[usize; 3]>,

    #[command(flatten)]
    hooi: HooiArgs,
}

fn parse_ranks(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad rank {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|p| format!("expected three ranks, got {}", p.len()))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failed(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Manifest(_) | Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            e => CliError::Failed(e),
        }
    }
}

/// Exit code of a run that finished, possibly with failed entries.
type Outcome = std::result::Result<i32, CliError>;

pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .try_init();

    let outcome = match &cli.command {
        Command::Saliency(a) => cmd_saliency(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Decompose(a) => cmd_decompose(a),
    };
    match outcome {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("tsmap: {msg}");
            2
        }
        Err(CliError::Failed(e)) => {
            eprintln!("tsmap: {e}");
            1
        }
    }
}

fn settings_comments(method: Option<Method>, hooi: &HooiOptions) -> Vec<String> {
    let sweep: Vec<String> = DEFAULT_SWEEP.iter().map(|t| t.to_string()).collect();
    let mut lines = Vec::new();
    if let Some(m) = method {
        lines.push(format!("method={m}"));
    }
    lines.extend([
        format!("tol={}", hooi.tol),
        format!("max_iter={}", hooi.max_iter),
        format!(
            "defaults: tol={DEFAULT_TOL} max_iter={DEFAULT_MAX_ITER} threshold={DEFAULT_THRESHOLD} sweep={} k={DEFAULT_SPECTRUM_DEPTH}",
            sweep.join(",")
        ),
    ]);
    lines
}

fn prepare(batch: &BatchArgs) -> Result<(DatasetManifest, rayon::ThreadPool), CliError> {
    if batch.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let manifest = DatasetManifest::read(&batch.manifest)?;
    std::fs::create_dir_all(&batch.out).map_err(|source| {
        CliError::Failed(Error::Io {
            path: batch.out.clone(),
            source,
        })
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", batch.workers)))?;
    Ok((manifest, pool))
}

/// Runs `f` on every entry on the pool; results come back in manifest order.
fn map_entries<T: Send>(
    pool: &rayon::ThreadPool,
    manifest: &DatasetManifest,
    f: impl Fn(&ManifestEntry) -> Result<T> + Sync,
) -> Vec<(Result<T>, f64)> {
    pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let start = Instant::now();
                let r = f(e);
                match &r {
                    Ok(_) => log::info!("{}: done", e.id),
                    Err(err) => log::error!("{}: {err}", e.id),
                }
                (r, start.elapsed().as_secs_f64())
            })
            .collect()
    })
}

fn output_stem(id: &str) -> Result<&str> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(Error::InvalidParameter(format!(
            "id {id:?} cannot be used as a file name"
        )));
    }
    Ok(id)
}

fn map_to_matrix(m: &SaliencyMap) -> DenseMatrix {
    DenseMatrix::new(m.height(), m.width(), m.data().to_vec()).expect("map dimensions match its data")
}

fn matrix_to_map(m: &DenseMatrix) -> Result<SaliencyMap> {
    SaliencyMap::new(m.rows(), m.cols(), m.data().to_vec())
}

struct SaliencyRecord {
    height: usize,
    width: usize,
    iterations: Option<usize>,
}

fn saliency_entry(args: &SaliencyArgs, opts: &HooiOptions, e: &ManifestEntry) -> Result<SaliencyRecord> {
    let stem = output_stem(&e.id)?;
    let out = &args.batch.out;
    let f = read_tensor(&e.features)?;
    let result = compute(args.method, &f, opts)?;
    write_array(
        &ArrayValue::Matrix(map_to_matrix(&result.map)),
        out.join(format!("{stem}.saliency.npy")),
    )?;
    if let (Some(image), true) = (&e.image, args.overlay || args.mask_output) {
        let img = read_image(image)?;
        let up = upsample_bilinear(&result.map, img.height(), img.width())?;
        if args.overlay {
            write_image(&render_overlay(&img, &up)?, out.join(format!("{stem}.overlay.png")))?;
        }
        if args.mask_output {
            write_image(&apply_mask(&img, &up)?, out.join(format!("{stem}.masked.png")))?;
        }
    }
    Ok(SaliencyRecord {
        height: result.map.height(),
        width: result.map.width(),
        iterations: result.iterations,
    })
}

fn finish_entries(failed: usize, total: usize) -> i32 {
    if failed > 0 {
        eprintln!("tsmap: {failed} of {total} entries failed");
        1
    } else {
        0
    }
}

fn cmd_saliency(args: &SaliencyArgs) -> Outcome {
    let opts = args.batch.hooi.options(None)?;
    let (manifest, pool) = prepare(&args.batch)?;
    let results = map_entries(&pool, &manifest, |e| saliency_entry(args, &opts, e));

    let mut summary = Report::new(["id", "status", "height", "width", "hooi_iterations", "error"]);
    summary.comments = settings_comments(Some(args.method), &opts);
    let mut timing = Report::new(["id", "seconds"]);
    let mut failed = 0;
    for (e, (r, secs)) in manifest.entries.iter().zip(results) {
        let row: Vec<Cell> = match r {
            Ok(rec) => vec![
                e.id.as_str().into(),
                "ok".into(),
                rec.height.into(),
                rec.width.into(),
                rec.iterations.map_or(Cell::Text(String::new()), Cell::Int),
                "".into(),
            ],
            Err(err) => {
                failed += 1;
                vec![
                    e.id.as_str().into(),
                    "failed".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    err.to_string().into(),
                ]
            }
        };
        summary.push(row);
        timing.push(vec![e.id.as_str().into(), secs.into()]);
    }
    write_report(&summary, args.batch.out.join("summary.csv"))?;
    write_report(&timing, args.batch.out.join("timing.csv"))?;
    Ok(finish_entries(failed, manifest.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MetricKind {
    Ad,
    Ai,
    Mse,
    Miou,
}

impl MetricKind {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ad" => Ok(Self::Ad),
            "ai" => Ok(Self::Ai),
            "mse" => Ok(Self::Mse),
            "miou" => Ok(Self::Miou),
            other => Err(CliError::Usage(format!(
                "unknown metric {other:?}, expected ad, ai, mse or miou"
            ))),
        }
    }

    fn column(self) -> &'static str {
        match self {
            Self::Ad | Self::Ai => "p",
            Self::Mse => "embedding",
            Self::Miou => "mask",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Ad => "ad",
            Self::Ai => "ai",
            Self::Mse => "mse",
            Self::Miou => "miou",
        }
    }
}

fn check_threshold(t: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(CliError::Usage(format!("threshold {t} is outside [0, 1]")))
    }
}

fn parse_sweep(raw: &Option<Option<String>>) -> Result<Option<Vec<f64>>, CliError> {
    match raw {
        None => Ok(None),
        Some(None) => Ok(Some(DEFAULT_SWEEP.to_vec())),
        Some(Some(list)) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad sweep threshold {s:?}")))
                    .and_then(check_threshold)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
    }
}

fn eval_map(args: &EvalArgs, opts: &HooiOptions, e: &ManifestEntry) -> Result<(SaliencyMap, BinaryMask)> {
    let mask = read_mask(e.mask.as_ref().expect("mask column checked"))?;
    let map = match &args.saliency_dir {
        Some(dir) => {
            let path = dir.join(format!("{}.saliency.npy", output_stem(&e.id)?));
            match crate::io::read_array(&path)? {
                ArrayValue::Matrix(m) => matrix_to_map(&m)?,
                other => {
                    return Err(Error::ShapeMismatch(format!(
                        "{}: expected a 2-D saliency map, found shape {:?}",
                        path.display(),
                        other.shape()
                    )))
                }
            }
        }
        None => compute(args.method, &read_tensor(&e.features)?, opts)?.map,
    };
    let up = upsample_bilinear(&map, mask.height(), mask.width())?;
    Ok((up, mask))
}

fn cmd_eval(args: &EvalArgs) -> Outcome {
    let opts = args.batch.hooi.options(None)?;
    let threshold = check_threshold(args.threshold)?;
    let sweep = parse_sweep(&args.sweep)?;
    let (manifest, pool) = prepare(&args.batch)?;
    if manifest.is_empty() {
        return Err(CliError::Usage("manifest has no entries to evaluate".into()));
    }

    let kinds: Vec<MetricKind> = if args.metrics.is_empty() {
        let all = [MetricKind::Ad, MetricKind::Ai, MetricKind::Mse, MetricKind::Miou];
        let present: Vec<_> = all
            .into_iter()
            .filter(|k| manifest.require(k.column()).is_ok())
            .collect();
        if present.is_empty() {
            return Err(CliError::Usage(
                "manifest has no p/o, embedding or mask columns filled for every entry".into(),
            ));
        }
        present
    } else {
        let mut kinds = Vec::new();
        for s in &args.metrics {
            let k = MetricKind::parse(s)?;
            manifest.require(k.column())?;
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        kinds
    };
    if sweep.is_some() && !kinds.contains(&MetricKind::Miou) {
        return Err(CliError::Usage("--sweep needs the miou metric".into()));
    }

    let mut report = Report::new(["metric", "n", "value", "excluded", "display"]);
    report.comments = settings_comments(
        args.saliency_dir.is_none().then_some(args.method),
        &opts,
    );
    report.comment(format!("threshold={threshold}"));
    report.comment("ad, ai and miou are percentages; display shows mse in units of 1e-3");

    let pairs: Vec<ConfidencePair> = manifest
        .entries
        .iter()
        .filter_map(|e| e.confidence.map(|(p, o)| ConfidencePair::new(e.id.clone(), p, o)))
        .collect::<Result<_>>()?;

    for kind in &kinds {
        let row: Vec<Cell> = match kind {
            MetricKind::Ad => {
                let r = average_drop(&pairs)?;
                vec![kind.name().into(), r.n.into(), r.value.into(), r.excluded.into(), r.value.into()]
            }
            MetricKind::Ai => {
                let v = average_increase(&pairs)?;
                vec![kind.name().into(), pairs.len().into(), v.into(), 0usize.into(), v.into()]
            }
            MetricKind::Mse => {
                let loaded = map_entries(&pool, &manifest, |e| {
                    let (z, zm) = e.embeddings.as_ref().expect("embedding column checked");
                    EmbeddingPair::new(e.id.clone(), read_vector(z)?, read_vector(zm)?)
                });
                let pairs = loaded
                    .into_iter()
                    .map(|(r, _)| r)
                    .collect::<Result<Vec<_>>>()
                    .map_err(CliError::Failed)?;
                let v = embedding_mse(&pairs)?;
                vec![kind.name().into(), pairs.len().into(), v.into(), 0usize.into(), (v * 1e3).into()]
            }
            MetricKind::Miou => {
                let loaded = map_entries(&pool, &manifest, |e| eval_map(args, &opts, e));
                let (maps, masks): (Vec<_>, Vec<_>) = loaded
                    .into_iter()
                    .map(|(r, _)| r)
                    .collect::<Result<Vec<_>>>()
                    .map_err(CliError::Failed)?
                    .into_iter()
                    .unzip();
                let v = miou(&maps, &masks, threshold)?;
                if let Some(grid) = &sweep {
                    let mut table = Report::new(["threshold", "miou"]);
                    table.comments = report.comments.clone();
                    for (t, m) in threshold_sweep(&maps, &masks, grid)? {
                        table.push(vec![t.into(), m.into()]);
                    }
                    write_report(&table, args.batch.out.join("miou_sweep.csv"))?;
                }
                vec![kind.name().into(), maps.len().into(), v.into(), 0usize.into(), v.into()]
            }
        };
        report.push(row);
    }
    write_report(&report, args.batch.out.join("metrics.csv"))?;
    Ok(0)
}

fn spectrum_rows(report: &mut Report, path: &str, ids: &[&str], s: &SpectrumReport) {
    for (id, ratios) in ids.iter().zip(&s.ratios) {
        let mut row: Vec<Cell> = vec![(*id).into(), path.into()];
        row.extend(ratios.iter().map(|&r| Cell::Num(r)));
        report.push(row);
    }
}

fn cmd_spectrum(args: &SpectrumArgs) -> Outcome {
    let opts = args.batch.hooi.options(None)?;
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let (manifest, pool) = prepare(&args.batch)?;
    let results = map_entries(&pool, &manifest, |e| {
        let f = read_tensor(&e.features)?;
        let centered = centered_svd_spectrum(&f)?;
        let (tucker, _) = tucker_spectrum(&f, &opts)?;
        for s in [&centered, &tucker] {
            if !(s.values.iter().sum::<f64>() > 0.0) {
                return Err(Error::ZeroSpectrum);
            }
        }
        Ok((centered, tucker))
    });

    let mut ids = Vec::new();
    let (mut centered, mut tucker) = (Vec::new(), Vec::new());
    let mut failed = 0;
    for (e, (r, _)) in manifest.entries.iter().zip(results) {
        match r {
            Ok((c, t)) => {
                ids.push(e.id.as_str());
                centered.push(c);
                tucker.push(t);
            }
            Err(_) => failed += 1,
        }
    }

    let mut header = vec!["id".to_owned(), "path".to_owned()];
    header.extend((1..=args.k).map(|i| format!("ratio{i}")));
    let mut ratios = Report::new(header);
    ratios.comments = settings_comments(None, &opts);
    ratios.comment(format!("k={}", args.k));
    ratios.comment("ratio_i = sigma_i / sum of all sigma; centered = SVD of the channel-centered matricization");
    let mut summary = Report::new(["path", "index", "min", "q1", "median", "q3", "max"]);
    summary.comments = ratios.comments.clone();

    if !ids.is_empty() {
        for (name, spectra) in [("centered", &centered), ("tucker", &tucker)] {
            let rep = spectrum_report(spectra, args.k)?;
            spectrum_rows(&mut ratios, name, &ids, &rep);
            for (i, q) in rep.summaries.iter().enumerate() {
                summary.push(vec![
                    name.into(),
                    (i + 1).into(),
                    q.min.into(),
                    q.q1.into(),
                    q.median.into(),
                    q.q3.into(),
                    q.max.into(),
                ]);
            }
        }
    }
    write_report(&ratios, args.batch.out.join("spectrum.csv"))?;
    write_report(&summary, args.batch.out.join("spectrum_summary.csv"))?;
    Ok(finish_entries(failed, manifest.len()))
}

#[derive(Serialize)]
struct DecompositionRecord {
    tensor: String,
    shape: [usize; 3],
    ranks: [usize; 3],
    fit: f64,
    iterations: usize,
    tol: f64,
    max_iter: usize,
    core_norms: Vec<f64>,
}

fn cmd_decompose(args: &DecomposeArgs) -> Outcome {
    let opts = args.hooi.options(args.ranks)?;
    let f = read_tensor(&args.tensor)?;
    let t = hooi(&f, &opts)?;
    let io_err = |source| {
        CliError::Failed(Error::Io {
            path: args.out.clone(),
            source,
        })
    };
    std::fs::create_dir_all(&args.out).map_err(io_err)?;
    write_array(&ArrayValue::Tensor(t.core.clone()), args.out.join("core.npy"))?;
    for (i, a) in t.factors.iter().enumerate() {
        write_array(&ArrayValue::Matrix(a.clone()), args.out.join(format!("factor{}.npy", i + 1)))?;
    }
    let record = DecompositionRecord {
        tensor: args.tensor.display().to_string(),
        shape: f.shape(),
        ranks: t.ranks(),
        fit: t.fit,
        iterations: t.iterations,
        tol: opts.tol,
        max_iter: opts.max_iter,
        core_norms: t.core_norms.clone(),
    };
    let line = serde_json::to_string(&record).expect("record serializes") + "\n";
    std::fs::write(args.out.join("decomposition.jsonl"), line).map_err(io_err)?;
    println!("fit={} iterations={}", t.fit, t.iterations);
    Ok(0)
}

/// Directory listing helper for tests and scripts: output files of a
/// saliency run, sorted, excluding wall-clock timings.
pub fn deterministic_outputs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.file_name().is_some_and(|n| n != "timing.csv"));
    files.sort();
    Ok(files)
}
