//! `neuroexplain` command-line tool.
//!
//! Exit codes: 0 on success, 2 for input errors, 3 for processing errors.
//! Failures print one line to stderr prefixed `error[input]:` or
//! `error[processing]:`.

mod config;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::FileConfig;
use neuroexplain::atlas::map_rois;
use neuroexplain::findings::{validate_findings, PredictedClass, SaliencyMethod};
use neuroexplain::io;
use neuroexplain::pipeline::{
    coverage_csv, run_batch, run_pipeline, ErrorClass, PipelineError, RunSettings, SampleInputs,
    DEFAULT_TIMESTAMP,
};
use neuroexplain::report::{generate_report, ground_check, LlmEndpointConfig, ReportSource};
use neuroexplain::roi::extract_rois;
use neuroexplain::segmentation::{segment_heatmap, SegmentationParams, TieBreak};
use neuroexplain::text_metrics::{evaluate_text, summarize_corpus, TermFrequencyEmbedder};

#[derive(Debug)]
struct CliError {
    class: ErrorClass,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            class: ErrorClass::Input,
            message: message.into(),
        }
    }

    fn processing(message: impl Into<String>) -> Self {
        CliError {
            class: ErrorClass::Processing,
            message: message.into(),
        }
    }
}

impl From<neuroexplain::Error> for CliError {
    fn from(e: neuroexplain::Error) -> Self {
        CliError {
            class: ErrorClass::of(&e),
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let mut message = e.to_string();
        if !e.partial.is_empty() {
            message.push_str(&format!(" ({} partial artifact(s) kept)", e.partial.len()));
        }
        CliError {
            class: e.class,
            message,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "neuroexplain", version, about = "Saliency segmentation, atlas mapping and grounded reports for brain MRI")]
struct Cli {
    /// TOML configuration file (overridden by environment and flags).
    #[arg(long, global = true, env = "NEUROEXPLAIN_CONFIG")]
    config: Option<PathBuf>,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adaptive-threshold a heatmap against a reference mask.
    Segment(SegmentArgs),
    /// Label 4-connected components of a mask.
    Rois(RoisArgs),
    /// Tally atlas regions under a mask.
    MapAtlas(MapAtlasArgs),
    /// Build or validate a findings document.
    #[command(subcommand)]
    Findings(FindingsCommand),
    /// Generate a narrative report from a findings document.
    Report(ReportArgs),
    /// Readability, diversity and coherence metrics of report text.
    EvaluateText(EvaluateArgs),
    /// Run every stage and write all artifacts with a manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone)]
struct SegParamArgs {
    /// Percentile search range `low:high` (default 70:97).
    #[arg(long, value_name = "LOW:HIGH")]
    alpha_range: Option<String>,
    /// Minimum component size kept after thresholding (default 50).
    #[arg(long)]
    s_min: Option<usize>,
    /// Closing disk radius (default 3).
    #[arg(long)]
    radius: Option<usize>,
    /// Percentile preferred on Dice ties: lowest or highest (default lowest).
    #[arg(long)]
    tie_break: Option<String>,
}

#[derive(Args, Clone)]
struct AtlasArgs {
    /// Atlas label volume (NIfTI-1, optionally gzipped).
    #[arg(long, env = "NEUROEXPLAIN_ATLAS")]
    atlas: Option<PathBuf>,
    /// Label-name table (CSV or FSL XML).
    #[arg(long, env = "NEUROEXPLAIN_ATLAS_LABELS")]
    atlas_labels: Option<PathBuf>,
    /// Axial slice index; defaults to the middle slice.
    #[arg(long)]
    atlas_slice: Option<usize>,
    /// Identifier recorded in provenance; defaults to the volume file name.
    #[arg(long)]
    atlas_id: Option<String>,
}

#[derive(Args, Clone)]
struct MetaArgs {
    /// Exporter `pred.json` supplying model name, class and confidence.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    model_name: Option<String>,
    /// glioma, meningioma or pituitary.
    #[arg(long)]
    predicted_class: Option<String>,
    #[arg(long)]
    confidence: Option<f64>,
    /// gradcam, gradcampp or scorecam (default gradcampp).
    #[arg(long)]
    method: Option<String>,
    /// Source image id; defaults to the heatmap file stem.
    #[arg(long)]
    sample_id: Option<String>,
    /// RFC 3339 creation time (default SOURCE_DATE_EPOCH, then the epoch for
    /// offline runs or the current time otherwise).
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args, Clone)]
struct LlmArgs {
    /// Chat-completions server root.
    #[arg(long, env = "NEUROEXPLAIN_LLM_URL")]
    endpoint: Option<String>,
    #[arg(long, env = "NEUROEXPLAIN_LLM_MODEL")]
    llm_model: Option<String>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Use the deterministic template instead of an endpoint.
    #[arg(long)]
    offline: bool,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    heatmap: PathBuf,
    #[arg(long)]
    gt_mask: PathBuf,
    /// Output directory for mask.png and segmentation.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    seg: SegParamArgs,
}

#[derive(Args)]
struct RoisArgs {
    /// Binary mask (PNG or NPY).
    #[arg(long)]
    mask: PathBuf,
    /// Include pixel coordinates of every region.
    #[arg(long)]
    coords: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapAtlasArgs {
    #[arg(long)]
    mask: PathBuf,
    #[command(flatten)]
    atlas: AtlasArgs,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FindingsCommand {
    /// Segment, map and print the findings document.
    Build(BuildArgs),
    /// Check a findings document against the schema and its invariants.
    Validate {
        file: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    heatmap: PathBuf,
    #[arg(long)]
    gt_mask: PathBuf,
    #[command(flatten)]
    seg: SegParamArgs,
    #[command(flatten)]
    atlas: AtlasArgs,
    #[command(flatten)]
    meta: MetaArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Findings document.
    #[arg(long)]
    findings: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
    /// Report text output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes hashes, model id and grounding violations as JSON.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Report text files; `-` or none reads standard input.
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, required_unless_present = "batch")]
    heatmap: Option<PathBuf>,
    #[arg(long, required_unless_present = "batch")]
    gt_mask: Option<PathBuf>,
    /// Directory of exporter sample folders, processed in parallel.
    #[arg(long, conflicts_with_all = ["heatmap", "gt_mask"])]
    batch: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    seg: SegParamArgs,
    #[command(flatten)]
    atlas: AtlasArgs,
    #[command(flatten)]
    meta: MetaArgs,
    #[command(flatten)]
    llm: LlmArgs,
    /// Stop after findings.json; no endpoint is contacted.
    #[arg(long)]
    skip_report: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.message.replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {line}", e.class.tag());
            ExitCode::from(e.class.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(CliError::input)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Segment(a) => cmd_segment(a, &file),
        Command::Rois(a) => cmd_rois(a),
        Command::MapAtlas(a) => cmd_map_atlas(a, &file),
        Command::Findings(FindingsCommand::Validate { file: p }) => cmd_validate(&p),
        Command::Findings(FindingsCommand::Build(a)) => cmd_build(a, &file),
        Command::Report(a) => cmd_report(a, &file),
        Command::EvaluateText(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a, &file),
    }
}

// ----------------------------------------------------------------- settings

fn parse_alpha_range(s: &str) -> CliResult<(u32, u32)> {
    let bad = || CliError::input(format!("--alpha-range {s:?}: expected LOW:HIGH with 0 <= LOW <= HIGH <= 100"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || hi > 100 {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn seg_params(a: &SegParamArgs, file: &FileConfig) -> CliResult<SegmentationParams> {
    let f = &file.segmentation;
    let mut p = SegmentationParams::default();
    if let Some(r) = a.alpha_range.as_ref().or(f.alpha_range.as_ref()) {
        (p.alpha_low, p.alpha_high) = parse_alpha_range(r)?;
    }
    if let Some(s) = a.s_min.or(f.s_min) {
        p.s_min = s;
    }
    if let Some(r) = a.radius.or(f.radius) {
        p.radius = r;
    }
    if let Some(t) = a.tie_break.as_ref().or(f.tie_break.as_ref()) {
        p.tie_break = match t.to_ascii_lowercase().as_str() {
            "lowest" | "lowest_alpha" => TieBreak::LowestAlpha,
            "highest" | "highest_alpha" => TieBreak::HighestAlpha,
            _ => return Err(CliError::input(format!("--tie-break {t:?}: expected lowest or highest"))),
        };
    }
    p.validate()?;
    Ok(p)
}

struct AtlasChoice {
    volume: PathBuf,
    labels: PathBuf,
    id: String,
    slice: Option<usize>,
}

fn atlas_choice(a: &AtlasArgs, file: &FileConfig) -> CliResult<AtlasChoice> {
    let f = &file.atlas;
    let volume = a
        .atlas
        .clone()
        .or_else(|| f.volume.clone())
        .ok_or_else(|| CliError::input("no atlas volume: pass --atlas, set NEUROEXPLAIN_ATLAS or [atlas] volume"))?;
    let labels = a
        .atlas_labels
        .clone()
        .or_else(|| f.labels.clone())
        .ok_or_else(|| CliError::input("no label table: pass --atlas-labels, set NEUROEXPLAIN_ATLAS_LABELS or [atlas] labels"))?;
    let id = a.atlas_id.clone().or_else(|| f.id.clone()).unwrap_or_else(|| {
        let name = volume.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        [".nii.gz", ".nii", ".hdr.gz", ".hdr"]
            .iter()
            .find_map(|ext| name.strip_suffix(ext))
            .unwrap_or(&name)
            .to_string()
    });
    Ok(AtlasChoice {
        volume,
        labels,
        id,
        slice: a.atlas_slice.or(f.slice),
    })
}

fn method(meta: &MetaArgs, file: &FileConfig) -> CliResult<SaliencyMethod> {
    match meta.method.as_ref().or(file.run.method.as_ref()) {
        Some(m) => m.parse().map_err(CliError::input),
        None => Ok(SaliencyMethod::GradCAMpp),
    }
}

fn timestamp(meta: &MetaArgs, file: &FileConfig, offline: bool) -> CliResult<String> {
    if let Some(t) = meta.timestamp.as_ref().or(file.run.timestamp.as_ref()) {
        chrono::DateTime::parse_from_rfc3339(t)
            .map_err(|e| CliError::input(format!("--timestamp {t:?}: {e}")))?;
        return Ok(t.clone());
    }
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = epoch
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("SOURCE_DATE_EPOCH {epoch:?} is not an integer")))?;
        let t = chrono::DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| CliError::input(format!("SOURCE_DATE_EPOCH {secs} out of range")))?;
        return Ok(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    Ok(if offline {
        DEFAULT_TIMESTAMP.to_string()
    } else {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    })
}

fn sample_inputs(heatmap: &Path, gt_mask: &Path, meta: &MetaArgs) -> CliResult<SampleInputs> {
    let pred = meta.pred.as_deref().map(io::read_prediction).transpose()?;
    let model_name = meta
        .model_name
        .clone()
        .or_else(|| pred.as_ref().map(|p| p.model_name.clone()))
        .ok_or_else(|| CliError::input("no model name: pass --model-name or --pred"))?;
    let predicted_class: PredictedClass = match (&meta.predicted_class, &pred) {
        (Some(c), _) => c.parse().map_err(CliError::input)?,
        (None, Some(p)) => p.predicted_class,
        (None, None) => return Err(CliError::input("no predicted class: pass --predicted-class or --pred")),
    };
    let prediction_confidence = meta.confidence.or(pred.as_ref().and_then(|p| p.confidence));
    if let Some(c) = prediction_confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(CliError::input(format!("--confidence {c} outside [0, 1]")));
        }
    }
    let source_image_id = meta.sample_id.clone().unwrap_or_else(|| {
        heatmap
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sample".into())
    });
    Ok(SampleInputs {
        heatmap: heatmap.to_path_buf(),
        gt_mask: gt_mask.to_path_buf(),
        model_name,
        predicted_class,
        prediction_confidence,
        source_image_id,
    })
}

fn report_source(llm: &LlmArgs, file: &FileConfig) -> CliResult<ReportSource> {
    if llm.offline {
        return Ok(ReportSource::Offline);
    }
    let f = &file.llm;
    let base_url = llm.endpoint.clone().or_else(|| f.base_url.clone()).ok_or_else(|| {
        CliError::input("no LLM endpoint: pass --endpoint, set NEUROEXPLAIN_LLM_URL, or use --offline")
    })?;
    let d = LlmEndpointConfig::default();
    let cfg = LlmEndpointConfig {
        base_url,
        model_id: llm.llm_model.clone().or_else(|| f.model.clone()).unwrap_or(d.model_id),
        api_key: None,
        timeout_secs: llm.timeout_secs.or(f.timeout_secs).unwrap_or(d.timeout_secs),
        max_retries: llm.max_retries.or(f.max_retries).unwrap_or(d.max_retries),
        temperature: f.temperature.unwrap_or(d.temperature),
        backoff_base_ms: f.backoff_ms.unwrap_or(d.backoff_base_ms),
    }
    .with_env_key();
    cfg.validate().map_err(|e| CliError::input(e.to_string()))?;
    Ok(ReportSource::Endpoint(cfg))
}

// ------------------------------------------------------------------ output

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::processing(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::processing(format!("stdout: {e}")))
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

// ---------------------------------------------------------------- commands

fn cmd_segment(a: SegmentArgs, file: &FileConfig) -> CliResult {
    let params = seg_params(&a.seg, file)?;
    let heatmap = io::read_heatmap(&a.heatmap)?;
    let reference = io::read_mask(&a.gt_mask)?;
    let seg = segment_heatmap(&heatmap, &reference, &params)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::input(format!("{}: {e}", a.out_dir.display())))?;
    io::write_mask_png(&a.out_dir.join("mask.png"), &seg.mask).map_err(|e| CliError::processing(e.to_string()))?;
    let metrics = json!({
        "alpha_star": seg.alpha_star,
        "threshold": seg.threshold_value,
        "search_dsc": seg.search_dsc,
        "dsc": seg.dsc,
        "iou": seg.iou,
        "foreground": seg.mask.count(),
    });
    emit(Some(&a.out_dir.join("segmentation.json")), &pretty(&metrics))
}

fn cmd_rois(a: RoisArgs) -> CliResult {
    let mask = io::read_mask(&a.mask)?;
    let rois: Vec<serde_json::Value> = extract_rois(&mask)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = json!({"id": i + 1, "area": r.area, "bbox": r.bbox});
            if a.coords {
                v["coords"] = json!(r.coords);
            }
            v
        })
        .collect();
    emit(a.out.as_deref(), &pretty(&rois))
}

fn cmd_map_atlas(a: MapAtlasArgs, file: &FileConfig) -> CliResult {
    let mask = io::read_mask(&a.mask)?;
    let choice = atlas_choice(&a.atlas, file)?;
    let atlas = io::read_atlas(&choice.volume, &choice.labels)?;
    let z = resolve_slice(choice.slice, atlas.depth())?;
    let table = map_rois(&mask, &atlas, z)?;
    emit(a.out.as_deref(), &coverage_csv(&table)?)
}

fn resolve_slice(slice: Option<usize>, depth: usize) -> CliResult<usize> {
    match slice {
        Some(z) if z < depth => Ok(z),
        Some(z) => Err(CliError::input(format!(
            "--atlas-slice {z} is out of range for an atlas with {depth} slices"
        ))),
        None => {
            log::warn!("no --atlas-slice given; using middle slice {} of {depth}", depth / 2);
            Ok(depth / 2)
        }
    }
}

fn cmd_validate(p: &Path) -> CliResult {
    let raw = fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
    validate_findings(&raw).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
    println!("{}: valid", p.display());
    Ok(())
}

fn cmd_build(a: BuildArgs, file: &FileConfig) -> CliResult {
    let params = seg_params(&a.seg, file)?;
    let choice = atlas_choice(&a.atlas, file)?;
    let sample = sample_inputs(&a.heatmap, &a.gt_mask, &a.meta)?;
    let heatmap = io::read_heatmap(&sample.heatmap)?;
    let reference = io::read_mask(&sample.gt_mask)?;
    let atlas = io::read_atlas(&choice.volume, &choice.labels)?;
    let z = resolve_slice(choice.slice, atlas.depth())?;
    let seg = segment_heatmap(&heatmap, &reference, &params)?;
    let table = map_rois(&seg.mask, &atlas, z)?;
    let meta = neuroexplain::findings::FindingsMeta {
        model_name: sample.model_name,
        predicted_class: sample.predicted_class,
        prediction_confidence: sample.prediction_confidence,
        saliency_method: method(&a.meta, file)?,
        provenance: neuroexplain::findings::Provenance {
            source_image_id: sample.source_image_id,
            atlas_id: choice.id,
            slice_index: z,
            created_at: timestamp(&a.meta, file, true)?,
        },
    };
    let doc = neuroexplain::findings::build_findings(meta, &table, &seg)
        .map_err(|e| CliError::processing(e.to_string()))?;
    emit(a.out.as_deref(), doc.to_canonical_json().as_bytes())
}

fn cmd_report(a: ReportArgs, file: &FileConfig) -> CliResult {
    let raw = fs::read_to_string(&a.findings)
        .map_err(|e| CliError::input(format!("{}: {e}", a.findings.display())))?;
    let doc = validate_findings(&raw).map_err(|e| CliError::input(format!("{}: {e}", a.findings.display())))?;
    let source = report_source(&a.llm, file)?;
    let report = generate_report(&doc, &source).map_err(|e| CliError::processing(e.to_string()))?;
    let violations = ground_check(&report, &doc);
    for v in &violations {
        log::warn!("grounding: {v:?}");
    }
    if let Some(p) = &a.audit {
        let audit = json!({
            "model_id": report.model_id,
            "prompt_hash": report.prompt_hash,
            "findings_hash": report.findings_hash,
            "created_at": report.created_at,
            "retries": report.retries,
            "grounding_violations": violations,
        });
        emit(Some(p), &pretty(&audit))?;
    }
    emit(a.out.as_deref(), report.text.as_bytes())
}

fn read_text(p: &Path) -> CliResult<String> {
    if p.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::input(format!("stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let files = if a.files.is_empty() { vec![PathBuf::from("-")] } else { a.files };
    let mut reports = Vec::new();
    for p in &files {
        let text = read_text(p)?;
        let r = evaluate_text(&text, &TermFrequencyEmbedder)
            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    if reports.len() == 1 {
        return emit(None, &pretty(&reports[0]));
    }
    let per_text: Vec<_> = files
        .iter()
        .zip(&reports)
        .map(|(p, r)| json!({"file": p.display().to_string(), "metrics": r}))
        .collect();
    let summary = summarize_corpus(&reports);
    emit(None, &pretty(&json!({"texts": per_text, "summary": summary})))
}

fn cmd_pipeline(a: PipelineArgs, file: &FileConfig) -> CliResult {
    let params = seg_params(&a.seg, file)?;
    let choice = atlas_choice(&a.atlas, file)?;
    let report = if a.skip_report {
        None
    } else {
        Some(report_source(&a.llm, file)?)
    };
    let deterministic = report.as_ref().is_none_or(|r| matches!(r, ReportSource::Offline));
    let settings = RunSettings {
        atlas_volume: choice.volume,
        atlas_labels: choice.labels,
        atlas_id: choice.id,
        atlas_slice: choice.slice,
        params,
        saliency_method: method(&a.meta, file)?,
        report,
        created_at: timestamp(&a.meta, file, deterministic)?,
    };

    if let Some(root) = &a.batch {
        let results = run_batch(root, &settings, &a.out_dir)?;
        let failed: Vec<_> = results.iter().filter(|(_, r)| r.is_err()).collect();
        for (id, r) in &results {
            match r {
                Ok(o) => println!("{id}: ok ({} artifacts)", o.artifacts.len()),
                Err(e) => println!("{id}: failed: {e}"),
            }
        }
        return match failed.first() {
            None => Ok(()),
            Some((_, Err(e))) => Err(CliError {
                class: e.class,
                message: format!("{} of {} sample(s) failed; first: {e}", failed.len(), results.len()),
            }),
            Some(_) => unreachable!(),
        };
    }

    let heatmap = a.heatmap.as_deref().expect("clap requires --heatmap without --batch");
    let gt = a.gt_mask.as_deref().expect("clap requires --gt-mask without --batch");
    let sample = sample_inputs(heatmap, gt, &a.meta)?;
    let outcome = run_pipeline(&sample, &settings, &a.out_dir)?;
    println!(
        "{}: {} artifacts, manifest sha256 {}",
        outcome.out_dir.display(),
        outcome.artifacts.len(),
        outcome.manifest_sha256
    );
    Ok(())
}
