//! End-to-end run for one sample or a directory of exported samples.
//!
//! Stages run in order: segment, extract ROIs, atlas map, findings, report,
//! evaluate. Artifacts land in the output directory together with
//! `manifest.json`, which lists their SHA-256 digests. When a stage fails the
//! artifacts already written are renamed with a `.partial` suffix.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::map_rois;
use crate::error::Error;
use crate::findings::{build_findings, FindingsDocument, FindingsMeta, PredictedClass, Provenance, SaliencyMethod};
use crate::io;
use crate::model::{Atlas, BoundingBox, CoverageTable};
use crate::report::{generate_report, ground_check, sha256_hex, GeneratedReport, GroundingViolation, ReportSource};
use crate::roi::extract_rois;
use crate::segmentation::{segment_heatmap, SegmentationParams};
use crate::text_metrics::{evaluate_text, TermFrequencyEmbedder, TextMetricsReport};

pub const MASK_FILE: &str = "mask.png";
pub const OVERLAY_FILE: &str = "overlay.png";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const FINDINGS_FILE: &str = "findings.json";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_METRICS_FILE: &str = "report_metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_SUFFIX: &str = ".partial";

/// Timestamp stamped on offline runs that do not supply one.
pub const DEFAULT_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Load,
    Segment,
    ExtractRois,
    AtlasMap,
    Findings,
    Report,
    Evaluate,
    Manifest,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Segment => "segment",
            Stage::ExtractRois => "extract-rois",
            Stage::AtlasMap => "atlas-map",
            Stage::Findings => "findings",
            Stage::Report => "report",
            Stage::Evaluate => "evaluate",
            Stage::Manifest => "manifest",
        })
    }
}

/// Whether a failure is the caller's input or the processing itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Processing,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Input => 2,
            ErrorClass::Processing => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorClass::Input => "input",
            ErrorClass::Processing => "processing",
        }
    }

    pub fn of(e: &Error) -> ErrorClass {
        match e {
            Error::Inconsistent(_) => ErrorClass::Processing,
            _ => ErrorClass::Input,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub class: ErrorClass,
    pub message: String,
    /// Artifacts renamed with the `.partial` suffix.
    pub partial: Vec<PathBuf>,
}

impl PipelineError {
    fn new(stage: Stage, class: ErrorClass, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            class,
            message: message.into(),
            partial: Vec::new(),
        }
    }

    fn from_core(stage: Stage, e: Error) -> Self {
        PipelineError::new(stage, ErrorClass::of(&e), e.to_string())
    }
}

/// Per-sample inputs.
#[derive(Debug, Clone)]
pub struct SampleInputs {
    pub heatmap: PathBuf,
    pub gt_mask: PathBuf,
    pub model_name: String,
    pub predicted_class: PredictedClass,
    pub prediction_confidence: Option<f64>,
    pub source_image_id: String,
}

impl SampleInputs {
    /// Reads a model-exporter sample directory: `heatmap_<method>.npy`,
    /// `gt_mask.png` and `pred.json`. The directory name is the sample id.
    pub fn from_export_dir(dir: &Path, method: SaliencyMethod) -> crate::Result<SampleInputs> {
        let pred = io::read_prediction(&dir.join("pred.json"))?;
        let id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(SampleInputs {
            heatmap: dir.join(format!("heatmap_{}.npy", method.file_tag())),
            gt_mask: dir.join("gt_mask.png"),
            model_name: pred.model_name,
            predicted_class: pred.predicted_class,
            prediction_confidence: pred.confidence,
            source_image_id: id,
        })
    }
}

/// Settings shared by every sample of a run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub atlas_volume: PathBuf,
    pub atlas_labels: PathBuf,
    pub atlas_id: String,
    /// `None` selects the middle slice.
    pub atlas_slice: Option<usize>,
    pub params: SegmentationParams,
    pub saliency_method: SaliencyMethod,
    /// `None` skips the report and evaluate stages.
    pub report: Option<ReportSource>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
struct RoiSummary {
    area: usize,
    bbox: BoundingBox,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    sample_id: &'a str,
    atlas_slice: usize,
    stages: &'a [Stage],
    inputs: &'a [ArtifactEntry],
    rois: &'a [RoiSummary],
    artifacts: &'a [ArtifactEntry],
}

#[derive(Debug, Serialize)]
struct ReportMetrics<'a> {
    metrics: &'a TextMetricsReport,
    grounding_violations: &'a [GroundingViolation],
    model_id: &'a str,
    prompt_hash: &'a str,
    findings_hash: &'a str,
    created_at: &'a str,
    retries: u32,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub atlas_slice: usize,
    pub artifacts: Vec<ArtifactEntry>,
    pub manifest_sha256: String,
    pub findings: FindingsDocument,
    pub coverage: CoverageTable,
    pub roi_count: usize,
    pub report: Option<GeneratedReport>,
    pub metrics: Option<TextMetricsReport>,
    pub violations: Vec<GroundingViolation>,
}

/// Tracks written files so they can be marked partial on failure.
struct Outputs {
    dir: PathBuf,
    written: Vec<ArtifactEntry>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, stage: Stage, name: &str) -> Result<(), PipelineError> {
        let bytes = fs::read(self.path(name)).map_err(|e| {
            PipelineError::new(stage, ErrorClass::Processing, format!("{name}: {e}"))
        })?;
        self.written.push(ArtifactEntry {
            name: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write(&mut self, stage: Stage, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        fs::write(self.path(name), bytes).map_err(|e| {
            PipelineError::new(stage, ErrorClass::Processing, format!("{name}: {e}"))
        })?;
        self.record(stage, name)
    }

    fn write_with(
        &mut self,
        stage: Stage,
        name: &str,
        f: impl FnOnce(&Path) -> crate::Result<()>,
    ) -> Result<(), PipelineError> {
        f(&self.path(name))
            .map_err(|e| PipelineError::new(stage, ErrorClass::Processing, e.to_string()))?;
        self.record(stage, name)
    }

    fn mark_partial(&self, mut err: PipelineError) -> PipelineError {
        for a in &self.written {
            let from = self.path(&a.name);
            let to = self.path(&format!("{}{PARTIAL_SUFFIX}", a.name));
            if fs::rename(&from, &to).is_ok() {
                err.partial.push(to);
            }
        }
        err
    }
}

fn input_entry(path: &Path) -> Result<ArtifactEntry, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::from_core(Stage::Load, Error::io(path, e)))?;
    Ok(ArtifactEntry {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn load_atlas(settings: &RunSettings) -> Result<Atlas, PipelineError> {
    io::read_atlas(&settings.atlas_volume, &settings.atlas_labels)
        .map_err(|e| PipelineError::from_core(Stage::Load, e))
}

fn resolve_slice(settings: &RunSettings, atlas: &Atlas, tag: &str) -> Result<usize, PipelineError> {
    let depth = atlas.depth();
    match settings.atlas_slice {
        Some(z) if z < depth => Ok(z),
        Some(z) => Err(PipelineError::new(
            Stage::Load,
            ErrorClass::Input,
            format!("--atlas-slice {z} is out of range for an atlas with {depth} slices"),
        )),
        None => {
            let z = depth / 2;
            log::warn!("[{tag}] no --atlas-slice given; using middle slice {z} of {depth}");
            Ok(z)
        }
    }
}

/// Runs every stage for one sample, writing artifacts to `out_dir`.
pub fn run_pipeline(
    sample: &SampleInputs,
    settings: &RunSettings,
    out_dir: &Path,
) -> Result<PipelineOutcome, PipelineError> {
    let atlas = load_atlas(settings)?;
    run_with_atlas(sample, settings, &atlas, out_dir)
}

fn run_with_atlas(
    sample: &SampleInputs,
    settings: &RunSettings,
    atlas: &Atlas,
    out_dir: &Path,
) -> Result<PipelineOutcome, PipelineError> {
    let tag = sample.source_image_id.as_str();
    let z = resolve_slice(settings, atlas, tag)?;
    let heatmap = io::read_heatmap(&sample.heatmap).map_err(|e| PipelineError::from_core(Stage::Load, e))?;
    let reference = io::read_mask(&sample.gt_mask).map_err(|e| PipelineError::from_core(Stage::Load, e))?;
    let inputs = [
        input_entry(&sample.heatmap)?,
        input_entry(&sample.gt_mask)?,
        input_entry(&settings.atlas_volume)?,
        input_entry(&settings.atlas_labels)?,
    ];
    fs::create_dir_all(out_dir).map_err(|e| {
        PipelineError::new(
            Stage::Load,
            ErrorClass::Input,
            format!("cannot create output directory {}: {e}", out_dir.display()),
        )
    })?;

    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        written: Vec::new(),
    };
    match run_stages(sample, settings, atlas, z, &heatmap, &reference, &inputs, &mut out) {
        Ok(outcome) => Ok(outcome),
        Err(e) => {
            log::error!("[{tag}] {e}");
            Err(out.mark_partial(e))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_stages(
    sample: &SampleInputs,
    settings: &RunSettings,
    atlas: &Atlas,
    z: usize,
    heatmap: &crate::Heatmap,
    reference: &crate::BinaryMask,
    inputs: &[ArtifactEntry],
    out: &mut Outputs,
) -> Result<PipelineOutcome, PipelineError> {
    let tag = sample.source_image_id.as_str();
    let mut stages = vec![Stage::Load];

    let seg = segment_heatmap(heatmap, reference, &settings.params)
        .map_err(|e| PipelineError::from_core(Stage::Segment, e))?;
    log::info!(
        "[{tag}] alpha*={} threshold={:.6} dsc={:.4} iou={:.4}",
        seg.alpha_star,
        seg.threshold_value,
        seg.dsc,
        seg.iou
    );
    out.write_with(Stage::Segment, MASK_FILE, |p| io::write_mask_png(p, &seg.mask))?;
    out.write_with(Stage::Segment, OVERLAY_FILE, |p| io::write_overlay(p, heatmap, &seg.mask))?;
    stages.push(Stage::Segment);

    let rois: Vec<RoiSummary> = extract_rois(&seg.mask)
        .into_iter()
        .map(|r| RoiSummary {
            area: r.area,
            bbox: r.bbox,
        })
        .collect();
    log::info!("[{tag}] {} ROI(s)", rois.len());
    stages.push(Stage::ExtractRois);

    let coverage = map_rois(&seg.mask, atlas, z).map_err(|e| PipelineError::from_core(Stage::AtlasMap, e))?;
    for w in &coverage.warnings {
        log::warn!("[{tag}] {w}");
    }
    out.write(Stage::AtlasMap, COVERAGE_FILE, &coverage_csv(&coverage)?)?;
    stages.push(Stage::AtlasMap);

    let meta = FindingsMeta {
        model_name: sample.model_name.clone(),
        predicted_class: sample.predicted_class,
        prediction_confidence: sample.prediction_confidence,
        saliency_method: settings.saliency_method,
        provenance: Provenance {
            source_image_id: sample.source_image_id.clone(),
            atlas_id: settings.atlas_id.clone(),
            slice_index: z,
            created_at: settings.created_at.clone(),
        },
    };
    let findings = build_findings(meta, &coverage, &seg)
        .map_err(|e| PipelineError::new(Stage::Findings, ErrorClass::Processing, e.to_string()))?;
    let canonical = findings.to_canonical_json();
    crate::findings::validate_findings(&canonical)
        .map_err(|e| PipelineError::new(Stage::Findings, ErrorClass::Processing, e.to_string()))?;
    out.write(Stage::Findings, FINDINGS_FILE, canonical.as_bytes())?;
    stages.push(Stage::Findings);

    let (mut report, mut metrics, mut violations) = (None, None, Vec::new());
    if let Some(source) = &settings.report {
        let generated = generate_report(&findings, source)
            .map_err(|e| PipelineError::new(Stage::Report, ErrorClass::Processing, e.to_string()))?;
        out.write(Stage::Report, REPORT_FILE, generated.text.as_bytes())?;
        stages.push(Stage::Report);

        violations = ground_check(&generated, &findings);
        for v in &violations {
            log::warn!("[{tag}] grounding: {v:?}");
        }
        let m = evaluate_text(&generated.text, &TermFrequencyEmbedder)
            .map_err(|e| PipelineError::new(Stage::Evaluate, ErrorClass::Processing, e.to_string()))?;
        let record = ReportMetrics {
            metrics: &m,
            grounding_violations: &violations,
            model_id: &generated.model_id,
            prompt_hash: &generated.prompt_hash,
            findings_hash: &generated.findings_hash,
            created_at: &generated.created_at,
            retries: generated.retries,
        };
        out.write(Stage::Evaluate, REPORT_METRICS_FILE, &pretty(&record))?;
        stages.push(Stage::Evaluate);
        report = Some(generated);
        metrics = Some(m);
    }

    let manifest = Manifest {
        tool: "neuroexplain",
        version: env!("CARGO_PKG_VERSION"),
        sample_id: tag,
        atlas_slice: z,
        stages: &stages,
        inputs,
        rois: &rois,
        artifacts: &out.written,
    };
    let manifest_bytes = pretty(&manifest);
    fs::write(out.path(MANIFEST_FILE), &manifest_bytes).map_err(|e| {
        PipelineError::new(Stage::Manifest, ErrorClass::Processing, format!("{MANIFEST_FILE}: {e}"))
    })?;

    Ok(PipelineOutcome {
        out_dir: out.dir.clone(),
        atlas_slice: z,
        artifacts: out.written.clone(),
        manifest_sha256: sha256_hex(&manifest_bytes),
        findings,
        coverage,
        roi_count: rois.len(),
        report,
        metrics,
        violations,
    })
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// `label,region,voxel_count,percentage` with percentages at 6 decimals.
pub fn coverage_csv(table: &CoverageTable) -> Result<Vec<u8>, PipelineError> {
    let fail = |e: csv::Error| PipelineError::new(Stage::AtlasMap, ErrorClass::Processing, e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "region", "voxel_count", "percentage"]).map_err(fail)?;
    for r in &table.rows {
        w.write_record([
            r.label.to_string(),
            r.region_name.clone(),
            r.voxel_count.to_string(),
            format!("{:.6}", r.percentage),
        ])
        .map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| PipelineError::new(Stage::AtlasMap, ErrorClass::Processing, e.to_string()))
}

/// Sample subdirectories of `root` that contain a `pred.json`, sorted by name.
pub fn discover_samples(root: &Path) -> crate::Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("pred.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Runs every sample under `root` in parallel; outputs go to
/// `out_root/<sample id>`. Results are in sample order.
pub fn run_batch(
    root: &Path,
    settings: &RunSettings,
    out_root: &Path,
) -> Result<Vec<(String, Result<PipelineOutcome, PipelineError>)>, PipelineError> {
    let dirs = discover_samples(root).map_err(|e| PipelineError::from_core(Stage::Load, e))?;
    if dirs.is_empty() {
        return Err(PipelineError::new(
            Stage::Load,
            ErrorClass::Input,
            format!("no sample directories with pred.json under {}", root.display()),
        ));
    }
    let atlas = load_atlas(settings)?;
    Ok(dirs
        .par_iter()
        .map(|dir| {
            let id = dir.file_name().unwrap().to_string_lossy().into_owned();
            let result = SampleInputs::from_export_dir(dir, settings.saliency_method)
                .map_err(|e| PipelineError::from_core(Stage::Load, e))
                .and_then(|sample| run_with_atlas(&sample, settings, &atlas, &out_root.join(&id)));
            (id, result)
        })
        .collect())
}
