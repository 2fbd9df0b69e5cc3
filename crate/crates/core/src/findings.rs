//! Structured findings document handed to the language model.
//!
//! Serialization is canonical: fields in declaration order, two-space
//! indentation, a trailing newline, and region percentages printed with
//! exactly two decimals. Percentages are rounded to two decimals when the
//! document is built, so parsing and re-serializing is lossless.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::Value;
use thiserror::Error;

use crate::model::{CoverageTable, SegmentationResult};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const SCHEMA_JSON: &str = include_str!("../schemas/findings.schema.json");
pub const NO_OVERLAP_NOTE: &str =
    "no atlas-region overlap: the segmented tumor mask does not intersect any labelled region on the selected atlas slice";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictedClass {
    Glioma,
    Meningioma,
    PituitaryTumor,
}

impl PredictedClass {
    pub const ALL: [PredictedClass; 3] = [
        PredictedClass::Glioma,
        PredictedClass::Meningioma,
        PredictedClass::PituitaryTumor,
    ];

    /// Human-readable name used in prompts and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            PredictedClass::Glioma => "Glioma",
            PredictedClass::Meningioma => "Meningioma",
            PredictedClass::PituitaryTumor => "Pituitary Tumor",
        }
    }

    /// Lowercase stem that identifies a mention of this class in free text.
    pub fn mention_stem(self) -> &'static str {
        match self {
            PredictedClass::Glioma => "glioma",
            PredictedClass::Meningioma => "meningioma",
            PredictedClass::PituitaryTumor => "pituitary",
        }
    }
}

impl fmt::Display for PredictedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '+')
        .flat_map(|c| c.to_lowercase())
        .collect()
}

impl FromStr for PredictedClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match squash(s).as_str() {
            "glioma" | "gliomatumor" => Ok(PredictedClass::Glioma),
            "meningioma" | "meningiomatumor" => Ok(PredictedClass::Meningioma),
            "pituitary" | "pituitarytumor" | "pituitarytumour" => Ok(PredictedClass::PituitaryTumor),
            _ => Err(format!(
                "unknown class {s:?}; expected glioma, meningioma or pituitary"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SaliencyMethod {
    GradCAM,
    GradCAMpp,
    ScoreCAM,
}

impl SaliencyMethod {
    pub const ALL: [SaliencyMethod; 3] = [
        SaliencyMethod::GradCAM,
        SaliencyMethod::GradCAMpp,
        SaliencyMethod::ScoreCAM,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            SaliencyMethod::GradCAM => "Grad-CAM",
            SaliencyMethod::GradCAMpp => "Grad-CAM++",
            SaliencyMethod::ScoreCAM => "ScoreCAM",
        }
    }

    /// File-name tag, e.g. `heatmap_gradcampp.npy`.
    pub fn file_tag(self) -> &'static str {
        match self {
            SaliencyMethod::GradCAM => "gradcam",
            SaliencyMethod::GradCAMpp => "gradcampp",
            SaliencyMethod::ScoreCAM => "scorecam",
        }
    }
}

impl fmt::Display for SaliencyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for SaliencyMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match squash(s).as_str() {
            "gradcam" => Ok(SaliencyMethod::GradCAM),
            "gradcampp" | "gradcam++" | "gradcamplusplus" => Ok(SaliencyMethod::GradCAMpp),
            "scorecam" => Ok(SaliencyMethod::ScoreCAM),
            _ => Err(format!(
                "unknown saliency method {s:?}; expected gradcam, gradcampp or scorecam"
            )),
        }
    }
}

fn two_decimals<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{v:.2}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

/// Rounds to two decimals the same way the serializer prints.
pub fn round2(v: f64) -> f64 {
    format!("{v:.2}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntry {
    pub name: String,
    pub label: u32,
    pub voxel_count: usize,
    #[serde(serialize_with = "two_decimals")]
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub dsc: f64,
    pub iou: f64,
    pub alpha_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_image_id: String,
    pub atlas_id: String,
    pub slice_index: usize,
    /// RFC 3339 timestamp.
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingsDocument {
    pub schema_version: String,
    pub model_name: String,
    pub predicted_class: PredictedClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction_confidence: Option<f64>,
    pub saliency_method: SaliencyMethod,
    pub regions: Vec<RegionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub segmentation_metrics: SegmentationMetrics,
    pub provenance: Provenance,
}

/// Classifier-side metadata that is not derived from the images.
#[derive(Debug, Clone, PartialEq)]
pub struct FindingsMeta {
    pub model_name: String,
    pub predicted_class: PredictedClass,
    pub prediction_confidence: Option<f64>,
    pub saliency_method: SaliencyMethod,
    pub provenance: Provenance,
}

/// One schema or consistency violation, located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum FindingsError {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("{} violation(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Violations(Vec<Violation>),
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

impl FindingsDocument {
    /// Canonical UTF-8 bytes.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document is serializable");
        s.push('\n');
        s
    }

    pub fn alpha_star(&self) -> f64 {
        self.segmentation_metrics.alpha_star
    }
}

/// Assembles a document from one sample's coverage table and segmentation.
pub fn build_findings(
    meta: FindingsMeta,
    coverage: &CoverageTable,
    seg: &SegmentationResult,
) -> Result<FindingsDocument, FindingsError> {
    if coverage.mask_shape != seg.mask.shape() {
        return Err(FindingsError::Inconsistent(format!(
            "coverage table was computed on a {:?} mask but the segmentation mask is {:?}",
            coverage.mask_shape,
            seg.mask.shape()
        )));
    }
    if coverage.foreground != seg.mask.count() {
        return Err(FindingsError::Inconsistent(format!(
            "coverage table counts {} foreground pixels, segmentation mask has {}",
            coverage.foreground,
            seg.mask.count()
        )));
    }
    if meta.provenance.source_image_id.trim().is_empty() {
        return Err(FindingsError::Inconsistent("empty source image id".into()));
    }

    let regions: Vec<RegionEntry> = coverage
        .rows
        .iter()
        .map(|r| RegionEntry {
            name: r.region_name.clone(),
            label: r.label,
            voxel_count: r.voxel_count,
            percentage: round2(r.percentage),
        })
        .collect();
    let note = regions.is_empty().then(|| NO_OVERLAP_NOTE.to_string());

    let doc = FindingsDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        model_name: meta.model_name,
        predicted_class: meta.predicted_class,
        prediction_confidence: meta.prediction_confidence,
        saliency_method: meta.saliency_method,
        regions,
        note,
        segmentation_metrics: SegmentationMetrics {
            dsc: seg.dsc,
            iou: seg.iou,
            alpha_star: seg.alpha_star as f64,
        },
        provenance: meta.provenance,
    };
    let problems = semantic_checks(&doc);
    if !problems.is_empty() {
        return Err(FindingsError::Violations(problems));
    }
    Ok(doc)
}

fn compiled_schema() -> &'static jsonschema::JSONSchema {
    static SCHEMA: OnceLock<jsonschema::JSONSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let schema: Value = serde_json::from_str(SCHEMA_JSON).expect("shipped schema is JSON");
        jsonschema::JSONSchema::compile(&schema).expect("shipped schema compiles")
    })
}

fn schema_violations(instance: &Value) -> Vec<Violation> {
    match compiled_schema().validate(instance) {
        Ok(()) => Vec::new(),
        Err(errors) => errors
            .map(|e| Violation {
                pointer: e.instance_path.to_string(),
                message: e.to_string(),
            })
            .collect(),
    }
}

/// Rounding slack for two-decimal percentages.
const PCT_SLACK: f64 = 0.005 + 1e-9;

/// Cross-field rules the schema cannot express.
fn semantic_checks(doc: &FindingsDocument) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |pointer: String, message: String| out.push(Violation { pointer, message });

    let total: usize = doc.regions.iter().map(|r| r.voxel_count).sum();
    for (i, r) in doc.regions.iter().enumerate() {
        if !(0.0..=100.0).contains(&r.percentage) {
            push(
                format!("/regions/{i}/percentage"),
                format!("{} is outside [0, 100]", r.percentage),
            );
        }
        let exact = r.voxel_count as f64 / total as f64 * 100.0;
        if (r.percentage - exact).abs() > PCT_SLACK {
            push(
                format!("/regions/{i}/percentage"),
                format!(
                    "{} does not match voxel_count share {exact:.4}",
                    r.percentage
                ),
            );
        }
        if i > 0 && doc.regions[i - 1].voxel_count < r.voxel_count {
            push(
                format!("/regions/{i}/voxel_count"),
                "regions are not sorted by descending voxel_count".into(),
            );
        }
    }
    if !doc.regions.is_empty() {
        let sum: f64 = doc.regions.iter().map(|r| r.percentage).sum();
        if (sum - 100.0).abs() > PCT_SLACK * doc.regions.len() as f64 {
            push("/regions".into(), format!("percentages sum to {sum}, not 100"));
        }
    } else if doc.note.is_none() {
        push("/note".into(), "an empty region list requires a note".into());
    }

    let m = &doc.segmentation_metrics;
    for (name, v) in [("dsc", m.dsc), ("iou", m.iou)] {
        if !(0.0..=1.0).contains(&v) {
            push(
                format!("/segmentation_metrics/{name}"),
                format!("{v} is outside [0, 1]"),
            );
        }
    }
    if m.iou > m.dsc + 1e-9 {
        push(
            "/segmentation_metrics/iou".into(),
            format!("iou {} exceeds dsc {}", m.iou, m.dsc),
        );
    }
    if !(0.0..=100.0).contains(&m.alpha_star) {
        push(
            "/segmentation_metrics/alpha_star".into(),
            format!("{} is outside [0, 100]", m.alpha_star),
        );
    }
    if let Some(c) = doc.prediction_confidence {
        if !(0.0..=1.0).contains(&c) {
            push(
                "/prediction_confidence".into(),
                format!("{c} is outside [0, 1]"),
            );
        }
    }
    if chrono::DateTime::parse_from_rfc3339(&doc.provenance.created_at).is_err() {
        push(
            "/provenance/created_at".into(),
            format!("{:?} is not an RFC 3339 timestamp", doc.provenance.created_at),
        );
    }
    out
}

/// Parses and validates a findings document, collecting every violation.
pub fn validate_findings(raw: &str) -> Result<FindingsDocument, FindingsError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| FindingsError::Malformed(e.to_string()))?;
    let violations = schema_violations(&value);
    if !violations.is_empty() {
        return Err(FindingsError::Violations(violations));
    }
    let doc: FindingsDocument = serde_json::from_value(value)
        .map_err(|e| FindingsError::Malformed(e.to_string()))?;
    let violations = semantic_checks(&doc);
    if !violations.is_empty() {
        return Err(FindingsError::Violations(violations));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinaryMask, CoverageRow};

    pub(crate) fn coverage(counts: &[(u32, &str, usize)]) -> (CoverageTable, SegmentationResult) {
        let total: usize = counts.iter().map(|c| c.2).sum();
        let rows = counts
            .iter()
            .map(|&(label, name, n)| CoverageRow {
                label,
                region_name: name.into(),
                voxel_count: n,
                percentage: n as f64 / total as f64 * 100.0,
            })
            .collect();
        let mask = BinaryMask::from_fn(40, 40, |r, _| r * 40 < total.max(1) * 4 && total > 0);
        let table = CoverageTable {
            rows,
            mask_shape: mask.shape(),
            foreground: mask.count(),
            warnings: vec![],
        };
        let seg = SegmentationResult {
            mask,
            alpha_star: 88,
            threshold_value: 0.61,
            dsc: 0.71,
            iou: 0.55,
            search_dsc: 0.7,
        };
        (table, seg)
    }

    fn meta() -> FindingsMeta {
        FindingsMeta {
            model_name: "InceptionResNetV2".into(),
            predicted_class: PredictedClass::Meningioma,
            prediction_confidence: Some(0.93),
            saliency_method: SaliencyMethod::GradCAMpp,
            provenance: Provenance {
                source_image_id: "sample-001".into(),
                atlas_id: "HarvardOxford-cort-maxprob-thr25-2mm".into(),
                slice_index: 45,
                created_at: "2026-01-01T00:00:00Z".into(),
            },
        }
    }

    fn report_box_counts() -> Vec<(u32, &'static str, usize)> {
        // 75/117 = 64.10%, 38/117 = 32.48%, 2/117 = 1.71%.
        vec![
            (29, "Cingulate Gyrus, anterior division", 75),
            (2, "Insular Cortex", 38),
            (30, "Cingulate Gyrus, posterior division", 2),
            (42, "Central Opercular Cortex", 2),
        ]
    }

    #[test]
    fn builds_from_four_region_table() {
        let (table, seg) = coverage(&report_box_counts());
        let doc = build_findings(meta(), &table, &seg).unwrap();
        assert_eq!(doc.regions[0].name, "Cingulate Gyrus, anterior division");
        assert_eq!(doc.regions[0].percentage, 64.10);
        assert!(doc.note.is_none());
        let json = doc.to_canonical_json();
        assert!(json.contains("\"percentage\": 64.10"));
        assert!(json.contains("\"percentage\": 1.71"));
    }

    #[test]
    fn empty_table_gets_note() {
        let (table, seg) = coverage(&[]);
        let doc = build_findings(meta(), &table, &seg).unwrap();
        assert!(doc.regions.is_empty());
        assert_eq!(doc.note.as_deref(), Some(NO_OVERLAP_NOTE));
        validate_findings(&doc.to_canonical_json()).unwrap();
    }

    #[test]
    fn round_trip_is_identity() {
        let (table, seg) = coverage(&report_box_counts());
        let doc = build_findings(meta(), &table, &seg).unwrap();
        let json = doc.to_canonical_json();
        let back = validate_findings(&json).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_canonical_json(), json);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (table, mut seg) = coverage(&report_box_counts());
        seg.mask = BinaryMask::empty(10, 10);
        assert!(matches!(
            build_findings(meta(), &table, &seg),
            Err(FindingsError::Inconsistent(_))
        ));
    }

    fn valid_value() -> Value {
        let (table, seg) = coverage(&report_box_counts());
        let doc = build_findings(meta(), &table, &seg).unwrap();
        serde_json::from_str(&doc.to_canonical_json()).unwrap()
    }

    fn violations(v: &Value) -> Vec<Violation> {
        match validate_findings(&v.to_string()) {
            Err(FindingsError::Violations(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_percentage_is_located() {
        let mut v = valid_value();
        v["regions"][0]["percentage"] = serde_json::json!(120.0);
        let vs = violations(&v);
        assert!(vs.iter().any(|x| x.pointer == "/regions/0/percentage"), "{vs:?}");
    }

    #[test]
    fn missing_saliency_method_is_named() {
        let mut v = valid_value();
        v.as_object_mut().unwrap().remove("saliency_method");
        let vs = violations(&v);
        assert!(vs.iter().any(|x| x.message.contains("saliency_method")), "{vs:?}");
    }

    #[test]
    fn collects_every_violation() {
        let mut v = valid_value();
        v["segmentation_metrics"]["dsc"] = serde_json::json!(1.5);
        v["predicted_class"] = serde_json::json!("Astrocytoma");
        v["regions"][1]["label"] = serde_json::json!(-3);
        assert!(violations(&v).len() >= 3);
    }

    #[test]
    fn semantic_violations() {
        let mut v = valid_value();
        v["regions"][0]["percentage"] = serde_json::json!(50.0);
        assert!(violations(&v).iter().any(|x| x.message.contains("voxel_count share")));

        let mut v = valid_value();
        v["provenance"]["created_at"] = serde_json::json!("yesterday");
        assert!(violations(&v).iter().any(|x| x.pointer == "/provenance/created_at"));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(
            validate_findings("{not json"),
            Err(FindingsError::Malformed(_))
        ));
    }

    #[test]
    fn lenient_enum_parsing() {
        assert_eq!("Grad-CAM++".parse(), Ok(SaliencyMethod::GradCAMpp));
        assert_eq!("scorecam".parse(), Ok(SaliencyMethod::ScoreCAM));
        assert_eq!("pituitary_tumor".parse(), Ok(PredictedClass::PituitaryTumor));
        assert_eq!("Glioma".parse(), Ok(PredictedClass::Glioma));
        assert!("lymphoma".parse::<PredictedClass>().is_err());
    }
}
