//! Prompt construction, narrative generation and grounding checks.
//!
//! Every generated report carries SHA-256 digests of the exact prompt and of
//! the canonical findings bytes it was produced from.

mod client;
mod ground;
pub mod mock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use crate::findings::FindingsDocument;

pub use client::{LlmEndpointConfig, ReportError, API_KEY_ENV};
pub use ground::{ground_check, region_lexicon, GroundingViolation};

/// Required report sections, in order.
pub const REPORT_SECTIONS: [&str; 4] = [
    "Model Performance Summary",
    "Detailed Regional Impact",
    "Recommendation",
    "References",
];

const SYSTEM_PROMPT: &str = "You are a neuroradiology reporting assistant. You write concise, \
radiological-style reports that explain the output of a brain tumor classification model and \
its saliency-based tumor segmentation. You never state facts that are not given to you.";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// System and user messages for the chat request.
pub fn build_messages(doc: &FindingsDocument) -> (String, String) {
    let mut user = String::new();
    user.push_str(
        "Write a medical report for the MRI sample described by the findings below.\n\
         Use ONLY the facts contained in the JSON. Do not mention any brain region, number, \
         tumor class or method that does not appear in it.\n\n",
    );
    user.push_str("FINDINGS (JSON):\n```json\n");
    user.push_str(&doc.to_canonical_json());
    user.push_str("```\n\n");
    user.push_str("The report must contain exactly these sections, in this order:\n");
    let guidance = [
        "name the classification model, the predicted class and the saliency method, and state \
         the segmentation quality (dsc, iou, alpha_star) exactly as given.",
        "for every entry in \"regions\", give the region name exactly as written, its percentage \
         overlap with two decimals, the usual function of that region, and the possible clinical \
         impact of its involvement.",
        "treatment and follow-up considerations consistent with the predicted class and the \
         involved regions.",
        "the findings document (schema version, source image id, atlas id, slice index) the \
         report is based on.",
    ];
    for (i, (section, hint)) in REPORT_SECTIONS.iter().zip(guidance).enumerate() {
        let _ = writeln!(user, "{}. {section}: {hint}", i + 1);
    }
    if let Some(note) = &doc.note {
        let _ = writeln!(
            user,
            "\nNote: {note}. State this plainly in Detailed Regional Impact instead of listing regions."
        );
    }
    user.push_str(
        "\nWrite percentages with two decimals followed by %. Do not write any other percentage.\n",
    );
    (SYSTEM_PROMPT.to_string(), user)
}

/// The full prompt text (system message, blank line, user message). Pure in
/// the document.
pub fn build_prompt(doc: &FindingsDocument) -> String {
    let (system, user) = build_messages(doc);
    format!("{system}\n\n{user}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReport {
    pub text: String,
    pub model_id: String,
    /// SHA-256 of [`build_prompt`] output.
    pub prompt_hash: String,
    /// SHA-256 of the canonical findings JSON.
    pub findings_hash: String,
    pub created_at: String,
    /// Retried attempts before the successful one.
    pub retries: u32,
}

impl GeneratedReport {
    /// `true` when both digests match the given document.
    pub fn verify(&self, doc: &FindingsDocument) -> bool {
        self.prompt_hash == sha256_hex(build_prompt(doc).as_bytes())
            && self.findings_hash == sha256_hex(doc.to_canonical_json().as_bytes())
    }
}

/// Where report text comes from.
#[derive(Debug, Clone)]
pub enum ReportSource {
    /// Deterministic template filled from the document; no network access.
    Offline,
    Endpoint(LlmEndpointConfig),
}

pub const OFFLINE_MODEL_ID: &str = "offline-template";

/// Deterministic template report that only restates document facts.
pub fn stub_report(doc: &FindingsDocument) -> String {
    let m = &doc.segmentation_metrics;
    let p = &doc.provenance;
    let mut s = String::new();
    s.push_str("Model Report: Brain Tumour Classification and Segmentation\n\n");

    let _ = writeln!(s, "{}", REPORT_SECTIONS[0]);
    let _ = write!(
        s,
        "The classification was performed with {}. The model predicted the tumor class as {}",
        doc.model_name, doc.predicted_class
    );
    match doc.prediction_confidence {
        Some(c) => {
            let _ = writeln!(s, " with a confidence of {:.2}%.", c * 100.0);
        }
        None => s.push_str(".\n"),
    }
    let _ = writeln!(
        s,
        "The saliency map was produced with {}. Adaptive percentile thresholding selected \
         percentile {} of the saliency map. The final tumor mask reached a Dice similarity \
         coefficient of {:.4} and an intersection over union of {:.4} against the reference mask.\n",
        doc.saliency_method, m.alpha_star, m.dsc, m.iou
    );

    let _ = writeln!(s, "{}", REPORT_SECTIONS[1]);
    if doc.regions.is_empty() {
        let note = doc.note.as_deref().unwrap_or("no atlas-region overlap");
        let _ = writeln!(s, "No named region is involved. Detail: {note}.\n");
    } else {
        let _ = writeln!(
            s,
            "The segmented tumor overlaps {} labelled region(s) on axial slice {} of the atlas {}.",
            doc.regions.len(),
            p.slice_index,
            p.atlas_id
        );
        for r in &doc.regions {
            let _ = writeln!(
                s,
                "- {}: {:.2}% overlap ({} pixels).",
                r.name, r.percentage, r.voxel_count
            );
        }
        s.push('\n');
    }

    let _ = writeln!(s, "{}", REPORT_SECTIONS[2]);
    s.push_str(
        "Correlate these findings with the complete imaging study and the clinical presentation. \
         The listed regions indicate where the model focused and should guide, not replace, \
         expert review.\n\n",
    );

    let _ = writeln!(s, "{}", REPORT_SECTIONS[3]);
    let _ = writeln!(
        s,
        "Findings document schema {} for source image {} on atlas {} slice {}, created {}.",
        doc.schema_version, p.source_image_id, p.atlas_id, p.slice_index, p.created_at
    );
    s
}

/// Produces a narrative for the document from the chosen source.
///
/// Offline reports reuse the document's `created_at` so the output is
/// reproducible; endpoint reports are stamped with the current time.
pub fn generate_report(
    doc: &FindingsDocument,
    source: &ReportSource,
) -> Result<GeneratedReport, ReportError> {
    let prompt = build_prompt(doc);
    let prompt_hash = sha256_hex(prompt.as_bytes());
    let findings_hash = sha256_hex(doc.to_canonical_json().as_bytes());
    match source {
        ReportSource::Offline => Ok(GeneratedReport {
            text: stub_report(doc),
            model_id: OFFLINE_MODEL_ID.to_string(),
            prompt_hash,
            findings_hash,
            created_at: doc.provenance.created_at.clone(),
            retries: 0,
        }),
        ReportSource::Endpoint(cfg) => {
            let (system, user) = build_messages(doc);
            let (text, retries) = client::complete(cfg, &system, &user)?;
            Ok(GeneratedReport {
                text,
                model_id: cfg.model_id.clone(),
                prompt_hash,
                findings_hash,
                created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                retries,
            })
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::findings::*;

    pub(crate) fn sample_doc(regions: &[(&str, u32, usize)]) -> FindingsDocument {
        let total: usize = regions.iter().map(|r| r.2).sum();
        FindingsDocument {
            schema_version: SCHEMA_VERSION.into(),
            model_name: "InceptionResNetV2".into(),
            predicted_class: PredictedClass::Meningioma,
            prediction_confidence: Some(0.9312),
            saliency_method: SaliencyMethod::GradCAMpp,
            regions: regions
                .iter()
                .map(|&(name, label, n)| RegionEntry {
                    name: name.into(),
                    label,
                    voxel_count: n,
                    percentage: round2(n as f64 / total as f64 * 100.0),
                })
                .collect(),
            note: regions.is_empty().then(|| NO_OVERLAP_NOTE.into()),
            segmentation_metrics: SegmentationMetrics {
                dsc: 0.4123,
                iou: 0.2597,
                alpha_star: 91.0,
            },
            provenance: Provenance {
                source_image_id: "case-17".into(),
                atlas_id: "HarvardOxford-cort".into(),
                slice_index: 45,
                created_at: "2026-03-01T12:00:00Z".into(),
            },
        }
    }

    pub(crate) fn four_regions() -> FindingsDocument {
        sample_doc(&[
            ("Cingulate Gyrus, anterior division", 29, 75),
            ("Insular Cortex", 2, 38),
            ("Cingulate Gyrus, posterior division", 30, 2),
            ("Central Opercular Cortex", 42, 2),
        ])
    }

    #[test]
    fn prompt_is_deterministic_and_complete() {
        let doc = four_regions();
        let a = build_prompt(&doc);
        assert_eq!(a, build_prompt(&doc));
        for r in &doc.regions {
            assert!(a.contains(&r.name));
        }
        for section in REPORT_SECTIONS {
            assert!(a.contains(section));
        }
        assert!(a.contains(&doc.to_canonical_json()));
        assert!(a.contains("\"dsc\": 0.4123"));
        assert!(a.contains("\"alpha_star\": 91.0"));
    }

    #[test]
    fn empty_regions_prompt_has_note() {
        let doc = sample_doc(&[]);
        assert!(build_prompt(&doc).contains(NO_OVERLAP_NOTE));
    }

    #[test]
    fn offline_report_is_grounded_and_audited() {
        let doc = four_regions();
        let r = generate_report(&doc, &ReportSource::Offline).unwrap();
        assert_eq!(r, generate_report(&doc, &ReportSource::Offline).unwrap());
        for region in &doc.regions {
            assert!(r.text.contains(&region.name));
        }
        assert!(r.text.contains("64.10%"));
        assert!(r.text.contains("0.4123"));
        assert!(r.verify(&doc));
        assert!(ground_check(&r, &doc).is_empty(), "{:?}", ground_check(&r, &doc));

        let empty = sample_doc(&[]);
        let r = generate_report(&empty, &ReportSource::Offline).unwrap();
        assert!(ground_check(&r, &empty).is_empty());
        assert!(!r.verify(&doc));
    }
}
