//! Heuristic consistency check of a narrative against its findings document.
//!
//! Advisory only: a clean result does not prove the report is faithful.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use super::GeneratedReport;
use crate::findings::{FindingsDocument, PredictedClass};

const LEXICON_SRC: &str = include_str!("../../data/region_lexicon.txt");

/// Maximum distance between a quoted percentage and a document value.
pub const PERCENT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingViolation {
    /// Known atlas region mentioned but absent from the document.
    UnlistedRegion { name: String },
    /// Percentage not within tolerance of any document value.
    UnsupportedPercentage { text: String, value: f64 },
    /// Tumor class other than the predicted one.
    ContradictingClass { mentioned: PredictedClass },
}

/// Region names the checker can recognise in free text.
pub fn region_lexicon() -> &'static [String] {
    static LEXICON: OnceLock<Vec<String>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        LEXICON_SRC
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect()
    })
}

fn percent_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d+(?:\.\d+)?)\s*%").unwrap())
}

fn class_regex(class: PredictedClass) -> &'static Regex {
    static RES: OnceLock<Vec<Regex>> = OnceLock::new();
    let all = RES.get_or_init(|| {
        PredictedClass::ALL
            .iter()
            .map(|c| Regex::new(&format!(r"(?i)\b{}", c.mention_stem())).unwrap())
            .collect()
    });
    &all[PredictedClass::ALL.iter().position(|c| *c == class).unwrap()]
}

fn document_percentages(doc: &FindingsDocument) -> Vec<f64> {
    let m = &doc.segmentation_metrics;
    let mut values: Vec<f64> = doc.regions.iter().map(|r| r.percentage).collect();
    values.extend([m.dsc * 100.0, m.iou * 100.0, m.alpha_star]);
    values.extend(doc.prediction_confidence.map(|c| c * 100.0));
    values
}

/// Flags unlisted regions, unsupported percentages and contradicting class
/// mentions in the report text.
pub fn ground_check(report: &GeneratedReport, doc: &FindingsDocument) -> Vec<GroundingViolation> {
    check_text(&report.text, doc)
}

pub(crate) fn check_text(text: &str, doc: &FindingsDocument) -> Vec<GroundingViolation> {
    let lower = text.to_lowercase();
    let listed: Vec<String> = doc.regions.iter().map(|r| r.name.to_lowercase()).collect();
    let mut out = Vec::new();

    let mut unlisted = BTreeSet::new();
    for name in region_lexicon() {
        let key = name.to_lowercase();
        if lower.contains(&key) && !listed.iter().any(|l| l.contains(&key)) {
            unlisted.insert(name.clone());
        }
    }
    out.extend(
        unlisted
            .into_iter()
            .map(|name| GroundingViolation::UnlistedRegion { name }),
    );

    let known = document_percentages(doc);
    for cap in percent_regex().captures_iter(text) {
        let value: f64 = cap[1].parse().expect("regex matched a number");
        if !known.iter().any(|k| (k - value).abs() <= PERCENT_TOLERANCE + 1e-9) {
            out.push(GroundingViolation::UnsupportedPercentage {
                text: cap[0].to_string(),
                value,
            });
        }
    }

    for class in PredictedClass::ALL {
        if class != doc.predicted_class && class_regex(class).is_match(text) {
            out.push(GroundingViolation::ContradictingClass { mentioned: class });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::tests::{four_regions, sample_doc};

    #[test]
    fn lexicon_has_cortical_and_subcortical_names() {
        let lex = region_lexicon();
        assert!(lex.iter().any(|n| n == "Insular Cortex"));
        assert!(lex.iter().any(|n| n == "Hippocampus"));
        assert!(lex.len() > 50);
    }

    #[test]
    fn unlisted_region_is_flagged_once() {
        let doc = four_regions();
        let v = check_text(
            "The Hippocampus is spared. The hippocampus shows no change. Insular Cortex 32.48% overlap.",
            &doc,
        );
        assert_eq!(
            v,
            vec![GroundingViolation::UnlistedRegion {
                name: "Hippocampus".into()
            }]
        );
    }

    #[test]
    fn wrong_division_is_flagged() {
        let doc = sample_doc(&[("Cingulate Gyrus, anterior division", 29, 10)]);
        let v = check_text("Cingulate Gyrus, Posterior Division is involved.", &doc);
        assert_eq!(v.len(), 1);
        assert!(check_text("Cingulate Gyrus, Anterior Division is involved.", &doc).is_empty());
    }

    #[test]
    fn unsupported_percentage() {
        let doc = sample_doc(&[
            ("Cingulate Gyrus, anterior division", 29, 6410),
            ("Insular Cortex", 2, 3246),
            ("Cingulate Gyrus, posterior division", 30, 172),
            ("Central Opercular Cortex", 42, 172),
        ]);
        assert_eq!(doc.regions[1].percentage, 32.46);
        let v = check_text("The lesion covers 71.3% of the region.", &doc);
        assert_eq!(v.len(), 1);
        assert!(matches!(
            v[0],
            GroundingViolation::UnsupportedPercentage { value, .. } if value == 71.3
        ));
        assert!(check_text("About 64.1 % and 32.5% and 1.71%.", &doc).is_empty());
    }

    #[test]
    fn contradicting_class() {
        let doc = four_regions();
        let v = check_text("Findings are typical of gliomas. The pituitary is normal.", &doc);
        assert_eq!(
            v,
            vec![
                GroundingViolation::ContradictingClass {
                    mentioned: PredictedClass::Glioma
                },
                GroundingViolation::ContradictingClass {
                    mentioned: PredictedClass::PituitaryTumor
                },
            ]
        );
        assert!(check_text("A meningioma grows along the dura.", &doc).is_empty());
    }
}
