//! `pred.json` written by the model exporter next to each sample's heatmaps.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::findings::PredictedClass;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub model_name: String,
    pub predicted_class: PredictedClass,
    pub confidence: Option<f64>,
}

#[derive(Deserialize)]
struct Raw {
    model_name: String,
    predicted_class: String,
    #[serde(default)]
    confidence: Option<f64>,
}

pub fn parse_prediction(text: &str, path: &Path) -> Result<Prediction> {
    let raw: Raw = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    if raw.model_name.trim().is_empty() {
        return Err(Error::format(path, "model_name is empty"));
    }
    let predicted_class = raw
        .predicted_class
        .parse()
        .map_err(|e: String| Error::format(path, e))?;
    if let Some(c) = raw.confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::format(path, format!("confidence {c} outside [0, 1]")));
        }
    }
    Ok(Prediction {
        model_name: raw.model_name,
        predicted_class,
        confidence: raw.confidence,
    })
}

pub fn read_prediction(path: &Path) -> Result<Prediction> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prediction(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exporter_record() {
        let p = parse_prediction(
            r#"{"model_name": "InceptionResNetV2", "predicted_class": "pituitary", "confidence": 0.97}"#,
            Path::new("pred.json"),
        )
        .unwrap();
        assert_eq!(p.predicted_class, PredictedClass::PituitaryTumor);
        assert_eq!(p.confidence, Some(0.97));
    }

    #[test]
    fn rejects_bad_records() {
        let p = Path::new("pred.json");
        for bad in [
            r#"{"model_name": "m", "predicted_class": "astrocytoma"}"#,
            r#"{"model_name": "m", "predicted_class": "glioma", "confidence": 1.5}"#,
            r#"{"model_name": "", "predicted_class": "glioma"}"#,
            r#"{"predicted_class": "glioma"}"#,
        ] {
            assert!(matches!(parse_prediction(bad, p), Err(Error::Format { .. })), "{bad}");
        }
    }
}
