#![allow(dead_code)]

use std::path::PathBuf;

use neuroexplain::findings::PredictedClass;
use neuroexplain::findings::SaliencyMethod;
use neuroexplain::pipeline::{RunSettings, SampleInputs, DEFAULT_TIMESTAMP};
use neuroexplain::report::ReportSource;
use neuroexplain::segmentation::SegmentationParams;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub const SAMPLE_ID: &str = "fixture-01";
pub const ATLAS_ID: &str = "HarvardOxford-cort-synthetic";

pub fn fixture_sample() -> SampleInputs {
    SampleInputs {
        heatmap: fixture("heatmap.npy"),
        gt_mask: fixture("gt_mask.png"),
        model_name: "InceptionResNetV2".into(),
        predicted_class: PredictedClass::Meningioma,
        prediction_confidence: Some(0.9312),
        source_image_id: SAMPLE_ID.into(),
    }
}

pub fn fixture_settings(report: Option<ReportSource>) -> RunSettings {
    RunSettings {
        atlas_volume: fixture("atlas.nii.gz"),
        atlas_labels: fixture("labels.csv"),
        atlas_id: ATLAS_ID.into(),
        atlas_slice: None,
        params: SegmentationParams::default(),
        saliency_method: SaliencyMethod::GradCAMpp,
        report,
        created_at: DEFAULT_TIMESTAMP.into(),
    }
}
