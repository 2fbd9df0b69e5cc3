//! Explainability pipeline for brain MRI saliency maps.
//!
//! The stages, in execution order:
//!
//! 1. [`segmentation`] turns a normalized saliency [`Heatmap`] into a binary
//!    tumor mask using a per-sample percentile threshold chosen to maximize
//!    Dice overlap, followed by small-object removal and morphological closing.
//! 2. [`roi`] labels 4-connected components and extracts region descriptors.
//! 3. [`atlas`] overlays the mask on an axial slice of a labelled atlas and
//!    tallies per-region coverage.
//! 4. [`findings`] encodes everything as a canonical JSON document.
//! 5. [`report`] builds the prompt, calls a chat-completions endpoint (or the
//!    offline stub) and checks the narrative against the document.
//! 6. [`text_metrics`] scores the narrative (TTR, Maas, Flesch reading ease,
//!    coherence) and computes classification metrics.
//!
//! File formats (NPY, PNG, NIfTI-1, label tables) live in [`io`].

pub mod atlas;
pub mod error;
pub mod findings;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod roi;
pub mod segmentation;
pub mod text_metrics;

pub use error::{Error, Result};
pub use model::{
    Atlas, BinaryMask, BoundingBox, CoverageRow, CoverageTable, Heatmap, LabelGrid,
    RegionDescriptor, SegmentationResult,
};
