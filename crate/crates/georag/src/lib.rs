//! Retrieval-augmented image geolocalization.
//!
//! The pipeline stores geo-tagged image embeddings in an exact or IVF
//! vector index, retrieves the nearest and farthest gallery entries for a
//! query embedding, renders both lists into a contrastive prompt, sends the
//! prompt together with the query image to a multimodal chat-completions
//! endpoint, parses the predicted coordinate out of the reply, and scores
//! the prediction against ground truth at five distance thresholds.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`vecstore`]: L2 vector index (exact flat scan or IVF with k-means
//!   coarse quantizer), binary persistence with checksum validation.
//! - [`geodesy`]: WGS-84 geodesic distance and threshold bucketing.
//! - [`ingest`]: vector blobs, gallery metadata, and benchmark manifests.
//! - [`prompt`]: contrastive prompt templates and rendering.
//! - [`mllm`]: chat-completions client with pluggable transports.
//! - [`coordparse`]: coordinate extraction from free-form model text.
//! - [`eval`]: benchmark evaluation harness and per-item outcomes.
//! - [`report`]: accuracy aggregation and report rendering.
//! - [`config`]: layered run configuration shared by the CLI.

pub mod config;
pub mod coordparse;
pub mod eval;
pub mod geodesy;
pub mod ingest;
pub mod mllm;
pub mod prompt;
pub mod report;
pub mod vecstore;

pub use coordparse::{parse_coordinates, ParseOutcome};
pub use eval::{evaluate_dataset, evaluate_item, EvalConfig, EvalOutcome, ItemStatus};
pub use geodesy::{bucket, geodesic_km, AccuracyLevel, GeoCoord, GeodesicDistance, LevelSet};
pub use ingest::{
    assemble_gallery, load_benchmark_manifest, load_gallery_metadata, load_vectors,
    BenchmarkManifest, GalleryRecord, VectorBlob,
};
pub use mllm::{Client, ModelConfig, Transport};
pub use prompt::{PromptBundle, RetrievalResult, TemplateRegistry};
pub use report::{render_report, AccuracyReport, ReportFormat};
pub use vecstore::{l2_distance, EmbeddingVector, Index, IndexConfig, IndexMode, Neighbor};
