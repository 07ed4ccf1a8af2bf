//! Benchmark evaluation harness.
//!
//! Runs the full pipeline per manifest item: retrieve the nearest and
//! farthest gallery neighbors for the item's embedding, render the
//! contrastive prompt, send it with the image to the model, parse the
//! predicted coordinate, and score the geodesic error against ground
//! truth. Item failures (missing images, transport errors, unparseable
//! replies) are tallied per item and never abort a run; only broken
//! configuration is fatal.
//!
//! Model calls fan out over a bounded worker pool, but outcomes are
//! re-sequenced to manifest order, so with a deterministic transport two
//! runs produce byte-identical outcome files. Outcome records deliberately
//! carry no timestamps or latencies; wall-clock provenance lives in the
//! report, outside the per-item records.

use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coordparse;
use crate::geodesy::{bucket, geodesic_km, GeoCoord, LevelSet};
use crate::ingest::{Availability, BenchmarkItem, BenchmarkManifest, VectorBlob};
use crate::mllm::{Client, ClientError};
use crate::prompt::{ImageAttachment, RetrievalResult, TemplateRegistry, DEFAULT_K_SIMILAR};
use crate::report::{AccuracyReport, Provenance};
use crate::vecstore::Index;

pub const DEFAULT_CONCURRENCY: usize = 4;

/// Fatal setup problems; anything going wrong per item is recorded in that
/// item's outcome instead.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("manifest has {items} items but the query blob has {vectors} vectors")]
    CountMismatch { items: usize, vectors: usize },
    #[error("query blob dimension {queries} does not match index dimension {index}")]
    DimensionMismatch { index: u32, queries: u32 },
    #[error("k_similar and k_dissimilar must be >= 1")]
    ZeroK,
    #[error("concurrency must be >= 1")]
    ZeroConcurrency,
    #[error("failed to write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    /// Pipeline ran to completion; the reply may still have been
    /// unparseable (`parse_failed`).
    Scored,
    /// Image bytes absent; excluded from scoring per protocol.
    Missing,
    /// Pipeline failed (I/O, transport, malformed response); excluded
    /// from `n_scored` and counted separately.
    Errored,
}

/// Per-item trace: everything needed to audit one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub item_id: String,
    pub status: ItemStatus,
    pub ground_truth: GeoCoord,
    pub predicted: Option<GeoCoord>,
    pub error_km: Option<f64>,
    pub levels_hit: LevelSet,
    /// True when the pipeline ran but no coordinate could be extracted
    /// from the reply; such items stay in `n_scored` and miss every level.
    pub parse_failed: bool,
    /// True when the geodesic fell back from Vincenty to haversine.
    pub fallback_used: bool,
    pub candidates_seen: usize,
    /// Requests spent on this item, successful one included; 0 when no
    /// request was made.
    pub attempt_count: u32,
    pub prompt_sha256: Option<String>,
    pub response_text: Option<String>,
    pub error_message: Option<String>,
}

impl EvalOutcome {
    fn missing(item: &BenchmarkItem) -> EvalOutcome {
        EvalOutcome {
            item_id: item.id.clone(),
            status: ItemStatus::Missing,
            ground_truth: item.ground_truth,
            predicted: None,
            error_km: None,
            levels_hit: LevelSet::default(),
            parse_failed: false,
            fallback_used: false,
            candidates_seen: 0,
            attempt_count: 0,
            prompt_sha256: None,
            response_text: None,
            error_message: None,
        }
    }

    fn errored(item: &BenchmarkItem, attempt_count: u32, message: String) -> EvalOutcome {
        EvalOutcome {
            error_message: Some(message),
            attempt_count,
            status: ItemStatus::Errored,
            ..EvalOutcome::missing(item)
        }
    }
}

/// Harness settings; everything not carried by the index, the template
/// registry, or the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dataset_name: String,
    pub k_similar: usize,
    pub k_dissimilar: usize,
    pub template_id: String,
    /// Maximum in-flight model calls.
    pub concurrency: usize,
    /// When false, raw model replies are dropped from outcome records.
    pub include_raw_responses: bool,
    /// Recorded in report provenance only; excluded from the config hash
    /// so reruns of the same setup hash identically.
    pub timestamp_unix_ms: Option<u64>,
}

impl EvalConfig {
    pub fn new(dataset_name: impl Into<String>) -> EvalConfig {
        EvalConfig {
            dataset_name: dataset_name.into(),
            k_similar: DEFAULT_K_SIMILAR,
            k_dissimilar: crate::prompt::DEFAULT_K_DISSIMILAR,
            template_id: crate::prompt::DEFAULT_TEMPLATE_ID.to_string(),
            concurrency: DEFAULT_CONCURRENCY,
            include_raw_responses: true,
            timestamp_unix_ms: None,
        }
    }
}

/// Report plus the manifest-ordered per-item traces behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: AccuracyReport,
    pub outcomes: Vec<EvalOutcome>,
}

/// MIME type for the image at `path`, by extension.
fn media_type_for_path(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Runs the pipeline for one manifest item. Never fails: problems are
/// recorded in the returned outcome's status and message.
pub fn evaluate_item(
    item: &BenchmarkItem,
    query: &crate::vecstore::EmbeddingVector,
    index: &Index,
    registry: &TemplateRegistry,
    client: &Client,
    config: &EvalConfig,
) -> EvalOutcome {
    if item.status == Availability::Missing {
        return EvalOutcome::missing(item);
    }

    let (similar, dissimilar) =
        match index.search_both(query, config.k_similar, config.k_dissimilar) {
            Ok(lists) => lists,
            Err(e) => return EvalOutcome::errored(item, 0, format!("retrieval failed: {e}")),
        };
    let retrieval =
        match RetrievalResult::new(similar, dissimilar, config.k_similar, config.k_dissimilar) {
            Ok(r) => r,
            Err(e) => return EvalOutcome::errored(item, 0, format!("retrieval invalid: {e}")),
        };

    let image_bytes = match std::fs::read(&item.image_path) {
        Ok(bytes) => bytes,
        Err(e) => {
            let message = format!("failed to read {}: {e}", item.image_path.display());
            return EvalOutcome::errored(item, 0, message);
        }
    };
    let image = ImageAttachment {
        media_type: media_type_for_path(&item.image_path).to_string(),
        bytes: image_bytes,
        image_id: item.id.clone(),
    };

    let bundle = match registry.build_prompt(image, &retrieval, &config.template_id) {
        Ok(bundle) => bundle,
        Err(e) => return EvalOutcome::errored(item, 0, format!("prompt build failed: {e}")),
    };
    let prompt_sha256 = Some(sha256_hex(bundle.text.as_bytes()));

    let response = match client.complete(&bundle) {
        Ok(response) => response,
        Err(e) => {
            let attempts = match &e {
                ClientError::Transport { attempts, .. } => *attempts,
                ClientError::OversizedImage { .. } | ClientError::InvalidConfig(_) => 0,
                _ => 1,
            };
            return EvalOutcome {
                prompt_sha256,
                ..EvalOutcome::errored(item, attempts, format!("model call failed: {e}"))
            };
        }
    };

    let parse = coordparse::parse_coordinates(&response.raw_text);
    let mut outcome = EvalOutcome {
        item_id: item.id.clone(),
        status: ItemStatus::Scored,
        ground_truth: item.ground_truth,
        predicted: parse.coord,
        error_km: None,
        levels_hit: LevelSet::default(),
        parse_failed: parse.coord.is_none(),
        fallback_used: false,
        candidates_seen: parse.candidates_seen,
        attempt_count: response.attempt_count,
        prompt_sha256,
        response_text: config
            .include_raw_responses
            .then(|| response.raw_text.clone()),
        error_message: None,
    };

    if let Some(predicted) = parse.coord {
        let distance = geodesic_km(predicted, item.ground_truth);
        let levels = match bucket(distance.km) {
            Ok(levels) => levels,
            Err(e) => {
                return EvalOutcome {
                    status: ItemStatus::Errored,
                    error_message: Some(format!("bucketing failed: {e}")),
                    predicted: Some(predicted),
                    ..outcome
                }
            }
        };
        outcome.error_km = Some(distance.km);
        outcome.fallback_used = distance.used_fallback;
        outcome.levels_hit = levels;
    }
    outcome
}

/// Evaluates every manifest item against the index, with `queries` holding
/// one embedding per manifest row (same order). Missing items are recorded
/// without running the pipeline. Outcomes come back in manifest order.
pub fn evaluate_dataset(
    manifest: &BenchmarkManifest,
    queries: &VectorBlob,
    index: &Index,
    registry: &TemplateRegistry,
    client: &Client,
    config: &EvalConfig,
) -> Result<EvalRun, EvalError> {
    if config.k_similar == 0 || config.k_dissimilar == 0 {
        return Err(EvalError::ZeroK);
    }
    if config.concurrency == 0 {
        return Err(EvalError::ZeroConcurrency);
    }
    if registry.get(&config.template_id).is_none() {
        return Err(EvalError::UnknownTemplate(config.template_id.clone()));
    }
    if queries.count() as usize != manifest.len() {
        return Err(EvalError::CountMismatch {
            items: manifest.len(),
            vectors: queries.count() as usize,
        });
    }
    if !manifest.is_empty() && queries.dimension() != index.dimension() {
        return Err(EvalError::DimensionMismatch {
            index: index.dimension(),
            queries: queries.dimension(),
        });
    }

    let n = manifest.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EvalOutcome>>> = Mutex::new(vec![None; n]);
    let workers = config.concurrency.min(n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = &manifest.items[i];
                let outcome = if item.status == Availability::Missing {
                    EvalOutcome::missing(item)
                } else {
                    match queries.embedding(i) {
                        Ok(query) => {
                            evaluate_item(item, &query, index, registry, client, config)
                        }
                        Err(e) => {
                            EvalOutcome::errored(item, 0, format!("query embedding {i}: {e}"))
                        }
                    }
                };
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let outcomes: Vec<EvalOutcome> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every manifest slot evaluated"))
        .collect();

    let provenance = build_provenance(index, client, config);
    let report = AccuracyReport::from_outcomes(&config.dataset_name, &outcomes, provenance);
    Ok(EvalRun { report, outcomes })
}

/// Run provenance: enough to tell two runs apart and reproduce one. The
/// config hash covers everything except the timestamp, so reruns of an
/// identical setup share a hash.
fn build_provenance(index: &Index, client: &Client, config: &EvalConfig) -> Provenance {
    let model = client.config();
    let index_checksum = format!("{:08x}", index.content_crc32());
    let fingerprint = format!(
        "dataset={};template={};model={};base_url={};k_similar={};k_dissimilar={};\
         temperature={};top_p={};max_tokens={};index_crc32={};include_raw={}",
        config.dataset_name,
        config.template_id,
        model.model_name,
        model.base_url,
        config.k_similar,
        config.k_dissimilar,
        model.temperature,
        model.top_p,
        model.max_tokens,
        index_checksum,
        config.include_raw_responses,
    );
    Provenance {
        template_id: config.template_id.clone(),
        model_name: model.model_name.clone(),
        k_similar: config.k_similar,
        k_dissimilar: config.k_dissimilar,
        index_checksum,
        config_hash: sha256_hex(fingerprint.as_bytes()),
        timestamp_unix_ms: config.timestamp_unix_ms,
    }
}

/// Writes outcomes as one JSON object per line, in the given order.
/// Identical outcomes produce identical bytes.
pub fn write_outcomes_jsonl(path: &Path, outcomes: &[EvalOutcome]) -> Result<(), EvalError> {
    let io_err = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    for outcome in outcomes {
        let line = serde_json::to_string(outcome).expect("outcome serializes");
        writer.write_all(line.as_bytes()).map_err(io_err)?;
        writer.write_all(b"\n").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}
