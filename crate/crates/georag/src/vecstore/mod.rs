//! L2 vector index over geo-tagged embeddings.
//!
//! Two modes share one on-disk format and one search API:
//!
//! - flat exact: every query scans all stored vectors;
//! - IVF: a k-means coarse quantizer partitions vectors into inverted
//!   lists, and nearest-neighbor queries scan only the `nprobe` lists whose
//!   centroids sit closest to the query.
//!
//! Farthest-neighbor ("dissimilar") queries always run an exact full scan
//! regardless of mode: inverted lists accelerate locating near vectors, not
//! far ones, and the contrastive prompt depends on the far set being exact.
//!
//! Distances follow a fixed precision recipe so results are reproducible
//! across machines and survive the save/load round-trip bit for bit: see
//! [`l2_distance`].

mod format;
mod kmeans;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::GeoCoord;
use crate::ingest::GalleryRecord;

/// Iterations used for IVF k-means training when the config does not say
/// otherwise; training stops early once assignments stabilize.
pub const DEFAULT_KMEANS_ITERATIONS: u32 = 20;

#[derive(Debug, Error)]
pub enum VecStoreError {
    #[error("embedding components must be finite")]
    NonFiniteComponent,
    #[error("vector has {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("record {id} has {got} components, index dimension is {expected}")]
    RecordDimension { id: u64, expected: usize, got: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid index config: {0}")]
    InvalidConfig(String),
    #[error("ivf training needs at least nlist={nlist} records, got {count}")]
    InsufficientRecords { count: usize, nlist: u32 },
    #[error("not an index file: bad magic bytes")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported index mode byte {0}")]
    UnsupportedMode(u8),
    #[error("index file truncated in {0} section")]
    Truncated(&'static str),
    #[error("index file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("index file corrupt: {0}")]
    Corrupt(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A finite-valued embedding.
///
/// Construction rejects NaN and infinite components; length against the
/// index dimension is checked wherever a vector meets an index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(components: Vec<f32>) -> Result<Self, VecStoreError> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(VecStoreError::NonFiniteComponent);
        }
        Ok(EmbeddingVector(components))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// L2 (Euclidean) distance between two equal-length vectors.
///
/// Precision contract: squared component differences accumulate in `f32` in
/// component order, and only the final square root is taken in `f64`. Every
/// distance the index reports uses this exact recipe, so independently
/// computed distances compare bit-for-bit equal.
pub fn l2_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, VecStoreError> {
    if a.len() != b.len() {
        return Err(VecStoreError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(f64::from(l2_sq(a.as_slice(), b.as_slice())).sqrt())
}

/// Squared L2 distance with sequential f32 accumulation.
#[inline]
fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    #[serde(rename = "flat")]
    FlatExact,
    Ivf,
}

impl fmt::Display for IndexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexMode::FlatExact => write!(f, "flat"),
            IndexMode::Ivf => write!(f, "ivf"),
        }
    }
}

impl std::str::FromStr for IndexMode {
    type Err = VecStoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(IndexMode::FlatExact),
            "ivf" => Ok(IndexMode::Ivf),
            other => Err(VecStoreError::InvalidConfig(format!(
                "unknown index mode {other:?}, expected \"flat\" or \"ivf\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexConfig {
    pub dimension: u32,
    pub mode: IndexMode,
    /// Number of inverted lists; ignored in flat mode.
    pub ivf_nlist: u32,
    /// Lists probed per nearest-neighbor query; ignored in flat mode.
    pub ivf_nprobe: u32,
    pub kmeans_iterations: u32,
    pub rng_seed: u64,
}

impl IndexConfig {
    pub fn flat(dimension: u32) -> Self {
        IndexConfig {
            dimension,
            mode: IndexMode::FlatExact,
            ivf_nlist: 0,
            ivf_nprobe: 0,
            kmeans_iterations: DEFAULT_KMEANS_ITERATIONS,
            rng_seed: 0,
        }
    }

    pub fn ivf(dimension: u32, nlist: u32, nprobe: u32) -> Self {
        IndexConfig {
            dimension,
            mode: IndexMode::Ivf,
            ivf_nlist: nlist,
            ivf_nprobe: nprobe,
            kmeans_iterations: DEFAULT_KMEANS_ITERATIONS,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), VecStoreError> {
        if self.dimension == 0 {
            return Err(VecStoreError::InvalidConfig(
                "dimension must be at least 1".into(),
            ));
        }
        if self.mode == IndexMode::Ivf {
            if self.ivf_nlist == 0 {
                return Err(VecStoreError::InvalidConfig(
                    "ivf_nlist must be at least 1".into(),
                ));
            }
            if self.ivf_nprobe == 0 || self.ivf_nprobe > self.ivf_nlist {
                return Err(VecStoreError::InvalidConfig(format!(
                    "ivf_nprobe must be in 1..={}, got {}",
                    self.ivf_nlist, self.ivf_nprobe
                )));
            }
            if self.kmeans_iterations == 0 {
                return Err(VecStoreError::InvalidConfig(
                    "kmeans_iterations must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One retrieval hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    pub coord: GeoCoord,
    /// L2 distance to the query, per the [`l2_distance`] precision contract.
    pub distance: f64,
}

struct IvfState {
    nlist: u32,
    /// `nlist * dimension` row-major centroid matrix.
    centroids: Vec<f32>,
    /// Nearest-centroid list per stored vector.
    assignments: Vec<u32>,
    /// Vector slots per list, rebuilt from `assignments`.
    lists: Vec<Vec<u32>>,
}

/// Geo-tagged vector index.
pub struct Index {
    mode: IndexMode,
    dimension: u32,
    ids: Vec<u64>,
    coords: Vec<GeoCoord>,
    /// `count * dimension` row-major vector matrix.
    vectors: Vec<f32>,
    ivf: Option<IvfState>,
    /// Probe width for IVF nearest-neighbor queries. Not persisted; loading
    /// an IVF index resets it to `nlist` (exact search) until lowered.
    nprobe: u32,
}

impl Index {
    /// Builds an index over the given records.
    ///
    /// Every record embedding must match `config.dimension` and ids must be
    /// unique. IVF mode additionally requires at least `ivf_nlist` records
    /// to train the coarse quantizer.
    pub fn build(records: &[GalleryRecord], config: &IndexConfig) -> Result<Index, VecStoreError> {
        config.validate()?;
        let dimension = config.dimension as usize;
        let mut seen = HashSet::with_capacity(records.len());
        let mut ids = Vec::with_capacity(records.len());
        let mut coords = Vec::with_capacity(records.len());
        let mut vectors = Vec::with_capacity(records.len() * dimension);
        for record in records {
            if record.embedding.len() != dimension {
                return Err(VecStoreError::RecordDimension {
                    id: record.id,
                    expected: dimension,
                    got: record.embedding.len(),
                });
            }
            if !seen.insert(record.id) {
                return Err(VecStoreError::DuplicateId(record.id));
            }
            ids.push(record.id);
            coords.push(record.coord);
            vectors.extend_from_slice(record.embedding.as_slice());
        }

        let (ivf, nprobe) = match config.mode {
            IndexMode::FlatExact => (None, 0),
            IndexMode::Ivf => {
                if records.len() < config.ivf_nlist as usize {
                    return Err(VecStoreError::InsufficientRecords {
                        count: records.len(),
                        nlist: config.ivf_nlist,
                    });
                }
                let trained = kmeans::train(
                    &vectors,
                    dimension,
                    config.ivf_nlist as usize,
                    config.kmeans_iterations,
                    config.rng_seed,
                );
                let lists = build_lists(&trained.assignments, config.ivf_nlist);
                (
                    Some(IvfState {
                        nlist: config.ivf_nlist,
                        centroids: trained.centroids,
                        assignments: trained.assignments,
                        lists,
                    }),
                    config.ivf_nprobe,
                )
            }
        };

        Ok(Index {
            mode: config.mode,
            dimension: config.dimension,
            ids,
            coords,
            vectors,
            ivf,
            nprobe,
        })
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Number of inverted lists, or 0 for a flat index.
    pub fn nlist(&self) -> u32 {
        self.ivf.as_ref().map_or(0, |state| state.nlist)
    }

    /// Probe width for IVF queries, or `None` for a flat index.
    pub fn nprobe(&self) -> Option<u32> {
        self.ivf.as_ref().map(|_| self.nprobe)
    }

    pub fn set_nprobe(&mut self, nprobe: u32) -> Result<(), VecStoreError> {
        let Some(state) = &self.ivf else {
            return Err(VecStoreError::InvalidConfig(
                "nprobe only applies to ivf indexes".into(),
            ));
        };
        if nprobe == 0 || nprobe > state.nlist {
            return Err(VecStoreError::InvalidConfig(format!(
                "nprobe must be in 1..={}, got {}",
                state.nlist, nprobe
            )));
        }
        self.nprobe = nprobe;
        Ok(())
    }

    /// Trained centroid matrix (`nlist * dimension`), empty for flat mode.
    pub fn centroids(&self) -> &[f32] {
        self.ivf.as_ref().map_or(&[], |state| &state.centroids)
    }

    /// Nearest-centroid assignment per stored vector, empty for flat mode.
    pub fn assignments(&self) -> &[u32] {
        self.ivf.as_ref().map_or(&[], |state| &state.assignments)
    }

    fn row(&self, slot: usize) -> &[f32] {
        let dim = self.dimension as usize;
        &self.vectors[slot * dim..(slot + 1) * dim]
    }

    fn check_query(&self, query: &EmbeddingVector, k: usize) -> Result<(), VecStoreError> {
        if k == 0 {
            return Err(VecStoreError::ZeroK);
        }
        if query.len() != self.dimension as usize {
            return Err(VecStoreError::DimensionMismatch {
                expected: self.dimension as usize,
                got: query.len(),
            });
        }
        Ok(())
    }

    /// The `k` nearest stored vectors, ascending by distance, ties broken
    /// by ascending id. IVF mode scans only the `nprobe` closest lists.
    ///
    /// Returns fewer than `k` neighbors when fewer vectors are reachable.
    pub fn search_similar(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<Neighbor>, VecStoreError> {
        self.check_query(query, k)?;
        let query = query.as_slice();
        match &self.ivf {
            None => {
                let mut near = NearestHeap::new(k);
                for slot in 0..self.count() {
                    near.offer(l2_sq(query, self.row(slot)), self.ids[slot], slot as u32);
                }
                Ok(self.finish(near.into_sorted()))
            }
            Some(state) => {
                let mut near = NearestHeap::new(k);
                for list in self.probe_order(state, query) {
                    for &slot in &state.lists[list as usize] {
                        let slot = slot as usize;
                        near.offer(l2_sq(query, self.row(slot)), self.ids[slot], slot as u32);
                    }
                }
                Ok(self.finish(near.into_sorted()))
            }
        }
    }

    /// The `k` farthest stored vectors, descending by distance, ties broken
    /// by ascending id. Always an exact full scan, in both modes.
    pub fn search_dissimilar(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<Neighbor>, VecStoreError> {
        self.check_query(query, k)?;
        let query = query.as_slice();
        let mut far = FarthestHeap::new(k);
        for slot in 0..self.count() {
            far.offer(l2_sq(query, self.row(slot)), self.ids[slot], slot as u32);
        }
        Ok(self.finish(far.into_sorted()))
    }

    /// Answers a nearest and a farthest query together.
    ///
    /// Flat mode feeds both result heaps from one pass over the vectors, so
    /// the matrix is read once instead of twice. IVF mode keeps its probed
    /// approximation for the nearest side and full-scans the farthest side.
    pub fn search_both(
        &self,
        query: &EmbeddingVector,
        k_similar: usize,
        k_dissimilar: usize,
    ) -> Result<(Vec<Neighbor>, Vec<Neighbor>), VecStoreError> {
        self.check_query(query, k_similar.max(k_dissimilar))?;
        if k_similar == 0 || k_dissimilar == 0 {
            return Err(VecStoreError::ZeroK);
        }
        match &self.ivf {
            None => {
                let q = query.as_slice();
                let mut near = NearestHeap::new(k_similar);
                let mut far = FarthestHeap::new(k_dissimilar);
                for slot in 0..self.count() {
                    let sq = l2_sq(q, self.row(slot));
                    near.offer(sq, self.ids[slot], slot as u32);
                    far.offer(sq, self.ids[slot], slot as u32);
                }
                Ok((
                    self.finish(near.into_sorted()),
                    self.finish(far.into_sorted()),
                ))
            }
            Some(_) => Ok((
                self.search_similar(query, k_similar)?,
                self.search_dissimilar(query, k_dissimilar)?,
            )),
        }
    }

    /// Centroid indices to probe, closest first, ties by ascending index.
    fn probe_order(&self, state: &IvfState, query: &[f32]) -> impl Iterator<Item = u32> {
        let dim = self.dimension as usize;
        let mut ranked: Vec<(f32, u32)> = (0..state.nlist)
            .map(|c| {
                let centroid = &state.centroids[c as usize * dim..(c as usize + 1) * dim];
                (l2_sq(query, centroid), c)
            })
            .collect();
        ranked.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranked
            .into_iter()
            .take(self.nprobe as usize)
            .map(|(_, c)| c)
    }

    fn finish(&self, entries: Vec<HeapEntry>) -> Vec<Neighbor> {
        entries
            .into_iter()
            .map(|e| Neighbor {
                id: e.id,
                coord: self.coords[e.slot as usize],
                distance: f64::from(e.sq).sqrt(),
            })
            .collect()
    }

    /// Writes the index to `path` in the binary format described in
    /// [`format`](self), finishing with a CRC32 trailer.
    pub fn save(&self, path: &Path) -> Result<(), VecStoreError> {
        format::save(self, path)
    }

    /// Reads an index back from `path`, validating magic bytes, format
    /// version, mode, checksum, and the decoded payload.
    pub fn load(path: &Path) -> Result<Index, VecStoreError> {
        format::load(path)
    }

    /// CRC32 of the serialized index content (everything the trailer
    /// covers). Two indexes with equal checksums hold identical payloads.
    pub fn content_crc32(&self) -> u32 {
        format::content_crc32(self)
    }
}

fn build_lists(assignments: &[u32], nlist: u32) -> Vec<Vec<u32>> {
    let mut lists = vec![Vec::new(); nlist as usize];
    for (slot, &list) in assignments.iter().enumerate() {
        lists[list as usize].push(slot as u32);
    }
    lists
}

struct HeapEntry {
    sq: f32,
    id: u64,
    slot: u32,
}

/// Bounded max-heap keeping the k smallest `(sq, id)` pairs; the weakest
/// kept entry (largest distance, then largest id) sits on top.
struct NearestHeap {
    k: usize,
    entries: Vec<HeapEntry>,
}

/// Bounded min-heap keeping the k largest distances; among equal distances
/// smaller ids win. The weakest kept entry (smallest distance, then largest
/// id) sits on top.
struct FarthestHeap {
    k: usize,
    entries: Vec<HeapEntry>,
}

// Both heaps are small (k entries) and share a hand-rolled sift
// implementation parameterized by the "is weaker" comparison, which keeps
// the tie-break polarity in exactly one place per direction.

#[inline]
fn nearest_weaker(a: &HeapEntry, b: &HeapEntry) -> bool {
    // a is a worse nearest-candidate than b.
    match a.sq.total_cmp(&b.sq) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.id > b.id,
    }
}

#[inline]
fn farthest_weaker(a: &HeapEntry, b: &HeapEntry) -> bool {
    // a is a worse farthest-candidate than b.
    match a.sq.total_cmp(&b.sq) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.id > b.id,
    }
}

macro_rules! bounded_heap_impl {
    ($name:ident, $weaker:ident) => {
        impl $name {
            fn new(k: usize) -> Self {
                Self {
                    k,
                    entries: Vec::with_capacity(k),
                }
            }

            #[inline]
            fn offer(&mut self, sq: f32, id: u64, slot: u32) {
                if self.entries.len() < self.k {
                    self.entries.push(HeapEntry { sq, id, slot });
                    if self.entries.len() == self.k {
                        // Heapify: weakest entry to the root.
                        for i in (0..self.k / 2).rev() {
                            self.sift_down(i);
                        }
                    }
                    return;
                }
                let candidate = HeapEntry { sq, id, slot };
                if $weaker(&self.entries[0], &candidate) {
                    self.entries[0] = candidate;
                    self.sift_down(0);
                }
            }

            fn sift_down(&mut self, mut i: usize) {
                loop {
                    let left = 2 * i + 1;
                    if left >= self.entries.len() {
                        return;
                    }
                    let right = left + 1;
                    let mut weakest = left;
                    if right < self.entries.len()
                        && $weaker(&self.entries[right], &self.entries[left])
                    {
                        weakest = right;
                    }
                    if $weaker(&self.entries[weakest], &self.entries[i]) {
                        self.entries.swap(i, weakest);
                        i = weakest;
                    } else {
                        return;
                    }
                }
            }

            /// Entries in final result order (strongest first).
            fn into_sorted(self) -> Vec<HeapEntry> {
                let mut entries = self.entries;
                entries.sort_unstable_by(|a, b| {
                    if $weaker(a, b) {
                        std::cmp::Ordering::Greater
                    } else if $weaker(b, a) {
                        std::cmp::Ordering::Less
                    } else {
                        std::cmp::Ordering::Equal
                    }
                });
                entries
            }
        }
    };
}

bounded_heap_impl!(NearestHeap, nearest_weaker);
bounded_heap_impl!(FarthestHeap, farthest_weaker);
