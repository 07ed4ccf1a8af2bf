//! Shared fixtures and independent oracles for the integration suite.
//!
//! The retrieval oracle here deliberately avoids the index internals: it
//! computes every distance through the public `l2_distance` contract and
//! sorts with the documented tie rules, so index results can be compared
//! against an implementation that shares no code with the heaps or the
//! IVF plumbing.

// Each integration binary compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use georag::geodesy::GeoCoord;
use georag::ingest::{GalleryRecord, RecordSource};
use georag::vecstore::{l2_distance, EmbeddingVector, Neighbor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic gallery with sparse, non-contiguous ids and uniform
/// random unit-range vectors. When `duplicate_every` is nonzero, every
/// such row repeats the previous row's vector under a different id, which
/// forces exact distance ties downstream.
pub fn random_gallery(seed: u64, n: usize, d: usize, duplicate_every: usize) -> Vec<GalleryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<GalleryRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let vector: Vec<f32> = if duplicate_every != 0 && i % duplicate_every == 0 && i > 0 {
            records[i - 1].embedding.as_slice().to_vec()
        } else {
            (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
        };
        let lat = rng.gen_range(-89.0f64..89.0);
        let lon = rng.gen_range(-179.0f64..179.0);
        records.push(GalleryRecord {
            id: (i as u64) * 7 + 13,
            embedding: EmbeddingVector::new(vector).unwrap(),
            coord: GeoCoord::new(lat, lon).unwrap(),
            source: RecordSource::Other,
        });
    }
    records
}

pub fn random_query(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
    EmbeddingVector::new((0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Brute-force exact search: full sort by `(distance, id)` ascending.
pub fn oracle_similar(records: &[GalleryRecord], query: &EmbeddingVector, k: usize) -> Vec<Neighbor> {
    let mut all = all_distances(records, query);
    all.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.id.cmp(&b.id))
    });
    all.truncate(k);
    all
}

/// Brute-force farthest search: descending distance, ties ascending id.
pub fn oracle_dissimilar(
    records: &[GalleryRecord],
    query: &EmbeddingVector,
    k: usize,
) -> Vec<Neighbor> {
    let mut all = all_distances(records, query);
    all.sort_by(|a, b| {
        b.distance
            .total_cmp(&a.distance)
            .then_with(|| a.id.cmp(&b.id))
    });
    all.truncate(k);
    all
}

fn all_distances(records: &[GalleryRecord], query: &EmbeddingVector) -> Vec<Neighbor> {
    records
        .iter()
        .map(|r| Neighbor {
            id: r.id,
            coord: r.coord,
            distance: l2_distance(query, &r.embedding).unwrap(),
        })
        .collect()
}

/// Asserts two neighbor lists agree exactly: same ids in the same order
/// and bit-identical distances.
pub fn assert_neighbors_identical(got: &[Neighbor], want: &[Neighbor], context: &str) {
    assert_eq!(
        got.len(),
        want.len(),
        "{context}: length {} vs {}",
        got.len(),
        want.len()
    );
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert_eq!(g.id, w.id, "{context}: id mismatch at rank {i}");
        assert_eq!(
            g.distance.to_bits(),
            w.distance.to_bits(),
            "{context}: distance bits differ at rank {i} ({} vs {})",
            g.distance,
            w.distance
        );
    }
}

/// The coordinate exactly as prompt text carries it: rendered to six
/// decimal places and read back.
pub fn round6(coord: GeoCoord) -> GeoCoord {
    GeoCoord::new(
        format!("{:.6}", coord.lat()).parse().unwrap(),
        format!("{:.6}", coord.lon()).parse().unwrap(),
    )
    .unwrap()
}
