//! Loaders for the on-disk inputs: embedding blobs, gallery metadata, and
//! benchmark manifests.
//!
//! Embeddings arrive precomputed from an external encoder run as a "GVEC"
//! blob (little-endian: magic, version u32, dimension u32, count u64, then
//! `count * dimension` f32 values row-major). Metadata and manifests are
//! UTF-8 JSON lines, one record per line, so a 10M-row gallery can stream
//! without quoting ambiguity.
//!
//! A benchmark item whose image file is absent or unreadable is marked
//! missing, logged, and excludes itself from every scoring denominator;
//! the load itself never fails over absent images.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::GeoCoord;
use crate::vecstore::{EmbeddingVector, VecStoreError};

const BLOB_MAGIC: [u8; 4] = *b"GVEC";
const BLOB_VERSION: u32 = 1;
/// Magic + version + dimension + count.
const BLOB_HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Norm tolerance below which a vector cannot be L2-normalized.
const MIN_NORMALIZABLE_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a vector blob: bad magic bytes")]
    BlobBadMagic,
    #[error("unsupported vector blob version {0}")]
    BlobUnsupportedVersion(u32),
    #[error("vector blob has zero dimension")]
    BlobZeroDimension,
    #[error("vector blob truncated: header promises {expected} bytes, file has {actual}")]
    BlobTruncated { expected: usize, actual: usize },
    #[error("vector blob has {extra} trailing bytes")]
    BlobTrailingBytes { extra: usize },
    #[error("{path} line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path} line {line}: coordinate out of range: {message}")]
    CoordinateRange {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path} line {line}: duplicate id {id}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: u64,
    },
    #[error("{path} line {line}: duplicate item id {id:?}")]
    DuplicateItemId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("blob holds {vectors} vectors but metadata has {rows} rows")]
    CountMismatch { vectors: u64, rows: usize },
    #[error("blob row {row} is not a valid embedding: {source}")]
    InvalidVector {
        row: usize,
        #[source]
        source: VecStoreError,
    },
    #[error("blob row {row} has near-zero norm and cannot be normalized")]
    ZeroNorm { row: usize },
}

/// Which gallery a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordSource {
    #[serde(rename = "EMP16")]
    Emp16,
    #[serde(rename = "OSV5M")]
    Osv5m,
    #[serde(rename = "OTHER")]
    Other,
}

impl RecordSource {
    /// Maps a free-form metadata tag onto the known galleries; anything
    /// unrecognized lands in `Other`.
    pub fn from_tag(tag: &str) -> RecordSource {
        match tag {
            "EMP16" => RecordSource::Emp16,
            "OSV5M" => RecordSource::Osv5m,
            _ => RecordSource::Other,
        }
    }
}

/// One row of the RAG database.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryRecord {
    pub id: u64,
    pub embedding: EmbeddingVector,
    pub coord: GeoCoord,
    pub source: RecordSource,
}

/// Raw embedding matrix as read from a GVEC blob.
///
/// The blob is a dumb carrier: values are not validated here, because a
/// blob may legitimately hold query embeddings that never meet an index.
/// Validation happens when rows become [`EmbeddingVector`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlob {
    dimension: u32,
    data: Vec<f32>,
}

impl VectorBlob {
    /// Wraps a row-major matrix; `data.len()` must be a multiple of
    /// `dimension`.
    pub fn new(dimension: u32, data: Vec<f32>) -> Result<VectorBlob, IngestError> {
        if dimension == 0 {
            return Err(IngestError::BlobZeroDimension);
        }
        if !data.len().is_multiple_of(dimension as usize) {
            return Err(IngestError::BlobTruncated {
                expected: (data.len() / dimension as usize + 1) * dimension as usize * 4,
                actual: data.len() * 4,
            });
        }
        Ok(VectorBlob { dimension, data })
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }

    pub fn count(&self) -> u64 {
        (self.data.len() / self.dimension as usize) as u64
    }

    pub fn row(&self, index: usize) -> &[f32] {
        let dim = self.dimension as usize;
        &self.data[index * dim..(index + 1) * dim]
    }

    /// Row `index` as a validated embedding.
    pub fn embedding(&self, index: usize) -> Result<EmbeddingVector, VecStoreError> {
        EmbeddingVector::new(self.row(index).to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let io_err = |source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut bytes =
            Vec::with_capacity(BLOB_HEADER_LEN + self.data.len() * 4);
        bytes.extend_from_slice(&BLOB_MAGIC);
        bytes.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        bytes.extend_from_slice(&self.dimension.to_le_bytes());
        bytes.extend_from_slice(&self.count().to_le_bytes());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&bytes).map_err(io_err)?;
        Ok(())
    }
}

/// Reads a GVEC blob, validating magic, version, dimension, and that the
/// payload length matches the promised `count * dimension` rows exactly.
pub fn load_vectors(path: &Path) -> Result<VectorBlob, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 4 || bytes[..4] != BLOB_MAGIC {
        if bytes.len() >= 4 {
            return Err(IngestError::BlobBadMagic);
        }
        return Err(IngestError::BlobTruncated {
            expected: BLOB_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes.len() < BLOB_HEADER_LEN {
        return Err(IngestError::BlobTruncated {
            expected: BLOB_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BLOB_VERSION {
        return Err(IngestError::BlobUnsupportedVersion(version));
    }
    let dimension = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dimension == 0 {
        return Err(IngestError::BlobZeroDimension);
    }
    let values = (count as usize)
        .checked_mul(dimension as usize)
        .ok_or(IngestError::BlobTruncated {
            expected: usize::MAX,
            actual: bytes.len(),
        })?;
    let expected = BLOB_HEADER_LEN + values * 4;
    if bytes.len() < expected {
        return Err(IngestError::BlobTruncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IngestError::BlobTrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let mut data = Vec::with_capacity(values);
    for chunk in bytes[BLOB_HEADER_LEN..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(VectorBlob { dimension, data })
}

/// One line of gallery metadata, in blob row order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataRow {
    pub id: u64,
    pub coord: GeoCoord,
    pub source: String,
}

/// Reads JSON-lines gallery metadata.
///
/// Each line holds `{"id", "lat", "lon", "source"}`. Malformed lines,
/// out-of-range coordinates, and duplicate ids all fail with the offending
/// line number. Blank lines are skipped.
pub fn load_gallery_metadata(path: &Path) -> Result<Vec<MetadataRow>, IngestError> {
    #[derive(Deserialize)]
    struct RawRow {
        id: u64,
        lat: f64,
        lon: f64,
        source: String,
    }

    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line_number = number + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedLine {
                path: path.to_path_buf(),
                line: line_number,
                message: e.to_string(),
            })?;
        let coord = GeoCoord::new(raw.lat, raw.lon).map_err(|e| IngestError::CoordinateRange {
            path: path.to_path_buf(),
            line: line_number,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id) {
            return Err(IngestError::DuplicateId {
                path: path.to_path_buf(),
                line: line_number,
                id: raw.id,
            });
        }
        rows.push(MetadataRow {
            id: raw.id,
            coord,
            source: raw.source,
        });
    }
    Ok(rows)
}

/// Zips blob row `i` with metadata row `i` into gallery records.
///
/// With `normalize` off, record embeddings are bit-identical to blob rows.
/// With it on, each row is scaled to unit L2 norm (f64 norm accumulation);
/// rows with near-zero norm cannot be normalized and fail the assembly.
/// Non-finite blob rows are rejected either way.
pub fn assemble_gallery(
    blob: &VectorBlob,
    rows: &[MetadataRow],
    normalize: bool,
) -> Result<Vec<GalleryRecord>, IngestError> {
    if blob.count() != rows.len() as u64 {
        return Err(IngestError::CountMismatch {
            vectors: blob.count(),
            rows: rows.len(),
        });
    }
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut components = blob.row(i).to_vec();
        if normalize {
            let norm = components
                .iter()
                .map(|&c| f64::from(c) * f64::from(c))
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() || norm < MIN_NORMALIZABLE_NORM {
                if components.iter().any(|c| !c.is_finite()) {
                    return Err(IngestError::InvalidVector {
                        row: i,
                        source: VecStoreError::NonFiniteComponent,
                    });
                }
                return Err(IngestError::ZeroNorm { row: i });
            }
            for c in &mut components {
                *c = (f64::from(*c) / norm) as f32;
            }
        }
        let embedding = EmbeddingVector::new(components)
            .map_err(|source| IngestError::InvalidVector { row: i, source })?;
        records.push(GalleryRecord {
            id: row.id,
            embedding,
            coord: row.coord,
            source: RecordSource::from_tag(&row.source),
        });
    }
    Ok(records)
}

/// Whether a benchmark item's image bytes are actually on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Availability {
    Available,
    Missing,
}

/// One benchmark query: an image plus its ground-truth location.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkItem {
    pub id: String,
    /// Resolved path (relative manifest entries are joined onto the
    /// manifest's directory).
    pub image_path: PathBuf,
    pub ground_truth: GeoCoord,
    pub status: Availability,
}

/// A loaded benchmark manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkManifest {
    pub items: Vec<BenchmarkItem>,
}

impl BenchmarkManifest {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_available(&self) -> usize {
        self.items
            .iter()
            .filter(|i| i.status == Availability::Available)
            .count()
    }

    pub fn n_missing(&self) -> usize {
        self.len() - self.n_available()
    }

    /// Share of items with image bytes present, in percent. An empty
    /// manifest counts as fully covered.
    pub fn coverage_percent(&self) -> f64 {
        if self.items.is_empty() {
            return 100.0;
        }
        self.n_available() as f64 / self.len() as f64 * 100.0
    }
}

/// Reads a JSON-lines benchmark manifest.
///
/// Each line holds `{"id", "image_path", "lat", "lon"}`. Image paths are
/// resolved relative to the manifest's directory. Items whose image file
/// is absent or unreadable are marked missing and logged, never fatal;
/// only a malformed manifest itself fails the load.
pub fn load_benchmark_manifest(path: &Path) -> Result<BenchmarkManifest, IngestError> {
    #[derive(Deserialize)]
    struct RawItem {
        id: String,
        image_path: PathBuf,
        lat: f64,
        lon: f64,
    }

    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line_number = number + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedLine {
                path: path.to_path_buf(),
                line: line_number,
                message: e.to_string(),
            })?;
        let ground_truth =
            GeoCoord::new(raw.lat, raw.lon).map_err(|e| IngestError::CoordinateRange {
                path: path.to_path_buf(),
                line: line_number,
                message: e.to_string(),
            })?;
        if !seen.insert(raw.id.clone()) {
            return Err(IngestError::DuplicateItemId {
                path: path.to_path_buf(),
                line: line_number,
                id: raw.id,
            });
        }
        let image_path = if raw.image_path.is_absolute() {
            raw.image_path
        } else {
            base.join(raw.image_path)
        };
        let status = match fs::metadata(&image_path) {
            Ok(meta) if meta.is_file() => Availability::Available,
            _ => Availability::Missing,
        };
        if status == Availability::Missing {
            log::warn!(
                "benchmark item {} image not readable: {}",
                raw.id,
                image_path.display()
            );
        }
        items.push(BenchmarkItem {
            id: raw.id,
            image_path,
            ground_truth,
            status,
        });
    }
    let manifest = BenchmarkManifest { items };
    log::info!(
        "manifest {}: {} items, {} available, {} missing ({:.1}% coverage)",
        path.display(),
        manifest.len(),
        manifest.n_available(),
        manifest.n_missing(),
        manifest.coverage_percent()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_blob(dimension: u32, rows: &[&[f32]]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.gvec");
        let data: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        VectorBlob::new(dimension, data).unwrap().save(&path).unwrap();
        (dir, path)
    }

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn blob_round_trips() {
        let (_dir, path) = temp_blob(3, &[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let blob = load_vectors(&path).unwrap();
        assert_eq!(blob.dimension(), 3);
        assert_eq!(blob.count(), 2);
        assert_eq!(blob.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(blob.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn empty_blob_is_valid() {
        let (_dir, path) = temp_blob(4, &[]);
        let blob = load_vectors(&path).unwrap();
        assert_eq!(blob.count(), 0);
    }

    #[test]
    fn blob_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gvec");
        fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_vectors(&path),
            Err(IngestError::BlobBadMagic)
        ));
    }

    #[test]
    fn blob_rejects_truncation() {
        let (dir, path) = temp_blob(3, &[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        let short = dir.path().join("short.gvec");
        fs::write(&short, &bytes).unwrap();
        assert!(matches!(
            load_vectors(&short),
            Err(IngestError::BlobTruncated { .. })
        ));
    }

    #[test]
    fn blob_rejects_zero_dimension_and_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let zero = dir.path().join("zero.gvec");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GVEC");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        fs::write(&zero, &bytes).unwrap();
        assert!(matches!(
            load_vectors(&zero),
            Err(IngestError::BlobZeroDimension)
        ));

        let (_d, path) = temp_blob(2, &[&[1.0, 2.0]]);
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0, 1, 2]);
        let long = dir.path().join("long.gvec");
        fs::write(&long, &bytes).unwrap();
        assert!(matches!(
            load_vectors(&long),
            Err(IngestError::BlobTrailingBytes { extra: 3 })
        ));
    }

    #[test]
    fn metadata_parses_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            dir.path(),
            "meta.jsonl",
            &[
                r#"{"id":1,"lat":48.8566,"lon":2.3522,"source":"EMP16"}"#,
                "",
                r#"{"id":2,"lat":-33.9,"lon":151.2,"source":"OSV5M"}"#,
            ],
        );
        let rows = load_gallery_metadata(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id, 1);
        assert_eq!(rows[0].coord.lat(), 48.8566);
        assert_eq!(rows[1].source, "OSV5M");
    }

    #[test]
    fn metadata_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();

        let bad_json = write_lines(
            dir.path(),
            "bad.jsonl",
            &[r#"{"id":1,"lat":0.0,"lon":0.0,"source":"X"}"#, "not json"],
        );
        match load_gallery_metadata(&bad_json) {
            Err(IngestError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line, got {other:?}"),
        }

        let bad_range = write_lines(
            dir.path(),
            "range.jsonl",
            &[r#"{"id":1,"lat":91.0,"lon":0.0,"source":"X"}"#],
        );
        match load_gallery_metadata(&bad_range) {
            Err(IngestError::CoordinateRange { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected range error, got {other:?}"),
        }

        let dup = write_lines(
            dir.path(),
            "dup.jsonl",
            &[
                r#"{"id":7,"lat":0.0,"lon":0.0,"source":"X"}"#,
                r#"{"id":7,"lat":1.0,"lon":1.0,"source":"X"}"#,
            ],
        );
        match load_gallery_metadata(&dup) {
            Err(IngestError::DuplicateId { line, id, .. }) => {
                assert_eq!((line, id), (2, 7));
            }
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn assemble_zips_in_order() {
        let blob = VectorBlob::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let rows = vec![
            MetadataRow {
                id: 10,
                coord: GeoCoord::new(1.0, 2.0).unwrap(),
                source: "EMP16".into(),
            },
            MetadataRow {
                id: 11,
                coord: GeoCoord::new(3.0, 4.0).unwrap(),
                source: "mystery".into(),
            },
        ];
        let records = assemble_gallery(&blob, &rows, false).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, 10);
        assert_eq!(records[0].embedding.as_slice(), &[1.0, 0.0]);
        assert_eq!(records[0].source, RecordSource::Emp16);
        assert_eq!(records[1].source, RecordSource::Other);
    }

    #[test]
    fn assemble_rejects_count_mismatch() {
        let blob = VectorBlob::new(2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let rows = vec![
            MetadataRow {
                id: 1,
                coord: GeoCoord::new(0.0, 0.0).unwrap(),
                source: "X".into(),
            },
            MetadataRow {
                id: 2,
                coord: GeoCoord::new(0.0, 0.0).unwrap(),
                source: "X".into(),
            },
        ];
        assert!(matches!(
            assemble_gallery(&blob, &rows, false),
            Err(IngestError::CountMismatch { vectors: 3, rows: 2 })
        ));
    }

    #[test]
    fn normalization_produces_unit_norms() {
        let blob = VectorBlob::new(3, vec![3.0, 4.0, 0.0, 0.2, -0.1, 5.0]).unwrap();
        let rows: Vec<MetadataRow> = (0..2)
            .map(|i| MetadataRow {
                id: i,
                coord: GeoCoord::new(0.0, 0.0).unwrap(),
                source: "X".into(),
            })
            .collect();
        let records = assemble_gallery(&blob, &rows, true).unwrap();
        for record in &records {
            let norm: f64 = record
                .embedding
                .as_slice()
                .iter()
                .map(|&c| f64::from(c) * f64::from(c))
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "norm was {norm}");
        }
        // Raw assembly leaves rows untouched.
        let raw = assemble_gallery(&blob, &rows, false).unwrap();
        assert_eq!(raw[0].embedding.as_slice(), blob.row(0));
    }

    #[test]
    fn normalization_rejects_zero_rows() {
        let blob = VectorBlob::new(2, vec![0.0, 0.0]).unwrap();
        let rows = vec![MetadataRow {
            id: 1,
            coord: GeoCoord::new(0.0, 0.0).unwrap(),
            source: "X".into(),
        }];
        assert!(matches!(
            assemble_gallery(&blob, &rows, true),
            Err(IngestError::ZeroNorm { row: 0 })
        ));
    }

    #[test]
    fn manifest_marks_missing_images() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("images")).unwrap();
        fs::write(dir.path().join("images/a.jpg"), b"jpeg bytes").unwrap();
        fs::write(dir.path().join("images/c.jpg"), b"jpeg bytes").unwrap();
        let path = write_lines(
            dir.path(),
            "manifest.jsonl",
            &[
                r#"{"id":"a","image_path":"images/a.jpg","lat":10.0,"lon":20.0}"#,
                r#"{"id":"b","image_path":"images/b.jpg","lat":30.0,"lon":40.0}"#,
                r#"{"id":"c","image_path":"images/c.jpg","lat":50.0,"lon":60.0}"#,
            ],
        );
        let manifest = load_benchmark_manifest(&path).unwrap();
        assert_eq!(manifest.len(), 3);
        assert_eq!(manifest.n_available(), 2);
        assert_eq!(manifest.n_missing(), 1);
        assert_eq!(manifest.items[1].status, Availability::Missing);
        let coverage = manifest.coverage_percent();
        assert!((coverage - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write_lines(
            dir.path(),
            "dup.jsonl",
            &[
                r#"{"id":"x","image_path":"x.jpg","lat":0.0,"lon":0.0}"#,
                r#"{"id":"x","image_path":"y.jpg","lat":0.0,"lon":0.0}"#,
            ],
        );
        assert!(matches!(
            load_benchmark_manifest(&dup),
            Err(IngestError::DuplicateItemId { line: 2, .. })
        ));

        let bad = write_lines(dir.path(), "bad.jsonl", &["{broken"]);
        assert!(matches!(
            load_benchmark_manifest(&bad),
            Err(IngestError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn empty_manifest_is_fully_covered() {
        let manifest = BenchmarkManifest { items: vec![] };
        assert_eq!(manifest.coverage_percent(), 100.0);
    }
}
