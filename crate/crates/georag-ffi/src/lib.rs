//! C ABI over the georag engine: index construction and search, geodesic
//! scoring, accuracy bucketing, and coordinate parsing.
//!
//! Every fallible function returns a [`GeoragStatus`]. Out parameters are
//! written only when the call returns `Ok`; on any other status the last
//! error text is readable through [`georag_last_error_message`] until the
//! next `georag_*` call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use georag::geodesy::{bucket, geodesic_km, GeoCoord};
use georag::ingest::{GalleryRecord, RecordSource};
use georag::parse_coordinates;
use georag::vecstore::{EmbeddingVector, Index, IndexConfig, IndexMode, Neighbor, VecStoreError};

/// Call outcome. Anything but `Ok` leaves a message in
/// [`georag_last_error_message`] and leaves out parameters untouched.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoragStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of range or inconsistent with the call.
    InvalidArgument = 3,
    /// A vector length disagreed with the index dimension.
    DimensionMismatch = 4,
    /// The operating system reported an I/O failure.
    Io = 5,
    /// The file is not a readable index (bad magic, version, or checksum).
    BadFormat = 6,
    /// The text contained no in-range coordinate pair.
    NoCoordinate = 7,
}

/// Index layout selector for [`georag_index_build`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoragIndexMode {
    /// Exact full-scan search.
    Flat = 0,
    /// Inverted lists over k-means centroids; nearest search probes
    /// `nprobe` lists, farthest search still scans everything.
    Ivf = 1,
}

impl From<GeoragIndexMode> for IndexMode {
    fn from(mode: GeoragIndexMode) -> IndexMode {
        match mode {
            GeoragIndexMode::Flat => IndexMode::FlatExact,
            GeoragIndexMode::Ivf => IndexMode::Ivf,
        }
    }
}

impl From<IndexMode> for GeoragIndexMode {
    fn from(mode: IndexMode) -> GeoragIndexMode {
        match mode {
            IndexMode::FlatExact => GeoragIndexMode::Flat,
            IndexMode::Ivf => GeoragIndexMode::Ivf,
        }
    }
}

/// Opaque handle to a built or loaded index. Obtain from
/// [`georag_index_build`] or [`georag_index_open`], release with
/// [`georag_index_free`].
pub struct GeoragIndex {
    inner: Index,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: GeoragStatus, message: impl std::fmt::Display) -> GeoragStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
    status
}

fn succeed() -> GeoragStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    GeoragStatus::Ok
}

macro_rules! require_non_null {
    ($($ptr:ident),+ $(,)?) => {
        $(
            if $ptr.is_null() {
                return fail(
                    GeoragStatus::NullArgument,
                    concat!(stringify!($ptr), " must not be null"),
                );
            }
        )+
    };
}

fn vecstore_status(e: &VecStoreError) -> GeoragStatus {
    match e {
        VecStoreError::Io { .. } => GeoragStatus::Io,
        VecStoreError::BadMagic
        | VecStoreError::UnsupportedVersion(_)
        | VecStoreError::UnsupportedMode(_)
        | VecStoreError::Truncated(_)
        | VecStoreError::ChecksumMismatch { .. }
        | VecStoreError::Corrupt(_) => GeoragStatus::BadFormat,
        VecStoreError::DimensionMismatch { .. } | VecStoreError::RecordDimension { .. } => {
            GeoragStatus::DimensionMismatch
        }
        _ => GeoragStatus::InvalidArgument,
    }
}

/// Crate version as a static NUL-terminated string. Never null; do not
/// free.
#[no_mangle]
pub extern "C" fn georag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the most recent failure on this thread, or null when
/// the last call succeeded. The pointer stays valid until the next
/// `georag_*` call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn georag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Builds an index over `count` records.
///
/// `ids`, `lats`, and `lons` each hold `count` entries; `vectors` holds
/// `count * dimension` floats, row-major. Latitudes must lie in [-90, 90],
/// longitudes in [-180, 180], vector components must be finite, and ids
/// must be unique. `nlist`, `nprobe`, `kmeans_iterations`, and `rng_seed`
/// are ignored in `Flat` mode. On `Ok`, `*out_index` owns the new handle.
///
/// # Safety
/// The array pointers must be readable for the lengths stated above, and
/// `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georag_index_build(
    ids: *const u64,
    lats: *const f64,
    lons: *const f64,
    vectors: *const f32,
    count: usize,
    dimension: u32,
    mode: GeoragIndexMode,
    nlist: u32,
    nprobe: u32,
    kmeans_iterations: u32,
    rng_seed: u64,
    out_index: *mut *mut GeoragIndex,
) -> GeoragStatus {
    require_non_null!(ids, lats, lons, vectors, out_index);
    let Some(total) = count.checked_mul(dimension as usize) else {
        return fail(
            GeoragStatus::InvalidArgument,
            "count * dimension overflows usize",
        );
    };
    let ids = std::slice::from_raw_parts(ids, count);
    let lats = std::slice::from_raw_parts(lats, count);
    let lons = std::slice::from_raw_parts(lons, count);
    let vectors = std::slice::from_raw_parts(vectors, total);

    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let coord = match GeoCoord::new(lats[i], lons[i]) {
            Ok(coord) => coord,
            Err(e) => return fail(GeoragStatus::InvalidArgument, format!("record {}: {e}", ids[i])),
        };
        let row = &vectors[i * dimension as usize..(i + 1) * dimension as usize];
        let embedding = match EmbeddingVector::new(row.to_vec()) {
            Ok(embedding) => embedding,
            Err(e) => {
                return fail(vecstore_status(&e), format!("record {}: {e}", ids[i]));
            }
        };
        records.push(GalleryRecord {
            id: ids[i],
            embedding,
            coord,
            source: RecordSource::Other,
        });
    }

    let config = IndexConfig {
        dimension,
        mode: mode.into(),
        ivf_nlist: nlist,
        ivf_nprobe: nprobe,
        kmeans_iterations,
        rng_seed,
    };
    if let Err(e) = config.validate() {
        return fail(GeoragStatus::InvalidArgument, e);
    }
    match Index::build(&records, &config) {
        Ok(index) => {
            *out_index = Box::into_raw(Box::new(GeoragIndex { inner: index }));
            succeed()
        }
        Err(e) => fail(vecstore_status(&e), e),
    }
}

unsafe fn path_from_c(path: *const c_char) -> Result<&'static Path, GeoragStatus> {
    match CStr::from_ptr(path).to_str() {
        Ok(text) => Ok(Path::new(text)),
        Err(e) => Err(fail(
            GeoragStatus::InvalidUtf8,
            format!("path is not valid UTF-8: {e}"),
        )),
    }
}

/// Loads an index file previously written by [`georag_index_save`] or the
/// CLI. On `Ok`, `*out_index` owns the new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_index` writable.
#[no_mangle]
pub unsafe extern "C" fn georag_index_open(
    path: *const c_char,
    out_index: *mut *mut GeoragIndex,
) -> GeoragStatus {
    require_non_null!(path, out_index);
    let path = match path_from_c(path) {
        Ok(path) => path,
        Err(status) => return status,
    };
    match Index::load(path) {
        Ok(index) => {
            *out_index = Box::into_raw(Box::new(GeoragIndex { inner: index }));
            succeed()
        }
        Err(e) => fail(vecstore_status(&e), e),
    }
}

/// Writes the index to `path` in the engine's file format.
///
/// # Safety
/// `index` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn georag_index_save(
    index: *const GeoragIndex,
    path: *const c_char,
) -> GeoragStatus {
    require_non_null!(index, path);
    let path = match path_from_c(path) {
        Ok(path) => path,
        Err(status) => return status,
    };
    match (*index).inner.save(path) {
        Ok(()) => succeed(),
        Err(e) => fail(vecstore_status(&e), e),
    }
}

/// Releases a handle. Null is a no-op; a handle must not be used after
/// being freed.
///
/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn georag_index_free(index: *mut GeoragIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of records in the index.
///
/// # Safety
/// `index` must be a live handle and `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn georag_index_count(
    index: *const GeoragIndex,
    out_count: *mut u64,
) -> GeoragStatus {
    require_non_null!(index, out_count);
    *out_count = (*index).inner.count() as u64;
    succeed()
}

/// Embedding dimension of the index.
///
/// # Safety
/// `index` must be a live handle and `out_dimension` writable.
#[no_mangle]
pub unsafe extern "C" fn georag_index_dimension(
    index: *const GeoragIndex,
    out_dimension: *mut u32,
) -> GeoragStatus {
    require_non_null!(index, out_dimension);
    *out_dimension = (*index).inner.dimension();
    succeed()
}

/// Index layout.
///
/// # Safety
/// `index` must be a live handle and `out_mode` writable.
#[no_mangle]
pub unsafe extern "C" fn georag_index_mode(
    index: *const GeoragIndex,
    out_mode: *mut GeoragIndexMode,
) -> GeoragStatus {
    require_non_null!(index, out_mode);
    *out_mode = (*index).inner.mode().into();
    succeed()
}

/// Sets how many inverted lists a nearest-neighbor query probes. Fails on
/// flat indexes and on nprobe values of 0 or above nlist. Freshly loaded
/// IVF indexes default to probing every list.
///
/// # Safety
/// `index` must be a live handle with no concurrent calls on it.
#[no_mangle]
pub unsafe extern "C" fn georag_index_set_nprobe(
    index: *mut GeoragIndex,
    nprobe: u32,
) -> GeoragStatus {
    require_non_null!(index);
    match (*index).inner.set_nprobe(nprobe) {
        Ok(()) => succeed(),
        Err(e) => fail(vecstore_status(&e), e),
    }
}

unsafe fn write_neighbors(
    neighbors: &[Neighbor],
    out_ids: *mut u64,
    out_lats: *mut f64,
    out_lons: *mut f64,
    out_distances: *mut f64,
    out_count: *mut usize,
) {
    for (i, n) in neighbors.iter().enumerate() {
        *out_ids.add(i) = n.id;
        *out_lats.add(i) = n.coord.lat();
        *out_lons.add(i) = n.coord.lon();
        *out_distances.add(i) = n.distance;
    }
    *out_count = neighbors.len();
}

/// Retrieves up to `k` neighbors of `query`. With `farthest` false they are
/// the nearest records in ascending L2 order; with it true, the farthest in
/// descending order. `query_len` must equal the index dimension. On `Ok`,
/// the first `*out_count` slots of each output array are filled
/// (`*out_count <= k`; it falls short only when the index holds fewer than
/// `k` records).
///
/// # Safety
/// `query` must be readable for `query_len` floats, and each output array
/// writable for `k` slots.
#[no_mangle]
pub unsafe extern "C" fn georag_index_search(
    index: *const GeoragIndex,
    query: *const f32,
    query_len: usize,
    k: usize,
    farthest: bool,
    out_ids: *mut u64,
    out_lats: *mut f64,
    out_lons: *mut f64,
    out_distances: *mut f64,
    out_count: *mut usize,
) -> GeoragStatus {
    require_non_null!(index, query, out_ids, out_lats, out_lons, out_distances, out_count);
    let row = std::slice::from_raw_parts(query, query_len);
    let embedding = match EmbeddingVector::new(row.to_vec()) {
        Ok(embedding) => embedding,
        Err(e) => return fail(vecstore_status(&e), e),
    };
    let result = if farthest {
        (*index).inner.search_dissimilar(&embedding, k)
    } else {
        (*index).inner.search_similar(&embedding, k)
    };
    match result {
        Ok(neighbors) => {
            write_neighbors(&neighbors, out_ids, out_lats, out_lons, out_distances, out_count);
            succeed()
        }
        Err(e) => fail(vecstore_status(&e), e),
    }
}

/// Geodesic distance between two points in kilometers.
/// `*out_used_fallback` reports whether the great-circle fallback replaced
/// the ellipsoidal solution (near-antipodal inputs).
///
/// # Safety
/// `out_km` and `out_used_fallback` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georag_geodesic_km(
    lat_a: f64,
    lon_a: f64,
    lat_b: f64,
    lon_b: f64,
    out_km: *mut f64,
    out_used_fallback: *mut bool,
) -> GeoragStatus {
    require_non_null!(out_km, out_used_fallback);
    let a = match GeoCoord::new(lat_a, lon_a) {
        Ok(coord) => coord,
        Err(e) => return fail(GeoragStatus::InvalidArgument, format!("first point: {e}")),
    };
    let b = match GeoCoord::new(lat_b, lon_b) {
        Ok(coord) => coord,
        Err(e) => return fail(GeoragStatus::InvalidArgument, format!("second point: {e}")),
    };
    let distance = geodesic_km(a, b);
    *out_km = distance.km;
    *out_used_fallback = distance.used_fallback;
    succeed()
}

/// Accuracy levels a prediction error satisfies, as a bitmask: street
/// (1 km) in bit 0, city (25 km) in bit 1, region (200 km) in bit 2,
/// country (750 km) in bit 3, continent (2500 km) in bit 4. Fails on
/// negative or non-finite distances.
///
/// # Safety
/// `out_mask` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georag_bucket_mask(error_km: f64, out_mask: *mut u8) -> GeoragStatus {
    require_non_null!(out_mask);
    match bucket(error_km) {
        Ok(levels) => {
            *out_mask = levels.bits();
            succeed()
        }
        Err(e) => fail(GeoragStatus::InvalidArgument, e),
    }
}

/// Extracts the predicted coordinate from free-form model text, applying
/// the same selection rules as the evaluation pipeline. Returns
/// `NoCoordinate` when the text has no in-range pair.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_lat` and `out_lon` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn georag_parse_coordinates(
    text: *const c_char,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> GeoragStatus {
    require_non_null!(text, out_lat, out_lon);
    let text = match CStr::from_ptr(text).to_str() {
        Ok(text) => text,
        Err(e) => {
            return fail(
                GeoragStatus::InvalidUtf8,
                format!("text is not valid UTF-8: {e}"),
            )
        }
    };
    match parse_coordinates(text).coord {
        Some(coord) => {
            *out_lat = coord.lat();
            *out_lon = coord.lon();
            succeed()
        }
        None => fail(GeoragStatus::NoCoordinate, "no coordinate pair in text"),
    }
}
