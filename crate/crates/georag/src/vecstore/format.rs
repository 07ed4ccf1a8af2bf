//! Binary index persistence.
//!
//! Little-endian layout, in order:
//!
//! ```text
//! magic            4 bytes, "GRAG"
//! version          u32
//! mode             u8 (0 = flat, 1 = ivf)
//! dimension        u32
//! count            u64
//! ivf_nlist        u32 (0 in flat mode)
//! ids              count x u64
//! coords           count x (lat f64, lon f64)
//! vectors          count x dimension x f32
//! ivf centroids    nlist x dimension x f32   (ivf only)
//! ivf assignments  count x u32               (ivf only)
//! crc32            u32 over all preceding bytes
//! ```
//!
//! Loading checks magic and version before the checksum so a file that is
//! not an index at all reports "bad magic" rather than a checksum error,
//! then verifies the CRC32 trailer, then decodes and validates the payload.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{build_lists, Index, IndexMode, IvfState, VecStoreError};
use crate::geodesy::GeoCoord;

pub(crate) const MAGIC: [u8; 4] = *b"GRAG";
pub(crate) const FORMAT_VERSION: u32 = 1;

const MODE_FLAT: u8 = 0;
const MODE_IVF: u8 = 1;

/// Fixed-size portion before the variable arrays.
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8 + 4;
/// CRC32 trailer length.
const TRAILER_LEN: usize = 4;

struct CrcWriter<W: Write> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> CrcWriter<W> {
    fn new(inner: W) -> Self {
        CrcWriter {
            inner,
            hasher: crc32fast::Hasher::new(),
        }
    }

    fn finish(self) -> (u32, W) {
        (self.hasher.finalize(), self.inner)
    }
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let written = self.inner.write(buf)?;
        self.hasher.update(&buf[..written]);
        Ok(written)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn write_content<W: Write>(index: &Index, w: &mut W) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    let mode = match index.mode {
        IndexMode::FlatExact => MODE_FLAT,
        IndexMode::Ivf => MODE_IVF,
    };
    w.write_u8(mode)?;
    w.write_u32::<LittleEndian>(index.dimension)?;
    w.write_u64::<LittleEndian>(index.ids.len() as u64)?;
    w.write_u32::<LittleEndian>(index.ivf.as_ref().map_or(0, |s| s.nlist))?;
    for &id in &index.ids {
        w.write_u64::<LittleEndian>(id)?;
    }
    for coord in &index.coords {
        w.write_f64::<LittleEndian>(coord.lat())?;
        w.write_f64::<LittleEndian>(coord.lon())?;
    }
    for &v in &index.vectors {
        w.write_f32::<LittleEndian>(v)?;
    }
    if let Some(state) = &index.ivf {
        for &c in &state.centroids {
            w.write_f32::<LittleEndian>(c)?;
        }
        for &a in &state.assignments {
            w.write_u32::<LittleEndian>(a)?;
        }
    }
    Ok(())
}

pub(crate) fn content_crc32(index: &Index) -> u32 {
    let mut sink = CrcWriter::new(io::sink());
    // Writing to a sink cannot fail.
    write_content(index, &mut sink).expect("sink write");
    sink.finish().0
}

pub(crate) fn save(index: &Index, path: &Path) -> Result<(), VecStoreError> {
    let io_err = |source| VecStoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut writer = CrcWriter::new(io::BufWriter::new(file));
    write_content(index, &mut writer).map_err(io_err)?;
    let (crc, mut inner) = writer.finish();
    inner.write_u32::<LittleEndian>(crc).map_err(io_err)?;
    inner.flush().map_err(io_err)?;
    Ok(())
}

pub(crate) fn load(path: &Path) -> Result<Index, VecStoreError> {
    let bytes = fs::read(path).map_err(|source| VecStoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Index, VecStoreError> {
    if bytes.len() < 4 {
        return Err(VecStoreError::Truncated("magic"));
    }
    if bytes[..4] != MAGIC {
        return Err(VecStoreError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(VecStoreError::Truncated("version"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(VecStoreError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(VecStoreError::Truncated("header"));
    }

    let mode = match bytes[8] {
        MODE_FLAT => IndexMode::FlatExact,
        MODE_IVF => IndexMode::Ivf,
        other => return Err(VecStoreError::UnsupportedMode(other)),
    };
    let dimension = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
    let raw_count = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let nlist = u32::from_le_bytes(bytes[21..25].try_into().unwrap());

    if dimension == 0 {
        return Err(VecStoreError::Corrupt("dimension is zero".into()));
    }
    let count = usize::try_from(raw_count)
        .map_err(|_| VecStoreError::Corrupt("count exceeds addressable memory".into()))?;
    let dim = dimension as usize;

    // The header-implied size distinguishes a truncated file from one with
    // flipped bytes, and stops a lying count field from forcing a huge
    // allocation before any read fails.
    let ivf_extra = if mode == IndexMode::Ivf {
        nlist as usize * dim * 4 + count * 4
    } else {
        0
    };
    let expected_len = HEADER_LEN
        .checked_add(
            count
                .checked_mul(8 + 16 + dim * 4)
                .and_then(|n| n.checked_add(ivf_extra))
                .ok_or_else(|| VecStoreError::Corrupt("payload size overflows".into()))?,
        )
        .ok_or_else(|| VecStoreError::Corrupt("payload size overflows".into()))?;
    if bytes.len() < expected_len + TRAILER_LEN {
        return Err(VecStoreError::Truncated("payload"));
    }
    if bytes.len() > expected_len + TRAILER_LEN {
        return Err(VecStoreError::Corrupt(format!(
            "{} trailing bytes after checksum",
            bytes.len() - expected_len - TRAILER_LEN
        )));
    }

    let content = &bytes[..expected_len];
    let stored = u32::from_le_bytes(bytes[expected_len..].try_into().unwrap());
    let computed = crc32fast::hash(content);
    if stored != computed {
        return Err(VecStoreError::ChecksumMismatch { stored, computed });
    }

    let mut r = &content[HEADER_LEN..];
    let mut ids = vec![0u64; count];
    r.read_u64_into::<LittleEndian>(&mut ids)
        .map_err(|_| VecStoreError::Truncated("ids"))?;

    let mut coord_parts = vec![0f64; count * 2];
    r.read_f64_into::<LittleEndian>(&mut coord_parts)
        .map_err(|_| VecStoreError::Truncated("coords"))?;
    let mut coords = Vec::with_capacity(count);
    for pair in coord_parts.chunks_exact(2) {
        let coord = GeoCoord::new(pair[0], pair[1]).map_err(|e| {
            VecStoreError::Corrupt(format!("record {} coordinate: {e}", coords.len()))
        })?;
        coords.push(coord);
    }

    let mut vectors = vec![0f32; count * dim];
    r.read_f32_into::<LittleEndian>(&mut vectors)
        .map_err(|_| VecStoreError::Truncated("vectors"))?;
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(VecStoreError::Corrupt("non-finite vector component".into()));
    }

    let ivf = if mode == IndexMode::Ivf {
        if nlist == 0 {
            return Err(VecStoreError::Corrupt("ivf index with zero lists".into()));
        }
        let mut centroids = vec![0f32; nlist as usize * dim];
        r.read_f32_into::<LittleEndian>(&mut centroids)
            .map_err(|_| VecStoreError::Truncated("centroids"))?;
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(VecStoreError::Corrupt("non-finite centroid".into()));
        }
        let mut assignments = vec![0u32; count];
        r.read_u32_into::<LittleEndian>(&mut assignments)
            .map_err(|_| VecStoreError::Truncated("assignments"))?;
        if let Some(bad) = assignments.iter().find(|&&a| a >= nlist) {
            return Err(VecStoreError::Corrupt(format!(
                "assignment {bad} out of range for nlist {nlist}"
            )));
        }
        let lists = build_lists(&assignments, nlist);
        Some(IvfState {
            nlist,
            centroids,
            assignments,
            lists,
        })
    } else {
        if nlist != 0 {
            return Err(VecStoreError::Corrupt(
                "flat index with nonzero nlist".into(),
            ));
        }
        None
    };

    let mut unique = std::collections::HashSet::with_capacity(count);
    if let Some(&dup) = ids.iter().find(|id| !unique.insert(**id)) {
        return Err(VecStoreError::Corrupt(format!("duplicate id {dup}")));
    }

    // Loaded IVF indexes probe every list until the caller lowers nprobe.
    let nprobe = nlist;
    Ok(Index {
        mode,
        dimension,
        ids,
        coords,
        vectors,
        ivf,
        nprobe,
    })
}
