//! Self-describing binary container for frame batches, plus CSV export.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SQZF" | version u32 | n_alpha f64 | n_s f64 | phi1 f64
//! | rows u32 | cols u32 | weights (rows*cols) f64 | seed u64
//! | n_frames u32 | counts (n_frames * rows * cols) u32
//! | checksum u64
//! ```
//!
//! The checksum is FNV-1a 64 over every byte between the magic and the
//! checksum itself, so truncation, bit rot, and metadata edits are all
//! detected before any analysis runs.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::camera::{FrameBatch, SensorGeometry};
use crate::error::{Result, SqzError};
use crate::state::StateParams;

const MAGIC: &[u8; 4] = b"SQZF";
pub const FORMAT_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

/// Serialize a batch. Returns the payload checksum for echoing to logs.
pub fn write_batch<P: AsRef<Path>>(batch: &FrameBatch, path: P) -> Result<u64> {
    let mut payload = Vec::with_capacity(64 + 8 * batch.geometry.pixel_count() + 4 * batch.counts().len());
    payload.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    payload.extend_from_slice(&batch.params.n_alpha.to_le_bytes());
    payload.extend_from_slice(&batch.params.n_s.to_le_bytes());
    payload.extend_from_slice(&batch.params.phi1.to_le_bytes());
    payload.extend_from_slice(&(batch.geometry.rows() as u32).to_le_bytes());
    payload.extend_from_slice(&(batch.geometry.cols() as u32).to_le_bytes());
    for &w in batch.geometry.weights() {
        payload.extend_from_slice(&w.to_le_bytes());
    }
    payload.extend_from_slice(&batch.seed.to_le_bytes());
    payload.extend_from_slice(&(batch.n_frames as u32).to_le_bytes());
    for &c in batch.counts() {
        payload.extend_from_slice(&c.to_le_bytes());
    }
    let checksum = fnv1a64(&payload);

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&payload)?;
    w.write_all(&checksum.to_le_bytes())?;
    w.flush()?;
    Ok(checksum)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(SqzError::CorruptFile(format!(
                "unexpected end of file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Deserialize a batch, verifying magic, version, structure, and checksum.
pub fn read_batch<P: AsRef<Path>>(path: P) -> Result<FrameBatch> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 8 {
        return Err(SqzError::CorruptFile("file shorter than header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(SqzError::CorruptFile("bad magic bytes".into()));
    }
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let payload = &bytes[4..bytes.len() - 8];
    let computed = fnv1a64(payload);
    if stored != computed {
        return Err(SqzError::ChecksumMismatch { stored, computed });
    }

    let mut cur = Cursor { bytes: payload, pos: 0 };
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(SqzError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n_alpha = cur.f64()?;
    let n_s = cur.f64()?;
    let phi1 = cur.f64()?;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let pixels = rows
        .checked_mul(cols)
        .ok_or_else(|| SqzError::CorruptFile("pixel count overflow".into()))?;
    let mut weights = Vec::with_capacity(pixels);
    for _ in 0..pixels {
        weights.push(cur.f64()?);
    }
    let seed = cur.u64()?;
    let n_frames = cur.u32()? as usize;
    let n_counts = n_frames
        .checked_mul(pixels)
        .ok_or_else(|| SqzError::CorruptFile("count matrix overflow".into()))?;
    let mut counts = Vec::with_capacity(n_counts);
    for _ in 0..n_counts {
        counts.push(cur.u32()?);
    }
    if cur.pos != payload.len() {
        return Err(SqzError::CorruptFile(format!(
            "{} trailing bytes after counts",
            payload.len() - cur.pos
        )));
    }

    let geometry = SensorGeometry::new(rows, cols, weights)?;
    let params = StateParams::new(n_alpha, n_s, phi1)?;
    FrameBatch::from_parts(geometry, params, seed, n_frames, counts)
}

/// Plain-text interchange: one `frame,pixel,count` row per entry.
pub fn export_csv<W: Write>(batch: &FrameBatch, mut w: W) -> std::io::Result<()> {
    writeln!(w, "frame,pixel,count")?;
    for f in 0..batch.n_frames {
        for (i, &c) in batch.frame(f).iter().enumerate() {
            writeln!(w, "{f},{i},{c}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::simulate_batch;
    use std::fs;

    fn small_batch() -> FrameBatch {
        let p = StateParams::new(50.0, 0.5, 0.2).unwrap();
        let g = SensorGeometry::uniform(3, 4).unwrap();
        simulate_batch(&p, &g, 16, 99).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.sqzf");
        let batch = small_batch();
        let checksum = write_batch(&batch, &path).unwrap();
        assert_ne!(checksum, 0);
        let back = read_batch(&path).unwrap();
        assert_eq!(batch, back);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.sqzf");
        write_batch(&small_batch(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 13]).unwrap();
        let err = read_batch(&path).unwrap_err();
        assert!(matches!(
            err,
            SqzError::ChecksumMismatch { .. } | SqzError::CorruptFile(_)
        ));
    }

    #[test]
    fn flipped_bit_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.sqzf");
        write_batch(&small_batch(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_batch(&path).unwrap_err(),
            SqzError::ChecksumMismatch { .. }
        ));
    }

    #[test]
    fn future_version_is_rejected_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.sqzf");
        write_batch(&small_batch(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Bump the version field and re-stamp the checksum so only the
        // version check can fire.
        bytes[4] = 2;
        let len = bytes.len();
        let checksum = fnv1a64(&bytes[4..len - 8]);
        bytes[len - 8..].copy_from_slice(&checksum.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_batch(&path).unwrap_err(),
            SqzError::VersionMismatch { found: 2, .. }
        ));
    }

    #[test]
    fn wrong_magic_is_not_a_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.sqzf");
        fs::write(&path, b"PNG\x0d not a frame file at all").unwrap();
        assert!(matches!(
            read_batch(&path).unwrap_err(),
            SqzError::CorruptFile(_)
        ));
    }

    #[test]
    fn csv_export_shape() {
        let batch = small_batch();
        let mut buf = Vec::new();
        export_csv(&batch, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().count(),
            1 + batch.n_frames * batch.geometry.pixel_count()
        );
        assert!(text.starts_with("frame,pixel,count"));
    }
}
