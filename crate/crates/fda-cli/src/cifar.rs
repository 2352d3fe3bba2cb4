//! CIFAR-10 binary batches: 3073-byte records of one label byte plus
//! channel-planar 32x32 RGB pixels.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const RECORD_BYTES: usize = 3073;
pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum CifarError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {size} bytes is not a multiple of the {record} byte record size")]
    BadSize {
        path: String,
        size: usize,
        record: usize,
    },
    #[error("{path}: record {record} has label {label} >= 10")]
    BadLabel {
        path: String,
        record: usize,
        label: u8,
    },
}

/// Decoded batch: labels plus H x W x C interleaved pixel bytes per record.
#[derive(Debug, Clone, Default)]
pub struct CifarBatch {
    pub labels: Vec<u8>,
    /// count * 32 * 32 * 3 bytes in H x W x C order.
    pub pixels: Vec<u8>,
}

impl CifarBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn load_batch(path: &Path) -> Result<CifarBatch, CifarError> {
    let bytes = fs::read(path).map_err(|source| CifarError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(CifarError::BadSize {
            path: path.display().to_string(),
            size: bytes.len(),
            record: RECORD_BYTES,
        });
    }
    let count = bytes.len() / RECORD_BYTES;
    let mut labels = Vec::with_capacity(count);
    let mut pixels = vec![0u8; count * SIDE * SIDE * CHANNELS];
    for rec in 0..count {
        let record = &bytes[rec * RECORD_BYTES..(rec + 1) * RECORD_BYTES];
        let label = record[0];
        if label >= 10 {
            return Err(CifarError::BadLabel {
                path: path.display().to_string(),
                record: rec,
                label,
            });
        }
        labels.push(label);
        // Channel-planar source to H x W x C destination.
        let planes = &record[1..];
        let dst = &mut pixels[rec * SIDE * SIDE * CHANNELS..(rec + 1) * SIDE * SIDE * CHANNELS];
        for ch in 0..CHANNELS {
            let plane = &planes[ch * SIDE * SIDE..(ch + 1) * SIDE * SIDE];
            for (pos, &v) in plane.iter().enumerate() {
                dst[pos * CHANNELS + ch] = v;
            }
        }
    }
    Ok(CifarBatch { labels, pixels })
}

/// Writes records from H x W x C interleaved bytes (the inverse of
/// `load_batch`).
pub fn save_batch(path: &Path, labels: &[u8], pixels: &[u8]) -> std::io::Result<()> {
    assert_eq!(pixels.len(), labels.len() * SIDE * SIDE * CHANNELS);
    let mut f = fs::File::create(path)?;
    for (rec, &label) in labels.iter().enumerate() {
        let src = &pixels[rec * SIDE * SIDE * CHANNELS..(rec + 1) * SIDE * SIDE * CHANNELS];
        let mut record = vec![0u8; RECORD_BYTES];
        record[0] = label;
        for ch in 0..CHANNELS {
            for pos in 0..SIDE * SIDE {
                record[1 + ch * SIDE * SIDE + pos] = src[pos * CHANNELS + ch];
            }
        }
        f.write_all(&record)?;
    }
    Ok(())
}
