//! IDX image/label files (big-endian, magics 2051 and 2049).

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: wrong magic {got} (expected {expected})")]
    WrongMagic {
        path: String,
        got: u32,
        expected: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes of data but found {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
}

/// Raw decoded content of one image file.
#[derive(Debug, Clone)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// count * rows * cols bytes, one image after another.
    pub pixels: Vec<u8>,
    pub count: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn load_images(path: &Path) -> Result<IdxImages, IdxError> {
    let bytes = read_file(path)?;
    let name = || path.display().to_string();
    let magic = be_u32(&bytes, 0).ok_or_else(|| IdxError::Truncated {
        path: name(),
        expected: 16,
        actual: bytes.len(),
    })?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::WrongMagic {
            path: name(),
            got: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let (count, rows, cols) = match (be_u32(&bytes, 4), be_u32(&bytes, 8), be_u32(&bytes, 12)) {
        (Some(n), Some(r), Some(c)) => (n as usize, r as usize, c as usize),
        _ => {
            return Err(IdxError::Truncated {
                path: name(),
                expected: 16,
                actual: bytes.len(),
            })
        }
    };
    let expected = count * rows * cols;
    let data = &bytes[16..];
    if data.len() != expected {
        return Err(IdxError::Truncated {
            path: name(),
            expected,
            actual: data.len(),
        });
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: data.to_vec(),
        count,
    })
}

pub fn load_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let bytes = read_file(path)?;
    let name = || path.display().to_string();
    let magic = be_u32(&bytes, 0).ok_or_else(|| IdxError::Truncated {
        path: name(),
        expected: 8,
        actual: bytes.len(),
    })?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::WrongMagic {
            path: name(),
            got: magic,
            expected: LABEL_MAGIC,
        });
    }
    let count = be_u32(&bytes, 4).ok_or_else(|| IdxError::Truncated {
        path: name(),
        expected: 8,
        actual: bytes.len(),
    })? as usize;
    let data = &bytes[8..];
    if data.len() != count {
        return Err(IdxError::Truncated {
            path: name(),
            expected: count,
            actual: data.len(),
        });
    }
    Ok(data.to_vec())
}

/// One split (images + labels) with the counts cross-checked.
pub fn load_split(images_path: &Path, labels_path: &Path) -> Result<(IdxImages, Vec<u8>), IdxError> {
    let images = load_images(images_path)?;
    let labels = load_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    Ok((images, labels))
}

pub fn save_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> std::io::Result<()> {
    assert_eq!(pixels.len() % (rows * cols), 0);
    let count = pixels.len() / (rows * cols);
    let mut f = fs::File::create(path)?;
    f.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    f.write_all(&(count as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    f.write_all(pixels)
}

pub fn save_labels(path: &Path, labels: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&LABEL_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_exact_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("im");
        let lab = dir.path().join("la");
        save_images(&img, 2, 2, &[0, 128, 255, 7, 1, 2, 3, 4]).unwrap();
        save_labels(&lab, &[3, 9]).unwrap();
        let (images, labels) = load_split(&img, &lab).unwrap();
        assert_eq!(images.count, 2);
        assert_eq!((images.rows, images.cols), (2, 2));
        assert_eq!(labels, vec![3, 9]);
        // Byte 255 scales to exactly 1.0.
        assert_eq!(images.pixels[2] as f32 / 255.0, 1.0);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("im");
        save_labels(&img, &[1]).unwrap(); // label magic where an image is expected
        match load_images(&img) {
            Err(IdxError::WrongMagic { got, expected, .. }) => {
                assert_eq!(got, LABEL_MAGIC);
                assert_eq!(expected, IMAGE_MAGIC);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn count_mismatch_names_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("im");
        let lab = dir.path().join("la");
        save_images(&img, 2, 2, &[0; 8]).unwrap();
        save_labels(&lab, &[1, 2, 3]).unwrap();
        match load_split(&img, &lab) {
            Err(IdxError::CountMismatch { images: 2, labels: 3 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("im");
        save_images(&img, 2, 2, &[0; 8]).unwrap();
        let mut bytes = std::fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&img, bytes).unwrap();
        match load_images(&img) {
            Err(IdxError::Truncated {
                expected: 8,
                actual: 5,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }
}
