//! Model checkpoints: a JSON header (architecture, training metadata, and a
//! parameter table with byte offsets) followed by the raw little-endian f32
//! parameter payload. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use fda_core::models::{Architecture, LayerSpec, Model, ModelError, Param};
use fda_core::tensor::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"FDACKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("architecture hash mismatch: header says {stored}, recomputed {computed}")]
    ArchHashMismatch { stored: String, computed: String },
    #[error("parameter {name} declares shape {shape:?}, architecture expects {expected:?}")]
    ParamShapeMismatch {
        name: String,
        shape: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("parameter table mismatch: {0}")]
    ParamTableMismatch(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerDesc {
    Conv {
        kh: usize,
        kw: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        out_units: usize,
    },
}

impl From<&LayerSpec> for LayerDesc {
    fn from(spec: &LayerSpec) -> Self {
        match *spec {
            LayerSpec::Conv {
                kh,
                kw,
                out_channels,
                stride,
                padding,
            } => LayerDesc::Conv {
                kh,
                kw,
                out_channels,
                stride,
                padding,
            },
            LayerSpec::Relu => LayerDesc::Relu,
            LayerSpec::MaxPool { window, stride } => LayerDesc::MaxPool { window, stride },
            LayerSpec::Flatten => LayerDesc::Flatten,
            LayerSpec::Dense { out_units } => LayerDesc::Dense { out_units },
        }
    }
}

impl From<&LayerDesc> for LayerSpec {
    fn from(desc: &LayerDesc) -> Self {
        match *desc {
            LayerDesc::Conv {
                kh,
                kw,
                out_channels,
                stride,
                padding,
            } => LayerSpec::Conv {
                kh,
                kw,
                out_channels,
                stride,
                padding,
            },
            LayerDesc::Relu => LayerSpec::Relu,
            LayerDesc::MaxPool { window, stride } => LayerSpec::MaxPool { window, stride },
            LayerDesc::Flatten => LayerSpec::Flatten,
            LayerDesc::Dense { out_units } => LayerSpec::Dense { out_units },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArchDesc {
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
    pub layers: Vec<LayerDesc>,
}

impl From<&Architecture> for ArchDesc {
    fn from(arch: &Architecture) -> Self {
        ArchDesc {
            input_shape: arch.input_shape,
            num_classes: arch.num_classes,
            layers: arch.layers.iter().map(LayerDesc::from).collect(),
        }
    }
}

impl ArchDesc {
    pub fn to_architecture(&self) -> Architecture {
        Architecture {
            layers: self.layers.iter().map(LayerSpec::from).collect(),
            input_shape: self.input_shape,
            num_classes: self.num_classes,
        }
    }
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub adversarial: bool,
    pub final_train_accuracy: Option<f64>,
    pub test_top1: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamDesc {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Element count.
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: ArchDesc,
    arch_hash: String,
    metadata: TrainMeta,
    params: Vec<ParamDesc>,
}

fn arch_hash(arch: &ArchDesc) -> String {
    let canonical = serde_json::to_string(arch).expect("arch serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn save(model: &Model<f32>, meta: &TrainMeta, path: &Path) -> Result<(), CheckpointError> {
    let arch = ArchDesc::from(model.arch());
    let mut params = Vec::new();
    let mut payload = Vec::new();
    for p in model.params() {
        params.push(ParamDesc {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            offset: payload.len() as u64,
            len: p.tensor.len() as u64,
        });
        for v in p.tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: VERSION,
        arch_hash: arch_hash(&arch),
        arch,
        metadata: meta.clone(),
        params,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + header_bytes.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<(Model<f32>, TrainMeta), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::CorruptHeader("bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if 16 + header_len > bytes.len() {
        return Err(CheckpointError::CorruptHeader(format!(
            "declared header length {header_len} exceeds the file"
        )));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
    if header.version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(header.version));
    }
    let computed = arch_hash(&header.arch);
    if computed != header.arch_hash {
        return Err(CheckpointError::ArchHashMismatch {
            stored: header.arch_hash,
            computed,
        });
    }

    // Validate the whole parameter table against the architecture before
    // touching the payload.
    let arch = header.arch.to_architecture();
    let specs = arch.parameter_specs()?;
    if specs.len() != header.params.len() {
        return Err(CheckpointError::ParamTableMismatch(format!(
            "architecture has {} parameters, header lists {}",
            specs.len(),
            header.params.len()
        )));
    }
    let mut running_offset = 0u64;
    for ((name, shape), desc) in specs.iter().zip(&header.params) {
        if name != &desc.name {
            return Err(CheckpointError::ParamTableMismatch(format!(
                "expected parameter {name}, header lists {}",
                desc.name
            )));
        }
        if shape.as_slice() != desc.shape.as_slice() {
            return Err(CheckpointError::ParamShapeMismatch {
                name: desc.name.clone(),
                shape: desc.shape.clone(),
                expected: shape.clone(),
            });
        }
        let elems: usize = shape.iter().product();
        if desc.len != elems as u64 || desc.offset != running_offset {
            return Err(CheckpointError::ParamTableMismatch(format!(
                "parameter {} declares offset {} / len {}, expected offset {} / len {}",
                desc.name, desc.offset, desc.len, running_offset, elems
            )));
        }
        running_offset += 4 * elems as u64;
    }
    let payload = &bytes[16 + header_len..];
    if payload.len() as u64 != running_offset {
        return Err(CheckpointError::TruncatedPayload {
            expected: running_offset as usize,
            actual: payload.len(),
        });
    }

    let mut params = Vec::with_capacity(header.params.len());
    for desc in &header.params {
        let start = desc.offset as usize;
        let end = start + 4 * desc.len as usize;
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        params.push(Param {
            name: desc.name.clone(),
            tensor: Tensor::new(desc.shape.clone(), data)
                .map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?,
        });
    }
    let model = Model::from_parts(arch, params)?;
    Ok((model, header.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fda_core::models::build_model;

    fn small_model(seed: u64) -> Model<f32> {
        let arch = Architecture {
            layers: vec![
                LayerSpec::Conv {
                    kh: 3,
                    kw: 3,
                    out_channels: 2,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_units: 3 },
            ],
            input_shape: (5, 5, 1),
            num_classes: 3,
        };
        build_model(arch, seed).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = small_model(3);
        let meta = TrainMeta {
            seed: 3,
            epochs: 2,
            ..TrainMeta::default()
        };
        save(&model, &meta, &path).unwrap();
        let (loaded, loaded_meta) = load(&path).unwrap();
        assert_eq!(loaded_meta.seed, 3);
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.name, b.name);
            let bits_a: Vec<u32> = a.tensor.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_payload_names_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&small_model(4), &TrainMeta::default(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 10);
        fs::write(&path, &bytes).unwrap();
        match load(&path) {
            Err(CheckpointError::TruncatedPayload { expected, actual }) => {
                assert_eq!(expected, actual + 10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edited_shape_fails_before_tensors_are_built() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&small_model(5), &TrainMeta::default(), &path).unwrap();

        // Rewrite the header with a wrong dense shape, keeping the hash
        // consistent so the shape check itself is what fires.
        let bytes = fs::read(&path).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut header: Header = serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
        header.params[2].shape = vec![17, 3];
        let header_bytes = serde_json::to_vec(&header).unwrap();
        let mut edited = Vec::new();
        edited.extend_from_slice(MAGIC);
        edited.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        edited.extend_from_slice(&header_bytes);
        edited.extend_from_slice(&bytes[16 + header_len..]);
        fs::write(&path, &edited).unwrap();

        match load(&path) {
            Err(CheckpointError::ParamShapeMismatch { name, shape, .. }) => {
                assert_eq!(name, "layer3.weight");
                assert_eq!(shape, vec![17, 3]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edited_architecture_trips_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&small_model(6), &TrainMeta::default(), &path).unwrap();

        let bytes = fs::read(&path).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut header: Header = serde_json::from_slice(&bytes[16..16 + header_len]).unwrap();
        header.arch.num_classes = 7;
        let header_bytes = serde_json::to_vec(&header).unwrap();
        let mut edited = Vec::new();
        edited.extend_from_slice(MAGIC);
        edited.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        edited.extend_from_slice(&header_bytes);
        edited.extend_from_slice(&bytes[16 + header_len..]);
        fs::write(&path, &edited).unwrap();

        assert!(matches!(
            load(&path),
            Err(CheckpointError::ArchHashMismatch { .. })
        ));
    }

    #[test]
    fn garbage_file_is_a_corrupt_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::CorruptHeader(_))
        ));
    }
}
