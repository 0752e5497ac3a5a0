//! Bit-exact model checkpoints.
//!
//! Layout: the magic `MGPH`, a little-endian u32 format version, a u64
//! length-prefixed JSON header (dimensions, activations, training mode,
//! λ, seed, projector shape), the raw parameter blobs as row-major
//! little-endian f64 in a fixed order (per layer W then b, then the
//! projector U when present), and a trailing SHA-256 of everything before
//! it. Floats round-trip bit-exactly.

use std::fs;
use std::path::Path;

use manigraph_core::nalgebra::DMatrix;
use manigraph_core::net::{Activation, Gcn, GcnLayer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::trainer::Mode;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MGPH";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: Vec<usize>,
    activations: Vec<String>,
    mode: Mode,
    lambda: f64,
    seed: u64,
    /// Projector shape `[d_m, c]`, empty when no decision state is stored.
    u_shape: Vec<usize>,
}

/// What a checkpoint carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Gcn,
    pub mode: Mode,
    pub lambda: f64,
    pub seed: u64,
    /// Final orthonormal projector for decision-layer modes.
    pub projector: Option<DMatrix<f64>>,
}

fn push_matrix(blob: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            blob.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn read_matrix(bytes: &[u8], offset: &mut usize, rows: usize, cols: usize, path: &Path) -> Result<DMatrix<f64>> {
    let need = rows * cols * 8;
    if *offset + need > bytes.len() {
        return Err(Error::format(path, "checkpoint truncated"));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let chunk: [u8; 8] = bytes[*offset..*offset + 8].try_into().expect("bounds checked");
            m[(i, j)] = f64::from_le_bytes(chunk);
            *offset += 8;
        }
    }
    Ok(m)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let header = Header {
        dims: ckpt.model.dims(),
        activations: ckpt
            .model
            .layers
            .iter()
            .map(|l| match l.activation {
                Activation::Relu => "relu".to_string(),
                Activation::Identity => "identity".to_string(),
            })
            .collect(),
        mode: ckpt.mode,
        lambda: ckpt.lambda,
        seed: ckpt.seed,
        u_shape: ckpt
            .projector
            .as_ref()
            .map(|u| vec![u.nrows(), u.ncols()])
            .unwrap_or_default(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for layer in &ckpt.model.layers {
        push_matrix(&mut bytes, &layer.w);
        push_matrix(&mut bytes, &layer.b);
    }
    if let Some(u) = &ckpt.projector {
        push_matrix(&mut bytes, u);
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 + 4 + 8 + 32 {
        return Err(Error::format(path, "checkpoint too short"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let actual = Sha256::digest(body);
    if actual.as_slice() != digest {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: hex(digest),
            actual: hex(&actual),
        });
    }
    if &body[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("sized"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().expect("sized")) as usize;
    if 16 + header_len > body.len() {
        return Err(Error::format(path, "header length out of range"));
    }
    let header: Header = serde_json::from_slice(&body[16..16 + header_len])
        .map_err(|e| Error::format(path, e.to_string()))?;
    if header.dims.len() < 2 || header.activations.len() != header.dims.len() - 1 {
        return Err(Error::format(path, "inconsistent layer metadata"));
    }

    let mut offset = 16 + header_len;
    let mut layers = Vec::with_capacity(header.activations.len());
    for (i, act) in header.activations.iter().enumerate() {
        let activation = match act.as_str() {
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            other => return Err(Error::format(path, format!("unknown activation {other}"))),
        };
        let w = read_matrix(body, &mut offset, header.dims[i], header.dims[i + 1], path)?;
        let b = read_matrix(body, &mut offset, 1, header.dims[i + 1], path)?;
        layers.push(GcnLayer { w, b, activation });
    }
    let projector = if header.u_shape.is_empty() {
        None
    } else {
        Some(read_matrix(body, &mut offset, header.u_shape[0], header.u_shape[1], path)?)
    };
    if offset != body.len() {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }

    Ok(Checkpoint {
        model: Gcn { layers },
        mode: header.mode,
        lambda: header.lambda,
        seed: header.seed,
        projector,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
