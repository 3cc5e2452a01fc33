//! Parameter checkpoint file.
//!
//! Layout: magic `RSCK`, u32 version, u32 JSON header length, JSON header
//! naming each parameter with shape, then raw little-endian f32 values in
//! header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RSCK";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    learnable: bool,
}

pub fn save<T: Scalar>(params: &ParamSet<T>, path: &Path) -> Result<()> {
    let header = Header {
        version: VERSION,
        params: params
            .entries()
            .map(|e| ParamMeta {
                name: e.name.clone(),
                shape: e.value.shape().to_vec(),
                learnable: e.learnable,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialization");
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for e in params.entries() {
        for v in e.value.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Load values into a parameter set with identical registration order,
/// names and shapes (i.e. a model built from the same config).
pub fn load_into<T: Scalar>(params: &mut ParamSet<T>, path: &Path) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let bad = |details: String| Error::Format {
        path: path.to_path_buf(),
        details,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("missing RSCK magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf).map_err(io)?;
    let json_len = u32::from_le_bytes(u32buf) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| bad(format!("header parse: {e}")))?;

    let metas: Vec<(String, Vec<usize>)> = params
        .entries()
        .map(|e| (e.name.clone(), e.value.shape().to_vec()))
        .collect();
    if header.params.len() != metas.len() {
        return Err(bad(format!(
            "parameter count {} does not match model ({})",
            header.params.len(),
            metas.len()
        )));
    }
    for (meta, (name, shape)) in header.params.iter().zip(&metas) {
        if &meta.name != name || &meta.shape != shape {
            return Err(bad(format!(
                "parameter mismatch: file has {} {:?}, model expects {} {:?}",
                meta.name, meta.shape, name, shape
            )));
        }
    }
    for (idx, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
        let numel: usize = header.params[idx].shape.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let data: Vec<T> = bytes
            .chunks_exact(4)
            .map(|b| T::from_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.set_value(id, Tensor::new(header.params[idx].shape.clone(), data));
    }
    Ok(())
}
