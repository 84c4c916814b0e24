//! Flat binary tensor checkpoints with a JSON sidecar.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    8 bytes  "NLOSCKPT"
//! version  u32      1
//! count    u32
//! count x { name_len u32, name utf-8, rows u32, cols u32, rows*cols f64 }
//! ```
//!
//! Model parameters are stored under `param/<name>`; the optimizer moments,
//! when present, under `adam.m/<name>` and `adam.v/<name>`. The sidecar at
//! `<path>.json` holds the model configuration and training position.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::network::TransientTransformer;
use crate::params::Params;
use crate::tensor::Tensor;
use crate::train::AdamState;

pub const MAGIC: &[u8; 8] = b"NLOSCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub stage: Option<String>,
    #[serde(default)]
    pub epochs_completed: usize,
    #[serde(default)]
    pub adam_step: u64,
}

pub struct Checkpoint {
    pub model: TransientTransformer,
    pub adam: Option<AdamState>,
    pub sidecar: Sidecar,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn put_u32<W: Write>(w: &mut W, v: u64, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| ModelError::Format(format!("{what} {v} does not fit in 32 bits")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION as u64, "version")?;
    put_u32(&mut w, tensors.len() as u64, "tensor count")?;
    for (name, t) in tensors {
        put_u32(&mut w, name.len() as u64, "name length")?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.rows() as u64, "rows")?;
        put_u32(&mut w, t.cols() as u64, "cols")?;
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Format("bad magic, not a checkpoint file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(ModelError::Format(format!(
            "unsupported version {version} (supported: {VERSION})"
        )));
    }
    let count = get_u32(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = get_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| ModelError::Format("tensor name is not utf-8".into()))?;
        let rows = get_u32(&mut r)? as usize;
        let cols = get_u32(&mut r)? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n > 0 && n <= 1 << 32)
            .ok_or_else(|| ModelError::Format(format!("{name}: implausible shape {rows}x{cols}")))?;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(rows, cols, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ModelError::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save(path: &Path, model: &TransientTransformer, adam: Option<&AdamState>, sidecar: &Sidecar) -> Result<()> {
    let p = model.params();
    let mut named: Vec<(String, &Tensor)> = p.iter().map(|(n, t)| (format!("param/{n}"), t)).collect();
    if let Some(a) = adam {
        for (i, (n, _)) in p.iter().enumerate() {
            named.push((format!("adam.m/{n}"), &a.m[i]));
        }
        for (i, (n, _)) in p.iter().enumerate() {
            named.push((format!("adam.v/{n}"), &a.v[i]));
        }
    }
    let mut buf = Vec::new();
    write_tensors(&mut buf, &named)?;
    fs::write(path, buf)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if sidecar.format_version != VERSION {
        return Err(ModelError::Format(format!(
            "unsupported version {} (supported: {VERSION})",
            sidecar.format_version
        )));
    }
    let tensors = read_tensors(fs::File::open(path).map(std::io::BufReader::new)?)?;
    let mut params = Vec::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, t) in tensors {
        if let Some(n) = name.strip_prefix("param/") {
            params.push((n.to_string(), t));
        } else if name.starts_with("adam.m/") {
            m.push(t);
        } else if name.starts_with("adam.v/") {
            v.push(t);
        } else {
            return Err(ModelError::Format(format!("unexpected tensor {name}")));
        }
    }
    let params = Params::from_named(&sidecar.model, params)?;
    let adam = if m.is_empty() && v.is_empty() {
        None
    } else {
        if m.len() != params.len() || v.len() != params.len() {
            return Err(ModelError::Format("optimizer state does not cover every parameter".into()));
        }
        for i in 0..params.len() {
            if m[i].shape() != params.tensor(i).shape() || v[i].shape() != params.tensor(i).shape() {
                return Err(ModelError::Shape(format!("optimizer state for {}", params.name(i))));
            }
        }
        Some(AdamState {
            step: sidecar.adam_step,
            m,
            v,
        })
    };
    let model = TransientTransformer::from_params(sidecar.model.clone(), params)?;
    Ok(Checkpoint { model, adam, sidecar })
}
