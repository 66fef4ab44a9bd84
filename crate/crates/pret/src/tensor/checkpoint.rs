//! Versioned binary checkpoint container: named parameter tensors plus a
//! header recording the substrate version and a config hash.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PretError, Result};

use super::nn::ParamStore;

const MAGIC: &[u8; 8] = b"PRETCKPT";
const VERSION: u32 = 1;

pub fn save(store: &ParamStore<f32>, config_hash: &str, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let hash = config_hash.as_bytes();
    buf.extend_from_slice(&(hash.len() as u32).to_le_bytes());
    buf.extend_from_slice(hash);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(p.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(p.cols as u32).to_le_bytes());
        for &x in &p.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Load parameter values into an already-constructed store (the architecture
/// defines names and shapes; the checkpoint must match). Returns the stored
/// config hash.
pub fn load(store: &mut ParamStore<f32>, path: &Path) -> Result<String> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(PretError::Checkpoint("truncated file".into()));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(PretError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(PretError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let hash = String::from_utf8(take(&mut pos, hlen)?.to_vec())
        .map_err(|_| PretError::Checkpoint("bad hash encoding".into()))?;
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if count != store.len() {
        return Err(PretError::Checkpoint(format!(
            "checkpoint holds {} tensors, model expects {}",
            count,
            store.len()
        )));
    }
    for _ in 0..count {
        let nlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, nlen)?.to_vec())
            .map_err(|_| PretError::Checkpoint("bad name encoding".into()))?;
        let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let pid = store
            .find(&name)
            .ok_or_else(|| PretError::Checkpoint(format!("unknown tensor {name}")))?;
        {
            let p = store.get(pid);
            if (p.rows, p.cols) != (rows, cols) {
                return Err(PretError::Checkpoint(format!(
                    "tensor {} shape {}x{} does not match model {}x{}",
                    name, rows, cols, p.rows, p.cols
                )));
            }
        }
        let raw = take(&mut pos, rows * cols * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.get_mut(pid).data = data;
    }
    Ok(hash)
}
