//! Binary parameter files.
//!
//! Layout (all integers little-endian `u32`):
//! `"ALFG"`, version, block count, then per block: name length, UTF-8 name,
//! rank, each dimension, `f32` payload. A CRC-32 of every preceding byte closes the file.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::{SorterNet, TapReducer, TargetModel};
use crate::numerics::Tensor;
use crate::ranking::Sorter;

pub const MAGIC: &[u8; 4] = b"ALFG";
pub const VERSION: u32 = 1;

pub type NamedTensors = Vec<(String, Tensor)>;

pub fn encode_checkpoint<'a>(blocks: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let blocks: Vec<_> = blocks.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, t) in blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated {what} at byte offset {}: need {n} bytes, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NamedTensors> {
    if bytes.len() < 16 {
        return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }
    let mut c = Cursor { bytes: body, pos: 4 };
    let version = c.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported format version {version}, expected {VERSION}")));
    }
    let count = c.u32("block count")?;
    let mut blocks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = c.u32("name length")?;
        let at = c.pos;
        let name = std::str::from_utf8(c.take(len, "block name")?)
            .map_err(|_| Error::Checkpoint(format!("block name at byte offset {at} is not UTF-8")))?
            .to_string();
        let rank = c.u32("rank")?;
        let shape = (0..rank).map(|_| c.u32("dimension")).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::Checkpoint(format!("block `{name}` shape overflows")))?;
        let payload = c.take(numel.saturating_mul(4), "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        blocks.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} unexpected bytes after the last block", body.len() - c.pos)));
    }
    Ok(blocks)
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn save_checkpoint<'a>(path: &Path, blocks: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    let bytes = encode_checkpoint(blocks);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NamedTensors> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn meta<'a>(blocks: &'a NamedTensors, name: &str) -> Result<&'a Tensor> {
    blocks
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Checkpoint(format!("missing block `{name}`")))
}

fn params_only(blocks: &NamedTensors) -> impl Iterator<Item = (&str, &Tensor)> + Clone {
    blocks.iter().filter(|(n, _)| !n.starts_with("meta.")).map(|(n, t)| (n.as_str(), t))
}

pub fn save_sorter(path: &Path, sorter: &Sorter) -> Result<()> {
    let seq = Tensor::vector(vec![sorter.net().seq_len() as f64]);
    let blocks = std::iter::once(("meta.seq_len", &seq)).chain(sorter.net().params().iter());
    save_checkpoint(path, blocks)
}

pub fn load_sorter(path: &Path) -> Result<Sorter> {
    let blocks = load_checkpoint(path)?;
    let seq_len = meta(&blocks, "meta.seq_len")?.item()? as usize;
    SorterNet::from_named(seq_len, params_only(&blocks))
        .map(Sorter::new)
        .map_err(|e| Error::Checkpoint(format!("{}: not a sorter checkpoint: {e}", path.display())))
}

pub fn save_target(path: &Path, model: &TargetModel) -> Result<()> {
    let cfg = model.config();
    let taps = Tensor::vector(cfg.taps.iter().map(|&t| t as f64).collect());
    let reducer = Tensor::vector(vec![match cfg.reducer {
        TapReducer::Mean => 0.0,
        TapReducer::Identity => 1.0,
    }]);
    let blocks = [("meta.taps", &taps), ("meta.reducer", &reducer)]
        .into_iter()
        .chain(model.params().iter());
    save_checkpoint(path, blocks)
}

pub fn load_target(path: &Path) -> Result<TargetModel> {
    let blocks = load_checkpoint(path)?;
    let taps = meta(&blocks, "meta.taps")?.data().iter().map(|&t| t as usize).collect();
    let reducer = match meta(&blocks, "meta.reducer")?.item()? {
        r if r == 0.0 => TapReducer::Mean,
        r if r == 1.0 => TapReducer::Identity,
        r => return Err(Error::Checkpoint(format!("unknown tap reducer code {r}"))),
    };
    TargetModel::from_named(params_only(&blocks), reducer, taps)
        .map_err(|e| Error::Checkpoint(format!("{}: not a target-model checkpoint: {e}", path.display())))
}
