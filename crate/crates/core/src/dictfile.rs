//! Binary dictionary file format.
//!
//! All integers little-endian:
//!
//! ```text
//! magic        4 bytes  "SPKD"
//! version      u16      FORMAT_VERSION
//! W, H         u32, u32 resize target
//! x_n, y_n     u32, u32 grid counts
//! n_train      u32      dictionary width
//! n_classes    u32
//! labels       n_classes x (u32 byte length, UTF-8 bytes), sorted
//! column map   n_train x u32 index into the label table
//! matrices     x_n*y_n matrices in patch-index order, each
//!              (grid_w*grid_h) x n_train f64, column-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{FormatError, Result};
use crate::linalg::Mat;
use crate::pipeline::{Dictionary, GridSpec};

pub const MAGIC: &[u8; 4] = b"SPKD";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_dictionary(dict: &Dictionary) -> Vec<u8> {
    let grid = dict.grid();
    let labels: Vec<&str> = dict.labels().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        grid.width,
        grid.height,
        grid.x_n,
        grid.y_n,
        dict.n_train(),
        labels.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for l in &labels {
        out.extend_from_slice(&(l.len() as u32).to_le_bytes());
        out.extend_from_slice(l.as_bytes());
    }
    for l in dict.column_labels() {
        let idx = labels.binary_search(&l.as_str()).expect("label in table");
        out.extend_from_slice(&(idx as u32).to_le_bytes());
    }
    for m in dict.per_patch() {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(FormatError::Truncated {
                offset: self.bytes.len(),
                needed: n - remaining,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<usize, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn malformed(&self, reason: impl Into<String>) -> FormatError {
        FormatError::Malformed {
            offset: self.pos,
            reason: reason.into(),
        }
    }
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<Dictionary> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| FormatError::BadMagic {
        found: bytes[..bytes.len().min(4)].to_vec(),
    })?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic {
            found: magic.to_vec(),
        }
        .into());
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let mut header = [0usize; 6];
    for h in &mut header {
        *h = r.u32()?;
    }
    let [width, height, x_n, y_n, n_train, n_classes] = header;
    let grid = GridSpec {
        width,
        height,
        x_n,
        y_n,
    };
    if let Err(e) = grid.validate() {
        return Err(r.malformed(e.to_string()).into());
    }
    if n_train == 0 || n_classes == 0 || n_classes > n_train {
        return Err(r
            .malformed(format!("{n_classes} classes for {n_train} training columns"))
            .into());
    }

    let mut labels: Vec<String> = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = r.u32()?;
        let start = r.pos;
        let raw = r.take(len)?;
        let label = std::str::from_utf8(raw).map_err(|_| FormatError::Malformed {
            offset: start,
            reason: "label is not valid UTF-8".into(),
        })?;
        if labels.last().is_some_and(|prev| prev.as_str() >= label) {
            return Err(FormatError::Malformed {
                offset: start,
                reason: "label table not strictly sorted".into(),
            }
            .into());
        }
        labels.push(label.to_string());
    }

    let mut used = vec![false; n_classes];
    let mut column_labels = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let idx = r.u32()?;
        if idx >= n_classes {
            return Err(r.malformed(format!("label index {idx} out of range")).into());
        }
        used[idx] = true;
        column_labels.push(labels[idx].clone());
    }
    if used.iter().any(|u| !u) {
        return Err(r.malformed("label table has unused entries").into());
    }

    let patch_len = grid.patch_len();
    let matrix_bytes = patch_len * n_train * 8;
    let mut per_patch = Vec::with_capacity(grid.n_patches());
    for _ in 0..grid.n_patches() {
        let start = r.pos;
        let raw = r.take(matrix_bytes)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = Mat::from_col_major(patch_len, n_train, data).map_err(|e| {
            FormatError::Malformed {
                offset: start,
                reason: e.to_string(),
            }
        })?;
        per_patch.push(m);
    }
    if r.pos != bytes.len() {
        return Err(r
            .malformed(format!("{} trailing bytes", bytes.len() - r.pos))
            .into());
    }
    Dictionary::from_parts(grid, per_patch, column_labels)
}

pub fn save_dictionary(dict: &Dictionary, path: &Path) -> Result<()> {
    fs::write(path, encode_dictionary(dict))?;
    Ok(())
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let bytes = fs::read(path)?;
    decode_dictionary(&bytes)
}
