//! Model checkpoint layout (little-endian):
//!
//! ```text
//! "FBL1" | version u32 | n_inputs u64 | fc_size u64
//!        | n_enc u32 | n_enc × u64 | n_dec u32 | n_dec × u64
//!        | best_epoch u64 (u64::MAX if unknown) | n_params u64 | n_params × f64
//! ```

use std::path::Path;

use super::{Architecture, LstmAe};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MODEL_MAGIC: &[u8; 4] = b"FBL1";
const VERSION: u32 = 1;

pub fn encode_model(model: &LstmAe, best_epoch: Option<usize>) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(64 + 8 * model.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.n_inputs() as u64).to_le_bytes());
    out.extend_from_slice(&(arch.fc_size as u64).to_le_bytes());
    for sizes in [&arch.encoder, &arch.decoder] {
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &h in sizes {
            out.extend_from_slice(&(h as u64).to_le_bytes());
        }
    }
    out.extend_from_slice(&best_epoch.map_or(u64::MAX, |e| e as u64).to_le_bytes());
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            path: self.path.into(),
            expected: (self.pos as u64).saturating_add(n as u64),
            actual: self.bytes.len() as u64,
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn size(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::InvalidInput(format!("{}: size {v} too large", self.path.display())))
    }

    fn sizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n > 1024 {
            return Err(Error::InvalidInput(format!("{}: implausible layer count {n}", self.path.display())));
        }
        (0..n).map(|_| self.size()).collect()
    }
}

/// Parses a checkpoint; returns the model and its stored best epoch.
pub fn decode_model(bytes: &[u8], path: &Path) -> Result<(LstmAe, Option<usize>)> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: String::from_utf8_lossy(MODEL_MAGIC).into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into(),
        });
    }
    let mut r = Reader { bytes, pos: 4, path };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let n_inputs = r.size()?;
    let fc_size = r.size()?;
    let encoder = r.sizes()?;
    let decoder = r.sizes()?;
    let best = r.u64()?;
    let n_params = r.size()?;
    let arch = Architecture {
        fc_size,
        encoder,
        decoder,
    };
    let expected = LstmAe::zeros(n_inputs, &arch)?.param_count();
    if n_params != expected {
        return Err(Error::Shape(format!(
            "{}: header declares {n_params} parameters, architecture needs {expected}",
            path.display()
        )));
    }
    let payload = r.take(n_params.checked_mul(8).ok_or(Error::DimensionOverflow {
        path: path.into(),
        rows: n_params as u64,
        cols: 8,
    })?)?;
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = LstmAe::from_params(n_inputs, &arch, params)?;
    Ok((model, (best != u64::MAX).then_some(best as usize)))
}

pub fn save_model(path: &Path, model: &LstmAe, best_epoch: Option<usize>) -> Result<()> {
    write_atomic(path, &encode_model(model, best_epoch))
}

pub fn load_model(path: &Path) -> Result<(LstmAe, Option<usize>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_model(&bytes, path)
}
