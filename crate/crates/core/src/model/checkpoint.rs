//! Binary checkpoints (little-endian): magic `IOCK`, `u32` version, `u32`
//! header length and a JSON header, then per tensor a `u16` name length, the
//! name, a `u8` rank, `rank` × `u32` dims and the `f32` data.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, Params};
use crate::error::{Error, Result};
use crate::tensor::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IOCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    tensor_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Params<f32>,
}

impl Checkpoint {
    /// Refuse to run on data whose feature widths differ from training.
    pub fn ensure_signature(&self, d_c: usize, d_g: usize) -> Result<()> {
        if self.config.d_c != d_c || self.config.d_g != d_g {
            return Err(Error::Signature {
                ckpt_dc: self.config.d_c,
                ckpt_dg: self.config.d_g,
                data_dc: d_c,
                data_dg: d_g,
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            model: self.config,
            tensor_count: self.params.tensors.len(),
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(2);
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            for x in t.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > bytes.len() {
                return Err(Error::Format(format!("checkpoint truncated at byte {pos}")));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(hlen)?)?;
        let mut names = Vec::with_capacity(header.tensor_count);
        let mut tensors = Vec::with_capacity(header.tensor_count);
        for _ in 0..header.tensor_count {
            let nlen = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(nlen)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = take(1)?[0] as usize;
            if rank == 0 || rank > 2 {
                return Err(Error::Format(format!("tensor {name} has unsupported rank {rank}")));
            }
            let mut dims = [1usize; 2];
            for d in dims.iter_mut().skip(2 - rank) {
                *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            }
            let data: Vec<f32> = take(dims[0] * dims[1] * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            names.push(name);
            tensors.push(Array2::from_shape_vec((dims[0], dims[1]), data).expect("sized above"));
        }
        if pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - pos)));
        }
        let params = Params { names, tensors };
        let expected = super::param_layout(&super::Architecture::IoHunter(header.model));
        let layout_ok = expected.len() == params.names.len()
            && expected
                .iter()
                .zip(params.names.iter().zip(&params.tensors))
                .all(|((en, es, _), (n, t))| en == n && *es == t.dim());
        if !layout_ok {
            return Err(Error::Format("checkpoint tensors do not match its model config".into()));
        }
        Ok(Checkpoint {
            config: header.model,
            params,
        })
    }
}

pub fn save_checkpoint<T: Real>(path: &Path, config: &ModelConfig, params: &Params<T>) -> Result<()> {
    let ckpt = Checkpoint {
        config: *config,
        params: params.cast(),
    };
    fs::write(path, ckpt.encode()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, Conv};

    fn sample(conv: Conv) -> Checkpoint {
        let mut cfg = ModelConfig::new(8, 4);
        cfg.hidden = 16;
        cfg.conv = conv;
        Checkpoint {
            config: cfg,
            params: Architecture::IoHunter(cfg).init(9),
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ck = sample(Conv::Sage);
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn truncated_and_bad_magic_are_fatal() {
        let bytes = sample(Conv::Gcn).encode().unwrap();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(Checkpoint::decode(&ver).is_err());
    }

    #[test]
    fn signature_mismatch_refused() {
        let ck = sample(Conv::Gcn);
        assert!(ck.ensure_signature(8, 4).is_ok());
        assert!(matches!(ck.ensure_signature(8, 5), Err(Error::Signature { .. })));
    }

    #[test]
    fn file_roundtrip() {
        let ck = sample(Conv::Gcn);
        let tmp = tempfile::NamedTempFile::new().unwrap();
        save_checkpoint(tmp.path(), &ck.config, &ck.params).unwrap();
        assert_eq!(load_checkpoint(tmp.path()).unwrap(), ck);
    }
}
