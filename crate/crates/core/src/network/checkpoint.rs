//! Checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "LMIC" u32:version
//! u32:meta_count  meta_count × { str:key str:value }
//! u32:tensor_count tensor_count × { str:name u32:ndim u64×ndim:shape f32×∏shape }
//! str = u32:len utf8
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::layers::Real;
use super::optim::{Adam, AdamConfig};
use super::params::{NetworkDims, NetworkParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LMIC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// String metadata plus a named tensor table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn bad(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format(format!("checkpoint truncated while reading {what}"))
    } else {
        Error::Format(format!("checkpoint {what}: {e}"))
    }
}

struct Limited<R> {
    inner: R,
    remaining: u64,
}

impl<R: Read> Limited<R> {
    fn read_str(&mut self, what: &str) -> Result<String> {
        let len = self.inner.read_u32::<LE>().map_err(|e| bad(e, what))? as u64;
        self.take(len, what)?;
        let mut buf = vec![0u8; len as usize];
        self.inner.read_exact(&mut buf).map_err(|e| bad(e, what))?;
        String::from_utf8(buf).map_err(|_| Error::Format(format!("checkpoint {what} is not UTF-8")))
    }

    fn take(&mut self, bytes: u64, what: &str) -> Result<()> {
        if bytes > self.remaining {
            return Err(Error::Format(format!("checkpoint {what} claims {bytes} bytes past the end of file")));
        }
        self.remaining -= bytes;
        Ok(())
    }
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = crate::datagen::tmp_path(path);
        let write = || -> io::Result<()> {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_u32::<LE>(CHECKPOINT_VERSION)?;
            w.write_u32::<LE>(self.meta.len() as u32)?;
            for (k, v) in &self.meta {
                write_str(&mut w, k)?;
                write_str(&mut w, v)?;
            }
            w.write_u32::<LE>(self.tensors.len() as u32)?;
            for t in &self.tensors {
                write_str(&mut w, &t.name)?;
                w.write_u32::<LE>(t.shape.len() as u32)?;
                for &d in &t.shape {
                    w.write_u64::<LE>(d as u64)?;
                }
                for &v in &t.data {
                    w.write_f32::<LE>(v)?;
                }
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()
        };
        write().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut r = Limited {
            inner: BufReader::new(file),
            remaining: len,
        };
        let mut magic = [0u8; 4];
        r.inner.read_exact(&mut magic).map_err(|e| bad(e, "magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{} is not a checkpoint (magic {magic:?})", path.display())));
        }
        let version = r.inner.read_u32::<LE>().map_err(|e| bad(e, "version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut ck = Checkpoint::default();
        let n_meta = r.inner.read_u32::<LE>().map_err(|e| bad(e, "meta count"))?;
        for _ in 0..n_meta {
            let k = r.read_str("meta key")?;
            let v = r.read_str("meta value")?;
            ck.meta.insert(k, v);
        }
        let n_tensors = r.inner.read_u32::<LE>().map_err(|e| bad(e, "tensor count"))?;
        for _ in 0..n_tensors {
            let name = r.read_str("tensor name")?;
            let ndim = r.inner.read_u32::<LE>().map_err(|e| bad(e, &name))?;
            r.take(8 * ndim as u64, &name)?;
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                shape.push(r.inner.read_u64::<LE>().map_err(|e| bad(e, &name))? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| Error::Format(format!("tensor {name} has an overflowing shape")))?;
            r.take(count.saturating_mul(4), &name)?;
            let mut data = vec![0f32; count as usize];
            r.inner.read_f32_into::<LE>(&mut data).map_err(|e| bad(e, &name))?;
            ck.tensors.push(Tensor { name, shape, data });
        }
        Ok(ck)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Adds every parameter tensor, prefixing names with `prefix`.
    pub fn push_params<R: Real>(&mut self, prefix: &str, params: &NetworkParams<R>) {
        for (name, t) in params.named_tensors() {
            self.tensors.push(Tensor {
                name: format!("{prefix}{name}"),
                shape: t.shape(),
                data: t.values().iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect(),
            });
        }
    }

    pub fn dims(&self) -> Result<NetworkDims> {
        let json = self
            .meta
            .get("dims")
            .ok_or_else(|| Error::Format("checkpoint has no `dims` entry".into()))?;
        serde_json::from_str(json).map_err(|e| Error::Format(format!("checkpoint dims: {e}")))
    }

    /// Rebuilds parameters stored under `prefix`.
    pub fn params_with_prefix<R: Real>(&self, prefix: &str) -> Result<NetworkParams<R>> {
        let dims = self.dims()?;
        let mut params = NetworkParams::<R>::zeros(&dims)?;
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for name in names {
            let full = format!("{prefix}{name}");
            let t = self
                .tensor(&full)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {full}")))?;
            let mut slot = params.tensor_mut(&name).expect("name comes from the same params");
            if slot.shape() != t.shape {
                return Err(Error::Contract(format!(
                    "tensor {full} has shape {:?}, dims imply {:?}",
                    t.shape,
                    slot.shape()
                )));
            }
            let vals: Vec<R> = t.data.iter().map(|&v| R::lit(v as f64)).collect();
            slot.assign(&vals);
        }
        Ok(params)
    }

    pub fn params<R: Real>(&self) -> Result<NetworkParams<R>> {
        self.params_with_prefix("")
    }

    /// Checkpoint holding only the parameters.
    pub fn from_params<R: Real>(params: &NetworkParams<R>) -> Self {
        let mut ck = Checkpoint::default();
        ck.meta.insert(
            "dims".into(),
            serde_json::to_string(&params.dims).expect("dims serialize"),
        );
        ck.push_params("", params);
        ck
    }

    /// Adds optimizer state under `opt.m.` / `opt.v.`.
    pub fn push_optimizer<R: Real>(&mut self, adam: &Adam<R>) {
        self.meta.insert("opt.step".into(), adam.step.to_string());
        self.meta.insert(
            "opt.config".into(),
            serde_json::to_string(&adam.config).expect("adam config serializes"),
        );
        self.push_params("opt.m.", &adam.m);
        self.push_params("opt.v.", &adam.v);
    }

    /// Optimizer state, if the checkpoint has one.
    pub fn optimizer<R: Real>(&self) -> Result<Option<Adam<R>>> {
        let Some(step) = self.meta.get("opt.step") else {
            return Ok(None);
        };
        let step = step
            .parse()
            .map_err(|_| Error::Format(format!("bad optimizer step `{step}`")))?;
        let config: AdamConfig = match self.meta.get("opt.config") {
            Some(s) => serde_json::from_str(s).map_err(|e| Error::Format(format!("optimizer config: {e}")))?,
            None => AdamConfig::default(),
        };
        Ok(Some(Adam {
            config,
            m: self.params_with_prefix("opt.m.")?,
            v: self.params_with_prefix("opt.v.")?,
            step,
        }))
    }
}

/// Writes parameters alone.
pub fn save_params<R: Real>(path: &Path, params: &NetworkParams<R>) -> Result<()> {
    Checkpoint::from_params(params).write(path)
}

/// Reads parameters from any checkpoint.
pub fn load_params<R: Real>(path: &Path) -> Result<NetworkParams<R>> {
    Checkpoint::read(path)?.params()
}
