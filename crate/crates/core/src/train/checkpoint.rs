use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{build_nunet, ModelGraph, NuNet, NuNetConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NUNETCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: String,
    fingerprint: String,
    fold: Option<usize>,
    epoch: usize,
    input_size: usize,
    loss_trace: Vec<f64>,
    tensors: Vec<TensorEntry>,
}

/// Trained weights (including normalization buffers) plus provenance.
///
/// Layout: 8-byte magic, little-endian `u32` header length, JSON header, then every tensor's
/// values as little-endian `f32` in header order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: NuNetConfig,
    pub fingerprint: String,
    pub fold: Option<usize>,
    pub epoch: usize,
    pub loss_trace: Vec<f64>,
    pub tensors: Vec<TensorEntry>,
    pub values: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn capture(
        model: &ModelGraph<NuNet>,
        fold: Option<usize>,
        epoch: usize,
        loss_trace: Vec<f64>,
    ) -> Self {
        let arch = model.config().clone();
        let (tensors, values) = model
            .params
            .iter()
            .map(|p| {
                (
                    TensorEntry {
                        name: p.name.clone(),
                        shape: p.shape.clone(),
                    },
                    p.value.clone(),
                )
            })
            .unzip();
        Self {
            fingerprint: arch.fingerprint(),
            arch,
            fold,
            epoch,
            loss_trace,
            tensors,
            values,
        }
    }

    pub fn input_size(&self) -> usize {
        self.arch.input_size
    }

    /// Rebuilds the network and installs the stored values.
    pub fn restore(&self) -> Result<ModelGraph<NuNet>> {
        let mut model = build_nunet(&self.arch)?;
        self.apply(&mut model)?;
        Ok(model)
    }

    pub fn apply(&self, model: &mut ModelGraph<NuNet>) -> Result<()> {
        if model.params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors but checkpoint has {}",
                model.params.len(),
                self.tensors.len()
            )));
        }
        for ((p, entry), values) in model.params.iter_mut().zip(&self.tensors).zip(&self.values) {
            if p.name != entry.name || p.shape != entry.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match checkpoint entry {} {:?}",
                    p.name, p.shape, entry.name, entry.shape
                )));
            }
            p.value.copy_from_slice(values);
        }
        Ok(())
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        let header = Header {
            arch: self.arch.to_kv(),
            fingerprint: self.fingerprint.clone(),
            fold: self.fold,
            epoch: self.epoch,
            input_size: self.arch.input_size,
            loss_trace: self.loss_trace.clone(),
            tensors: self.tensors.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let io = |e| Error::io("<checkpoint>", e);
        out.write_all(MAGIC).map_err(io)?;
        out.write_all(&(json.len() as u32).to_le_bytes())
            .map_err(io)?;
        out.write_all(&json).map_err(io)?;
        let mut buf = Vec::new();
        for v in &self.values {
            buf.clear();
            buf.extend(v.iter().flat_map(|x| x.to_le_bytes()));
            out.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn read(mut input: impl Read) -> Result<Self> {
        let io = |e| Error::io("<checkpoint>", e);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len).map_err(io)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut json).map_err(io)?;
        let header: Header = serde_json::from_slice(&json)?;
        let arch = NuNetConfig::parse(&header.arch)?;
        if arch.fingerprint() != header.fingerprint {
            return Err(Error::Checkpoint(
                "embedded fingerprint does not match the embedded config".into(),
            ));
        }
        let mut values = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let n: usize = t.shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            input
                .read_exact(&mut raw)
                .map_err(|_| Error::Checkpoint(format!("truncated data for {}", t.name)))?;
            values.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        Ok(Self {
            arch,
            fingerprint: header.fingerprint,
            fold: header.fold,
            epoch: header.epoch,
            loss_trace: header.loss_trace,
            tensors: header.tensors,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }
}
