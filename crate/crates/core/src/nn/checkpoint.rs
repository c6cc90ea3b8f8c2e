//! Checkpoint serialization.
//!
//! Layout mirrors the volume container: a one-line JSON manifest
//! (`magic: "DMCK"`, version, network spec, seed, step count, learning
//! rate, ordered parameter descriptors, free-form metadata) followed by raw
//! little-endian f32 parameter blocks in manifest order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::{validate_params, NetSpec, ParamSet};
use crate::nn::tensor::Tensor;

const MAGIC: &str = "DMCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: [usize; 5],
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    magic: String,
    version: u32,
    net: NetSpec,
    seed: u64,
    step: u64,
    lr: f64,
    params: Vec<ParamEntry>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// A network snapshot: spec, provenance fields, and parameter values.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub net: NetSpec,
    pub seed: u64,
    pub step: u64,
    pub lr: f64,
    pub params: ParamSet<f32>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    /// Snapshot freshly initialized parameters (step 0).
    pub fn initial(net: NetSpec, seed: u64, lr: f64) -> Result<Self> {
        net.validate()?;
        Ok(Checkpoint {
            net,
            seed,
            step: 0,
            lr,
            params: net.init(seed),
            meta: BTreeMap::new(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        validate_params(&self.net.param_specs(), &self.params)?;
        let manifest = Manifest {
            magic: MAGIC.to_string(),
            version: VERSION,
            net: self.net,
            seed: self.seed,
            step: self.step,
            lr: self.lr,
            params: self
                .params
                .iter()
                .map(|(name, t)| ParamEntry {
                    name: name.clone(),
                    shape: t.shape(),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let ioerr = |e| Error::io(&pstr, e);
        let mut w = BufWriter::new(File::create(path).map_err(ioerr)?);
        let header = serde_json::to_string(&manifest)
            .map_err(|e| Error::format(&pstr, format!("manifest encode: {e}")))?;
        w.write_all(header.as_bytes()).map_err(ioerr)?;
        w.write_all(b"\n").map_err(ioerr)?;
        for (_, tensor) in self.params.iter() {
            for v in tensor.data() {
                w.write_all(&v.to_le_bytes()).map_err(ioerr)?;
            }
        }
        w.flush().map_err(ioerr)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let ioerr = |e| Error::io(&pstr, e);
        let mut r = BufReader::new(File::open(path).map_err(ioerr)?);
        let mut line = String::new();
        r.read_line(&mut line).map_err(ioerr)?;
        let manifest: Manifest = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::format(&pstr, format!("manifest parse: {e}")))?;
        if manifest.magic != MAGIC {
            return Err(Error::format(
                &pstr,
                format!("bad magic {:?}, expected {MAGIC:?}", manifest.magic),
            ));
        }
        if manifest.version != VERSION {
            return Err(Error::format(
                &pstr,
                format!("unsupported version {}", manifest.version),
            ));
        }
        manifest.net.validate()?;

        let mut params = ParamSet::new();
        for entry in &manifest.params {
            let numel: usize = entry.shape.iter().product();
            let mut raw = vec![0u8; numel * 4];
            r.read_exact(&mut raw).map_err(|e| {
                Error::format(
                    &pstr,
                    format!("parameter block {:?} truncated: {e}", entry.name),
                )
            })?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::from_vec(entry.shape, data)
                .map_err(|e| Error::format(&pstr, format!("parameter {:?}: {e}", entry.name)))?;
            params.push(entry.name.clone(), tensor)?;
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(ioerr)? != 0 {
            return Err(Error::format(&pstr, "trailing bytes after parameter blocks"));
        }
        validate_params(&manifest.net.param_specs(), &params)?;
        Ok(Checkpoint {
            net: manifest.net,
            seed: manifest.seed,
            step: manifest.step,
            lr: manifest.lr,
            params,
            meta: manifest.meta,
        })
    }
}
