//! Little-endian checkpoint file:
//!
//! ```text
//! magic "TSCK" | u32 version | u64 n | n bytes of JSON metadata
//! u64 record count | records...
//! record: u32 name length | name (UTF-8) | u32 ndims | ndims × u64 | f32 payload
//! ```
//!
//! Records hold the generator (`generator/…`) and discriminator
//! (`discriminator/…`) parameters, then the Adam moments (`adam_g.m/…`,
//! `adam_g.v/…`, `adam_d.m/…`, `adam_d.v/…`) once the optimizers have stepped.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
use super::model::{build_discriminator, build_generator, Discriminator, Generator};
use super::train::EpochStats;
use super::GanError;
use crate::layers::Module;
use crate::optim::{Adam, AdamConfig, Moments};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    pub opt_g: Adam,
    pub opt_d: Adam,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    generator: GeneratorConfig,
    discriminator: DiscriminatorConfig,
    train: TrainConfig,
    epoch: usize,
    history: Vec<EpochStats>,
    optimizer_g: OptimizerMeta,
    optimizer_d: OptimizerMeta,
}

type Record = (Vec<usize>, Vec<f32>);

fn bad(m: impl Into<String>) -> GanError {
    GanError::Checkpoint(m.into())
}

fn put_record(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn param_records<M: Module>(model: &M, prefix: &str) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    model.visit_params("", &mut |name, p| out.push((format!("{prefix}/{name}"), p.shape().to_vec())));
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GanError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GanError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, GanError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, GanError> {
        usize::try_from(self.u64()?).map_err(|_| bad("length overflows usize"))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, GanError> {
        let meta = Meta {
            generator: self.generator.config.clone(),
            discriminator: self.discriminator.config.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            optimizer_g: OptimizerMeta { config: self.opt_g.config, step: self.opt_g.step },
            optimizer_d: OptimizerMeta { config: self.opt_d.config, step: self.opt_d.step },
        };
        let json = serde_json::to_vec(&meta).map_err(|e| bad(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);

        let mut records: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        for (prefix, model) in [("generator", &self.generator as &dyn Module), ("discriminator", &self.discriminator)] {
            model.visit_params("", &mut |name, p| records.push((format!("{prefix}/{name}"), p.shape().to_vec(), p.data().to_vec())));
        }
        let moment_sets = [
            ("adam_g", &self.opt_g, param_records(&self.generator, "")),
            ("adam_d", &self.opt_d, param_records(&self.discriminator, "")),
        ];
        for (prefix, opt, params) in &moment_sets {
            if opt.moments.is_empty() {
                continue;
            }
            if opt.moments.len() != params.len() {
                return Err(bad(format!("{prefix} tracks {} tensors for {} parameters", opt.moments.len(), params.len())));
            }
            for ((name, dims), mo) in params.iter().zip(&opt.moments) {
                let name = name.trim_start_matches('/');
                records.push((format!("{prefix}.m/{name}"), dims.clone(), mo.m.clone()));
                records.push((format!("{prefix}.v/{name}"), dims.clone(), mo.v.clone()));
            }
        }
        out.extend_from_slice(&(records.len() as u64).to_le_bytes());
        for (name, dims, data) in &records {
            put_record(&mut out, name, dims, data);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, GanError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let n = r.len()?;
        let meta: Meta = serde_json::from_slice(r.take(n)?).map_err(|e| bad(format!("metadata: {e}")))?;
        let count = r.len()?;
        let mut records: BTreeMap<String, Record> = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| bad("record name is not UTF-8"))?.to_string();
            let ndims = r.u32()? as usize;
            let dims = (0..ndims).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
            let numel = dims.iter().try_fold(1usize, |a, d| a.checked_mul(*d)).ok_or_else(|| bad("record too large"))?;
            let bytes = r.take(numel.checked_mul(4).ok_or_else(|| bad("record too large"))?)?;
            let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
            if records.insert(name.clone(), (dims, data)).is_some() {
                return Err(bad(format!("duplicate record {name}")));
            }
        }
        if r.pos != buf.len() {
            return Err(bad("trailing bytes after the last record"));
        }

        let mut generator = build_generator(&meta.generator, 0)?;
        let mut discriminator = build_discriminator(&meta.discriminator, 0)?;
        fill_params(&mut generator, "generator", &mut records)?;
        fill_params(&mut discriminator, "discriminator", &mut records)?;
        let opt_g = restore_adam(&generator, "adam_g", meta.optimizer_g, &mut records)?;
        let opt_d = restore_adam(&discriminator, "adam_d", meta.optimizer_d, &mut records)?;
        if let Some(name) = records.keys().next() {
            return Err(bad(format!("record {name} does not belong to the architecture")));
        }
        Ok(Checkpoint {
            generator,
            discriminator,
            train: meta.train,
            epoch: meta.epoch,
            history: meta.history,
            opt_g,
            opt_d,
        })
    }

    /// Writes through a sibling temporary file so a crash never leaves a
    /// half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<(), GanError> {
        let bytes = self.to_bytes()?;
        let io = |e: std::io::Error| GanError::Io { path: path.display().to_string(), source: e };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, GanError> {
        let bytes = std::fs::read(path).map_err(|e| GanError::Io { path: path.display().to_string(), source: e })?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            GanError::Checkpoint(m) => GanError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn take_record(records: &mut BTreeMap<String, Record>, name: &str, shape: &[usize]) -> Result<Vec<f32>, GanError> {
    let (dims, data) = records.remove(name).ok_or_else(|| bad(format!("missing record {name}")))?;
    if dims != shape {
        return Err(bad(format!("record {name} has shape {dims:?}, architecture expects {shape:?}")));
    }
    Ok(data)
}

fn fill_params<M: Module>(model: &mut M, prefix: &str, records: &mut BTreeMap<String, Record>) -> Result<(), GanError> {
    let mut result = Ok(());
    model.visit_params_mut("", &mut |name, p| {
        if result.is_err() {
            return;
        }
        match take_record(records, &format!("{prefix}/{name}"), p.shape()) {
            Ok(data) => *p = Tensor::new(p.shape(), data).expect("shape checked"),
            Err(e) => result = Err(e),
        }
    });
    result
}

fn restore_adam<M: Module>(
    model: &M,
    prefix: &str,
    meta: OptimizerMeta,
    records: &mut BTreeMap<String, Record>,
) -> Result<Adam, GanError> {
    let mut opt = Adam::new(meta.config)?;
    opt.step = meta.step;
    if meta.step == 0 {
        return Ok(opt);
    }
    for (name, dims) in param_records(model, "") {
        let name = name.trim_start_matches('/');
        let m = take_record(records, &format!("{prefix}.m/{name}"), &dims)?;
        let v = take_record(records, &format!("{prefix}.v/{name}"), &dims)?;
        opt.moments.push(Moments { m, v });
    }
    Ok(opt)
}
