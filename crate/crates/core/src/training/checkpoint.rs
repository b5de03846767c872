use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, Regime, TrainConfig};
use super::model::Model;
use super::optim::{OptimizerKind, OptimizerState};
use super::trainer::{AlphaRecord, LossRecord, Progress};
use crate::error::{Error, Result};
use crate::nn::Normalization;
use crate::pde::ProblemSetup;
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &str = "TINTEGRATE-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub regime: Regime,
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub setup: ProblemSetup,
    pub norm: Normalization,
    pub epoch: u64,
    pub best_epoch: u64,
    pub best_test_loss: Option<f64>,
    pub curve: Vec<LossRecord>,
    pub alpha_stats: Vec<AlphaRecord>,
    pub progress: Progress,
    pub optimizers: Vec<OptimizerMeta>,
    pub blobs: Vec<BlobMeta>,
}

/// Current parameters, best-so-far parameters and optimizer moments.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
    pub best: ParamStore,
    pub optimizers: Vec<OptimizerState>,
}

fn header() -> String {
    format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
}

impl Checkpoint {
    /// Structure over the best parameters, ready for inference.
    pub fn model(&self) -> Result<Model> {
        let m = &self.meta;
        Model::attach(m.regime, &m.spec, &m.setup, m.norm.clone(), m.config.dt_train, &self.best)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = self.meta.clone();
        meta.format_version = CHECKPOINT_VERSION;
        meta.optimizers = self
            .optimizers
            .iter()
            .map(|o| OptimizerMeta {
                kind: o.kind,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
                step: o.step,
                names: o.names.clone(),
            })
            .collect();
        let mut blobs: Vec<(String, &Tensor)> = Vec::new();
        for (_, p) in self.params.iter() {
            blobs.push((format!("param/{}", p.name), &p.value));
        }
        for (_, p) in self.best.iter() {
            blobs.push((format!("best/{}", p.name), &p.value));
        }
        for (k, o) in self.optimizers.iter().enumerate() {
            for (name, (m, v)) in o.names.iter().zip(o.m.iter().zip(&o.v)) {
                blobs.push((format!("opt{k}.m/{name}"), m));
                blobs.push((format!("opt{k}.v/{name}"), v));
            }
        }
        meta.blobs = blobs
            .iter()
            .map(|(n, t)| BlobMeta {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        let json = serde_json::to_vec(&meta)?;
        let mut out = header().into_bytes();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in blobs {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let head = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Checkpoint("unreadable header".into()))?;
        let version = head
            .strip_prefix(CHECKPOINT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Checkpoint(format!("not a checkpoint (header `{head}`)")))?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let mut pos = nl + 1;
        let len_bytes: [u8; 8] = bytes
            .get(pos..pos + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| Error::Checkpoint("truncated metadata length".into()))?;
        let len = u64::from_le_bytes(len_bytes) as usize;
        pos += 8;
        let json = bytes
            .get(pos..pos + len)
            .ok_or_else(|| Error::Checkpoint("truncated metadata".into()))?;
        let meta: CheckpointMeta = serde_json::from_slice(json)?;
        pos += len;

        let mut params = ParamStore::new();
        let mut best = ParamStore::new();
        let mut moments: Vec<(Vec<Tensor>, Vec<Tensor>)> = vec![(Vec::new(), Vec::new()); meta.optimizers.len()];
        for b in &meta.blobs {
            let n: usize = b.shape.iter().product();
            let raw = bytes
                .get(pos..pos + 8 * n)
                .ok_or_else(|| Error::Checkpoint(format!("truncated blob `{}`", b.name)))?;
            pos += 8 * n;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(b.shape.clone(), data)?;
            let (group, name) = b
                .name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("malformed blob name `{}`", b.name)))?;
            match group {
                "param" => {
                    params.add(name, t)?;
                }
                "best" => {
                    best.add(name, t)?;
                }
                g => {
                    let (k, which) = g
                        .strip_prefix("opt")
                        .and_then(|r| r.split_once('.'))
                        .and_then(|(k, w)| k.parse::<usize>().ok().map(|k| (k, w)))
                        .filter(|(k, _)| *k < moments.len())
                        .ok_or_else(|| Error::Checkpoint(format!("unknown blob group `{g}`")))?;
                    match which {
                        "m" => moments[k].0.push(t),
                        "v" => moments[k].1.push(t),
                        _ => return Err(Error::Checkpoint(format!("unknown blob group `{g}`"))),
                    }
                }
            }
        }
        if pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let optimizers = meta
            .optimizers
            .iter()
            .zip(moments)
            .map(|(o, (m, v))| {
                if m.len() != o.names.len() || v.len() != o.names.len() {
                    return Err(Error::Checkpoint("optimizer moments do not match tracked names".into()));
                }
                Ok(OptimizerState {
                    kind: o.kind,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                    weight_decay: o.weight_decay,
                    step: o.step,
                    names: o.names.clone(),
                    m,
                    v,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ckpt = Self {
            meta,
            params,
            best,
            optimizers,
        };
        // shape agreement with the declared spec
        let m = &ckpt.meta;
        Model::attach(m.regime, &m.spec, &m.setup, m.norm.clone(), m.config.dt_train, &ckpt.params)?;
        ckpt.model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}
