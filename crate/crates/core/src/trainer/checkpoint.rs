use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Stage;
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Scalar, Tensor};
use crate::policy::{PolicyConfig, PolicyNet};
use crate::promptpool::{PoolTable, PromptPool, PromptSpec};
use crate::simworld::Reader;

pub const PPLC_MAGIC: [u8; 4] = *b"PPLC";
pub const PPLC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub stage: Stage,
    pub policy: PolicyConfig,
    pub prompt_spec: PromptSpec,
    pub pool: PoolTable,
    /// Non-pool parameters that were frozen when saved.
    pub frozen_params: Vec<String>,
    /// Skills whose training produced this checkpoint, oldest first.
    pub skills: Vec<String>,
    /// Epoch of the saved weights within their training stage.
    pub epoch: usize,
    /// Forward transfer F_k of every lifelong skill learned so far.
    pub fwt: BTreeMap<String, f64>,
    pub root_seed: u64,
    pub text_seed: u64,
    /// Copy of the run configuration that produced the checkpoint.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<S: Scalar> {
    pub meta: CheckpointMeta,
    pub net: PolicyNet<S>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(net: PolicyNet<S>, stage: Stage, skills: Vec<String>, root_seed: u64, config: serde_json::Value) -> Self {
        let pool_ids: std::collections::HashSet<_> = net.pool.all_ids().collect();
        let frozen_params = net
            .store
            .iter()
            .filter(|(id, _, t)| !pool_ids.contains(id) && t.frozen)
            .map(|(_, n, _)| n.to_string())
            .collect();
        let meta = CheckpointMeta {
            stage,
            policy: net.cfg.clone(),
            prompt_spec: net.pool.spec(),
            pool: net.pool.table(),
            frozen_params,
            skills,
            epoch: 0,
            fwt: BTreeMap::new(),
            root_seed,
            text_seed: net.text_encoder().seed(),
            config,
        };
        Self { meta, net }
    }

    /// Named tensors as written: non-pool parameters in store order, then
    /// the stacked pool tensors.
    pub fn tensors(&self) -> Vec<(String, Tensor<S>)> {
        let pool_ids: std::collections::HashSet<_> = self.net.pool.all_ids().collect();
        let mut out: Vec<(String, Tensor<S>)> = self
            .net
            .store
            .iter()
            .filter(|(id, _, _)| !pool_ids.contains(id))
            .map(|(_, n, t)| (n.to_string(), t.clone()))
            .collect();
        out.extend(self.net.pool.stacked_tensors(&self.net.store));
        out
    }
}

pub fn encode_pplc<S: Scalar>(ckpt: &Checkpoint<S>) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&ckpt.meta)?;
    let tensors = ckpt.tensors();
    let mut buf = Vec::new();
    buf.extend_from_slice(&PPLC_MAGIC);
    buf.extend_from_slice(&PPLC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Invalid(format!("tensor {name} has rank {}", t.rank())))?;
        buf.push(rank);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_pplc<S: Scalar>(bytes: &[u8], path: &Path) -> Result<Checkpoint<S>> {
    let mut r = Reader::new(bytes, path);
    r.header(PPLC_MAGIC, PPLC_VERSION)?;
    let meta_len = r.u32("metadata length")? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| r.corrupt(format!("metadata: {e}")))?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| r.corrupt(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dims")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 8, &format!("data of tensor {name}"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| S::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if !r.finished() {
        return Err(r.corrupt("trailing bytes after last tensor"));
    }
    if meta.prompt_spec != meta.policy.prompt_spec() {
        return Err(r.corrupt("prompt spec disagrees with policy config"));
    }

    let mut pool_parts: HashMap<String, Tensor<S>> = HashMap::new();
    let mut store = ParamStore::new();
    for (name, t) in tensors {
        if name.starts_with("pool.") {
            pool_parts.insert(name, t);
        } else {
            let frozen = meta.frozen_params.contains(&name);
            let id = store.add(name, t);
            store.set_frozen(id, frozen);
        }
    }
    let pool = PromptPool::from_stacked(&mut store, meta.prompt_spec, &meta.pool, |n| {
        pool_parts.remove(n).ok_or_else(|| Error::UnknownParam(n.to_string()))
    })
    .map_err(|e| r.corrupt(format!("prompt pool: {e}")))?;
    let net = PolicyNet::from_store(meta.policy.clone(), store, pool)
        .map_err(|e| r.corrupt(format!("network: {e}")))?;
    Ok(Checkpoint { meta, net })
}

pub fn save_checkpoint<S: Scalar>(ckpt: &Checkpoint<S>, path: &Path) -> Result<()> {
    let bytes = encode_pplc(ckpt)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pplc(&bytes, path)
}
