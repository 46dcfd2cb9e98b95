//! Per-layer pools of primitive prompt components: query-driven weighting,
//! weighted composition, prefix splitting and lifelong expansion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{cosine, Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// Standard deviation of freshly initialized `P` and `K` entries.
pub const INIT_SCALE: f64 = 0.02;
/// Owner tag of the components created before any lifelong task.
pub const PRETRAIN_OWNER: &str = "pretrain";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    /// Rows of a composed prompt; split evenly into key and value halves.
    pub prompt_len: usize,
    pub dim: usize,
    /// Components created at pre-training time.
    pub components: usize,
    pub layers: usize,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        if self.prompt_len % 2 != 0 {
            return Err(Error::Config(format!(
                "prompt length must be even, got {}",
                self.prompt_len
            )));
        }
        if self.components == 0 || self.dim == 0 || self.layers == 0 {
            return Err(Error::Config(
                "prompt dim, component count and layer count must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        self.prompt_len / 2
    }
}

/// One cross-layer prompt unit. `ids[l]` holds the layer-`l` (P, K, A).
#[derive(Clone, Debug)]
struct Component {
    owner: String,
    frozen: bool,
    ids: Vec<[ParamId; 3]>,
}

/// Ownership and freezing table, as stored in checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTable {
    pub owners: Vec<String>,
    pub frozen: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct PromptPool {
    spec: PromptSpec,
    comps: Vec<Component>,
}

fn param_name(layer: usize, m: usize, part: char) -> String {
    format!("pool.layer{layer}.{part}.{m}")
}

impl PromptPool {
    /// Adds `spec.components` components owned by the pre-training stage.
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, spec: PromptSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut pool = Self {
            spec,
            comps: Vec::new(),
        };
        pool.append(store, spec.components, PRETRAIN_OWNER, seed);
        Ok(pool)
    }

    /// Rebinds to parameters already present in `store`.
    pub fn bind<S: Scalar>(store: &ParamStore<S>, spec: PromptSpec, table: &PoolTable) -> Result<Self> {
        spec.validate()?;
        if table.owners.len() != table.frozen.len() {
            return Err(Error::Invalid("pool table owner/frozen lengths differ".into()));
        }
        let mut comps = Vec::with_capacity(table.owners.len());
        for (m, (owner, &frozen)) in table.owners.iter().zip(&table.frozen).enumerate() {
            let mut ids = Vec::with_capacity(spec.layers);
            for l in 0..spec.layers {
                ids.push([
                    store.id(&param_name(l, m, 'P'))?,
                    store.id(&param_name(l, m, 'K'))?,
                    store.id(&param_name(l, m, 'A'))?,
                ]);
            }
            comps.push(Component {
                owner: owner.clone(),
                frozen,
                ids,
            });
        }
        Ok(Self { spec, comps })
    }

    fn append<S: Scalar>(&mut self, store: &mut ParamStore<S>, count: usize, owner: &str, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lp, d) = (self.spec.prompt_len, self.spec.dim);
        for _ in 0..count {
            let m = self.comps.len();
            let ids = (0..self.spec.layers)
                .map(|l| {
                    [
                        store.add(param_name(l, m, 'P'), Tensor::randn([lp, d], INIT_SCALE, &mut rng)),
                        store.add(param_name(l, m, 'K'), Tensor::randn([d], INIT_SCALE, &mut rng)),
                        store.add(param_name(l, m, 'A'), Tensor::ones([d])),
                    ]
                })
                .collect();
            self.comps.push(Component {
                owner: owner.to_string(),
                frozen: false,
                ids,
            });
        }
    }

    pub fn spec(&self) -> PromptSpec {
        self.spec
    }

    /// Current component count Z.
    pub fn size(&self) -> usize {
        self.comps.len()
    }

    pub fn table(&self) -> PoolTable {
        PoolTable {
            owners: self.comps.iter().map(|c| c.owner.clone()).collect(),
            frozen: self.comps.iter().map(|c| c.frozen).collect(),
        }
    }

    pub fn owns(&self, owner: &str) -> bool {
        self.comps.iter().any(|c| c.owner == owner)
    }

    pub fn component_ids(&self, m: usize) -> impl Iterator<Item = ParamId> + '_ {
        self.comps[m].ids.iter().flatten().copied()
    }

    pub fn all_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.comps.len()).flat_map(move |m| self.component_ids(m))
    }

    /// Freezes every existing component and appends `m_new` fresh ones
    /// tagged with `owner`.
    pub fn expand<S: Scalar>(
        &mut self,
        store: &mut ParamStore<S>,
        m_new: usize,
        owner: &str,
        seed: u64,
    ) -> Result<()> {
        if m_new == 0 {
            return Err(Error::Invalid("pool expansion needs at least one component".into()));
        }
        if self.owns(owner) {
            return Err(Error::SkillAlreadyOwned(owner.to_string()));
        }
        for c in &mut self.comps {
            c.frozen = true;
            for id in c.ids.iter().flatten() {
                store.set_frozen(*id, true);
            }
        }
        self.append(store, m_new, owner, seed);
        Ok(())
    }

    /// Parameters of the components still open for training.
    pub fn trainable_params(&self) -> Vec<ParamId> {
        self.comps
            .iter()
            .filter(|c| !c.frozen)
            .flat_map(|c| c.ids.iter().flatten().copied())
            .collect()
    }

    /// Re-applies the pool's frozen mask to the store (after loading, or
    /// after a caller toggled freezing wholesale).
    pub fn sync_frozen<S: Scalar>(&self, store: &mut ParamStore<S>) {
        for c in &self.comps {
            for id in c.ids.iter().flatten() {
                store.set_frozen(*id, c.frozen);
            }
        }
    }

    /// α_m = cos(q ⊙ A_m, K_m) for every component of `layer`.
    pub fn attention_weights<S: Scalar>(&self, store: &ParamStore<S>, layer: usize, q: &[S]) -> Result<Vec<S>> {
        self.check_layer(layer)?;
        if q.len() != self.spec.dim {
            return Err(Error::shape("attention_weights", &[q.len()], &[self.spec.dim]));
        }
        Ok(self
            .comps
            .iter()
            .map(|c| {
                let [_, k, a] = c.ids[layer];
                let qm: Vec<S> = q.iter().zip(store.get(a).data()).map(|(&x, &y)| x * y).collect();
                cosine(&qm, store.get(k).data())
            })
            .collect())
    }

    /// p = Σ_m α_m P_m, shape `[L_p, D]`.
    pub fn compose_prompt<S: Scalar>(&self, store: &ParamStore<S>, layer: usize, alpha: &[S]) -> Result<Tensor<S>> {
        self.check_layer(layer)?;
        if alpha.len() != self.comps.len() {
            return Err(Error::shape("compose_prompt", &[alpha.len()], &[self.comps.len()]));
        }
        let (lp, d) = (self.spec.prompt_len, self.spec.dim);
        let mut out = vec![S::zero(); lp * d];
        for (c, &w) in self.comps.iter().zip(alpha) {
            let p = store.get(c.ids[layer][0]).data();
            out.iter_mut().zip(p).for_each(|(o, &v)| *o = *o + w * v);
        }
        Tensor::new([lp, d], out)
    }

    /// Graph version of [`attention_weights`](Self::attention_weights) for
    /// one `[1, D]` query row; returns `[Z]`.
    pub fn weights_var<S: Scalar>(&self, g: &mut Graph<S>, layer: usize, q: Var) -> Result<Var> {
        self.check_layer(layer)?;
        let d = self.spec.dim;
        let mut ks = Vec::with_capacity(self.comps.len());
        let mut as_ = Vec::with_capacity(self.comps.len());
        for c in &self.comps {
            let [_, k, a] = c.ids[layer];
            let kv = g.param(k);
            ks.push(g.reshape(kv, [1, d])?);
            let av = g.param(a);
            as_.push(g.reshape(av, [1, d])?);
        }
        let k = g.concat_rows(&ks)?;
        let a = g.concat_rows(&as_)?;
        let qm = g.mul_row(a, q)?;
        g.row_cosine(qm, k)
    }

    /// Composes prompts for a batch of weight rows `alpha: [B, Z]`; returns
    /// `[B, L_p·D]`, one flattened prompt per row.
    pub fn compose_var<S: Scalar>(&self, g: &mut Graph<S>, layer: usize, alpha: Var) -> Result<Var> {
        self.check_layer(layer)?;
        let flat = self.spec.prompt_len * self.spec.dim;
        let mut ps = Vec::with_capacity(self.comps.len());
        for c in &self.comps {
            let pv = g.param(c.ids[layer][0]);
            ps.push(g.reshape(pv, [1, flat])?);
        }
        let p = g.concat_rows(&ps)?;
        g.matmul(alpha, p)
    }

    /// Stacked `pool.layer{ℓ}.P/.K/.A` tensors of shape `[Z, L_p, D]`,
    /// `[Z, D]` and `[Z, D]`.
    pub fn stacked_tensors<S: Scalar>(&self, store: &ParamStore<S>) -> Vec<(String, Tensor<S>)> {
        let (z, lp, d) = (self.comps.len(), self.spec.prompt_len, self.spec.dim);
        let mut out = Vec::new();
        for l in 0..self.spec.layers {
            for (part, shape) in [
                (0, vec![z, lp, d]),
                (1, vec![z, d]),
                (2, vec![z, d]),
            ] {
                let data = self
                    .comps
                    .iter()
                    .flat_map(|c| store.get(c.ids[l][part]).data().iter().copied())
                    .collect();
                let name = format!("pool.layer{l}.{}", ['P', 'K', 'A'][part]);
                out.push((name, Tensor::new(shape, data).unwrap()));
            }
        }
        out
    }

    /// Inverse of [`stacked_tensors`](Self::stacked_tensors): registers
    /// per-component parameters in `store` and returns the bound pool.
    pub fn from_stacked<S: Scalar>(
        store: &mut ParamStore<S>,
        spec: PromptSpec,
        table: &PoolTable,
        mut take: impl FnMut(&str) -> Result<Tensor<S>>,
    ) -> Result<Self> {
        spec.validate()?;
        let z = table.owners.len();
        let (lp, d) = (spec.prompt_len, spec.dim);
        for l in 0..spec.layers {
            for (part, per) in [('P', lp * d), ('K', d), ('A', d)] {
                let name = format!("pool.layer{l}.{part}");
                let t = take(&name)?;
                if t.numel() != z * per {
                    return Err(Error::shape("pool tensor", t.shape(), &[z, per]));
                }
                for (m, chunk) in t.data().chunks(per.max(1)).take(z).enumerate() {
                    let shape = if part == 'P' { vec![lp, d] } else { vec![d] };
                    store.add(param_name(l, m, part), Tensor::new(shape, chunk.to_vec())?);
                }
                if per == 0 {
                    // L_p = 0: chunks() yields nothing, register empty tensors.
                    for m in 0..z {
                        store.add(param_name(l, m, part), Tensor::zeros([0, d]));
                    }
                }
            }
        }
        let pool = Self::bind(store, spec, table)?;
        pool.sync_frozen(store);
        Ok(pool)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.spec.layers {
            return Err(Error::Invalid(format!(
                "layer {layer} out of range for a {}-layer pool",
                self.spec.layers
            )));
        }
        Ok(())
    }
}

/// Splits a `[L_p, D]` prompt into its first (key) and second (value)
/// halves.
pub fn split_prompt<S: Scalar>(p: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    let (lp, d) = match p.shape() {
        [lp, d] => (*lp, *d),
        s => return Err(Error::shape("split_prompt", s, &[0, 0])),
    };
    if lp % 2 != 0 {
        return Err(Error::Invalid(format!("cannot split a prompt of odd length {lp}")));
    }
    let h = lp / 2;
    let (k, v) = p.data().split_at(h * d);
    Ok((Tensor::new([h, d], k.to_vec())?, Tensor::new([h, d], v.to_vec())?))
}

#[cfg(test)]
mod tests;
