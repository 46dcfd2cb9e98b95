use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AttentionLayer, NoiseSchedule, PolicyConfig};
use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::promptpool::{PoolTable, PromptPool};
use crate::querycoders::{QueryNet, TextEncoder, DEFAULT_TEXT_SEED};
use crate::seeds;
use crate::simworld::{Frame, MAX_MOVE, PIXELS, SIDE};

pub const PATCH_SIDE: usize = 8;
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;
pub const PATCHES_PER_FRAME: usize = (SIDE / PATCH_SIDE) * (SIDE / PATCH_SIDE);
pub const ACTION_DIM: usize = 3;
/// Normalized actions are `(dx / ACTION_SCALE, dy / ACTION_SCALE, grip)`.
pub const ACTION_SCALE: f64 = MAX_MOVE;
const LN_EPS: f64 = 1e-5;

/// Observation history, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub frames: Vec<Frame>,
    pub proprio: Vec<[f32; 4]>,
}

/// Inputs of the prompt query: instruction embedding and pooled flow.
/// `flow: None` is the text-only query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryInput<S> {
    pub text: Vec<S>,
    pub flow: Option<Vec<S>>,
}

/// One supervised example: observation, query and a normalized action
/// chunk of `horizon × 3` values.
#[derive(Clone, Copy, Debug)]
pub struct TrainItem<'a, S> {
    pub obs: &'a Observation,
    pub query: &'a QueryInput<S>,
    pub actions: &'a [S],
}

/// Splits a frame into row-major 8×8 patches scaled to [0, 1].
pub fn patches<S: Scalar>(frame: &[u8]) -> Vec<S> {
    let per_row = SIDE / PATCH_SIDE;
    let mut out = Vec::with_capacity(PIXELS);
    for pr in 0..per_row {
        for pc in 0..per_row {
            for r in 0..PATCH_SIDE {
                for c in 0..PATCH_SIDE {
                    let px = frame[(pr * PATCH_SIDE + r) * SIDE + pc * PATCH_SIDE + c];
                    out.push(S::lit(px as f64 / 255.0));
                }
            }
        }
    }
    out
}

/// Centre of patch `index` as (row, col) in [−1, 1], matching the x/y
/// convention of the proprio features.
fn patch_centre(index: usize) -> (f64, f64) {
    let per_row = SIDE / PATCH_SIDE;
    let to_unit = |k: usize| 2.0 * (k as f64 + 0.5) / per_row as f64 - 1.0;
    (to_unit(index / per_row), to_unit(index % per_row))
}

/// Proprioception mapped from [0, 1] to [−1, 1].
pub fn proprio_features<S: Scalar>(p: &[f32; 4]) -> [S; 4] {
    p.map(|v| S::lit(2.0 * v as f64 - 1.0))
}

/// Sinusoidal embedding of a diffusion step: sines then cosines over
/// geometric frequencies.
pub fn timestep_embedding<S: Scalar>(t: usize, dim: usize) -> Vec<S> {
    let half = dim / 2;
    let mut out = vec![S::zero(); dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half.max(1) as f64).exp();
        out[i] = S::lit((t as f64 * freq).sin());
        out[half + i] = S::lit((t as f64 * freq).cos());
    }
    out
}

#[derive(Clone, Debug)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct Block {
    ln1: Norm,
    attn: AttentionLayer,
    ln2: Norm,
    fc1: Affine,
    fc2: Affine,
}

/// Creates parameters from a seeded RNG, or binds existing ones by name.
struct Builder<'s, S: Scalar> {
    store: &'s mut ParamStore<S>,
    rng: Option<ChaCha8Rng>,
}

enum Init {
    Fan(usize),
    Normal(f64),
    Zeros,
    Ones,
}

impl<S: Scalar> Builder<'_, S> {
    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        match &mut self.rng {
            Some(rng) => {
                let t = match init {
                    Init::Fan(n) => Tensor::randn(shape, 1.0 / (n as f64).sqrt(), rng),
                    Init::Normal(s) => Tensor::randn(shape, s, rng),
                    Init::Zeros => Tensor::zeros(shape),
                    Init::Ones => Tensor::ones(shape),
                };
                Ok(self.store.add(name, t))
            }
            None => {
                let id = self.store.id(name)?;
                if self.store.get(id).shape() != shape {
                    return Err(Error::shape("bind parameter", self.store.get(id).shape(), shape));
                }
                Ok(id)
            }
        }
    }

    fn affine(&mut self, name: &str, fan_in: usize, out: usize) -> Result<Affine> {
        Ok(Affine {
            w: self.param(&format!("{name}.weight"), &[fan_in, out], Init::Fan(fan_in))?,
            b: self.param(&format!("{name}.bias"), &[out], Init::Zeros)?,
        })
    }

    fn norm(&mut self, name: &str, d: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.param(&format!("{name}.gamma"), &[d], Init::Ones)?,
            beta: self.param(&format!("{name}.beta"), &[d], Init::Zeros)?,
        })
    }
}

/// Observation encoder, prefix-prompted transformer and noise head, plus
/// the query network and prompt pool; all parameters live in `store`.
#[derive(Clone, Debug)]
pub struct PolicyNet<S: Scalar> {
    pub cfg: PolicyConfig,
    pub store: ParamStore<S>,
    pub pool: PromptPool,
    pub query: QueryNet,
    text: TextEncoder<S>,
    schedule: NoiseSchedule,
    patch: Affine,
    proprio: Affine,
    time: Affine,
    action: Affine,
    pos: ParamId,
    coord: ParamId,
    blocks: Vec<Block>,
    head_ln: Norm,
    head: Affine,
}

impl<S: Scalar> PolicyNet<S> {
    /// Fresh network; backbone, query net and pool draw from separate
    /// sub-seeds of `seed`.
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: Some(ChaCha8Rng::seed_from_u64(seeds::stage(seed, "policy.backbone"))),
        };
        let layout = Layout::build(&mut b, &cfg)?;
        let mut qrng = ChaCha8Rng::seed_from_u64(seeds::stage(seed, "policy.query"));
        let query = QueryNet::new(&mut store, cfg.text_dim, cfg.flow_dim, cfg.d_model, &mut qrng);
        let pool = PromptPool::new(&mut store, cfg.prompt_spec(), seeds::stage(seed, "policy.pool"))?;
        Self::assemble(cfg, store, pool, query, layout)
    }

    /// Rebinds a network to a store restored from a checkpoint.
    pub fn from_store(cfg: PolicyConfig, mut store: ParamStore<S>, pool: PromptPool) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::build(
            &mut Builder {
                store: &mut store,
                rng: None,
            },
            &cfg,
        )?;
        let query = QueryNet::bind(&store, cfg.text_dim, cfg.d_model)?;
        Self::assemble(cfg, store, pool, query, layout)
    }

    fn assemble(cfg: PolicyConfig, store: ParamStore<S>, pool: PromptPool, query: QueryNet, l: Layout) -> Result<Self> {
        Ok(Self {
            text: TextEncoder::new(cfg.text_dim, DEFAULT_TEXT_SEED),
            schedule: NoiseSchedule::new(cfg.schedule, cfg.diffusion_steps)?,
            cfg,
            store,
            pool,
            query,
            patch: l.patch,
            proprio: l.proprio,
            time: l.time,
            action: l.action,
            pos: l.pos,
            coord: l.coord,
            blocks: l.blocks,
            head_ln: l.head_ln,
            head: l.head,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn text_encoder(&self) -> &TextEncoder<S> {
        &self.text
    }

    pub fn pool_table(&self) -> PoolTable {
        self.pool.table()
    }

    pub fn attention_layer(&self, layer: usize) -> &AttentionLayer {
        &self.blocks[layer].attn
    }

    /// Everything that is not a prompt component.
    pub fn backbone_ids(&self) -> Vec<ParamId> {
        let pool: std::collections::HashSet<_> = self.pool.all_ids().collect();
        self.store.ids().filter(|id| !pool.contains(id)).collect()
    }

    /// Query inputs for an instruction and an optional pooled flow field.
    pub fn query_input(&self, instruction: &str, pooled_flow: Option<&[f64]>) -> Result<QueryInput<S>> {
        Ok(QueryInput {
            text: self.text.embed(instruction)?,
            flow: pooled_flow.map(|f| f.iter().map(|&v| S::lit(v)).collect()),
        })
    }

    /// Observation tokens `[B·hist·(1+16), D]`; per sample the proprio
    /// tokens come first, then the patch tokens of each frame in order.
    pub fn encode_obs(&self, g: &mut Graph<S>, obs: &[&Observation]) -> Result<Var> {
        let (prop, pat) = self.obs_parts(g, obs)?;
        let hist = self.cfg.obs_history;
        let mut parts = Vec::with_capacity(2 * obs.len());
        for b in 0..obs.len() {
            parts.push(g.slice_rows(prop, b * hist, hist)?);
            parts.push(g.slice_rows(pat, b * hist * PATCHES_PER_FRAME, hist * PATCHES_PER_FRAME)?);
        }
        g.concat_rows(&parts)
    }

    fn obs_parts(&self, g: &mut Graph<S>, obs: &[&Observation]) -> Result<(Var, Var)> {
        let hist = self.cfg.obs_history;
        let mut prop = Vec::with_capacity(obs.len() * hist * 4);
        let mut pix = Vec::with_capacity(obs.len() * hist * PIXELS);
        for o in obs {
            if o.frames.len() != hist || o.proprio.len() != hist {
                return Err(Error::Invalid(format!(
                    "observation history has {} frames and {} proprio vectors, expected {hist}",
                    o.frames.len(),
                    o.proprio.len()
                )));
            }
            for (f, p) in o.frames.iter().zip(&o.proprio) {
                if f.len() != PIXELS {
                    return Err(Error::shape("frame", &[f.len()], &[PIXELS]));
                }
                prop.extend(proprio_features::<S>(p));
                pix.extend(patches::<S>(f));
            }
        }
        let n = obs.len() * hist;
        let prop = g.constant([n, 4], prop)?;
        let pix = g.constant([n * PATCHES_PER_FRAME, PATCH_LEN], pix)?;
        Ok((self.affine(g, &self.proprio, prop)?, self.affine(g, &self.patch, pix)?))
    }

    fn affine(&self, g: &mut Graph<S>, a: &Affine, x: Var) -> Result<Var> {
        let w = g.param(a.w);
        let b = g.param(a.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    fn norm(&self, g: &mut Graph<S>, n: &Norm, x: Var) -> Result<Var> {
        let gamma = g.param(n.gamma);
        let beta = g.param(n.beta);
        g.layer_norm(x, gamma, beta, S::lit(LN_EPS))
    }

    /// Fused query `[1, D]` for one sample.
    pub fn query_var(&self, g: &mut Graph<S>, q: &QueryInput<S>) -> Result<Var> {
        self.query.query(g, &q.text, q.flow.as_deref())
    }

    /// Per-layer weights `[B, Z]` for a batch of queries.
    pub fn alphas_var(&self, g: &mut Graph<S>, queries: &[&QueryInput<S>]) -> Result<Vec<Var>> {
        let z = self.pool.size();
        let mut rows: Vec<Vec<Var>> = vec![Vec::with_capacity(queries.len()); self.cfg.layers];
        for q in queries {
            let qv = self.query_var(g, q)?;
            for (l, layer_rows) in rows.iter_mut().enumerate() {
                let a = self.pool.weights_var(g, l, qv)?;
                layer_rows.push(g.reshape(a, [1, z])?);
            }
        }
        rows.iter()
            .map(|r| if r.len() == 1 { Ok(r[0]) } else { g.concat_rows(r) })
            .collect()
    }

    /// Per-layer composed prompts `[B, L_p·D]`.
    pub fn prompts_var(&self, g: &mut Graph<S>, queries: &[&QueryInput<S>]) -> Result<Vec<Var>> {
        let alphas = self.alphas_var(g, queries)?;
        alphas
            .into_iter()
            .enumerate()
            .map(|(l, a)| self.pool.compose_var(g, l, a))
            .collect()
    }

    /// Noise prediction `[B·H, 3]` for noisy chunks `[B·H, 3]` at steps
    /// `t[b] ∈ 1..=T`. `prompts` holds one `[B, L_p·D]` matrix per layer;
    /// `None` runs the prompt-free transformer.
    pub fn predict_noise_var(
        &self,
        g: &mut Graph<S>,
        obs: &[&Observation],
        noisy: Var,
        t: &[usize],
        prompts: Option<&[Var]>,
    ) -> Result<Var> {
        let (bsz, h, d) = (obs.len(), self.cfg.horizon, self.cfg.d_model);
        if t.len() != bsz || g.shape(noisy) != [bsz * h, ACTION_DIM] {
            return Err(Error::shape("predict_noise", g.shape(noisy), &[bsz * h, ACTION_DIM]));
        }
        if let Some(&bad) = t.iter().find(|&&s| s == 0 || s > self.cfg.diffusion_steps) {
            return Err(Error::Invalid(format!(
                "diffusion step {bad} outside 1..={}",
                self.cfg.diffusion_steps
            )));
        }
        if let Some(p) = prompts {
            if p.len() != self.cfg.layers {
                return Err(Error::Invalid(format!("{} prompt layers for {} blocks", p.len(), self.cfg.layers)));
            }
        }

        let (prop, pat) = self.obs_parts(g, obs)?;
        let temb: Vec<S> = t.iter().flat_map(|&s| timestep_embedding::<S>(s, d)).collect();
        let temb = g.constant([bsz, d], temb)?;
        let ttok = self.affine(g, &self.time, temb)?;
        let atok = self.affine(g, &self.action, noisy)?;

        let hist = self.cfg.obs_history;
        let mut parts = Vec::with_capacity(4 * bsz);
        for b in 0..bsz {
            parts.push(g.slice_rows(prop, b * hist, hist)?);
            parts.push(g.slice_rows(pat, b * hist * PATCHES_PER_FRAME, hist * PATCHES_PER_FRAME)?);
            parts.push(g.slice_rows(ttok, b, 1)?);
            parts.push(g.slice_rows(atok, b * h, h)?);
        }
        let tokens = g.concat_rows(&parts)?;
        let pos = self.position_embedding(g)?;
        let pos = if bsz == 1 { pos } else { g.concat_rows(&vec![pos; bsz])? };
        let mut x = g.add(tokens, pos)?;

        for (l, block) in self.blocks.iter().enumerate() {
            let prompt = match prompts {
                Some(p) => Some(self.split_batch(g, p[l], bsz)?),
                None => None,
            };
            let hn = self.norm(g, &block.ln1, x)?;
            let a = block.attn.forward_batch(g, hn, bsz, prompt)?;
            x = g.add(x, a)?;
            let hn = self.norm(g, &block.ln2, x)?;
            let f = self.affine(g, &block.fc1, hn)?;
            let f = g.gelu(f);
            let f = self.affine(g, &block.fc2, f)?;
            x = g.add(x, f)?;
        }

        let len = self.cfg.token_count();
        let mut acts = Vec::with_capacity(bsz);
        for b in 0..bsz {
            acts.push(g.slice_rows(x, b * len + len - h, h)?);
        }
        let a = if bsz == 1 { acts[0] } else { g.concat_rows(&acts)? };
        let a = self.norm(g, &self.head_ln, a)?;
        self.affine(g, &self.head, a)
    }

    /// Per-token position code `[L, D]`: a learned table plus, on patch
    /// tokens, a learned linear map of the patch-centre coordinates in
    /// [−1, 1]², so that location is linear in the token features.
    fn position_embedding(&self, g: &mut Graph<S>) -> Result<Var> {
        let hist = self.cfg.obs_history;
        let len = self.cfg.token_count();
        let mut coords = vec![S::zero(); len * 2];
        for row in 0..hist * PATCHES_PER_FRAME {
            let (r, c) = patch_centre(row % PATCHES_PER_FRAME);
            coords[(hist + row) * 2] = S::lit(c);
            coords[(hist + row) * 2 + 1] = S::lit(r);
        }
        let coords = g.constant([len, 2], coords)?;
        let w = g.param(self.coord);
        let coded = g.matmul(coords, w)?;
        let table = g.param(self.pos);
        g.add(table, coded)
    }

    /// Stacked key and value halves `[B·L_p/2, D]` of per-sample prompts.
    fn split_batch(&self, g: &mut Graph<S>, prompts: Var, bsz: usize) -> Result<(Var, Var)> {
        let (lp, d) = (self.cfg.prompt_len, self.cfg.d_model);
        if g.shape(prompts) != [bsz, lp * d] {
            return Err(Error::shape("prompts", g.shape(prompts), &[bsz, lp * d]));
        }
        let rows = g.reshape(prompts, [bsz * lp, d])?;
        let half = lp / 2;
        if bsz == 1 {
            return Ok((g.slice_rows(rows, 0, half)?, g.slice_rows(rows, half, half)?));
        }
        let mut ks = Vec::with_capacity(bsz);
        let mut vs = Vec::with_capacity(bsz);
        for b in 0..bsz {
            ks.push(g.slice_rows(rows, b * lp, half)?);
            vs.push(g.slice_rows(rows, b * lp + half, half)?);
        }
        Ok((g.concat_rows(&ks)?, g.concat_rows(&vs)?))
    }

    /// Diffusion objective on a batch: per sample a uniform step t and
    /// Gaussian ε, loss = mean (ε − ε̂)². `use_prompts = false` trains the
    /// prompt-free transformer.
    pub fn diffusion_loss(
        &self,
        g: &mut Graph<S>,
        batch: &[TrainItem<'_, S>],
        use_prompts: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty training batch".into()));
        }
        let chunk = self.cfg.horizon * ACTION_DIM;
        let mut noisy = Vec::with_capacity(batch.len() * chunk);
        let mut eps = Vec::with_capacity(batch.len() * chunk);
        let mut ts = Vec::with_capacity(batch.len());
        for item in batch {
            if item.actions.len() != chunk {
                return Err(Error::shape("action chunk", &[item.actions.len()], &[chunk]));
            }
            let t = rng.gen_range(1..=self.cfg.diffusion_steps);
            let e: Vec<S> = (0..chunk).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            noisy.extend(self.schedule.noisy(item.actions, &e, t));
            eps.extend(e);
            ts.push(t);
        }
        let obs: Vec<&Observation> = batch.iter().map(|i| i.obs).collect();
        let rows = batch.len() * self.cfg.horizon;
        let noisy = g.constant([rows, ACTION_DIM], noisy)?;
        let target = g.constant([rows, ACTION_DIM], eps)?;
        let prompts = if use_prompts {
            let qs: Vec<&QueryInput<S>> = batch.iter().map(|i| i.query).collect();
            Some(self.prompts_var(g, &qs)?)
        } else {
            None
        };
        let pred = self.predict_noise_var(g, &obs, noisy, &ts, prompts.as_deref())?;
        let diff = g.sub(target, pred)?;
        let sq = g.square(diff);
        Ok(g.mean(sq))
    }

    /// Fused query vector for one sample, outside any training graph.
    pub fn query_vector(&self, q: &QueryInput<S>) -> Result<Vec<S>> {
        let mut g = Graph::new(&self.store);
        let v = self.query_var(&mut g, q)?;
        Ok(g.value(v).to_vec())
    }

    /// Per-layer component weights for a query vector.
    pub fn alphas(&self, qvec: &[S]) -> Result<Vec<Vec<S>>> {
        (0..self.cfg.layers)
            .map(|l| self.pool.attention_weights(&self.store, l, qvec))
            .collect()
    }

    /// Per-layer flattened prompts for given weights.
    pub fn prompts(&self, alphas: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
        alphas
            .iter()
            .enumerate()
            .map(|(l, a)| Ok(self.pool.compose_prompt(&self.store, l, a)?.into_data()))
            .collect()
    }

    /// Eager noise prediction for one sample; `noisy` is `horizon × 3`.
    pub fn predict_noise(
        &self,
        obs: &Observation,
        noisy: &[S],
        t: usize,
        prompts: Option<&[Vec<S>]>,
    ) -> Result<Vec<S>> {
        let mut g = Graph::new(&self.store);
        let x = g.constant([self.cfg.horizon, ACTION_DIM], noisy.to_vec())?;
        let pv = match prompts {
            Some(ps) => Some(
                ps.iter()
                    .map(|p| g.constant([1, p.len()], p.clone()))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let out = self.predict_noise_var(&mut g, &[obs], x, &[t], pv.as_deref())?;
        Ok(g.value(out).to_vec())
    }

    /// Ancestral sampling of a normalized action chunk from Gaussian
    /// noise, clipped to [−1, 1].
    pub fn sample_actions(
        &self,
        obs: &Observation,
        prompts: Option<&[Vec<S>]>,
        rng: &mut impl Rng,
    ) -> Result<Vec<S>> {
        let n = self.cfg.horizon * ACTION_DIM;
        let draw = |rng: &mut _| -> Vec<S> {
            (0..n).map(|_| S::lit(Rng::sample::<f64, _>(rng, StandardNormal))).collect()
        };
        let mut x = draw(rng);
        for t in (1..=self.cfg.diffusion_steps).rev() {
            let eps = self.predict_noise(obs, &x, t, prompts)?;
            let z = if t > 1 { draw(rng) } else { vec![S::zero(); n] };
            x = self.schedule.reverse_step(&x, &eps, &z, t);
        }
        let one = S::one();
        Ok(x.into_iter().map(|v| v.max(-one).min(one)).collect())
    }
}

/// Backbone parameter handles, built in a fixed order so that a seed
/// fully determines the initial weights.
struct Layout {
    patch: Affine,
    proprio: Affine,
    time: Affine,
    action: Affine,
    pos: ParamId,
    coord: ParamId,
    blocks: Vec<Block>,
    head_ln: Norm,
    head: Affine,
}

impl Layout {
    fn build<S: Scalar>(b: &mut Builder<'_, S>, cfg: &PolicyConfig) -> Result<Self> {
        let d = cfg.d_model;
        let patch = b.affine("obs.patch", PATCH_LEN, d)?;
        let proprio = b.affine("obs.proprio", 4, d)?;
        let time = b.affine("obs.time", d, d)?;
        let action = b.affine("obs.action", ACTION_DIM, d)?;
        let pos = b.param("obs.pos", &[cfg.token_count(), d], Init::Normal(0.02))?;
        let coord = b.param("obs.patch_coord.weight", &[2, d], Init::Fan(2))?;
        let mut blocks = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = format!("block{l}");
            let ln1 = b.norm(&format!("{p}.ln1"), d)?;
            let attn = AttentionLayer {
                wq: b.param(&format!("{p}.attn.wq"), &[d, d], Init::Fan(d))?,
                wk: b.param(&format!("{p}.attn.wk"), &[d, d], Init::Fan(d))?,
                wv: b.param(&format!("{p}.attn.wv"), &[d, d], Init::Fan(d))?,
                wo: b.param(&format!("{p}.attn.wo"), &[d, d], Init::Fan(d))?,
                heads: cfg.heads,
                dim: d,
            };
            let ln2 = b.norm(&format!("{p}.ln2"), d)?;
            let fc1 = b.affine(&format!("{p}.mlp.fc1"), d, 2 * d)?;
            let fc2 = b.affine(&format!("{p}.mlp.fc2"), 2 * d, d)?;
            blocks.push(Block {
                ln1,
                attn,
                ln2,
                fc1,
                fc2,
            });
        }
        let head_ln = b.norm("head.ln", d)?;
        let head = b.affine("head", d, ACTION_DIM)?;
        Ok(Self {
            patch,
            proprio,
            time,
            action,
            pos,
            coord,
            blocks,
            head_ln,
            head,
        })
    }
}
