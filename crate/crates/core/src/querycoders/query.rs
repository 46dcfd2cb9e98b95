use rand::Rng;

use super::flow::POOLED_LEN;
use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// Learned flow features Φ and the text–flow fusion producing the prompt
/// query.
#[derive(Clone, Debug)]
pub struct QueryNet {
    pub text_dim: usize,
    pub flow_dim: usize,
    pub out_dim: usize,
    flow_w: ParamId,
    flow_b: ParamId,
    fuse_w: ParamId,
    fuse_b: ParamId,
}

pub const QUERY_PARAM_NAMES: [&str; 4] = [
    "query.flow.weight",
    "query.flow.bias",
    "query.fuse.weight",
    "query.fuse.bias",
];

impl QueryNet {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        text_dim: usize,
        flow_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let flow_w = store.add(
            QUERY_PARAM_NAMES[0],
            Tensor::randn([POOLED_LEN, flow_dim], fan(POOLED_LEN), rng),
        );
        let flow_b = store.add(QUERY_PARAM_NAMES[1], Tensor::zeros([flow_dim]));
        let fused = text_dim + flow_dim;
        let fuse_w = store.add(
            QUERY_PARAM_NAMES[2],
            Tensor::randn([fused, out_dim], fan(fused), rng),
        );
        let fuse_b = store.add(QUERY_PARAM_NAMES[3], Tensor::zeros([out_dim]));
        Self {
            text_dim,
            flow_dim,
            out_dim,
            flow_w,
            flow_b,
            fuse_w,
            fuse_b,
        }
    }

    /// Rebinds to parameters already present in `store` (checkpoint load).
    pub fn bind<S: Scalar>(store: &ParamStore<S>, text_dim: usize, out_dim: usize) -> Result<Self> {
        let flow_w = store.id(QUERY_PARAM_NAMES[0])?;
        let flow_dim = store.get(flow_w).shape()[1];
        let fuse_w = store.id(QUERY_PARAM_NAMES[2])?;
        if store.get(fuse_w).shape() != [text_dim + flow_dim, out_dim] {
            return Err(Error::shape(
                "query fuse weight",
                store.get(fuse_w).shape(),
                &[text_dim + flow_dim, out_dim],
            ));
        }
        Ok(Self {
            text_dim,
            flow_dim,
            out_dim,
            flow_w,
            flow_b: store.id(QUERY_PARAM_NAMES[1])?,
            fuse_w,
            fuse_b: store.id(QUERY_PARAM_NAMES[3])?,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.flow_w, self.flow_b, self.fuse_w, self.fuse_b]
    }

    /// Φ: pooled flow (128) → affine → `[1 × flow_dim]`.
    pub fn flow_features<S: Scalar>(&self, g: &mut Graph<S>, pooled: &[S]) -> Result<Var> {
        if pooled.len() != POOLED_LEN {
            return Err(Error::shape("flow_features", &[pooled.len()], &[POOLED_LEN]));
        }
        let x = g.constant([1, POOLED_LEN], pooled.to_vec())?;
        let w = g.param(self.flow_w);
        let b = g.param(self.flow_b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    /// Affine map of `[text ; flow_feat]` to the model width.
    pub fn map_query<S: Scalar>(&self, g: &mut Graph<S>, text: &[S], flow_feat: Var) -> Result<Var> {
        if text.len() != self.text_dim {
            return Err(Error::shape("map_query text", &[text.len()], &[self.text_dim]));
        }
        if g.value(flow_feat).len() != self.flow_dim {
            return Err(Error::shape("map_query flow", g.shape(flow_feat), &[self.flow_dim]));
        }
        let t = g.constant([1, self.text_dim], text.to_vec())?;
        let f = g.reshape(flow_feat, [1, self.flow_dim])?;
        let joined = g.concat_cols(&[t, f])?;
        let w = g.param(self.fuse_w);
        let b = g.param(self.fuse_b);
        let y = g.matmul(joined, w)?;
        g.add_row(y, b)
    }

    /// Full query; `pooled = None` is the text-only ablation, where the flow
    /// feature slot is filled with zeros.
    pub fn query<S: Scalar>(&self, g: &mut Graph<S>, text: &[S], pooled: Option<&[S]>) -> Result<Var> {
        let feat = match pooled {
            Some(p) => self.flow_features(g, p)?,
            None => g.constant([1, self.flow_dim], vec![S::zero(); self.flow_dim])?,
        };
        self.map_query(g, text, feat)
    }
}
