use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamId, Scalar, Var};

/// Multi-head attention weights without biases. Head `i` uses columns
/// `i·d_h .. (i+1)·d_h` of the fused `[D, D]` projections.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub heads: usize,
    pub dim: usize,
}

impl AttentionLayer {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// MSA(h_Q, [p_K; h_K], [p_V; h_V]) for one sequence. Prompt rows pass
    /// through the same key/value projections as the inputs; queries are
    /// never prompted, so the output keeps `h_Q`'s length. `None` prompts
    /// give plain multi-head attention.
    pub fn prefix_msa<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        hq: Var,
        hk: Var,
        hv: Var,
        prompt: Option<(Var, Var)>,
    ) -> Result<Var> {
        let (keys_in, vals_in) = match prompt {
            Some((pk, pv)) => (g.concat_rows(&[pk, hk])?, g.concat_rows(&[pv, hv])?),
            None => (hk, hv),
        };
        if g.shape(keys_in)[0] != g.shape(vals_in)[0] {
            return Err(Error::shape("prefix_msa keys/values", g.shape(keys_in), g.shape(vals_in)));
        }
        let wq = g.param(self.wq);
        let wk = g.param(self.wk);
        let wv = g.param(self.wv);
        let q = g.matmul(hq, wq)?;
        let k = g.matmul(keys_in, wk)?;
        let v = g.matmul(vals_in, wv)?;
        let heads = self.attend(g, q, k, v)?;
        let wo = g.param(self.wo);
        g.matmul(heads, wo)
    }

    /// Self-attention over a batch of `batch` sequences stacked row-wise in
    /// `h: [B·L, D]`. `prompt`, when given, holds the stacked key and value
    /// halves `[B·L_p/2, D]` of every sample's prompt.
    pub fn forward_batch<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        h: Var,
        batch: usize,
        prompt: Option<(Var, Var)>,
    ) -> Result<Var> {
        let rows = g.shape(h)[0];
        if batch == 0 || rows % batch != 0 {
            return Err(Error::Invalid(format!("{rows} rows do not split into {batch} sequences")));
        }
        let len = rows / batch;
        let wq = g.param(self.wq);
        let wk = g.param(self.wk);
        let wv = g.param(self.wv);
        let q = g.matmul(h, wq)?;
        let k = g.matmul(h, wk)?;
        let v = g.matmul(h, wv)?;
        let projected = match prompt {
            Some((pk, pv)) => {
                let half = g.shape(pk)[0] / batch;
                let pk = g.matmul(pk, wk)?;
                let pv = g.matmul(pv, wv)?;
                Some((pk, pv, half))
            }
            None => None,
        };
        let mut outs = Vec::with_capacity(batch);
        for b in 0..batch {
            let qb = g.slice_rows(q, b * len, len)?;
            let mut kb = g.slice_rows(k, b * len, len)?;
            let mut vb = g.slice_rows(v, b * len, len)?;
            if let Some((pk, pv, half)) = projected {
                let pkb = g.slice_rows(pk, b * half, half)?;
                let pvb = g.slice_rows(pv, b * half, half)?;
                kb = g.concat_rows(&[pkb, kb])?;
                vb = g.concat_rows(&[pvb, vb])?;
            }
            outs.push(self.attend(g, qb, kb, vb)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_rows(&outs)? };
        let wo = g.param(self.wo);
        g.matmul(joined, wo)
    }

    /// Scaled dot-product attention per head on projected `q: [L, D]`,
    /// `k, v: [N, D]`; heads are re-joined column-wise.
    fn attend<S: Scalar>(&self, g: &mut Graph<S>, q: Var, k: Var, v: Var) -> Result<Var> {
        let dh = self.head_dim();
        let scale = S::lit(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(self.heads);
        for i in 0..self.heads {
            let (qi, ki, vi) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, i * dh, dh)?,
                    g.slice_cols(k, i * dh, dh)?,
                    g.slice_cols(v, i * dh, dh)?,
                )
            };
            let scores = g.matmul_nt(qi, ki)?;
            let scores = g.scale(scores, scale);
            let att = g.softmax(scores, 1)?;
            heads.push(g.matmul(att, vi)?);
        }
        if heads.len() == 1 {
            Ok(heads[0])
        } else {
            g.concat_cols(&heads)
        }
    }
}
