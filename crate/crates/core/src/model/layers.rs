use rand::Rng;

use super::params::{Bound, ParamId, ParamStore};
use crate::autodiff::{Graph, GraphError, Tensor, Var};

type Result<T> = std::result::Result<T, GraphError>;

const LN_EPS: f64 = 1e-5;

/// `y = x·W + b` over the last axis of a rank-2 or rank-3 input.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = store.add(
            format!("{name}.w"),
            Tensor::uniform(&[fan_in, fan_out], bound, rng),
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]));
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = if shape.len() == 2 {
            x
        } else {
            g.reshape(x, &[rows, self.fan_in])?
        };
        let xw = g.matmul(flat, p[self.w])?;
        let bias = g.broadcast_to(p[self.b], &[rows, self.fan_out])?;
        let y = g.add(xw, bias)?;
        if shape.len() == 2 {
            Ok(y)
        } else {
            let mut out = shape;
            *out.last_mut().expect("rank ≥ 2") = self.fan_out;
            g.reshape(y, &out)
        }
    }
}

/// Normalization over the last axis with learned gain and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    gain: ParamId,
    shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[width], 1.0)),
            shift: store.add(format!("{name}.shift"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let last = shape.len() - 1;
        let mu = g.mean_axis(x, last)?;
        let mu = g.broadcast_to(mu, &shape)?;
        let centered = g.sub(x, mu)?;
        let sq = g.square(centered);
        let var = g.mean_axis(sq, last)?;
        let var = g.add_scalar(var, LN_EPS);
        let log_var = g.log(var);
        let inv_std = g.scale(log_var, -0.5);
        let inv_std = g.exp(inv_std);
        let inv_std = g.broadcast_to(inv_std, &shape)?;
        let normed = g.mul(centered, inv_std)?;
        let gain = g.broadcast_to(p[self.gain], &shape)?;
        let shift = g.broadcast_to(p[self.shift], &shape)?;
        let scaled = g.mul(normed, gain)?;
        g.add(scaled, shift)
    }
}

/// Multi-head scaled dot-product attention with separate query/key/value
/// projections and an output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
    width: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            q: Linear::new(store, &format!("{name}.q"), width, width, rng),
            k: Linear::new(store, &format!("{name}.k"), width, width, rng),
            v: Linear::new(store, &format!("{name}.v"), width, width, rng),
            out: Linear::new(store, &format!("{name}.o"), width, width, rng),
            heads,
            width,
        }
    }

    /// `query: [b, Lq, d]`, `memory: [b, Lk, d]` → `[b, Lq, d]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, query: Var, memory: Var) -> Result<Var> {
        let q = self.q.forward(g, p, query)?;
        let k = self.k.forward(g, p, memory)?;
        let v = self.v.forward(g, p, memory)?;
        let dh = self.width / self.heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = g.slice(q, 2, lo, hi)?;
            let kh = g.slice(k, 2, lo, hi)?;
            let vh = g.slice(v, 2, lo, hi)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, inv_sqrt);
            let attn = g.softmax(scores, 2)?;
            heads.push(g.matmul(attn, vh)?);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat(&heads, 2)?
        };
        self.out.forward(g, p, merged)
    }
}

/// Two-layer rectified feed-forward block.
#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), width, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, width, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.up.forward(g, p, x)?;
        let h = g.relu(h);
        self.down.forward(g, p, h)
    }
}

/// Post-norm transformer block: `x ← LN(x + Attn(x, mem))`, `x ← LN(x + FF(x))`.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    attn: MultiHeadAttention,
    norm1: LayerNorm,
    ff: FeedForward,
    norm2: LayerNorm,
}

impl AttentionBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        ff_hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), width, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.ln1"), width),
            ff: FeedForward::new(store, &format!("{name}.ff"), width, ff_hidden, rng),
            norm2: LayerNorm::new(store, &format!("{name}.ln2"), width),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, memory: Var) -> Result<Var> {
        let a = self.attn.forward(g, p, x, memory)?;
        let x = g.add(x, a)?;
        let x = self.norm1.forward(g, p, x)?;
        let f = self.ff.forward(g, p, x)?;
        let x = g.add(x, f)?;
        self.norm2.forward(g, p, x)
    }

    pub fn self_attend(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        self.forward(g, p, x, x)
    }
}

/// Learned additive embedding of shape `[len, width]`, broadcast over the batch.
#[derive(Debug, Clone)]
pub struct Embedding {
    table: ParamId,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        len: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            table: store.add(name.to_string(), Tensor::uniform(&[len, width], 0.1, rng)),
        }
    }

    pub fn add_to(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let e = g.broadcast_to(p[self.table], &shape)?;
        g.add(x, e)
    }

    pub fn id(&self) -> ParamId {
        self.table
    }
}
