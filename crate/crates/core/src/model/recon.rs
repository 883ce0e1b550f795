use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Linear;
use super::params::{Bound, ParamStore};
use crate::autodiff::{Graph, GraphError, Tensor, Var};

type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconCell {
    Gru,
    Lstm,
    Rnn,
}

impl ReconCell {
    pub const ALL: [ReconCell; 3] = [ReconCell::Gru, ReconCell::Lstm, ReconCell::Rnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ReconCell::Gru => "gru",
            ReconCell::Lstm => "lstm",
            ReconCell::Rnn => "rnn",
        }
    }

    fn gates(self) -> usize {
        match self {
            ReconCell::Gru => 3,
            ReconCell::Lstm => 4,
            ReconCell::Rnn => 1,
        }
    }
}

impl std::str::FromStr for ReconCell {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(ReconCell::Gru),
            "lstm" => Ok(ReconCell::Lstm),
            "rnn" => Ok(ReconCell::Rnn),
            other => Err(format!("unknown reconstruction cell {other:?}")),
        }
    }
}

/// Recurrent decoder that rebuilds a window from the bottleneck.
///
/// The initial hidden state is `σ(C·W_r + b_r)`. The first step is fed the
/// window's first time step; later steps are fed the previous reconstruction.
/// Each hidden state is lifted back to `f` features by an affine readout.
#[derive(Debug, Clone)]
pub struct ReconDecoder {
    pub init: Linear,
    input: Linear,
    hidden: Linear,
    readout: Linear,
    cell: ReconCell,
    width: usize,
}

impl ReconDecoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cell: ReconCell,
        bottleneck: usize,
        n_features: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let gates = cell.gates() * width;
        let init = Linear::new(store, "recon.init", bottleneck, width, rng);
        let input = Linear::new(store, &format!("recon.{}.input", cell.as_str()), n_features, gates, rng);
        let hidden = Linear::new(store, &format!("recon.{}.hidden", cell.as_str()), width, gates, rng);
        // the hidden projection carries no separate bias
        let readout = Linear::new(store, "recon.readout", width, n_features, rng);
        Self {
            init,
            input,
            hidden,
            readout,
            cell,
            width,
        }
    }

    pub fn cell(&self) -> ReconCell {
        self.cell
    }

    fn project_hidden(&self, g: &mut Graph, p: &Bound, h: Var) -> Result<Var> {
        g.matmul(h, p[self.hidden.w])
    }

    /// `c: [b, B]`, `first: [b, f]` → `[b, f, steps]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, c: Var, first: Var, steps: usize) -> Result<Var> {
        let b = g.shape(c)[0];
        let f = g.shape(first)[1];
        let h0 = self.init.forward(g, p, c)?;
        let mut h = g.sigmoid(h0);
        let mut cell_state = match self.cell {
            ReconCell::Lstm => Some(g.constant(Tensor::zeros(&[b, self.width]))),
            _ => None,
        };
        let mut x = first;
        let mut outputs = Vec::with_capacity(steps);
        for _ in 0..steps {
            let xi = self.input.forward(g, p, x)?;
            let hh = self.project_hidden(g, p, h)?;
            h = match self.cell {
                ReconCell::Gru => self.gru_step(g, xi, hh, h)?,
                ReconCell::Lstm => {
                    let (h2, c2) = self.lstm_step(g, xi, hh, cell_state.expect("lstm state"))?;
                    cell_state = Some(c2);
                    h2
                }
                ReconCell::Rnn => {
                    let pre = g.add(xi, hh)?;
                    g.tanh(pre)
                }
            };
            let y = self.readout.forward(g, p, h)?;
            outputs.push(g.reshape(y, &[b, f, 1])?);
            x = y;
        }
        if outputs.len() == 1 {
            Ok(outputs[0])
        } else {
            g.concat(&outputs, 2)
        }
    }

    fn gate(&self, g: &mut Graph, x: Var, k: usize) -> Result<Var> {
        g.slice(x, 1, k * self.width, (k + 1) * self.width)
    }

    /// Gate order: reset, update, candidate.
    fn gru_step(&self, g: &mut Graph, xi: Var, hh: Var, h: Var) -> Result<Var> {
        let (xr, hr) = (self.gate(g, xi, 0)?, self.gate(g, hh, 0)?);
        let (xz, hz) = (self.gate(g, xi, 1)?, self.gate(g, hh, 1)?);
        let (xn, hn) = (self.gate(g, xi, 2)?, self.gate(g, hh, 2)?);
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let gated = g.mul(r, hn)?;
        let n = g.add(xn, gated)?;
        let n = g.tanh(n);
        // h' = n + z ⊙ (h − n)
        let diff = g.sub(h, n)?;
        let keep = g.mul(z, diff)?;
        g.add(n, keep)
    }

    /// Gate order: input, forget, candidate, output.
    fn lstm_step(&self, g: &mut Graph, xi: Var, hh: Var, c: Var) -> Result<(Var, Var)> {
        let pre = g.add(xi, hh)?;
        let i = self.gate(g, pre, 0)?;
        let i = g.sigmoid(i);
        let f = self.gate(g, pre, 1)?;
        let f = g.sigmoid(f);
        let cand = self.gate(g, pre, 2)?;
        let cand = g.tanh(cand);
        let o = self.gate(g, pre, 3)?;
        let o = g.sigmoid(o);
        let kept = g.mul(f, c)?;
        let fresh = g.mul(i, cand)?;
        let c2 = g.add(kept, fresh)?;
        let tc = g.tanh(c2);
        let h2 = g.mul(o, tc)?;
        Ok((h2, c2))
    }
}
