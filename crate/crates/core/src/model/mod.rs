//! The shared-weight network applied to both domains.
//!
//! ```text
//! X [b,f,K] ─ encode ─▶ E [b,M] ─ squeeze ─▶ C [b,B] ─ expand ─▶ Ẽ [b,M]
//!                                              │                   │
//!                                          reconstruct        decode_predict
//!                                              ▼                   ▼
//!                                      X̂ [b,f,K]        O [b,P] ─▶ Ŷ [b,1]
//! ```
//!
//! Parameters live in one [`ParamStore`]; the source and target streams bind
//! the same store, so weight sharing is structural.

mod layers;
mod params;
mod recon;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layers::{AttentionBlock, Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention};
pub use params::{params_grad_check, Bound, ParamId, ParamStore};
pub use recon::{ReconCell, ReconDecoder};

use crate::autodiff::{Graph, GraphError, Tensor, Var};
use crate::data::WindowSample;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input shape {got:?} does not match expected {expected:?}")]
    Input { got: Vec<usize>, expected: Vec<usize> },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_features: usize,
    pub window: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_hidden: usize,
    /// Per-token width after fusion; `M = (f + K) · fusion_width`.
    pub fusion_width: usize,
    pub squeeze_hidden: usize,
    pub bottleneck: usize,
    pub projection: usize,
    pub recon_cell: ReconCell,
    pub recon_hidden: usize,
    pub discriminator_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_features: 24,
            window: 40,
            d_model: 32,
            heads: 4,
            encoder_layers: 3,
            decoder_layers: 1,
            ffn_hidden: 64,
            fusion_width: 8,
            squeeze_hidden: 500,
            bottleneck: 200,
            projection: 32,
            recon_cell: ReconCell::Gru,
            recon_hidden: 1,
            discriminator_hidden: 64,
        }
    }
}

impl ModelConfig {
    /// Narrow widths for quick runs and gradient checks.
    pub fn toy(n_features: usize, window: usize) -> Self {
        Self {
            n_features,
            window,
            d_model: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            ffn_hidden: 16,
            fusion_width: 2,
            squeeze_hidden: 16,
            bottleneck: 8,
            projection: 8,
            recon_cell: ReconCell::Gru,
            recon_hidden: 1,
            discriminator_hidden: 8,
        }
    }

    pub fn latent_dim(&self) -> usize {
        (self.n_features + self.window) * self.fusion_width
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("n_features", self.n_features),
            ("window", self.window),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("ffn_hidden", self.ffn_hidden),
            ("fusion_width", self.fusion_width),
            ("squeeze_hidden", self.squeeze_hidden),
            ("bottleneck", self.bottleneck),
            ("projection", self.projection),
            ("recon_hidden", self.recon_hidden),
            ("discriminator_hidden", self.discriminator_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.bottleneck >= self.latent_dim() {
            return Err(ModelError::Config(format!(
                "bottleneck {} must be smaller than the encoder latent {}",
                self.bottleneck,
                self.latent_dim()
            )));
        }
        Ok(())
    }
}

/// Graph handles for everything one forward pass produces.
#[derive(Debug, Clone, Copy)]
pub struct LatentBundle {
    pub e: Var,
    pub c: Var,
    pub e_tilde: Var,
    pub o: Var,
    pub y_hat: Var,
    pub x_hat: Var,
}

/// Values of an inference pass, detached from any graph.
#[derive(Debug, Clone)]
pub struct Inference {
    pub c: Tensor,
    pub o: Tensor,
    pub y_hat: Tensor,
}

#[derive(Debug, Clone)]
struct Encoder {
    sensor_in: Linear,
    sensor_blocks: Vec<AttentionBlock>,
    time_in: Linear,
    time_pos: Embedding,
    time_blocks: Vec<AttentionBlock>,
    fusion: Linear,
}

#[derive(Debug, Clone)]
struct Decoder {
    lift: Linear,
    pos: Embedding,
    query: ParamId,
    blocks: Vec<AttentionBlock>,
    out: Linear,
}

#[derive(Debug, Clone)]
pub struct LamaNet {
    config: ModelConfig,
    pub params: ParamStore,
    encoder: Encoder,
    squeeze: [Linear; 2],
    expand: [Linear; 2],
    decoder: Decoder,
    pub head: Linear,
    discriminator: [Linear; 2],
    pub recon: ReconDecoder,
}

impl LamaNet {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let c = config;
        let (f, k, d) = (c.n_features, c.window, c.d_model);
        let m = c.latent_dim();
        let mut s = ParamStore::new();
        let blocks = |s: &mut ParamStore, name: &str, n: usize, rng: &mut R| -> Vec<AttentionBlock> {
            (0..n)
                .map(|i| AttentionBlock::new(s, &format!("{name}.{i}"), d, c.heads, c.ffn_hidden, rng))
                .collect()
        };

        let encoder = Encoder {
            sensor_in: Linear::new(&mut s, "enc.sensor.in", k, d, rng),
            sensor_blocks: blocks(&mut s, "enc.sensor.block", c.encoder_layers, rng),
            time_in: Linear::new(&mut s, "enc.time.in", f, d, rng),
            time_pos: Embedding::new(&mut s, "enc.time.pos", k, d, rng),
            time_blocks: blocks(&mut s, "enc.time.block", c.encoder_layers, rng),
            fusion: Linear::new(&mut s, "enc.fusion", d, c.fusion_width, rng),
        };
        let squeeze = [
            Linear::new(&mut s, "squeeze.0", m, c.squeeze_hidden, rng),
            Linear::new(&mut s, "squeeze.1", c.squeeze_hidden, c.bottleneck, rng),
        ];
        let expand = [
            Linear::new(&mut s, "expand.0", c.bottleneck, c.squeeze_hidden, rng),
            Linear::new(&mut s, "expand.1", c.squeeze_hidden, m, rng),
        ];
        let decoder = Decoder {
            lift: Linear::new(&mut s, "dec.in", c.fusion_width, d, rng),
            pos: Embedding::new(&mut s, "dec.pos", f + k, d, rng),
            query: s.add("dec.query".into(), Tensor::uniform(&[1, d], 0.1, rng)),
            blocks: blocks(&mut s, "dec.block", c.decoder_layers, rng),
            out: Linear::new(&mut s, "dec.out", d, c.projection, rng),
        };
        let head = Linear::new(&mut s, "head", c.projection, 1, rng);
        let discriminator = [
            Linear::new(&mut s, "disc.0", c.bottleneck, c.discriminator_hidden, rng),
            Linear::new(&mut s, "disc.1", c.discriminator_hidden, 1, rng),
        ];
        let recon = ReconDecoder::new(&mut s, c.recon_cell, c.bottleneck, f, c.recon_hidden, rng);

        Ok(Self {
            config: c.clone(),
            params: s,
            encoder,
            squeeze,
            expand,
            decoder,
            head,
            discriminator,
            recon,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<usize, ModelError> {
        let shape = g.shape(x);
        let (f, k) = (self.config.n_features, self.config.window);
        if shape.len() != 3 || shape[1] != f || shape[2] != k {
            return Err(ModelError::Input {
                got: shape.to_vec(),
                expected: vec![shape.first().copied().unwrap_or(0), f, k],
            });
        }
        Ok(shape[0])
    }

    /// `x: [b, f, K]` → `E: [b, M]`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var, ModelError> {
        let b = self.check_input(g, x)?;
        let enc = &self.encoder;

        let mut sensors = enc.sensor_in.forward(g, p, x)?;
        for block in &enc.sensor_blocks {
            sensors = block.self_attend(g, p, sensors)?;
        }

        let steps = g.transpose(x)?;
        let steps = enc.time_in.forward(g, p, steps)?;
        let mut steps = enc.time_pos.add_to(g, p, steps)?;
        for block in &enc.time_blocks {
            steps = block.self_attend(g, p, steps)?;
        }

        let fused = g.concat(&[sensors, steps], 1)?;
        let fused = enc.fusion.forward(g, p, fused)?;
        Ok(g.reshape(fused, &[b, self.config.latent_dim()])?)
    }

    /// `E: [b, M]` → `C: [b, B]`. The hidden layer is ReLU; the bottleneck
    /// itself is affine so that no region of `C` has zero gradient.
    pub fn squeeze(&self, g: &mut Graph, p: &Bound, e: Var) -> Result<Var, ModelError> {
        let h = self.squeeze[0].forward(g, p, e)?;
        let h = g.relu(h);
        let c = self.squeeze[1].forward(g, p, h)?;
        Ok(c)
    }

    /// `C: [b, B]` → `Ẽ: [b, M]`.
    pub fn expand(&self, g: &mut Graph, p: &Bound, c: Var) -> Result<Var, ModelError> {
        let h = self.expand[0].forward(g, p, c)?;
        let h = g.relu(h);
        let e = self.expand[1].forward(g, p, h)?;
        Ok(g.relu(e))
    }

    /// `Ẽ: [b, M]` → `(O: [b, P], Ŷ: [b, 1])`.
    pub fn decode_predict(&self, g: &mut Graph, p: &Bound, e_tilde: Var) -> Result<(Var, Var), ModelError> {
        let c = &self.config;
        let b = g.shape(e_tilde)[0];
        let tokens = c.n_features + c.window;
        let dec = &self.decoder;
        let seq = g.reshape(e_tilde, &[b, tokens, c.fusion_width])?;
        let seq = dec.lift.forward(g, p, seq)?;
        let memory = dec.pos.add_to(g, p, seq)?;
        let mut q = g.broadcast_to(p[dec.query], &[b, 1, c.d_model])?;
        for block in &dec.blocks {
            q = block.forward(g, p, q, memory)?;
        }
        let q = g.reshape(q, &[b, c.d_model])?;
        let o = dec.out.forward(g, p, q)?;
        let y = self.predict_from_projection(g, p, o)?;
        Ok((o, y))
    }

    /// `Ŷ = σ(O·W_R + b_R)`.
    pub fn predict_from_projection(&self, g: &mut Graph, p: &Bound, o: Var) -> Result<Var, ModelError> {
        let z = self.head.forward(g, p, o)?;
        Ok(g.sigmoid(z))
    }

    /// The map from bottleneck to prediction, `C ↦ Ŷ`.
    pub fn predict_from_bottleneck(&self, g: &mut Graph, p: &Bound, c: Var) -> Result<Var, ModelError> {
        let e = self.expand(g, p, c)?;
        Ok(self.decode_predict(g, p, e)?.1)
    }

    /// `C: [b, B]`, `x_first: [b, f]` → `X̂: [b, f, K]`.
    pub fn reconstruct(&self, g: &mut Graph, p: &Bound, c: Var, x_first: Var) -> Result<Var, ModelError> {
        Ok(self.recon.forward(g, p, c, x_first, self.config.window)?)
    }

    /// Domain-classifier logit for each bottleneck row, `[b, 1]`.
    pub fn discriminate(&self, g: &mut Graph, p: &Bound, c: Var) -> Result<Var, ModelError> {
        let h = self.discriminator[0].forward(g, p, c)?;
        let h = g.relu(h);
        Ok(self.discriminator[1].forward(g, p, h)?)
    }

    /// First time step of every window, `[b, f]`.
    pub fn first_step(&self, g: &mut Graph, x: Var) -> Result<Var, ModelError> {
        let b = self.check_input(g, x)?;
        let first = g.slice(x, 2, 0, 1)?;
        Ok(g.reshape(first, &[b, self.config.n_features])?)
    }

    /// Full forward pass including the reconstruction branch.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<LatentBundle, ModelError> {
        let e = self.encode(g, p, x)?;
        let c = self.squeeze(g, p, e)?;
        let e_tilde = self.expand(g, p, c)?;
        let (o, y_hat) = self.decode_predict(g, p, e_tilde)?;
        let first = self.first_step(g, x)?;
        let x_hat = self.reconstruct(g, p, c, first)?;
        Ok(LatentBundle {
            e,
            c,
            e_tilde,
            o,
            y_hat,
            x_hat,
        })
    }

    /// Prediction path only (no reconstruction), on frozen parameters.
    pub fn infer(&self, x: &Tensor) -> Result<Inference, ModelError> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let e = self.encode(&mut g, &p, xv)?;
        let c = self.squeeze(&mut g, &p, e)?;
        let e_tilde = self.expand(&mut g, &p, c)?;
        let (o, y) = self.decode_predict(&mut g, &p, e_tilde)?;
        Ok(Inference {
            c: g.value(c).clone(),
            o: g.value(o).clone(),
            y_hat: g.value(y).clone(),
        })
    }

    /// Inference over many windows in parallel chunks; rows follow `windows`.
    pub fn infer_windows(&self, windows: &[WindowSample], chunk: usize) -> Result<Inference, ModelError> {
        use rayon::prelude::*;
        let parts: Vec<Inference> = windows
            .par_chunks(chunk.max(1))
            .map(|w| self.infer(&stack_windows(w)))
            .collect::<Result<_, _>>()?;
        let join = |pick: fn(&Inference) -> &Tensor, width: usize| -> Tensor {
            let data: Vec<f64> = parts.iter().flat_map(|i| pick(i).data().iter().copied()).collect();
            let rows = data.len() / width;
            Tensor::new(vec![rows, width], data).expect("consistent widths")
        };
        Ok(Inference {
            c: join(|i| &i.c, self.config.bottleneck),
            o: join(|i| &i.o, self.config.projection),
            y_hat: join(|i| &i.y_hat, 1),
        })
    }
}

/// Stacks windows into the model input layout `[b, f, K]`.
pub fn stack_windows<'a, I>(windows: I) -> Tensor
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let mut data = Vec::new();
    let mut shape = None;
    let mut b = 0;
    for w in windows {
        let s = (w.n_features, w.window);
        assert_eq!(*shape.get_or_insert(s), s, "windows of mixed shape");
        data.extend_from_slice(&w.features);
        b += 1;
    }
    let (f, k) = shape.unwrap_or((0, 0));
    Tensor::new(vec![b, f, k], data).expect("window features are f·K long")
}

/// Scaled labels of labeled windows as a `[b, 1]` tensor.
pub fn stack_labels<'a, I>(windows: I) -> Option<Tensor>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let labels: Option<Vec<f64>> = windows.into_iter().map(|w| w.rul_scaled).collect();
    let labels = labels?;
    let n = labels.len();
    Some(Tensor::new(vec![n, 1], labels).expect("column"))
}
