//! Regression, alignment and regularization objectives.
//!
//! Every loss is built on a [`Graph`] so it can be differentiated together
//! with the model; none of them hold state. Randomness (the smoothness
//! perturbation) is passed in explicitly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Graph, GraphError, Tensor, Var};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

type Result<T> = std::result::Result<T, LossError>;

fn shape_err(op: &'static str, g: &Graph, a: Var, b: Var) -> LossError {
    LossError::Graph(GraphError::ShapeMismatch {
        op,
        lhs: g.shape(a).to_vec(),
        rhs: g.shape(b).to_vec(),
    })
}

/// Mean squared error over all elements of two equally shaped tensors.
pub fn mse(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(target) {
        return Err(shape_err("mse", g, pred, target));
    }
    if g.value(pred).numel() == 0 {
        return Err(LossError::Argument("mse of an empty batch".into()));
    }
    let d = g.sub(pred, target)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// `(1/N) Σ (y − ŷ)²` over a `[N, 1]` batch.
pub fn rul_mse(g: &mut Graph, y_hat: Var, y: Var) -> Result<Var> {
    mse(g, y_hat, y)
}

/// Mean squared reconstruction error of the source windows plus that of the
/// target windows.
pub fn recon_loss(g: &mut Graph, x_s: Var, x_hat_s: Var, x_t: Var, x_hat_t: Var) -> Result<Var> {
    let s = mse(g, x_hat_s, x_s)?;
    let t = mse(g, x_hat_t, x_t)?;
    Ok(g.add(s, t)?)
}

/// Gaussian kernel `k(a, b) = exp(−‖a − b‖² / 2σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "bandwidth", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `σ²` is the median pairwise squared distance of the pooled batch,
    /// recomputed per call and held constant for differentiation.
    MedianHeuristic,
    Fixed { sigma: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::MedianHeuristic
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Fixed { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                LossError::Argument(format!("kernel bandwidth must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// `2σ²` for the given pooled distance matrix.
    fn two_sigma_sq(&self, dist: &Tensor) -> f64 {
        match *self {
            KernelSpec::Fixed { sigma } => 2.0 * sigma * sigma,
            KernelSpec::MedianHeuristic => 2.0 * median_off_diagonal(dist),
        }
    }
}

/// Median of the strictly upper-triangular entries of a square matrix,
/// falling back to 1 when it is zero (degenerate batches).
pub fn median_off_diagonal(dist: &Tensor) -> f64 {
    let n = dist.shape()[0];
    let mut vals: Vec<f64> = (0..n)
        .flat_map(|i| dist.row(i)[i + 1..].to_vec())
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    let med = if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        0.5 * (vals[mid - 1] + vals[mid])
    };
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

/// Biased squared MMD between the rows of `a: [n, d]` and `b: [m, d]`.
///
/// One distance matrix over the pooled rows is weighted by `1/n²` within
/// `a`, `1/m²` within `b` and `−1/(nm)` across (each cross pair appears
/// twice in the pooled matrix).
pub fn mmd2(g: &mut Graph, a: Var, b: Var, kernel: KernelSpec) -> Result<Var> {
    kernel.validate()?;
    let (sa, sb) = (g.shape(a).to_vec(), g.shape(b).to_vec());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
        return Err(shape_err("mmd2", g, a, b));
    }
    let (n, m) = (sa[0], sb[0]);
    if n == 0 || m == 0 {
        return Err(LossError::Argument("mmd2 needs at least one row per side".into()));
    }
    let pooled = g.concat(&[a, b], 0)?;
    let dist = g.pairwise_sq_dist(pooled, pooled)?;
    let two_sigma_sq = kernel.two_sigma_sq(g.value(dist));
    let scaled = g.scale(dist, -1.0 / two_sigma_sq);
    let k = g.exp(scaled);
    let w = g.constant(mmd_weights(n, m));
    let weighted = g.mul(k, w)?;
    Ok(g.sum(weighted))
}

fn mmd_weights(n: usize, m: usize) -> Tensor {
    let size = n + m;
    let (nn, mm, nm) = (
        1.0 / (n * n) as f64,
        1.0 / (m * m) as f64,
        -1.0 / (n * m) as f64,
    );
    let mut w = Tensor::zeros(&[size, size]);
    let data = w.data_mut();
    for i in 0..size {
        for j in 0..size {
            data[i * size + j] = match (i < n, j < n) {
                (true, true) => nn,
                (false, false) => mm,
                _ => nm,
            };
        }
    }
    w
}

/// [`mmd2`] evaluated on plain tensors.
pub fn mmd2_value(a: &Tensor, b: &Tensor, kernel: KernelSpec) -> Result<f64> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(a.clone()), g.constant(b.clone()));
    let v = mmd2(&mut g, a, b, kernel)?;
    Ok(g.value(v).item())
}

/// `mmd2(C_s, C_t) + mmd2(O_s, O_t)`.
pub fn latent_mmd(g: &mut Graph, c_s: Var, c_t: Var, o_s: Var, o_t: Var, kernel: KernelSpec) -> Result<Var> {
    let c = mmd2(g, c_s, c_t, kernel)?;
    let o = mmd2(g, o_s, o_t, kernel)?;
    Ok(g.add(c, o)?)
}

/// Batch mean of `‖F(C) − F(C + γδ)‖²`.
///
/// `delta` has the shape of `c` and is supplied by the caller (standard
/// normal draws from a seeded stream); `f` is the bottleneck-to-prediction
/// map and is evaluated on both branches so gradients flow through each.
pub fn smooth_loss<F>(g: &mut Graph, f: F, c: Var, delta: &Tensor, gamma: f64) -> Result<Var>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if gamma < 0.0 {
        return Err(LossError::Argument(format!("gamma_noise must be ≥ 0, got {gamma}")));
    }
    if delta.shape() != g.shape(c) {
        return Err(LossError::Graph(GraphError::ShapeMismatch {
            op: "smooth_loss",
            lhs: g.shape(c).to_vec(),
            rhs: delta.shape().to_vec(),
        }));
    }
    let b = g.shape(c)[0].max(1);
    let mut noise = delta.clone();
    noise.data_mut().iter_mut().for_each(|v| *v *= gamma);
    let noise = g.constant(noise);
    let perturbed = g.add(c, noise)?;
    let clean = f(g, c)?;
    let moved = f(g, perturbed)?;
    let diff = g.sub(clean, moved)?;
    let sq = g.squared_norm(diff);
    Ok(g.scale(sq, 1.0 / b as f64))
}

fn covariance(g: &mut Graph, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let mu = g.mean_axis(x, 0)?;
    let mu = g.broadcast_to(mu, &shape)?;
    let xc = g.sub(x, mu)?;
    let xt = g.transpose(xc)?;
    let s = g.matmul(xt, xc)?;
    Ok(g.scale(s, 1.0 / (shape[0] - 1) as f64))
}

/// `‖Cov(O_s) − Cov(O_t)‖_F² / 4d²` with unbiased covariances.
pub fn coral_loss(g: &mut Graph, o_s: Var, o_t: Var) -> Result<Var> {
    let (ss, st) = (g.shape(o_s).to_vec(), g.shape(o_t).to_vec());
    if ss.len() != 2 || st.len() != 2 || ss[1] != st[1] {
        return Err(shape_err("coral_loss", g, o_s, o_t));
    }
    if ss[0] < 2 || st[0] < 2 {
        return Err(LossError::Argument("coral needs at least 2 rows per domain".into()));
    }
    let d = ss[1] as f64;
    let cs = covariance(g, o_s)?;
    let ct = covariance(g, o_t)?;
    let diff = g.sub(cs, ct)?;
    let sq = g.squared_norm(diff);
    Ok(g.scale(sq, 1.0 / (4.0 * d * d)))
}

/// Binary cross-entropy of domain logits with source labelled 1 and target 0,
/// averaged over both batches.
pub fn domain_bce(g: &mut Graph, logits_s: Var, logits_t: Var) -> Result<Var> {
    let n = g.value(logits_s).numel() + g.value(logits_t).numel();
    if n == 0 {
        return Err(LossError::Argument("domain_bce of empty batches".into()));
    }
    // −log σ(z) = softplus(−z), −log(1 − σ(z)) = softplus(z)
    let neg = g.scale(logits_s, -1.0);
    let ls = g.softplus(neg);
    let lt = g.softplus(logits_t);
    let ss = g.sum(ls);
    let st = g.sum(lt);
    let total = g.add(ss, st)?;
    Ok(g.scale(total, 1.0 / n as f64))
}

/// Adversarial domain loss on the bottleneck: the classifier sees
/// `C_s`, `C_t` through a gradient-reversal node, so minimizing the result
/// trains the classifier while pushing the extractor toward confusion.
pub fn dann_loss<F>(g: &mut Graph, classifier: F, c_s: Var, c_t: Var, reversal_weight: f64) -> Result<Var>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let rs = g.grad_reverse(c_s, reversal_weight);
    let rt = g.grad_reverse(c_t, reversal_weight);
    let zs = classifier(g, rs)?;
    let zt = classifier(g, rt)?;
    domain_bce(g, zs, zt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_m: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub gamma_noise: f64,
    pub da_start_iteration: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_m: 0.35,
            lambda_r: 0.2,
            lambda_s: 0.35,
            gamma_noise: 0.1,
            da_start_iteration: 200,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_m", self.lambda_m),
            ("lambda_r", self.lambda_r),
            ("lambda_s", self.lambda_s),
            ("gamma_noise", self.gamma_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LossError::Argument(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn gated(&self, iteration: u64) -> bool {
        iteration < self.da_start_iteration
    }
}

/// Terms entering the composite objective; absent terms contribute nothing.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub rul: Var,
    pub mmd: Option<Var>,
    pub recon: Option<(Var, Var)>,
    pub smooth: Option<(Var, Var)>,
}

/// `L_RUL + λ_m·L_MMD + λ_r(L_rec^S + L_rec^T) + λ_s(L_sm^S + L_sm^T)`,
/// or `L_RUL` alone while `iteration < da_start_iteration`.
pub fn composite_loss(g: &mut Graph, parts: &LossParts, w: &LossWeights, iteration: u64) -> Result<Var> {
    w.validate()?;
    if w.gated(iteration) {
        return Ok(parts.rul);
    }
    let mut total = parts.rul;
    let add = |g: &mut Graph, total: &mut Var, v: Var, lambda: f64| -> Result<()> {
        let t = g.scale(v, lambda);
        *total = g.add(*total, t)?;
        Ok(())
    };
    if let Some(m) = parts.mmd {
        add(g, &mut total, m, w.lambda_m)?;
    }
    if let Some((s, t)) = parts.recon {
        add(g, &mut total, s, w.lambda_r)?;
        add(g, &mut total, t, w.lambda_r)?;
    }
    if let Some((s, t)) = parts.smooth {
        add(g, &mut total, s, w.lambda_s)?;
        add(g, &mut total, t, w.lambda_s)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests;
