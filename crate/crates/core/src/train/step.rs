use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batching::{make_batches, steps_per_epoch, BatchPair};
use super::checkpoint::Checkpoint;
use super::optim::{lr_schedule, Adam};
use super::{RunConfig, TrainError, Variant};
use crate::autodiff::{Graph, Tensor, Var};
use crate::data::DomainDataset;
use crate::losses::{
    composite_loss, coral_loss, dann_loss, latent_mmd, mse, rul_mse, smooth_loss, LossError, LossParts,
    LossWeights,
};
use crate::model::{stack_labels, stack_windows, Bound, LamaNet, ModelError};

const INIT_STREAM: u64 = 0x494e_4954;
const NOISE_STREAM: u64 = 0x4e4f_4953;

pub const LOG_HEADER: &str =
    "iteration,epoch,lr,total,rul,mmd,recon_s,recon_t,smooth_s,smooth_t,coral,dann,target_pred_mean";

/// Per-term values of one optimization step; terms that were not built
/// (gated or not part of the variant) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLosses {
    pub iteration: u64,
    pub epoch: u64,
    pub lr: f64,
    pub total: f64,
    pub rul: f64,
    pub mmd: Option<f64>,
    pub recon_s: Option<f64>,
    pub recon_t: Option<f64>,
    pub smooth_s: Option<f64>,
    pub smooth_t: Option<f64>,
    pub coral: Option<f64>,
    pub dann: Option<f64>,
    /// Mean target-stream prediction (diagnostic only, never in the loss
    /// unless a DA term uses the target stream).
    pub target_pred_mean: f64,
}

impl StepLosses {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            self.lr,
            self.total,
            self.rul,
            opt(self.mmd),
            opt(self.recon_s),
            opt(self.recon_t),
            opt(self.smooth_s),
            opt(self.smooth_t),
            opt(self.coral),
            opt(self.dann),
            self.target_pred_mean
        )
    }

    fn dump(&self) -> String {
        let mut s = format!("total={} rul={}", self.total, self.rul);
        for (name, v) in [
            ("mmd", self.mmd),
            ("recon_s", self.recon_s),
            ("recon_t", self.recon_t),
            ("smooth_s", self.smooth_s),
            ("smooth_t", self.smooth_t),
            ("coral", self.coral),
            ("dann", self.dann),
        ] {
            if let Some(v) = v {
                let _ = write!(s, " {name}={v}");
            }
        }
        s
    }
}

fn model_to_loss(e: ModelError) -> LossError {
    match e {
        ModelError::Graph(g) => LossError::Graph(g),
        other => LossError::Argument(other.to_string()),
    }
}

struct Stream {
    c: Var,
    o: Var,
    y: Var,
    x_hat: Option<Var>,
}

fn stream(net: &LamaNet, g: &mut Graph, p: &Bound, x: Var, with_recon: bool) -> Result<Stream, ModelError> {
    let e = net.encode(g, p, x)?;
    let c = net.squeeze(g, p, e)?;
    let e_tilde = net.expand(g, p, c)?;
    let (o, y) = net.decode_predict(g, p, e_tilde)?;
    let x_hat = if with_recon {
        let first = net.first_step(g, x)?;
        Some(net.reconstruct(g, p, c, first)?)
    } else {
        None
    };
    Ok(Stream { c, o, y, x_hat })
}

/// One run's mutable state: parameters, optimizer moments and the step
/// counter. Batch order and noise are derived from `(seed, epoch)` and
/// `(seed, iteration)`, so the counter is all that is needed to resume.
pub struct Trainer<'a> {
    cfg: RunConfig,
    seed: u64,
    source: &'a DomainDataset,
    target: &'a DomainDataset,
    pub net: LamaNet,
    pub adam: Adam,
    iteration: u64,
    steps_per_epoch: u64,
    weights: LossWeights,
    plan: Option<(u64, Vec<BatchPair>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: &RunConfig,
        seed: u64,
        source: &'a DomainDataset,
        target: &'a DomainDataset,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        for ds in [source, target] {
            if ds.n_features() != cfg.model.n_features || ds.window != cfg.model.window {
                return Err(TrainError::Argument(format!(
                    "dataset {} has f={} K={}, model expects f={} K={}",
                    ds.subset,
                    ds.n_features(),
                    ds.window,
                    cfg.model.n_features,
                    cfg.model.window
                )));
            }
            if ds.train_windows.is_empty() {
                return Err(TrainError::Argument(format!("dataset {} has no training windows", ds.subset)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM);
        let net = LamaNet::new(&cfg.model, &mut rng)?;
        let adam = Adam::new(cfg.adam, &net.params);
        let spe = steps_per_epoch(source.train_windows.len(), target.train_windows.len(), cfg.batch) as u64;
        Ok(Self {
            weights: cfg.variant.weights(cfg),
            cfg: cfg.clone(),
            seed,
            source,
            target,
            net,
            adam,
            iteration: 0,
            steps_per_epoch: spe,
            plan: None,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.steps_per_epoch
    }

    pub fn total_iterations(&self) -> u64 {
        self.cfg
            .max_iterations
            .unwrap_or(self.cfg.epochs as u64 * self.steps_per_epoch)
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.total_iterations()
    }

    fn batch_for(&mut self, iteration: u64) -> Result<BatchPair, TrainError> {
        let epoch = iteration / self.steps_per_epoch;
        if self.plan.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let plan = make_batches(
                self.source.train_windows.len(),
                self.target.train_windows.len(),
                self.cfg.batch,
                self.seed,
                epoch,
            )?;
            self.plan = Some((epoch, plan));
        }
        let (_, plan) = self.plan.as_ref().expect("plan set above");
        Ok(plan[(iteration % self.steps_per_epoch) as usize].clone())
    }

    /// Smoothness perturbations for this step, `(δ_s, δ_t)`.
    fn noise(&self, half: usize) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ NOISE_STREAM);
        rng.set_stream(self.iteration);
        let shape = [half, self.cfg.model.bottleneck];
        let ds = Tensor::standard_normal(&shape, &mut rng);
        let dt = Tensor::standard_normal(&shape, &mut rng);
        (ds, dt)
    }

    /// Builds the objective for the current iteration and backpropagates it,
    /// without touching parameters. Gradients follow parameter order.
    pub fn gradients(&mut self) -> Result<(StepLosses, Vec<Tensor>), TrainError> {
        let it = self.iteration;
        let pair = self.batch_for(it)?;
        let src = pair.source.iter().map(|&i| &self.source.train_windows[i]);
        let xs = stack_windows(src.clone());
        let ys = stack_labels(src).ok_or_else(|| TrainError::Argument("source windows must be labeled".into()))?;
        let xt = stack_windows(pair.target.iter().map(|&i| &self.target.train_windows[i]));
        let lr = lr_schedule(it, self.cfg.lr, self.cfg.decay_gamma, self.cfg.decay_start, self.steps_per_epoch)?;

        let (mut g, bound, (total, record)) = self.objective(&xs, &ys, &xt, lr)?;
        if !record.total.is_finite() {
            return Err(TrainError::NonFinite {
                iteration: it,
                dump: record.dump(),
            });
        }
        g.backward(total).map_err(LossError::from)?;
        let grads = bound.grads(&g);
        if let Some(bad) = grads.iter().position(|t| !t.is_finite()) {
            let name = self.net.params.iter().nth(bad).map(|(n, _)| n.to_string()).unwrap_or_default();
            return Err(TrainError::NonFinite {
                iteration: it,
                dump: format!("{} (gradient of {name})", record.dump()),
            });
        }
        Ok((record, grads))
    }

    /// One optimization step: objective, backward pass and Adam update.
    pub fn step(&mut self) -> Result<StepLosses, TrainError> {
        let (record, grads) = self.gradients()?;
        self.adam.step(&mut self.net.params, &grads, record.lr);
        self.iteration += 1;
        Ok(record)
    }

    #[allow(clippy::type_complexity)]
    fn objective(
        &self,
        xs: &Tensor,
        ys: &Tensor,
        xt: &Tensor,
        lr: f64,
    ) -> Result<(Graph, Bound, (Var, StepLosses)), TrainError> {
        let it = self.iteration;
        let w = self.weights;
        let net = &self.net;
        let variant = self.cfg.variant;
        let gated = w.gated(it);
        let lama_family = matches!(
            variant,
            Variant::Lamanet | Variant::LamaMmd | Variant::LamaMmdAe | Variant::Mmd
        );
        let with_recon = !gated && lama_family && w.lambda_r > 0.0;

        let mut g = Graph::new();
        let p = net.params.bind(&mut g);
        let xs_v = g.constant(xs.clone());
        let ys_v = g.constant(ys.clone());
        let xt_v = g.constant(xt.clone());
        let s = stream(net, &mut g, &p, xs_v, with_recon)?;
        let t = stream(net, &mut g, &p, xt_v, with_recon)?;
        let rul = rul_mse(&mut g, s.y, ys_v)?;
        let value = |g: &Graph, v: Var| g.value(v).item();
        let t_pred = g.value(t.y).data();
        let mut rec = StepLosses {
            iteration: it,
            epoch: it / self.steps_per_epoch,
            lr,
            total: 0.0,
            rul: value(&g, rul),
            mmd: None,
            recon_s: None,
            recon_t: None,
            smooth_s: None,
            smooth_t: None,
            coral: None,
            dann: None,
            target_pred_mean: t_pred.iter().sum::<f64>() / t_pred.len().max(1) as f64,
        };

        let total = if gated {
            rul
        } else {
            match variant {
                Variant::NoDa => rul,
                Variant::Coral => {
                    let c = coral_loss(&mut g, s.o, t.o)?;
                    rec.coral = Some(value(&g, c));
                    let scaled = g.scale(c, self.cfg.baseline_lambda);
                    g.add(rul, scaled).map_err(LossError::from)?
                }
                Variant::Dann => {
                    let disc = |g: &mut Graph, c: Var| net.discriminate(g, &p, c).map_err(model_to_loss);
                    let d = dann_loss(&mut g, disc, s.c, t.c, self.cfg.dann_weight)?;
                    rec.dann = Some(value(&g, d));
                    g.add(rul, d).map_err(LossError::from)?
                }
                Variant::Lamanet | Variant::LamaMmd | Variant::LamaMmdAe | Variant::Mmd => {
                    let mut parts = LossParts {
                        rul,
                        mmd: None,
                        recon: None,
                        smooth: None,
                    };
                    if w.lambda_m > 0.0 {
                        let m = latent_mmd(&mut g, s.c, t.c, s.o, t.o, self.cfg.kernel)?;
                        rec.mmd = Some(value(&g, m));
                        parts.mmd = Some(m);
                    }
                    if let (Some(hs), Some(ht)) = (s.x_hat, t.x_hat) {
                        let rs = mse(&mut g, hs, xs_v)?;
                        let rt = mse(&mut g, ht, xt_v)?;
                        rec.recon_s = Some(value(&g, rs));
                        rec.recon_t = Some(value(&g, rt));
                        parts.recon = Some((rs, rt));
                    }
                    if w.lambda_s > 0.0 {
                        let (ds, dt) = self.noise(xs.shape()[0]);
                        let f = |g: &mut Graph, c: Var| net.predict_from_bottleneck(g, &p, c).map_err(model_to_loss);
                        let ss = smooth_loss(&mut g, f, s.c, &ds, w.gamma_noise)?;
                        let f = |g: &mut Graph, c: Var| net.predict_from_bottleneck(g, &p, c).map_err(model_to_loss);
                        let st = smooth_loss(&mut g, f, t.c, &dt, w.gamma_noise)?;
                        rec.smooth_s = Some(value(&g, ss));
                        rec.smooth_t = Some(value(&g, st));
                        parts.smooth = Some((ss, st));
                    }
                    composite_loss(&mut g, &parts, &w, it)?
                }
            }
        };
        rec.total = value(&g, total);
        Ok((g, p, (total, rec)))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: self.cfg.run_hash(self.seed),
            seed: self.seed,
            iteration: self.iteration,
            params: self.net.params.clone(),
            adam: self.adam.clone(),
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        self.checkpoint().write(path)
    }

    /// Restores parameters, optimizer state and the step counter; fails if
    /// the checkpoint was written under a different config or seed.
    pub fn restore(&mut self, ck: Checkpoint) -> Result<(), TrainError> {
        let expected = self.cfg.run_hash(self.seed);
        if ck.config_hash != expected || ck.seed != self.seed {
            return Err(TrainError::ConfigMismatch {
                expected,
                found: ck.config_hash,
            });
        }
        let same_layout = ck.params.len() == self.net.params.len()
            && ck
                .params
                .iter()
                .zip(self.net.params.iter())
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape());
        if !same_layout || ck.adam.m.len() != ck.params.len() || ck.adam.v.len() != ck.params.len() {
            return Err(TrainError::Argument("checkpoint parameter layout differs from the model".into()));
        }
        self.net.params = ck.params;
        self.adam = ck.adam;
        self.iteration = ck.iteration;
        Ok(())
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<(), TrainError> {
        self.restore(Checkpoint::read(path)?)
    }

    /// Steps until the iteration budget is spent, calling `on_step` after each.
    pub fn run<F: FnMut(&StepLosses) -> Result<(), TrainError>>(&mut self, mut on_step: F) -> Result<(), TrainError> {
        while !self.is_done() {
            let rec = self.step()?;
            on_step(&rec)?;
        }
        Ok(())
    }
}
