//! Acceptance gate. Prints one `PASS`, `FAIL` or `SKIP` line per criterion
//! and exits non-zero if any criterion fails.
//!
//! Pass substrings to run a subset, e.g. `cargo test --test acceptance -- c6`.
//! Real-data criteria read C-MAPSS from `LAMANET_DATA_DIR` and are skipped
//! when it is unset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use lamanet::autodiff::{grad_check, Graph, GraphError, Tensor, Var};
use lamanet::data::{
    fit_normalization, load_subset, make_windows, DataConfig, DomainDataset, FeatureSelection, SyntheticDomain,
};
use lamanet::eval::{evaluate_target, labeled_rmse, mean_sd, rmse, score, ScoreConvention};
use lamanet::losses::{mmd2_value, KernelSpec};
use lamanet::model::{LamaNet, ModelConfig};
use lamanet::train::{run_experiment, RunArtifacts, RunConfig, StepLosses, Trainer, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 123074, 2457];

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Status {
    if ok {
        Status::Pass(detail)
    } else {
        Status::Fail(detail)
    }
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("LAMANET_DATA_DIR").map(PathBuf::from)
}

fn toy_config(variant: Variant) -> RunConfig {
    let mut cfg = RunConfig::toy();
    cfg.source = "SYN_S".into();
    cfg.target = "SYN_T".into();
    cfg.variant = variant;
    cfg
}

fn synthetic_pair(data: &DataConfig) -> (DomainDataset, DomainDataset) {
    let s = SyntheticDomain::source().generate("SYN_S");
    let t = SyntheticDomain::target().generate("SYN_T");
    (
        DomainDataset::build(&s, data).unwrap(),
        DomainDataset::build(&t, data).unwrap().into_target(),
    )
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

// ---------------------------------------------------------------- criterion 1

fn primitive_worst() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let other = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let w = Tensor::uniform(&[4, 2], 1.0, &mut rng);
    let weights = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let mut pos = x.clone();
    pos.data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.5);
    let mut kinked = x.clone();
    kinked.data_mut().iter_mut().for_each(|v| *v = v.signum() * (v.abs() + 0.05));

    let proj = |g: &mut Graph, y: Var| -> Result<Var, GraphError> {
        let shape = g.shape(y).to_vec();
        let r = Tensor::uniform(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let r = g.constant(r);
        let m = g.mul(y, r)?;
        Ok(g.sum(m))
    };
    type Op<'a> = Box<dyn Fn(&mut Graph, Var) -> Result<Var, GraphError> + 'a>;
    let ops: Vec<(Op, &Tensor)> = vec![
        (Box::new(|g, x| { let c = g.constant(other.clone()); let y = g.add(x, c)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let c = g.constant(other.clone()); let y = g.sub(c, x)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let c = g.constant(weights.clone()); let y = g.mul(x, c)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let c = g.constant(w.clone()); let y = g.matmul(x, c)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.transpose(x)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.reshape(x, &[2, 6])?; proj(g, y) }), &x),
        (Box::new(|g, x| { let c = g.constant(other.clone()); let y = g.concat(&[x, c], 1)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.slice(x, 1, 1, 3)?; proj(g, y) }), &x),
        (Box::new(|g, x| Ok(g.sum(x))), &x),
        (Box::new(|g, x| { let y = g.square(x); Ok(g.mean(y)) }), &x),
        (Box::new(|g, x| { let y = g.sum_axis(x, 0)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.mean_axis(x, 1)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.exp(x); proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.log(x); proj(g, y) }), &pos),
        (Box::new(|g, x| { let y = g.sqrt(x); proj(g, y) }), &pos),
        (Box::new(|g, x| { let y = g.square(x); proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.sigmoid(x); proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.tanh(x); proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.relu(x); proj(g, y) }), &kinked),
        (Box::new(|g, x| { let y = g.softplus(x); proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.softmax(x, 1)?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.broadcast_to(x, &[2, 3, 4])?; proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.scale(x, 0.7); proj(g, y) }), &x),
        (Box::new(|g, x| { let y = g.add_scalar(x, 0.7); proj(g, y) }), &x),
        (Box::new(|g, x| Ok(g.squared_norm(x))), &x),
        (Box::new(|g, x| { let c = g.constant(other.clone()); let y = g.pairwise_sq_dist(x, c)?; proj(g, y) }), &x),
    ];
    ops.iter()
        .map(|(f, x)| grad_check(f, x, 1e-6).unwrap())
        .fold(0.0, f64::max)
}

/// Central differences of the full training objective with respect to every
/// parameter tensor (a strided subset of coordinates per tensor).
fn composite_worst() -> (f64, usize) {
    let data = DataConfig {
        window: 8,
        features: FeatureSelection::new(vec![5, 6, 9, 14]).unwrap(),
        ..DataConfig::default()
    };
    let s = SyntheticDomain::source().with_units(4, 2).generate("GC_S");
    let t = SyntheticDomain::target().with_units(4, 2).generate("GC_T");
    let source = DomainDataset::build(&s, &data).unwrap();
    let target = DomainDataset::build(&t, &data).unwrap().into_target();
    let mut model = ModelConfig::toy(4, 8);
    model.fusion_width = 8;
    let mut cfg = RunConfig {
        source: "GC_S".into(),
        target: "GC_T".into(),
        variant: Variant::Lamanet,
        data,
        model,
        batch: 4,
        kernel: KernelSpec::Fixed { sigma: 1.0 },
        ..RunConfig::default()
    };
    // open the gate at step 0 so every term of the composite is on the graph
    cfg.weights.da_start_iteration = 0;

    let mut tr = Trainer::new(&cfg, 3, &source, &target).unwrap();
    let (rec, grads) = tr.gradients().unwrap();
    assert!(rec.mmd.is_some() && rec.recon_s.is_some() && rec.smooth_s.is_some());
    let ids: Vec<_> = tr.net.params.ids().collect();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probed = 0;
    for (k, &id) in ids.iter().enumerate() {
        let n = tr.net.params.get(id).numel();
        let stride = (n / 6).max(1);
        for i in (0..n).step_by(stride) {
            let orig = tr.net.params.get(id).data()[i];
            tr.net.params.get_mut(id).data_mut()[i] = orig + eps;
            let plus = tr.gradients().unwrap().0.total;
            tr.net.params.get_mut(id).data_mut()[i] = orig - eps;
            let minus = tr.gradients().unwrap().0.total;
            tr.net.params.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(rel_err(grads[k].data()[i], numeric));
            probed += 1;
        }
    }
    (worst, probed)
}

fn c1() -> Status {
    let prim = primitive_worst();
    let (comp, probed) = composite_worst();
    verdict(
        prim < 1e-6 && comp < 1e-3,
        format!("primitives max rel err {prim:.2e} (< 1e-6); composite max rel err {comp:.2e} over {probed} coordinates (< 1e-3)"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn oracle_mmd2(a: &[Vec<f64>], b: &[Vec<f64>], sigma_sq: Option<f64>) -> f64 {
    let d2 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let s2 = sigma_sq.unwrap_or_else(|| {
        let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
        let mut ds = Vec::new();
        for i in 0..pooled.len() {
            for j in i + 1..pooled.len() {
                ds.push(d2(pooled[i], pooled[j]));
            }
        }
        ds.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let med = match ds.len() {
            0 => 0.0,
            n if n % 2 == 1 => ds[n / 2],
            n => 0.5 * (ds[n / 2 - 1] + ds[n / 2]),
        };
        if med > 0.0 {
            med
        } else {
            1.0
        }
    });
    let k = |x: &[f64], y: &[f64]| (-d2(x, y) / (2.0 * s2)).exp();
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut xx = 0.0;
    for x in a {
        for y in a {
            xx += k(x, y);
        }
    }
    let mut yy = 0.0;
    for x in b {
        for y in b {
            yy += k(x, y);
        }
    }
    let mut xy = 0.0;
    for x in a {
        for y in b {
            xy += k(x, y);
        }
    }
    xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}

fn c2() -> Status {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut self_worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(1..=64);
        let m = rng.random_range(1..=64);
        let d = rng.random_range(1..=16);
        let a = Tensor::standard_normal(&[n, d], &mut rng);
        let mut b = Tensor::standard_normal(&[m, d], &mut rng);
        b.data_mut().iter_mut().for_each(|v| *v = 1.3 * *v + 0.4);
        let (ra, rb) = (rows(&a), rows(&b));
        let sigma = 0.5 + case as f64 * 0.05;
        for (kernel, s2) in [
            (KernelSpec::MedianHeuristic, None),
            (KernelSpec::Fixed { sigma }, Some(sigma * sigma)),
        ] {
            let got = mmd2_value(&a, &b, kernel).unwrap();
            worst = worst.max((got - oracle_mmd2(&ra, &rb, s2)).abs());
            self_worst = self_worst.max(mmd2_value(&a, &a, kernel).unwrap().abs());
        }
    }
    let hand = mmd2_value(
        &Tensor::new(vec![1, 1], vec![0.0]).unwrap(),
        &Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
        KernelSpec::Fixed { sigma: 1.0 },
    )
    .unwrap();
    let hand_err = (hand - (2.0 - 2.0 * (-0.5f64).exp())).abs();
    verdict(
        worst < 1e-10 && self_worst <= 1e-9 && hand_err < 1e-12,
        format!("oracle max abs diff {worst:.2e} (< 1e-10); mmd2(A,A) max {self_worst:.2e} (≤ 1e-9); hand case err {hand_err:.2e} (< 1e-12)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn c3() -> Status {
    let e = std::f64::consts::E;
    let conv = ScoreConvention::Printed;
    let s0 = score(&[50.0], &[50.0], conv).unwrap().value;
    let late = score(&[63.0], &[50.0], conv).unwrap().value;
    let early = score(&[40.0], &[50.0], conv).unwrap().value;
    let score_ok = s0 == 0.0 && (late - (e - 1.0)).abs() < 1e-12 && (early - (e - 1.0)).abs() < 1e-12;
    let rmse_ok = rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() == 0.0
        && rmse(&[3.0], &[0.0]).unwrap() == 3.0
        && rmse(&[0.0, 0.0, 0.0, 0.0], &[2.0, -2.0, 2.0, -2.0]).unwrap() == 2.0
        && rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() == 12.5f64.sqrt();
    verdict(
        score_ok && rmse_ok,
        format!(
            "score(0)={s0}, score(+13)-(e-1)={:.1e}, score(-10)-(e-1)={:.1e}; rmse hand cases {}",
            late - (e - 1.0),
            early - (e - 1.0),
            if rmse_ok { "exact" } else { "wrong" }
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn c4() -> Status {
    let k = 40;
    let raw = SyntheticDomain::source().with_units(20, 10).generate("SYN");
    let stats = fit_normalization(&raw.train, &FeatureSelection::default(), "SYN").unwrap();
    let mut windows_ok = true;
    let mut labels_ok = true;
    let mut round_trip: f64 = 0.0;
    for traj in &raw.train {
        let ws = make_windows(traj, k, &stats, 125.0).unwrap();
        let t_len = traj.len();
        windows_ok &= ws.len() == t_len - k + 1;
        for w in &ws {
            let t = w.end_cycle as usize;
            labels_ok &= w.rul_scaled == Some(((t_len - t) as f64).min(125.0) / 125.0);
        }
        for rec in traj.cycles() {
            for (j, z) in stats.normalize_record(rec).into_iter().enumerate() {
                let orig = rec.column(j);
                round_trip = round_trip.max((stats.denormalize(z, j) - orig).abs() / orig.abs().max(1.0));
            }
        }
    }
    let synthetic = format!(
        "synthetic: window counts {}, labels {}, normalization round trip {round_trip:.1e}",
        if windows_ok { "T-K+1" } else { "wrong" },
        if labels_ok { "exact" } else { "wrong" }
    );
    let synth_ok = windows_ok && labels_ok && round_trip <= 1e-12;
    let Some(dir) = data_dir() else {
        return if synth_ok {
            Status::Skip(format!("{synthetic}; real trajectory counts need LAMANET_DATA_DIR"))
        } else {
            Status::Fail(synthetic)
        };
    };
    let mut counts = Vec::new();
    let mut counts_ok = true;
    for (id, train, test) in [("FD001", 100, 100), ("FD002", 260, 259)] {
        match load_subset(&dir, id) {
            Ok(raw) => {
                counts_ok &= raw.train.len() == train && raw.test.len() == test;
                counts.push(format!("{id} {}/{}", raw.train.len(), raw.test.len()));
            }
            Err(e) => {
                counts_ok = false;
                counts.push(format!("{id}: {e}"));
            }
        }
    }
    verdict(synth_ok && counts_ok, format!("{synthetic}; {}", counts.join(", ")))
}

// ---------------------------------------------------------------- criterion 5

fn c5() -> Status {
    let cfg = toy_config(Variant::Lamanet);
    let (source, target) = synthetic_pair(&cfg.data);
    let da_start = cfg.weights.da_start_iteration;
    let mut tr = Trainer::new(&cfg, 1, &source, &target).unwrap();
    let da_only: Vec<usize> = tr
        .net
        .params
        .iter()
        .enumerate()
        .filter(|(_, (name, _))| name.starts_with("recon.") || name.starts_with("disc."))
        .map(|(k, _)| k)
        .collect();
    let mut gated_ok = true;
    for _ in 0..da_start {
        let (rec, grads) = tr.gradients().unwrap();
        gated_ok &= da_only.iter().all(|&k| grads[k].data().iter().all(|&v| v == 0.0));
        gated_ok &= rec.mmd.is_none() && rec.recon_s.is_none() && rec.smooth_s.is_none();
        tr.step().unwrap();
    }
    let (rec, grads) = tr.gradients().unwrap();
    let opens = rec.mmd.is_some() && da_only.iter().any(|&k| grads[k].data().iter().any(|&v| v != 0.0));

    let mut dann_cfg = cfg.clone();
    dann_cfg.variant = Variant::Dann;
    dann_cfg.max_iterations = Some(da_start);
    let mut dann = Trainer::new(&dann_cfg, 1, &source, &target).unwrap();
    let disc = |net: &LamaNet| -> Vec<Tensor> {
        net.params
            .iter()
            .filter(|(name, _)| name.starts_with("disc."))
            .map(|(_, t)| t.clone())
            .collect()
    };
    let before = disc(&dann.net);
    dann.run(|_| Ok(())).unwrap();
    let after = disc(&dann.net);
    let dann_ok = before == after;

    let losses = |n: usize| -> Vec<StepLosses> {
        let mut t = Trainer::new(&cfg, 1, &source, &target).unwrap();
        (0..n).map(|_| t.step().unwrap()).collect()
    };
    let bits = |r: &StepLosses| {
        [Some(r.total), Some(r.rul), r.mmd, r.recon_s, r.recon_t, r.smooth_s, r.smooth_t]
            .map(|v| v.map(f64::to_bits))
            .to_vec()
    };
    let (a, b) = (losses(10), losses(10));
    let toy_det = a.iter().zip(&b).all(|(x, y)| bits(x) == bits(y));

    let full_cfg = RunConfig {
        source: "SYN_S".into(),
        target: "SYN_T".into(),
        ..RunConfig::default()
    };
    let (fs, ft) = synthetic_pair(&full_cfg.data);
    let full = |n: usize| -> Vec<StepLosses> {
        let mut t = Trainer::new(&full_cfg, 1, &fs, &ft).unwrap();
        (0..n).map(|_| t.step().unwrap()).collect()
    };
    let (fa, fb) = (full(10), full(10));
    let full_det = fa.iter().zip(&fb).all(|(x, y)| bits(x) == bits(y));

    verdict(
        gated_ok && opens && dann_ok && toy_det && full_det,
        format!(
            "DA-only grads exactly 0 for {da_start} steps: {gated_ok}; nonzero at step {da_start}: {opens}; \
             discriminator untouched under dann: {dann_ok}; 10-step bitwise determinism toy/default: {toy_det}/{full_det}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

const SMOKE_ITERS: u64 = 500;

/// Evenly spaced rows, at most `cap` of them.
fn subsample(t: &Tensor, cap: usize) -> Tensor {
    let n = t.shape()[0];
    let d = t.shape()[1];
    let take = n.min(cap);
    let mut data = Vec::with_capacity(take * d);
    for i in 0..take {
        data.extend_from_slice(t.row(i * n / take));
    }
    Tensor::new(vec![take, d], data).unwrap()
}

fn bottleneck_mmd(net: &LamaNet, source: &DomainDataset, target: &DomainDataset) -> f64 {
    let cs = net.infer_windows(&source.train_windows, 512).unwrap().c;
    let ct = net.infer_windows(&target.train_windows, 512).unwrap().c;
    mmd2_value(&subsample(&cs, 600), &subsample(&ct, 600), KernelSpec::MedianHeuristic).unwrap()
}

fn c6() -> Status {
    let seed = 1;
    let mut results = Vec::new();
    for variant in [Variant::Lamanet, Variant::NoDa] {
        let mut cfg = toy_config(variant);
        cfg.max_iterations = Some(SMOKE_ITERS);
        let (source, target) = synthetic_pair(&cfg.data);
        let mut tr = Trainer::new(&cfg, seed, &source, &target).unwrap();
        let init = labeled_rmse(&tr.net, &source.train_windows, source.rc).unwrap();
        tr.run(|_| Ok(())).unwrap();
        let fin = labeled_rmse(&tr.net, &source.train_windows, source.rc).unwrap();
        let mmd = bottleneck_mmd(&tr.net, &source, &target);
        results.push((variant, init, fin, mmd));
    }
    let (_, init, fin, mmd_lama) = results[0];
    let mmd_none = results[1].3;
    let drop = 1.0 - fin / init;
    verdict(
        drop >= 0.5 && mmd_lama < mmd_none,
        format!(
            "lamanet source train RMSE {init:.2} -> {fin:.2} ({:.0}% drop, need ≥ 50%); \
             final mmd2(C_s,C_t) lamanet {mmd_lama:.4e} vs no_da {mmd_none:.4e}",
            drop * 100.0
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn c7() -> Status {
    let mut means = Vec::new();
    let mut raw = Vec::new();
    for variant in [Variant::LamaMmd, Variant::LamaMmdAe] {
        let mut cfg = toy_config(variant);
        cfg.max_iterations = Some(SMOKE_ITERS);
        cfg.seeds = SEEDS.to_vec();
        let (source, target) = synthetic_pair(&cfg.data);
        let report = run_experiment(&cfg, &source, &target, &RunArtifacts::default()).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        let rmses: Vec<f64> = report.seeds.iter().map(|s| s.rmse).collect();
        let (m, _) = mean_sd(&rmses);
        means.push(m);
        raw.push(format!(
            "{} [{}] mean {m:.3}",
            variant.as_str(),
            rmses.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ));
    }
    verdict(
        means[1] <= means[0],
        format!("target RMSE over seeds {SEEDS:?}: {}; need MMD+AE ≤ MMD", raw.join("; ")),
    )
}

// ---------------------------------------------------------------- criterion 8

fn c8() -> Status {
    let Some(dir) = data_dir() else {
        return Status::Skip("FD002→FD001 directional check needs LAMANET_DATA_DIR".into());
    };
    let mut base = RunConfig::default();
    let model = ModelConfig::toy(base.data.features.len(), base.data.window);
    base.model = model;
    base.epochs = 10;
    base.seeds = SEEDS.to_vec();
    let source = DomainDataset::build(&load_subset(&dir, "FD002").unwrap(), &base.data).unwrap();
    let target = DomainDataset::build(&load_subset(&dir, "FD001").unwrap(), &base.data)
        .unwrap()
        .into_target();
    let mut per_variant = Vec::new();
    for variant in [Variant::Lamanet, Variant::NoDa] {
        let cfg = RunConfig { variant, ..base.clone() };
        let report = run_experiment(&cfg, &source, &target, &RunArtifacts::default()).unwrap();
        let mut by_seed: Vec<(u64, f64)> = report.seeds.iter().map(|s| (s.seed, s.rmse)).collect();
        by_seed.sort_by_key(|p| p.0);
        per_variant.push(by_seed);
    }
    let wins = per_variant[0]
        .iter()
        .zip(&per_variant[1])
        .filter(|(l, n)| l.0 == n.0 && l.1 < n.1)
        .count();
    verdict(
        wins >= 2,
        format!("lamanet {:?} vs no_da {:?}: lamanet better in {wins}/3 seeds", per_variant[0], per_variant[1]),
    )
}

// ---------------------------------------------------------------- criterion 9

fn terrible_on(target: &DomainDataset) -> (String, bool) {
    let truth = target.capped_truth();
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, offset) in [("+20000 cycles", 20000.0), ("-20000 cycles", -20000.0)] {
        let pred: Vec<f64> = truth.iter().map(|t| t + offset).collect();
        match score(&pred, &truth, ScoreConvention::Printed) {
            Ok(s) => {
                // e^{20000/13} is far beyond f64, so the sum must be flagged, not returned as garbage
                ok &= s.overflow && s.value == f64::INFINITY && s.log10.is_finite();
                notes.push(format!("{label}: overflow={} log10={:.1}", s.overflow, s.log10));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{label}: error {e}"));
            }
        }
    }
    // a network whose head saturates predicts R_c for every engine
    let mut net = LamaNet::new(&ModelConfig::toy(target.n_features(), target.window), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = net.params.find("head.b").expect("head bias");
    net.params.get_mut(b).data_mut().fill(40.0);
    match evaluate_target(&net, target, ScoreConvention::Printed) {
        Ok(ev) => {
            ok &= ev.score.value.is_finite() || ev.score.overflow;
            notes.push(format!("saturated net: rmse {:.1}, score {:.3e}", ev.rmse, ev.score.value));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("saturated net: error {e}"));
        }
    }
    (notes.join(", "), ok)
}

fn c9() -> Status {
    let data = DataConfig::default();
    let syn = DomainDataset::build(&SyntheticDomain::target().generate("SYN_T"), &data).unwrap();
    let (syn_notes, syn_ok) = terrible_on(&syn);
    let Some(dir) = data_dir() else {
        return if syn_ok {
            Status::Skip(format!("synthetic {syn_notes}; FD001 test split needs LAMANET_DATA_DIR"))
        } else {
            Status::Fail(format!("synthetic {syn_notes}"))
        };
    };
    let fd001 = DomainDataset::build(&load_subset(&dir, "FD001").unwrap(), &data).unwrap();
    let (notes, ok) = terrible_on(&fd001);
    verdict(syn_ok && ok, format!("synthetic {syn_notes}; FD001 {notes}"))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Status); 9] = [
        ("c1", "gradient fidelity", c1),
        ("c2", "MMD oracle equivalence", c2),
        ("c3", "metric closed forms", c3),
        ("c4", "data pipeline", c4),
        ("c5", "gating and determinism", c5),
        ("c6", "synthetic DA smoke test", c6),
        ("c7", "ablation direction", c7),
        ("c8", "C-MAPSS directional check", c8),
        ("c9", "score overflow handling", c9),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let status = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Status::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match status {
            Status::Pass(d) => ("PASS", d),
            Status::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Status::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {id} {name} ({secs:.1}s): {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
