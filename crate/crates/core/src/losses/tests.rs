use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::grad_check;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::standard_normal(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Direct double-loop evaluation of the biased estimator.
fn naive_mmd2(a: &Tensor, b: &Tensor, sigma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| {
        let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    let (n, m) = (a.shape()[0], b.shape()[0]);
    let mut aa = 0.0;
    for i in 0..n {
        for j in 0..n {
            aa += k(a.row(i), a.row(j));
        }
    }
    let mut bb = 0.0;
    for i in 0..m {
        for j in 0..m {
            bb += k(b.row(i), b.row(j));
        }
    }
    let mut ab = 0.0;
    for i in 0..n {
        for j in 0..m {
            ab += k(a.row(i), b.row(j));
        }
    }
    aa / (n * n) as f64 + bb / (m * m) as f64 - 2.0 * ab / (n * m) as f64
}

fn scalar_of<F: FnOnce(&mut Graph) -> Result<Var>>(f: F) -> f64 {
    let mut g = Graph::new();
    let v = f(&mut g).unwrap();
    g.value(v).item()
}

#[test]
fn rul_mse_cases() {
    let v = scalar_of(|g| {
        let y = g.constant(t(&[2, 1], &[1.0, 0.0]));
        let yh = g.constant(t(&[2, 1], &[0.0, 0.0]));
        rul_mse(g, yh, y)
    });
    assert_eq!(v, 0.5);
    let v = scalar_of(|g| {
        let y = g.constant(t(&[3, 1], &[0.2, 0.3, 0.9]));
        rul_mse(g, y, y)
    });
    assert_eq!(v, 0.0);
    let mut g = Graph::new();
    let e = g.constant(Tensor::zeros(&[0, 1]));
    assert!(matches!(rul_mse(&mut g, e, e), Err(LossError::Argument(_))));
    let a = g.constant(Tensor::zeros(&[2, 1]));
    let b = g.constant(Tensor::zeros(&[3, 1]));
    assert!(rul_mse(&mut g, a, b).is_err());
}

#[test]
fn rul_mse_order_invariant() {
    let y = [0.1, 0.5, 0.9, 0.3];
    let yh = [0.2, 0.1, 0.7, 0.35];
    let fwd = scalar_of(|g| {
        let a = g.constant(t(&[4, 1], &yh));
        let b = g.constant(t(&[4, 1], &y));
        rul_mse(g, a, b)
    });
    let rev = scalar_of(|g| {
        let a = g.constant(t(&[4, 1], &[yh[3], yh[2], yh[1], yh[0]]));
        let b = g.constant(t(&[4, 1], &[y[3], y[2], y[1], y[0]]));
        rul_mse(g, a, b)
    });
    assert!((fwd - rev).abs() < 1e-15);
}

#[test]
fn mmd_hand_case() {
    let v = mmd2_value(&t(&[1, 1], &[0.0]), &t(&[1, 1], &[1.0]), KernelSpec::Fixed { sigma: 1.0 }).unwrap();
    let expected = 2.0 - 2.0 * (-0.5f64).exp();
    assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    assert!((expected - 0.78694).abs() < 1e-5);
}

#[test]
fn mmd_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..50 {
        let n = rng.random_range(1..=64);
        let m = rng.random_range(1..=64);
        let d = rng.random_range(1..=16);
        let sigma = rng.random_range(0.5..4.0);
        let a = random(&[n, d], 1000 + case);
        let b = random(&[m, d], 2000 + case);
        let got = mmd2_value(&a, &b, KernelSpec::Fixed { sigma }).unwrap();
        let want = naive_mmd2(&a, &b, sigma);
        assert!((got - want).abs() < 1e-10, "case {case}: {got} vs {want}");
    }
}

#[test]
fn mmd_median_matches_oracle_with_median_bandwidth() {
    let a = random(&[7, 3], 1);
    let b = random(&[5, 3], 2);
    let mut pooled = a.data().to_vec();
    pooled.extend_from_slice(b.data());
    let pooled = t(&[12, 3], &pooled);
    let mut d2 = Vec::new();
    for i in 0..12 {
        for j in i + 1..12 {
            d2.push(pooled.row(i).iter().zip(pooled.row(j)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>());
        }
    }
    d2.sort_by(f64::total_cmp);
    let med = 0.5 * (d2[32] + d2[33]);
    let got = mmd2_value(&a, &b, KernelSpec::MedianHeuristic).unwrap();
    assert!((got - naive_mmd2(&a, &b, med.sqrt())).abs() < 1e-12);
}

#[test]
fn mmd_identical_samples_vanish() {
    let a = random(&[20, 6], 3);
    for k in [KernelSpec::MedianHeuristic, KernelSpec::Fixed { sigma: 0.7 }] {
        assert!(mmd2_value(&a, &a, k).unwrap().abs() <= 1e-12);
    }
}

#[test]
fn mmd_rejects_bad_input() {
    let a = random(&[3, 2], 1);
    let b = random(&[3, 4], 2);
    assert!(mmd2_value(&a, &b, KernelSpec::MedianHeuristic).is_err());
    for sigma in [0.0, -1.0, f64::NAN] {
        assert!(matches!(
            mmd2_value(&a, &a, KernelSpec::Fixed { sigma }),
            Err(LossError::Argument(_))
        ));
    }
}

#[test]
fn mmd_decreases_along_interpolation() {
    let a = random(&[16, 4], 5);
    let mut b0 = random(&[16, 4], 6);
    b0.data_mut().iter_mut().for_each(|v| *v += 1.5);
    let k = KernelSpec::Fixed { sigma: 1.5 };
    let mut last = f64::INFINITY;
    for step in 0..5 {
        let s = step as f64 / 4.0;
        let data: Vec<f64> = b0.data().iter().zip(a.data()).map(|(b, a)| (1.0 - s) * b + s * a).collect();
        let v = mmd2_value(&a, &t(&[16, 4], &data), k).unwrap();
        assert!(v < last, "step {step}: {v} !< {last}");
        last = v;
    }
    assert!(last.abs() < 1e-12);
}

#[test]
fn mmd_gradient_fixed_bandwidth() {
    let b = random(&[4, 3], 8);
    let err = grad_check(
        |g, a| {
            let bv = g.constant(b.clone());
            Ok(mmd2(g, a, bv, KernelSpec::Fixed { sigma: 1.2 }).map_err(graph_err)?)
        },
        &random(&[5, 3], 9),
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

fn graph_err(e: LossError) -> GraphError {
    match e {
        LossError::Graph(g) => g,
        LossError::Argument(m) => panic!("{m}"),
    }
}

#[test]
fn latent_mmd_symmetry_and_additivity() {
    let (cs, ct, os, ot) = (random(&[6, 4], 1), random(&[6, 4], 2), random(&[6, 3], 3), random(&[6, 3], 4));
    let k = KernelSpec::MedianHeuristic;
    let lm = |a: &Tensor, b: &Tensor, c: &Tensor, d: &Tensor| {
        scalar_of(|g| {
            let (a, b, c, d) = (g.constant(a.clone()), g.constant(b.clone()), g.constant(c.clone()), g.constant(d.clone()));
            latent_mmd(g, a, b, c, d, k)
        })
    };
    let v = lm(&cs, &ct, &os, &ot);
    assert!((v - lm(&ct, &cs, &ot, &os)).abs() < 1e-14);
    let sum = mmd2_value(&cs, &ct, k).unwrap() + mmd2_value(&os, &ot, k).unwrap();
    assert!((v - sum).abs() < 1e-14);
    assert!(lm(&cs, &cs, &os, &os).abs() < 1e-12);
    let mut g = Graph::new();
    let (a, b, c) = (g.constant(cs.clone()), g.constant(os.clone()), g.constant(ot.clone()));
    assert!(latent_mmd(&mut g, a, b, b, c, k).is_err());
}

#[test]
fn recon_loss_cases() {
    let xs = random(&[2, 3, 4], 1);
    let xt = random(&[2, 3, 4], 2);
    let eval = |hs: &Tensor, ht: &Tensor| {
        scalar_of(|g| {
            let (a, b, c, d) = (g.constant(xs.clone()), g.constant(hs.clone()), g.constant(xt.clone()), g.constant(ht.clone()));
            recon_loss(g, a, b, c, d)
        })
    };
    assert_eq!(eval(&xs, &xt), 0.0);
    let hs = random(&[2, 3, 4], 3);
    let src_only = eval(&hs, &xt);
    let direct: f64 = xs.data().iter().zip(hs.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 24.0;
    assert!((src_only - direct).abs() < 1e-14);
    let bump = |k: f64| {
        let mut h = xt.clone();
        h.data_mut()[0] += k;
        h
    };
    let one = eval(&hs, &bump(1.0));
    let two = eval(&hs, &bump(2.0));
    assert!((one - src_only - 1.0 / 24.0).abs() < 1e-14);
    assert!((two - src_only - 4.0 / 24.0).abs() < 1e-14);
}

#[test]
fn smooth_loss_zero_cases() {
    let c = random(&[4, 3], 1);
    let delta = random(&[4, 3], 2);
    let w = random(&[3, 1], 3);
    let affine = |g: &mut Graph, x: Var| -> Result<Var> {
        let wv = g.constant(w.clone());
        Ok(g.matmul(x, wv)?)
    };
    let v = scalar_of(|g| {
        let cv = g.leaf(c.clone());
        smooth_loss(g, affine, cv, &delta, 0.0)
    });
    assert_eq!(v, 0.0);
    let constant = |g: &mut Graph, _x: Var| -> Result<Var> { Ok(g.constant(Tensor::full(&[4, 1], 0.3))) };
    let v = scalar_of(|g| {
        let cv = g.leaf(c.clone());
        smooth_loss(g, constant, cv, &delta, 1.0)
    });
    assert_eq!(v, 0.0);
    let mut g = Graph::new();
    let cv = g.leaf(c.clone());
    assert!(smooth_loss(&mut g, affine, cv, &delta, -0.1).is_err());
    assert!(smooth_loss(&mut g, affine, cv, &random(&[4, 2], 1), 0.1).is_err());
}

#[test]
fn smooth_loss_affine_monte_carlo() {
    // E‖γ δ W‖² = γ² ‖W‖_F² for one sample and a single-output map
    let w = random(&[5, 1], 11);
    let gamma = 0.3;
    let closed = gamma * gamma * w.data().iter().map(|v| v * v).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws = 10_000;
    let c = random(&[1, 5], 13);
    let mut acc = 0.0;
    for _ in 0..draws {
        let delta = Tensor::standard_normal(&[1, 5], &mut rng);
        acc += scalar_of(|g| {
            let cv = g.constant(c.clone());
            let f = |g: &mut Graph, x: Var| -> Result<Var> {
                let wv = g.constant(w.clone());
                Ok(g.matmul(x, wv)?)
            };
            smooth_loss(g, f, cv, &delta, gamma)
        });
    }
    let estimate = acc / draws as f64;
    assert!((estimate - closed).abs() / closed < 0.05, "{estimate} vs {closed}");
}

#[test]
fn smooth_loss_gradient() {
    let delta = random(&[3, 4], 2);
    let w = random(&[4, 2], 3);
    let err = grad_check(
        |g, c| {
            let f = |g: &mut Graph, x: Var| -> Result<Var> {
                let wv = g.constant(w.clone());
                let z = g.matmul(x, wv)?;
                Ok(g.tanh(z))
            };
            smooth_loss(g, f, c, &delta, 0.5).map_err(graph_err)
        },
        &random(&[3, 4], 1),
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

fn coral_value(a: &Tensor, b: &Tensor) -> f64 {
    scalar_of(|g| {
        let (a, b) = (g.constant(a.clone()), g.constant(b.clone()));
        coral_loss(g, a, b)
    })
}

#[test]
fn coral_cases() {
    let o = random(&[6, 3], 1);
    assert_eq!(coral_value(&o, &o), 0.0);
    let mut rows: Vec<f64> = Vec::new();
    for i in [3usize, 1, 5, 0, 2, 4] {
        rows.extend_from_slice(o.row(i));
    }
    assert!(coral_value(&o, &t(&[6, 3], &rows)).abs() < 1e-14);
    // unit variance against a constant column: (1 − 0)² / 4
    let s = t(&[2, 1], &[1.0 - 0.5f64.sqrt(), 1.0 + 0.5f64.sqrt()]);
    let z = t(&[2, 1], &[3.0, 3.0]);
    assert!((coral_value(&s, &z) - 0.25).abs() < 1e-12);
    let mut g = Graph::new();
    let (a, b) = (g.constant(random(&[1, 3], 1)), g.constant(o.clone()));
    assert!(matches!(coral_loss(&mut g, a, b), Err(LossError::Argument(_))));
}

#[test]
fn coral_rotation_invariant() {
    let (s, tt) = (random(&[8, 2], 1), random(&[9, 2], 2));
    let th: f64 = 0.7;
    let rot = |x: &Tensor| {
        let n = x.shape()[0];
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let r = x.row(i);
            out.push(th.cos() * r[0] - th.sin() * r[1]);
            out.push(th.sin() * r[0] + th.cos() * r[1]);
        }
        t(&[n, 2], &out)
    };
    assert!((coral_value(&s, &tt) - coral_value(&rot(&s), &rot(&tt))).abs() < 1e-8);
}

#[test]
fn coral_gradient() {
    let other = random(&[5, 3], 4);
    let err = grad_check(
        |g, x| {
            let o = g.constant(other.clone());
            coral_loss(g, x, o).map_err(graph_err)
        },
        &random(&[4, 3], 3),
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn dann_half_probability_is_ln2() {
    let zero = |g: &mut Graph, x: Var| -> Result<Var> {
        let n = g.shape(x)[0];
        let s = g.scale(x, 0.0);
        let s = g.sum_axis(s, 1)?;
        Ok(g.reshape(s, &[n, 1])?)
    };
    let v = scalar_of(|g| {
        let (a, b) = (g.leaf(random(&[3, 4], 1)), g.leaf(random(&[5, 4], 2)));
        dann_loss(g, zero, a, b, 0.2)
    });
    assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn dann_reverses_extractor_gradient() {
    let w = random(&[4, 1], 3);
    let xs = random(&[3, 4], 1);
    let xt = random(&[3, 4], 2);
    let grads = |rev: Option<f64>| {
        let mut g = Graph::new();
        let (a, b) = (g.leaf(xs.clone()), g.leaf(xt.clone()));
        let clf = |g: &mut Graph, x: Var| -> Result<Var> {
            let wv = g.constant(w.clone());
            Ok(g.matmul(x, wv)?)
        };
        let loss = match rev {
            Some(r) => dann_loss(&mut g, clf, a, b, r).unwrap(),
            None => {
                let (zs, zt) = (clf(&mut g, a).unwrap(), clf(&mut g, b).unwrap());
                domain_bce(&mut g, zs, zt).unwrap()
            }
        };
        g.backward(loss).unwrap();
        (g.grad_or_zeros(a), g.grad_or_zeros(b))
    };
    let (ps, pt) = grads(None);
    let (rs, rt) = grads(Some(0.2));
    for (plain, rev) in [(ps, rs), (pt, rt)] {
        for (p, r) in plain.data().iter().zip(rev.data()) {
            assert!((r + 0.2 * p).abs() < 1e-15);
        }
    }
}

#[test]
fn dann_separable_clusters() {
    // a classifier trained on two separated clusters drives the loss toward
    // zero; the reversed extractor gradient then moves the clusters together
    let xs = t(&[4, 1], &[2.0, 2.2, 1.8, 2.1]);
    let xt = t(&[4, 1], &[-2.0, -2.1, -1.9, -2.2]);
    let mut w = 0.0;
    let mut bias = 0.0;
    for _ in 0..500 {
        let mut g = Graph::new();
        let (wv, bv) = (g.leaf(Tensor::full(&[1, 1], w)), g.leaf(Tensor::full(&[1, 1], bias)));
        let (a, b) = (g.constant(xs.clone()), g.constant(xt.clone()));
        let clf = |g: &mut Graph, x: Var| -> Result<Var> {
            let z = g.matmul(x, wv)?;
            let shape = g.shape(z).to_vec();
            let bb = g.broadcast_to(bv, &shape)?;
            Ok(g.add(z, bb)?)
        };
        let loss = dann_loss(&mut g, clf, a, b, 0.2).unwrap();
        g.backward(loss).unwrap();
        w -= 0.5 * g.grad_or_zeros(wv).item();
        bias -= 0.5 * g.grad_or_zeros(bv).item();
    }
    let mut g = Graph::new();
    let (a, b) = (g.leaf(xs.clone()), g.leaf(xt.clone()));
    let clf = |g: &mut Graph, x: Var| -> Result<Var> {
        let z = g.scale(x, w);
        Ok(g.add_scalar(z, bias))
    };
    let loss = dann_loss(&mut g, clf, a, b, 0.2).unwrap();
    assert!(g.value(loss).item() < 0.01);
    g.backward(loss).unwrap();
    // descending the reversed gradient moves source down and target up
    assert!(g.grad_or_zeros(a).data().iter().all(|&d| d > 0.0));
    assert!(g.grad_or_zeros(b).data().iter().all(|&d| d < 0.0));
}

fn unit_parts(g: &mut Graph) -> LossParts {
    let one = |g: &mut Graph| g.constant(Tensor::scalar(1.0));
    LossParts {
        rul: one(g),
        mmd: Some(one(g)),
        recon: Some((one(g), one(g))),
        smooth: Some((one(g), one(g))),
    }
}

#[test]
fn composite_gating_and_weights() {
    let w = LossWeights::default();
    let mut g = Graph::new();
    let parts = unit_parts(&mut g);
    let v0 = composite_loss(&mut g, &parts, &w, 0).unwrap();
    assert_eq!(v0, parts.rul);
    let v199 = composite_loss(&mut g, &parts, &w, 199).unwrap();
    assert_eq!(v199, parts.rul);
    let v = composite_loss(&mut g, &parts, &w, 200).unwrap();
    assert!((g.value(v).item() - 2.45).abs() < 1e-15);
    let zero = LossWeights {
        lambda_m: 0.0,
        lambda_r: 0.0,
        lambda_s: 0.0,
        ..w
    };
    let v = composite_loss(&mut g, &parts, &zero, 200).unwrap();
    assert_eq!(g.value(v).item(), 1.0);
    let bad = LossWeights { lambda_r: -0.1, ..w };
    assert!(matches!(composite_loss(&mut g, &parts, &bad, 300), Err(LossError::Argument(_))));
}

#[test]
fn loss_weights_serde_defaults() {
    let w: LossWeights = serde_json::from_str(r#"{"lambda_m": 0.2}"#).unwrap();
    assert_eq!(w.lambda_m, 0.2);
    assert_eq!(w.lambda_r, 0.2);
    assert_eq!(w.da_start_iteration, 200);
    let k: KernelSpec = serde_json::from_str(r#"{"bandwidth": "fixed", "sigma": 2.0}"#).unwrap();
    assert_eq!(k, KernelSpec::Fixed { sigma: 2.0 });
    let k: KernelSpec = serde_json::from_str(r#"{"bandwidth": "median_heuristic"}"#).unwrap();
    assert_eq!(k, KernelSpec::MedianHeuristic);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mmd_nonnegative_symmetric(n in 1usize..12, m in 1usize..12, d in 1usize..5, seed in 0u64..1000) {
        let a = random(&[n, d], seed);
        let b = random(&[m, d], seed + 5000);
        let k = KernelSpec::MedianHeuristic;
        let ab = mmd2_value(&a, &b, k).unwrap();
        let ba = mmd2_value(&b, &a, k).unwrap();
        prop_assert!(ab >= -1e-12);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(mmd2_value(&a, &a, k).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mmd_median_row_permutation_invariant(n in 2usize..10, m in 2usize..10, seed in 0u64..1000, shift in 1usize..9) {
        let a = random(&[n, 3], seed);
        let b = random(&[m, 3], seed + 1);
        let rotate = |x: &Tensor| {
            let r = x.shape()[0];
            let mut out = Vec::new();
            for i in 0..r {
                out.extend_from_slice(x.row((i + shift) % r));
            }
            t(&[r, 3], &out)
        };
        let k = KernelSpec::MedianHeuristic;
        let base = mmd2_value(&a, &b, k).unwrap();
        prop_assert!((base - mmd2_value(&rotate(&a), &rotate(&b), k).unwrap()).abs() < 1e-12);
    }
}
