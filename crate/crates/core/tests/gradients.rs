//! Finite-difference checks of every differentiable primitive on random
//! shapes and values.

use lamanet::autodiff::{grad_check, Graph, GraphError, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Contracts `y` with a fixed random tensor so every output coordinate
/// reaches the scalar with a distinct weight.
fn project(g: &mut Graph, y: Var) -> Result<Var, GraphError> {
    let shape = g.shape(y).to_vec();
    let r = Tensor::uniform(&shape, 1.0, &mut rng(0xfeed));
    let r = g.constant(r);
    let m = g.mul(y, r)?;
    Ok(g.sum(m))
}

fn input(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut rng(seed))
}

/// Values bounded away from zero, for ops with a kink or pole there.
fn away_from_zero(shape: &[usize], seed: u64, lo: f64) -> Tensor {
    let mut t = input(shape, seed);
    for v in t.data_mut() {
        *v = v.signum() * (lo + v.abs());
    }
    t
}

fn check<F>(f: F, x: &Tensor) -> f64
where
    F: Fn(&mut Graph, Var) -> Result<Var, GraphError>,
{
    grad_check(f, x, EPS).expect("graph builds")
}

fn ok(err: f64, what: &str) -> Result<(), TestCaseError> {
    prop_assert!(err < TOL, "{} relative error {}", what, err);
    Ok(())
}

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn elementwise_unary(shape in dims(), seed in any::<u64>()) {
        let x = input(&shape, seed);
        let pos = {
            let mut t = x.clone();
            t.data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.5);
            t
        };
        let kinked = away_from_zero(&shape, seed, 0.05);
        ok(check(|g, x| { let y = g.exp(x); project(g, y) }, &x), "exp")?;
        ok(check(|g, x| { let y = g.log(x); project(g, y) }, &pos), "log")?;
        ok(check(|g, x| { let y = g.sqrt(x); project(g, y) }, &pos), "sqrt")?;
        ok(check(|g, x| { let y = g.square(x); project(g, y) }, &x), "square")?;
        ok(check(|g, x| { let y = g.sigmoid(x); project(g, y) }, &x), "sigmoid")?;
        ok(check(|g, x| { let y = g.tanh(x); project(g, y) }, &x), "tanh")?;
        ok(check(|g, x| { let y = g.relu(x); project(g, y) }, &kinked), "relu")?;
        ok(check(|g, x| { let y = g.softplus(x); project(g, y) }, &x), "softplus")?;
        ok(check(|g, x| { let y = g.scale(x, -1.7); project(g, y) }, &x), "scale")?;
        ok(check(|g, x| { let y = g.add_scalar(x, 0.3); project(g, y) }, &x), "add_scalar")?;
    }

    #[test]
    fn elementwise_binary(shape in dims(), seed in any::<u64>()) {
        let x = input(&shape, seed);
        let other = input(&shape, seed ^ 1);
        for op in 0..3 {
            let f = |g: &mut Graph, x: Var| {
                let c = g.constant(other.clone());
                let y = match op {
                    0 => g.add(x, c)?,
                    1 => g.sub(c, x)?,
                    _ => g.mul(x, c)?,
                };
                project(g, y)
            };
            ok(check(f, &x), &format!("binary op {op}"))?;
        }
        // both operands are the same leaf
        ok(check(|g, x| { let y = g.mul(x, x)?; project(g, y) }, &x), "mul")?;
    }

    #[test]
    fn reductions(shape in dims(), seed in any::<u64>(), axis_pick in any::<usize>()) {
        let x = input(&shape, seed);
        let axis = axis_pick % shape.len();
        ok(check(|g, x| Ok(g.sum(x)), &x), "sum")?;
        ok(check(|g, x| { let y = g.square(x); Ok(g.mean(y)) }, &x), "mean")?;
        ok(check(|g, x| { let y = g.sum_axis(x, axis)?; project(g, y) }, &x), "sum_axis")?;
        ok(check(|g, x| { let y = g.mean_axis(x, axis)?; project(g, y) }, &x), "mean_axis")?;
        ok(check(|g, x| { let y = g.softmax(x, axis)?; project(g, y) }, &x), "softmax")?;
        ok(check(|g, x| Ok(g.squared_norm(x)), &x), "squared_norm")?;
    }

    #[test]
    fn shape_ops(shape in dims(), seed in any::<u64>(), axis_pick in any::<usize>()) {
        let x = input(&shape, seed);
        let axis = axis_pick % shape.len();
        let n: usize = shape.iter().product();
        ok(check(|g, x| { let y = g.reshape(x, &[n])?; project(g, y) }, &x), "reshape")?;
        if shape.len() >= 2 {
            ok(check(|g, x| { let y = g.transpose(x)?; project(g, y) }, &x), "transpose")?;
        }
        let ext = shape[axis];
        let (lo, hi) = (ext / 2, ext);
        ok(check(|g, x| { let y = g.slice(x, axis, lo, hi)?; project(g, y) }, &x), "slice")?;
        let other = input(&shape, seed ^ 2);
        let f = |g: &mut Graph, x: Var| {
            let c = g.constant(other.clone());
            let y = g.concat(&[x, c, x], axis)?;
            project(g, y)
        };
        ok(check(f, &x), "concat")?;
        let mut target = vec![3];
        target.extend(shape.iter().map(|&d| if d == 1 { 2 } else { d }));
        ok(check(|g, x| { let y = g.broadcast_to(x, &target)?; project(g, y) }, &x), "broadcast_to")?;
    }

    #[test]
    fn matmul_both_sides(m in 1usize..5, k in 1usize..5, n in 1usize..5, b in 1usize..3, seed in any::<u64>()) {
        let a = input(&[m, k], seed);
        let w = input(&[k, n], seed ^ 3);
        let left = |g: &mut Graph, x: Var| { let c = g.constant(w.clone()); let y = g.matmul(x, c)?; project(g, y) };
        let right = |g: &mut Graph, x: Var| { let c = g.constant(a.clone()); let y = g.matmul(c, x)?; project(g, y) };
        ok(check(left, &a), "matmul lhs")?;
        ok(check(right, &w), "matmul rhs")?;

        let ab = input(&[b, m, k], seed ^ 4);
        let wb = input(&[b, k, n], seed ^ 5);
        let batched = |g: &mut Graph, x: Var| { let c = g.constant(wb.clone()); let y = g.matmul(x, c)?; project(g, y) };
        ok(check(batched, &ab), "batched matmul")?;
    }

    #[test]
    fn pairwise_distances(n in 1usize..6, m in 1usize..6, d in 1usize..5, seed in any::<u64>()) {
        let a = input(&[n, d], seed);
        let b = input(&[m, d], seed ^ 6);
        let f = |g: &mut Graph, x: Var| { let c = g.constant(b.clone()); let y = g.pairwise_sq_dist(x, c)?; project(g, y) };
        ok(check(f, &a), "pairwise_sq_dist")?;
        let self_dist = |g: &mut Graph, x: Var| { let y = g.pairwise_sq_dist(x, x)?; project(g, y) };
        ok(check(self_dist, &a), "pairwise_sq_dist self")?;
    }

    #[test]
    fn reversal_is_identity_forward_and_negated_backward(shape in dims(), seed in any::<u64>(), w in 0.0f64..2.0) {
        let x = input(&shape, seed);
        // forward is the identity; the gradient is the plain one times −w
        let mut g = Graph::new();
        let leaf = g.leaf(x.clone());
        let y = g.grad_reverse(leaf, w);
        prop_assert_eq!(g.value(y), &x);
        let out = project(&mut g, y).unwrap();
        g.backward(out).unwrap();
        let reversed = g.grad_or_zeros(leaf);

        let mut h = Graph::new();
        let leaf2 = h.leaf(x.clone());
        let out2 = project(&mut h, leaf2).unwrap();
        h.backward(out2).unwrap();
        let plain = h.grad_or_zeros(leaf2);
        for (r, p) in reversed.data().iter().zip(plain.data()) {
            prop_assert!((r + w * p).abs() < 1e-14);
        }
    }
}
