//! Finite-difference checks of every primitive.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dsp::{StftConfig, StftPlan, Window};
use crate::error::Result;

const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero (kinks of abs / relu / sqrt / log domains).
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    rand_tensor(shape, seed).map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 })
}

/// Reduce to a scalar with fixed random weights so every output element matters.
fn weighted(tape: &Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = tape.constant(rand_tensor(&tape.shape(y), seed));
    Ok(tape.sum(tape.mul(y, w)?))
}

fn check<F>(name: &str, inputs: &[Tensor<f64>], f: F)
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let report = grad_check(f, inputs, GradCheckOptions::default()).unwrap();
    assert!(report.max_rel_error < TOL, "{name}: {report:?}");
    assert!(report.checked > 0, "{name}");
}

#[test]
fn unary_primitives() {
    let x = away_from_zero(&[3, 4], 1);
    let pos = rand_tensor(&[3, 4], 2).map(|v| v.abs() + 0.3);
    type UnaryFn = fn(&Tape<f64>, Var) -> Var;
    let general: [(&str, UnaryFn); 10] = [
        ("neg", |t, v| t.neg(v)),
        ("exp", |t, v| t.exp(v)),
        ("abs", |t, v| t.abs(v)),
        ("cos", |t, v| t.cos(v)),
        ("sin", |t, v| t.sin(v)),
        ("tanh", |t, v| t.tanh(v)),
        ("scale", |t, v| t.scale(v, -2.5)),
        ("add_scalar", |t, v| t.add_scalar(v, 0.7)),
        ("leaky_relu", |t, v| t.leaky_relu(v, 0.1)),
        ("gelu", |t, v| t.gelu(v)),
    ];
    for (name, op) in general {
        check(name, &[x.clone()], |t, v| weighted(t, op(t, v[0]), 9));
    }
    let positive: [(&str, UnaryFn); 3] = [
        ("log", |t, v| t.log(v)),
        ("sqrt", |t, v| t.sqrt(v)),
        ("powf", |t, v| t.powf(v, 1.7)),
    ];
    for (name, op) in positive {
        check(name, &[pos.clone()], |t, v| weighted(t, op(t, v[0]), 9));
    }
    check("clamp_min", &[x.clone()], |t, v| weighted(t, t.clamp_min(v[0], 0.05), 9));
}

#[test]
fn anti_wrap_away_from_kinks() {
    // avoid multiples of π where |principal(x)| has kinks
    let x = Tensor::new(&[6], vec![0.4, -1.1, 2.5, -2.9, 4.0, 7.5]).unwrap();
    check("anti_wrap", &[x], |t, v| weighted(t, t.anti_wrap(v[0]), 3));
}

#[test]
fn binary_primitives_with_broadcasting() {
    let a = rand_tensor(&[2, 3, 4], 3);
    let b = away_from_zero(&[3, 1], 4);
    type BinFn = fn(&Tape<f64>, Var, Var) -> Result<Var>;
    let ops: [(&str, BinFn); 4] = [
        ("add", |t, x, y| t.add(x, y)),
        ("sub", |t, x, y| t.sub(x, y)),
        ("mul", |t, x, y| t.mul(x, y)),
        ("div", |t, x, y| t.div(x, y)),
    ];
    for (name, op) in ops {
        check(name, &[a.clone(), b.clone()], |t, v| weighted(t, op(t, v[0], v[1])?, 5));
        check(name, &[b.clone(), a.clone().map(|v| v + 3.0)], |t, v| weighted(t, op(t, v[0], v[1])?, 6));
    }
}

#[test]
fn reductions_and_layout() {
    let x = rand_tensor(&[2, 3, 4], 7);
    let y = rand_tensor(&[2, 2, 4], 8);
    check("sum", &[x.clone()], |t, v| {
        let s = t.sum(v[0]);
        t.square(s)
    });
    check("mean", &[x.clone()], |t, v| {
        let s = t.mean(v[0]);
        t.square(s)
    });
    check("sum_axis", &[x.clone()], |t, v| weighted(t, t.sum_axis(v[0], 1)?, 1));
    check("mean_axis", &[x.clone()], |t, v| weighted(t, t.mean_axis(v[0], 2)?, 1));
    check("reshape", &[x.clone()], |t, v| weighted(t, t.reshape(v[0], &[6, 4])?, 1));
    check("permute", &[x.clone()], |t, v| weighted(t, t.permute(v[0], &[2, 0, 1])?, 1));
    check("transpose", &[x.clone()], |t, v| weighted(t, t.transpose(v[0])?, 1));
    check("slice", &[x.clone()], |t, v| weighted(t, t.slice(v[0], 2, 1, 2)?, 1));
    check("pad", &[x.clone()], |t, v| weighted(t, t.pad(v[0], 1, 2, 1)?, 1));
    check("concat", &[x, y], |t, v| weighted(t, t.concat(&[v[0], v[1]], 1)?, 1));
}

#[test]
fn matmul_and_convolutions() {
    check("matmul", &[rand_tensor(&[3, 4], 1), rand_tensor(&[4, 2], 2)], |t, v| {
        weighted(t, t.matmul(v[0], v[1])?, 3)
    });
    let specs = [
        (Conv1dSpec::same(3), 3, 4),
        (
            Conv1dSpec {
                stride: 2,
                padding: 2,
                dilation: 2,
                groups: 2,
            },
            3,
            2,
        ),
        (
            Conv1dSpec {
                groups: 4,
                ..Conv1dSpec::same(7)
            },
            7,
            1,
        ),
    ];
    for (spec, k, cin_g) in specs {
        let inputs = [rand_tensor(&[2, 4, 9], 4), rand_tensor(&[4, cin_g, k], 5), rand_tensor(&[4], 6)];
        check("conv1d", &inputs, |t, v| weighted(t, t.conv1d(v[0], v[1], Some(v[2]), spec)?, 7));
    }
    let spec2 = Conv2dSpec {
        stride: (3, 1),
        padding: (2, 0),
    };
    let inputs = [rand_tensor(&[2, 2, 9, 3], 8), rand_tensor(&[3, 2, 5, 1], 9), rand_tensor(&[3], 10)];
    check("conv2d", &inputs, |t, v| weighted(t, t.conv2d(v[0], v[1], Some(v[2]), spec2)?, 11));
    let spec3 = Conv2dSpec {
        stride: (1, 2),
        padding: (1, 4),
    };
    let inputs = [rand_tensor(&[1, 2, 4, 12], 12), rand_tensor(&[2, 2, 3, 9], 13), rand_tensor(&[2], 14)];
    check("conv2d_freq", &inputs, |t, v| weighted(t, t.conv2d(v[0], v[1], Some(v[2]), spec3)?, 15));
}

#[test]
fn spectral_primitives() {
    for window in [Window::Hann, Window::Rectangular] {
        let cfg = StftConfig {
            window,
            ..StftConfig::new(16, 4, 16)
        };
        let plan = Arc::new(StftPlan::<f64>::new(&cfg).unwrap());
        let x = rand_tensor(&[2, 37], 20);
        check("stft", &[x], |t, v| weighted(t, t.stft(v[0], &plan)?, 21));
        let frames = 6;
        let re = rand_tensor(&[1, 9, frames], 22);
        let im = rand_tensor(&[1, 9, frames], 23);
        check("istft", &[re, im], |t, v| weighted(t, t.istft(v[0], v[1], &plan)?, 24));
    }
    let r = away_from_zero(&[10], 25);
    let i = away_from_zero(&[10], 26);
    check("phi", &[r.clone(), i.clone()], |t, v| weighted(t, t.phi(v[0], v[1])?, 27));
    check("complex_abs", &[r, i], |t, v| weighted(t, t.complex_abs(v[0], v[1])?, 28));
}

#[test]
fn zero_gradient_conventions() {
    let tape = Tape::<f64>::new();
    let z = tape.leaf(Tensor::zeros(&[1]));
    let z2 = tape.leaf(Tensor::zeros(&[1]));
    let a = tape.complex_abs(z, z2).unwrap();
    let p = tape.phi(z, z2).unwrap();
    let s = tape.sqrt(z);
    let loss = tape.sum(tape.add(tape.add(a, p).unwrap(), s).unwrap());
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(z).unwrap().data(), &[0.0]);
    assert_eq!(g.get(z2).unwrap().data(), &[0.0]);
}

#[test]
fn backward_rejects_non_scalar_and_detach_stops_flow() {
    let tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(&[3], 2.0));
    assert!(tape.backward(x).is_err());
    let d = tape.detach(x);
    let y = tape.mul(x, d).unwrap();
    let g = tape.backward(tape.sum(y)).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn no_grad_tape_records_constants() {
    let tape = Tape::<f32>::no_grad();
    let x = tape.leaf(Tensor::full(&[2], 1.0));
    assert!(!tape.requires_grad(x));
    let y = tape.sum(tape.exp(x));
    let g = tape.backward(y).unwrap();
    assert!(g.get(x).is_none());
}
