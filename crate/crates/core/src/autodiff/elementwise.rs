//! Element-wise primitives with NumPy-style broadcasting for binary ops.

use crate::autodiff::tape::{GradSink, Op, Tape, Var};
use crate::autodiff::tensor::{strides, Tensor};
use crate::dsp::phase::principal;
use crate::error::{Error, Result};
use crate::float::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum UnaryKind<T> {
    Neg,
    Exp,
    Log,
    Abs,
    Cos,
    Sin,
    Sqrt,
    Tanh,
    Powf(T),
    Scale(T),
    AddScalar(T),
    LeakyRelu(T),
    Gelu,
    ClampMin(T),
    AntiWrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_B: f64 = 0.044_715;

fn gelu<T: Float>(x: T) -> T {
    let (a, b) = (T::lit(GELU_A), T::lit(GELU_B));
    T::lit(0.5) * x * (T::one() + (a * (x + b * x * x * x)).tanh())
}

fn gelu_grad<T: Float>(x: T) -> T {
    let (a, b) = (T::lit(GELU_A), T::lit(GELU_B));
    let th = (a * (x + b * x * x * x)).tanh();
    T::lit(0.5) * (T::one() + th) + T::lit(0.5) * x * (T::one() - th * th) * a * (T::one() + T::lit(3.0) * b * x * x)
}

fn sign<T: Float>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<T: Float> UnaryKind<T> {
    fn apply(self, x: T) -> T {
        match self {
            UnaryKind::Neg => -x,
            UnaryKind::Exp => x.exp(),
            UnaryKind::Log => x.ln(),
            UnaryKind::Abs => x.abs(),
            UnaryKind::Cos => x.cos(),
            UnaryKind::Sin => x.sin(),
            UnaryKind::Sqrt => x.sqrt(),
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Powf(p) => x.powf(p),
            UnaryKind::Scale(c) => x * c,
            UnaryKind::AddScalar(c) => x + c,
            UnaryKind::LeakyRelu(s) => {
                if x > T::zero() {
                    x
                } else {
                    x * s
                }
            }
            UnaryKind::Gelu => gelu(x),
            UnaryKind::ClampMin(c) => x.max(c),
            UnaryKind::AntiWrap => principal(x).abs(),
        }
    }

    /// d(out)/d(x) given input `x` and output `y`.
    fn derivative(self, x: T, y: T) -> T {
        match self {
            UnaryKind::Neg => -T::one(),
            UnaryKind::Exp => y,
            UnaryKind::Log => T::one() / x,
            UnaryKind::Abs => sign(x),
            UnaryKind::Cos => -x.sin(),
            UnaryKind::Sin => x.cos(),
            UnaryKind::Sqrt => {
                if y > T::zero() {
                    T::lit(0.5) / y
                } else {
                    T::zero()
                }
            }
            UnaryKind::Tanh => T::one() - y * y,
            UnaryKind::Powf(p) => p * x.powf(p - T::one()),
            UnaryKind::Scale(c) => c,
            UnaryKind::AddScalar(_) => T::one(),
            UnaryKind::LeakyRelu(s) => {
                if x > T::zero() {
                    T::one()
                } else {
                    s
                }
            }
            UnaryKind::Gelu => gelu_grad(x),
            UnaryKind::ClampMin(c) => {
                if x > c {
                    T::one()
                } else {
                    T::zero()
                }
            }
            UnaryKind::AntiWrap => sign(principal(x)),
        }
    }
}

/// Output shape of broadcasting `a` against `b`.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::shape(op, a, b)),
        };
    }
    Ok(out)
}

/// Per-output-dimension strides into an input of `shape` broadcast to `out`.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Visit every output position with the matching offsets into `a` and `b`.
fn for_each_pair(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut o = 0;
    while o < n {
        for j in 0..inner {
            f(o + j, oa + j * ia, ob + j * ib);
        }
        o += inner;
        // increment the outer multi-index
        let mut d = rank - 1;
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * idx[d];
            ob -= sb[d] * idx[d];
            idx[d] = 0;
        }
    }
}

/// Sum `g` (shaped `out`) down to `shape` along broadcast dimensions.
pub(crate) fn reduce_to<T: Float>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if g.shape() == shape {
        return g.clone();
    }
    let s = broadcast_strides(shape, g.shape());
    let zeros = vec![0; g.rank()];
    let mut acc = vec![T::zero(); shape.iter().product()];
    let gd = g.data();
    for_each_pair(g.shape(), &s, &zeros, |o, i, _| acc[i] += gd[o]);
    Tensor::new(shape, acc).expect("reduce_to shape")
}

fn binary_forward<T: Float>(kind: BinaryKind, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let f = |x: T, y: T| match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / y,
    };
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape(), data);
    }
    let name = match kind {
        BinaryKind::Add => "add",
        BinaryKind::Sub => "sub",
        BinaryKind::Mul => "mul",
        BinaryKind::Div => "div",
    };
    let out = broadcast_shape(name, a.shape(), b.shape())?;
    let (sa, sb) = (broadcast_strides(a.shape(), &out), broadcast_strides(b.shape(), &out));
    let mut data = vec![T::zero(); out.iter().product()];
    let (ad, bd) = (a.data(), b.data());
    for_each_pair(&out, &sa, &sb, |o, i, j| data[o] = f(ad[i], bd[j]));
    Tensor::new(&out, data)
}

/// `g ⊙ other` broadcast to the output shape (other is broadcast).
fn mul_broadcast<T: Float>(g: &Tensor<T>, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let out = g.shape();
    let so = broadcast_strides(other.shape(), out);
    let unit = strides(out);
    let od = other.data();
    let gd = g.data();
    let mut data = vec![T::zero(); g.numel()];
    for_each_pair(out, &unit, &so, |o, _, j| data[o] = f(gd[o], od[j]));
    Tensor::new(out, data).expect("mul_broadcast shape")
}

/// Evaluate `f(g, a, b)` at every output position with broadcast `a` and `b`.
fn zip3<T: Float>(g: &Tensor<T>, a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T, T) -> T) -> Tensor<T> {
    let out = g.shape();
    let (sa, sb) = (broadcast_strides(a.shape(), out), broadcast_strides(b.shape(), out));
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    let mut data = vec![T::zero(); g.numel()];
    for_each_pair(out, &sa, &sb, |o, i, j| data[o] = f(gd[o], ad[i], bd[j]));
    Tensor::new(out, data).expect("zip3 shape")
}

pub(crate) fn binary_backward<T: Float>(kind: BinaryKind, a: Var, b: Var, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    let (av, bv) = (sink.value(a).clone(), sink.value(b).clone());
    if sink.wants(a) {
        let ga = match kind {
            BinaryKind::Add | BinaryKind::Sub => g.clone(),
            BinaryKind::Mul => mul_broadcast(g, &bv, |g, y| g * y),
            BinaryKind::Div => mul_broadcast(g, &bv, |g, y| g / y),
        };
        sink.add(a, reduce_to(&ga, av.shape()));
    }
    if sink.wants(b) {
        let gb = match kind {
            BinaryKind::Add => g.clone(),
            BinaryKind::Sub => g.map(|v| -v),
            BinaryKind::Mul => mul_broadcast(g, &av, |g, x| g * x),
            BinaryKind::Div => zip3(g, &av, &bv, |g, x, y| -g * x / (y * y)),
        };
        sink.add(b, reduce_to(&gb, bv.shape()));
    }
}

pub(crate) fn unary_backward<T: Float>(kind: UnaryKind<T>, x: Var, out: &Tensor<T>, g: &Tensor<T>, sink: &mut GradSink<'_, T>) {
    if !sink.wants(x) {
        return;
    }
    let xv = sink.value(x);
    let data = xv
        .data()
        .iter()
        .zip(out.data())
        .zip(g.data())
        .map(|((&x, &y), &g)| g * kind.derivative(x, y))
        .collect();
    let grad = Tensor::new(xv.shape(), data).expect("unary grad shape");
    sink.add(x, grad);
}

impl<T: Float> Tape<T> {
    pub(crate) fn unary(&self, kind: UnaryKind<T>, x: Var) -> Var {
        let value = self.with_value(x, |t| t.map(|v| kind.apply(v)));
        self.push(value, Op::Unary { kind, x }, self.any_grad(&[x]))
    }

    fn binary(&self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let value = self.with_value(a, |ta| self.with_value(b, |tb| binary_forward(kind, ta, tb)))?;
        Ok(self.push(value, Op::Binary { kind, a, b }, self.any_grad(&[a, b])))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn neg(&self, x: Var) -> Var {
        self.unary(UnaryKind::Neg, x)
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn log(&self, x: Var) -> Var {
        self.unary(UnaryKind::Log, x)
    }

    pub fn abs(&self, x: Var) -> Var {
        self.unary(UnaryKind::Abs, x)
    }

    pub fn cos(&self, x: Var) -> Var {
        self.unary(UnaryKind::Cos, x)
    }

    pub fn sin(&self, x: Var) -> Var {
        self.unary(UnaryKind::Sin, x)
    }

    pub fn sqrt(&self, x: Var) -> Var {
        self.unary(UnaryKind::Sqrt, x)
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn powf(&self, x: Var, p: T) -> Var {
        self.unary(UnaryKind::Powf(p), x)
    }

    pub fn square(&self, x: Var) -> Result<Var> {
        self.mul(x, x)
    }

    pub fn scale(&self, x: Var, c: T) -> Var {
        self.unary(UnaryKind::Scale(c), x)
    }

    pub fn add_scalar(&self, x: Var, c: T) -> Var {
        self.unary(UnaryKind::AddScalar(c), x)
    }

    pub fn leaky_relu(&self, x: Var, slope: T) -> Var {
        self.unary(UnaryKind::LeakyRelu(slope), x)
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary(UnaryKind::LeakyRelu(T::zero()), x)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&self, x: Var) -> Var {
        self.unary(UnaryKind::Gelu, x)
    }

    pub fn clamp_min(&self, x: Var, min: T) -> Var {
        self.unary(UnaryKind::ClampMin(min), x)
    }

    /// `|x - 2π·round(x / 2π)|`.
    pub fn anti_wrap(&self, x: Var) -> Var {
        self.unary(UnaryKind::AntiWrap, x)
    }
}
