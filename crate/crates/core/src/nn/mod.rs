//! Layers built on the autodiff tape: convolutions, channel layer norm, GRN
//! and the ConvNeXt v2 block.
//!
//! Activations are channel-first, `[batch, channels, frames]`. Every layer
//! registers its parameters in a [`ParamStore`] under a dotted name and binds
//! them to the tape on each forward pass.

use rand::Rng;

use crate::autodiff::{Conv1dSpec, Conv2dSpec, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::float::Float;

/// Epsilon of [`LayerNorm`].
pub const LAYER_NORM_EPS: f64 = 1e-6;
/// Epsilon of [`Grn`].
pub const GRN_EPS: f64 = 1e-6;

/// Uniform in `±sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Float, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound)))
}

/// Named activation shapes recorded by a traced forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapeTrace {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl ShapeTrace {
    pub fn record<T: Float>(&mut self, name: impl Into<String>, tape: &Tape<T>, v: Var) {
        self.entries.push((name.into(), tape.shape(v)));
    }
}

pub(crate) fn trace<T: Float>(t: &mut Option<&mut ShapeTrace>, name: &str, tape: &Tape<T>, v: Var) {
    if let Some(t) = t.as_deref_mut() {
        t.record(name, tape, v);
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: Conv1dSpec,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        spec: Conv1dSpec,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let in_g = in_ch / spec.groups;
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_uniform(&[out_ch, in_g, kernel], in_g * kernel, rng),
        );
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch])));
        Conv1d { weight, bias, spec }
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.conv1d(x, w, b, self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: Conv2dSpec,
}

impl Conv2d {
    pub fn new<T: Float, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        (in_ch, out_ch): (usize, usize),
        (kh, kw): (usize, usize),
        spec: Conv2dSpec,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_uniform(&[out_ch, in_ch, kh, kw], in_ch * kh * kw, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch]));
        Conv2d { weight, bias, spec }
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv2d(x, w, Some(b), self.spec)
    }
}

/// Bind a per-channel `[C]` parameter as `[C, 1]` so it broadcasts over frames.
fn channel_param<T: Float>(tape: &Tape<T>, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
    let c = store.value(id).numel();
    let p = tape.param(store, id);
    tape.reshape(p, &[c, 1])
}

/// Normalizes each frame across channels, then applies a per-channel affine map.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mu = tape.mean_axis(x, 1)?;
        let xc = tape.sub(x, mu)?;
        let var = tape.mean_axis(tape.square(xc)?, 1)?;
        let inv = tape.powf(tape.add_scalar(var, T::lit(self.eps)), T::lit(-0.5));
        let xn = tape.mul(xc, inv)?;
        let y = tape.mul(xn, channel_param(tape, store, self.gamma)?)?;
        tape.add(y, channel_param(tape, store, self.beta)?)
    }
}

/// Global response normalization: `γ·(x·n) + β + x` with `n_c = g_c / (mean_c g + eps)`
/// and `g_c` the L2 norm of channel `c` over frames.
#[derive(Debug, Clone)]
pub struct Grn {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl Grn {
    /// `gamma` and `beta` start at zero, so a fresh layer is the identity.
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Grn {
            gamma: store.add(format!("{name}.gamma"), Tensor::zeros(&[channels])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            eps: GRN_EPS,
        }
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let g = tape.sqrt(tape.sum_axis(tape.square(x)?, 2)?);
        let denom = tape.add_scalar(tape.mean_axis(g, 1)?, T::lit(self.eps));
        let n = tape.div(g, denom)?;
        let scaled = tape.mul(tape.mul(x, n)?, channel_param(tape, store, self.gamma)?)?;
        let y = tape.add(scaled, channel_param(tape, store, self.beta)?)?;
        tape.add(y, x)
    }
}

/// `x + pw_down(grn(gelu(pw_up(ln(dw(x))))))`.
#[derive(Debug, Clone)]
pub struct ConvNeXtV2Block {
    pub depthwise: Conv1d,
    pub norm: LayerNorm,
    pub pw_up: Conv1d,
    pub grn: Grn,
    pub pw_down: Conv1d,
}

/// Depthwise kernel size of [`ConvNeXtV2Block`].
pub const DEPTHWISE_KERNEL: usize = 7;

impl ConvNeXtV2Block {
    pub fn new<T: Float, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let dw_spec = Conv1dSpec {
            groups: channels,
            ..Conv1dSpec::same(DEPTHWISE_KERNEL)
        };
        ConvNeXtV2Block {
            depthwise: Conv1d::new(store, &format!("{name}.dwconv"), channels, channels, DEPTHWISE_KERNEL, dw_spec, true, rng),
            norm: LayerNorm::new(store, &format!("{name}.norm"), channels),
            pw_up: Conv1d::new(store, &format!("{name}.pwconv1"), channels, hidden, 1, Conv1dSpec::default(), true, rng),
            grn: Grn::new(store, &format!("{name}.grn"), hidden),
            pw_down: Conv1d::new(store, &format!("{name}.pwconv2"), hidden, channels, 1, Conv1dSpec::default(), true, rng),
        }
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.forward_traced(tape, store, x, None)
    }

    pub fn forward_traced<T: Float>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        mut tr: Option<&mut ShapeTrace>,
    ) -> Result<Var> {
        let h = self.depthwise.forward(tape, store, x)?;
        trace(&mut tr, "dwconv", tape, h);
        let h = self.norm.forward(tape, store, h)?;
        trace(&mut tr, "norm", tape, h);
        let h = self.pw_up.forward(tape, store, h)?;
        trace(&mut tr, "pwconv1", tape, h);
        let h = tape.gelu(h);
        let h = self.grn.forward(tape, store, h)?;
        trace(&mut tr, "grn", tape, h);
        let h = self.pw_down.forward(tape, store, h)?;
        trace(&mut tr, "pwconv2", tape, h);
        let y = tape.add(x, h)?;
        trace(&mut tr, "residual", tape, y);
        Ok(y)
    }
}
