//! Central-difference gradient checking.

use crate::autodiff::param::{ParamId, ParamStore};
use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

const REL_FLOOR: f64 = 1e-8;

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|a - n| / max(|a|, |n|, 1e-8)` over the checked coordinates.
    pub max_rel_error: f64,
    /// Worst absolute element difference.
    pub max_abs_error: f64,
    /// Number of coordinates perturbed.
    pub checked: usize,
}

/// Options for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many evenly spaced coordinates per input.
    pub max_coords: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: None,
        }
    }
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let tape = Tape::no_grad();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(Error::NonScalarLoss(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Compare reverse-mode gradients of the scalar `f(inputs)` against central differences.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for (which, input) in inputs.iter().enumerate() {
        let zeros = Tensor::zeros(input.shape());
        let analytic = grads.get(vars[which]).unwrap_or(&zeros);
        let n = input.numel();
        let step = match opts.max_coords {
            Some(m) if m > 0 && m < n => n.div_ceil(m),
            _ => 1,
        };
        let mut perturbed = inputs.to_vec();
        for idx in (0..n).step_by(step) {
            let orig = input.data()[idx];
            perturbed[which].data_mut()[idx] = orig + opts.eps;
            let plus = eval(&f, &perturbed)?;
            perturbed[which].data_mut()[idx] = orig - opts.eps;
            let minus = eval(&f, &perturbed)?;
            perturbed[which].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic.data()[idx];
            let diff = (a - numeric).abs();
            let rel = diff / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(diff);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Gradient check of `f` with respect to selected stored parameter coordinates.
///
/// `f` binds whatever it needs from the store; only the listed `(parameter, element)`
/// coordinates are perturbed. The store is restored before returning.
pub fn grad_check_params<F>(
    store: &mut ParamStore<f64>,
    coords: &[(ParamId, usize)],
    eps: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let tape = Tape::new();
    let out = f(&tape, store)?;
    let grads = tape.backward(out)?;
    store.zero_grad();
    store.accumulate(&grads);
    let analytic: Vec<f64> = coords.iter().map(|&(id, i)| store.grad(id).data()[i]).collect();
    store.zero_grad();
    let scalar = |store: &ParamStore<f64>| -> Result<f64> {
        let tape = Tape::no_grad();
        let v = tape.value(f(&tape, store)?);
        if v.numel() != 1 {
            return Err(Error::NonScalarLoss(v.shape().to_vec()));
        }
        Ok(v.item())
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for (&(id, i), &a) in coords.iter().zip(&analytic) {
        let orig = store.value(id).data()[i];
        store.value_mut(id).data_mut()[i] = orig + eps;
        let plus = scalar(store);
        store.value_mut(id).data_mut()[i] = orig - eps;
        let minus = scalar(store);
        store.value_mut(id).data_mut()[i] = orig;
        let numeric = (plus? - minus?) / (2.0 * eps);
        let diff = (a - numeric).abs();
        report.max_abs_error = report.max_abs_error.max(diff);
        report.max_rel_error = report.max_rel_error.max(diff / a.abs().max(numeric.abs()).max(REL_FLOOR));
        report.checked += 1;
    }
    Ok(report)
}
