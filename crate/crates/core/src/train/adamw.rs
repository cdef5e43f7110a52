//! AdamW with decoupled weight decay and bias correction.

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::float::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.8,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment buffers, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<T: Float> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Float> AdamWState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value().shape())).collect();
        AdamWState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn check(&self, store: &ParamStore<T>) -> Result<()> {
        if self.m.len() != store.len() || self.v.len() != store.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer holds {} buffers for {} parameters",
                self.m.len(),
                store.len()
            )));
        }
        for ((_, p), (m, v)) in store.iter().zip(self.m.iter().zip(&self.v)) {
            let s = p.value().shape();
            if m.shape() != s || v.shape() != s || p.grad().shape() != s {
                return Err(Error::shape("adamw", s, m.shape()));
            }
        }
        Ok(())
    }

    /// One update of every parameter in `store` from its accumulated gradient.
    pub fn update(&mut self, store: &mut ParamStore<T>, opt: &AdamW, lr: f64) -> Result<()> {
        self.check(store)?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - opt.beta1.powi(t);
        let bc2 = 1.0 - opt.beta2.powi(t);
        let decay = 1.0 - lr * opt.weight_decay;
        for ((value, grad), (m, v)) in store.values_and_grads_mut().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, (x, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let g = g.as_f64();
                let mi = opt.beta1 * m[i].as_f64() + (1.0 - opt.beta1) * g;
                let vi = opt.beta2 * v[i].as_f64() + (1.0 - opt.beta2) * g * g;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let step = lr * (mi / bc1) / ((vi / bc2).sqrt() + opt.eps);
                *x = T::lit(x.as_f64() * decay - step);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(theta: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::full(&[1], theta));
        let tape = crate::autodiff::Tape::new();
        let x = tape.param(&s, id);
        let loss = tape.sum(tape.scale(x, grad));
        let g = tape.backward(loss).unwrap();
        s.accumulate(&g);
        s
    }

    fn opt(wd: f64) -> AdamW {
        AdamW {
            weight_decay: wd,
            ..AdamW::default()
        }
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut s = scalar_store(1.5, 0.0);
        let mut st = AdamWState::new(&s);
        st.update(&mut s, &opt(0.0), 0.1).unwrap();
        assert_eq!(s.value(crate::autodiff::ParamId(0)).item(), 1.5);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = scalar_store(1.0, 1.0);
        let mut st = AdamWState::new(&s);
        st.update(&mut s, &opt(0.0), 0.1).unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        let got = s.value(crate::autodiff::ParamId(0)).item();
        assert!((got - expected).abs() < 1e-15, "{got}");
        assert!((got - 0.9).abs() < 1e-8);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn decoupled_decay() {
        let mut s = scalar_store(1.0, 0.0);
        let mut st = AdamWState::new(&s);
        st.update(&mut s, &opt(0.01), 0.1).unwrap();
        assert!((s.value(crate::autodiff::ParamId(0)).item() - 0.999).abs() < 1e-15);
    }

    #[test]
    fn matches_reference_recurrence_over_steps() {
        // independent scalar recurrence
        let (b1, b2, eps, wd, lr) = (0.8f64, 0.99f64, 1e-8, 0.01, 0.05);
        let grads = [0.3, -1.2, 0.7, 0.0, 2.5];
        let (mut th, mut m, mut v) = (0.4f64, 0.0, 0.0);
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::full(&[1], 0.4));
        let mut st = AdamWState::new(&s);
        let o = AdamW {
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        };
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            th *= 1.0 - lr * wd;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);

            s.zero_grad();
            let tape = crate::autodiff::Tape::new();
            let x = tape.param(&s, id);
            let g_tape = tape.backward(tape.sum(tape.scale(x, g))).unwrap();
            s.accumulate(&g_tape);
            st.update(&mut s, &o, lr).unwrap();
            assert!((s.value(id).item() - th).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_state_is_an_error() {
        let mut s = scalar_store(1.0, 1.0);
        let mut st = AdamWState::new(&s);
        st.m[0] = Tensor::zeros(&[2]);
        assert!(st.update(&mut s, &opt(0.0), 0.1).is_err());
        let mut other = ParamStore::<f64>::new();
        assert!(AdamWState::new(&other).update(&mut s, &opt(0.0), 0.1).is_err());
        other.add("x", Tensor::zeros(&[3]));
        assert!(AdamWState::new(&other).update(&mut s, &opt(0.0), 0.1).is_err());
    }
}
