use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters.
///
/// Defaults follow the usual adversarial setting: `lr = 1e-4`, `β1 = 0.5`,
/// `β2 = 0.999`, `ε = 1e-8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.lr.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "invalid Adam hyperparameters {self:?}: need lr > 0, 0 <= beta < 1, eps > 0"
            )))
        }
    }
}

/// Moments and step count for one group of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        config.validate()?;
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(AdamState {
            config,
            t: 0,
            v: m.clone(),
            m,
        })
    }

    /// Optimizer over every parameter of `nets`, in order.
    pub fn for_nets(config: AdamConfig, nets: &[&Mlp]) -> Result<Self> {
        AdamState::new(config, nets.iter().flat_map(|n| n.params()))
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected update `θ ← θ − lr · m̂ / (√v̂ + ε)`.
    ///
    /// Gradients are screened before anything changes: a non-finite entry
    /// leaves parameters and moments untouched and the error names the
    /// offending parameter via `name`.
    pub fn step_tensors(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        name: impl Fn(usize) -> String,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "Adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::shape("adam_step", &[p.shape(), g.shape()]));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{}`", name(i))));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// [`AdamState::step_tensors`] over the parameters of `nets`.
    pub fn step(&mut self, nets: &mut [&mut Mlp], grads: &[Tensor]) -> Result<()> {
        let names: Vec<(usize, String)> = nets
            .iter()
            .map(|n| (n.params().count(), n.role().to_string()))
            .collect();
        let label = |mut i: usize| {
            for (count, role) in &names {
                if i < *count {
                    let kind = if i.is_multiple_of(2) { "weight" } else { "bias" };
                    return format!("{role}.layer{}.{kind}", i / 2);
                }
                i -= count;
            }
            format!("parameter {i}")
        };
        let mut params: Vec<&mut Tensor> = nets.iter_mut().flat_map(|n| n.params_mut()).collect();
        self.step_tensors(&mut params, grads, label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(cfg: AdamConfig) -> AdamState {
        AdamState::new(cfg, [&Tensor::scalar(0.0)]).unwrap()
    }

    fn step(state: &mut AdamState, theta: &mut Tensor, g: f64) {
        state
            .step_tensors(&mut [theta], &[Tensor::scalar(g)], |_| "theta".into())
            .unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = scalar_state(AdamConfig::default());
        let mut theta = Tensor::scalar(1.25);
        for _ in 0..5 {
            step(&mut s, &mut theta, 0.0);
            assert_eq!(theta.item(), 1.25);
        }
        assert_eq!(s.steps(), 5);
    }

    #[test]
    fn zero_betas_give_sign_step() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
        };
        let mut s = scalar_state(cfg);
        let mut theta = Tensor::scalar(0.0);
        step(&mut s, &mut theta, 4.0);
        assert!((theta.item() + 0.1).abs() < 1e-9, "{}", theta.item());
    }

    #[test]
    fn three_step_trace_matches_hand_recurrence() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        };
        let grads = [1.0, -2.0, 0.5];
        // Hand-rolled recurrence, written out independently of the optimizer.
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 0.3f64);
        let mut expected = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.5 * m + 0.5 * g;
            v = 0.9 * v + 0.1 * g * g;
            let m_hat = m / (1.0 - 0.5f64.powi(t));
            let v_hat = v / (1.0 - 0.9f64.powi(t));
            theta -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            expected.push(theta);
        }
        let mut s = scalar_state(cfg);
        let mut p = Tensor::scalar(0.3);
        for (g, e) in grads.iter().zip(&expected) {
            step(&mut s, &mut p, *g);
            assert!((p.item() - e).abs() < 1e-14, "{} vs {e}", p.item());
        }
        // First step is a pure sign step: 0.3 - 0.1.
        assert!((expected[0] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_names_parameter_and_changes_nothing() {
        let mut s = AdamState::new(AdamConfig::default(), [&Tensor::zeros(&[2]), &Tensor::zeros(&[3])]).unwrap();
        let mut a = Tensor::zeros(&[2]);
        let mut b = Tensor::zeros(&[3]);
        let grads = [Tensor::filled(&[2], 1.0), Tensor::vector(vec![0.0, f64::NAN, 1.0]).unwrap()];
        let err = s
            .step_tensors(&mut [&mut a, &mut b], &grads, |i| format!("p{i}"))
            .unwrap_err();
        assert!(err.to_string().contains("p1"), "{err}");
        assert_eq!(s.steps(), 0);
        assert!(a.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn named_error_through_networks() {
        use crate::nn::{Head, Mlp};
        let mut net = Mlp::zeros("encoder", &[2, 3, 2], Head::Linear, 0.1).unwrap();
        let mut s = AdamState::for_nets(AdamConfig::default(), &[&net]).unwrap();
        let mut grads: Vec<Tensor> = net.params().map(|p| Tensor::zeros(p.shape())).collect();
        grads[2].data_mut()[0] = f64::INFINITY;
        let err = s.step(&mut [&mut net], &grads).unwrap_err();
        assert!(err.to_string().contains("encoder.layer1.weight"), "{err}");
    }

    #[test]
    fn rejects_invalid_hyperparameters() {
        let bad = [
            AdamConfig { lr: 0.0, ..AdamConfig::default() },
            AdamConfig { beta1: 1.0, ..AdamConfig::default() },
            AdamConfig { beta2: -0.1, ..AdamConfig::default() },
        ];
        for cfg in bad {
            assert!(AdamState::new(cfg, [&Tensor::scalar(0.0)]).is_err());
        }
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #[test]
            fn update_is_bounded_by_ten_lr(
                grads in prop::collection::vec(-1e3f64..1e3, 1..20),
                lr in 1e-5f64..1e-1,
                beta1 in prop::sample::select(vec![0.0, 0.5, 0.9]),
            ) {
                let cfg = AdamConfig { lr, beta1, beta2: 0.999, eps: 1e-8 };
                let mut s = AdamState::new(cfg, [&Tensor::scalar(0.0)]).unwrap();
                let mut theta = Tensor::scalar(0.0);
                for g in grads {
                    let before = theta.item();
                    s.step_tensors(&mut [&mut theta], &[Tensor::scalar(g)], |_| "t".into()).unwrap();
                    prop_assert!((theta.item() - before).abs() <= 10.0 * lr);
                }
            }

            #[test]
            fn zero_gradients_are_identity_at_any_step(t in 1usize..50, x in -10f64..10.0) {
                let mut s = AdamState::new(AdamConfig::default(), [&Tensor::scalar(0.0)]).unwrap();
                let mut theta = Tensor::scalar(x);
                for _ in 0..t {
                    s.step_tensors(&mut [&mut theta], &[Tensor::scalar(0.0)], |_| "t".into()).unwrap();
                }
                prop_assert_eq!(theta.item(), x);
            }
        }
    }
}
