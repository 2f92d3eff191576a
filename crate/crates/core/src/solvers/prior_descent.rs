use ndarray::{Array1, Array3};

use crate::dynamics::{induced_mean_field, FrozenModel};
use crate::error::{MfgError, Result};
use crate::model::{Environment, Policy, QFunction};

use super::IterativeSolver;

/// Soft best response to a frozen population, anchored at `prior`.
///
/// Backward induction with `V[t,s] = η log Σ_a q[t,s,a] exp(Q[t,s,a]/η)` and
/// policy `π ∝ q exp(Q/η)`. Both are evaluated max-shifted, so `|Q|/η` may
/// be large without overflow. Actions with zero prior weight get zero
/// probability.
pub fn soft_best_response(model: &FrozenModel, prior: &Policy, eta: f64) -> (Policy, QFunction) {
    let q_prior = prior.array();
    let (stages, ns, na) = q_prior.dim();
    let mut pi = Array3::zeros((stages, ns, na));
    let qf = model.backward(|t, qt| {
        let mut vt = Array1::zeros(ns);
        for s in 0..ns {
            let shift = (0..na)
                .filter(|&a| q_prior[[t, s, a]] > 0.0)
                .map(|a| qt[[s, a]] / eta)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for a in 0..na {
                let w = q_prior[[t, s, a]];
                let e = if w > 0.0 { w * (qt[[s, a]] / eta - shift).exp() } else { 0.0 };
                pi[[t, s, a]] = e;
                z += e;
            }
            for a in 0..na {
                pi[[t, s, a]] /= z;
            }
            vt[s] = eta * (shift + z.ln());
        }
        vt
    });
    (Policy::from_array_unchecked(pi), qf)
}

/// Prior descent: fixed-point iteration of the prior-anchored, entropy
/// regularized game, refreshing the prior to the current policy every
/// `n_inner` steps. One solver iteration is one inner step.
#[derive(Clone, Debug)]
pub struct PriorDescent {
    eta: f64,
    n_inner: usize,
    prior: Policy,
    policy: Policy,
    inner_steps: usize,
}

impl PriorDescent {
    pub fn new(env: &Environment, eta: f64, n_inner: usize) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(MfgError::param("eta", format!("must be positive, got {eta}")));
        }
        if n_inner == 0 {
            return Err(MfgError::param("n_inner", "must be positive"));
        }
        let prior = Policy::uniform(env);
        Ok(PriorDescent {
            eta,
            n_inner,
            policy: prior.clone(),
            prior,
            inner_steps: 0,
        })
    }

    pub fn prior(&self) -> &Policy {
        &self.prior
    }
}

impl IterativeSolver for PriorDescent {
    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn step(&mut self, env: &Environment, iteration: usize) -> Result<()> {
        let flow = induced_mean_field(env, &self.policy)?;
        let model = FrozenModel::new(env, &flow)?;
        let (next, _) = soft_best_response(&model, &self.prior, self.eta);
        if next.array().iter().any(|x| !x.is_finite()) {
            return Err(MfgError::NonFinite {
                what: "soft best response".into(),
                iteration: iteration + 1,
            });
        }
        self.policy = next;
        self.inner_steps += 1;
        if self.inner_steps.is_multiple_of(self.n_inner) {
            self.prior = self.policy.clone();
        }
        Ok(())
    }
}
