//! Exact forward and backward recursions: mean-field induction, policy
//! evaluation, best response and exploitability.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::Result;
use crate::model::{Environment, MeanFieldFlow, Policy, QFunction, ZERO_MASS};

/// The policy that plays every action with probability `1/|A|`.
pub fn uniform_policy(env: &Environment) -> Policy {
    Policy::uniform(env)
}

/// Pushes `mu0` forward under `policy`.
///
/// `L[t, s, a] = μ_t(s) π[t, s, a]` and
/// `μ_{t+1}(s') = Σ_{s,a} P_t(L_t)[s', s, a] L[t, s, a]`; the kernel at stage
/// `t` is evaluated at the just-computed `L_t`.
pub fn induced_mean_field(env: &Environment, policy: &Policy) -> Result<MeanFieldFlow> {
    policy.check_compatible(env)?;
    let (ns, na) = (env.n_states(), env.n_actions());
    let pi = policy.array();
    let mut l = Array3::zeros((env.stages(), ns, na));
    let mut mu = env.mu0().clone();
    for t in 0..env.stages() {
        {
            let mut lt = l.index_axis_mut(Axis(0), t);
            for s in 0..ns {
                for a in 0..na {
                    lt[[s, a]] = mu[s] * pi[[t, s, a]];
                }
            }
        }
        if t < env.horizon() {
            let p = env.transition(t, l.index_axis(Axis(0), t))?;
            mu = push_forward(&p, l.index_axis(Axis(0), t));
        }
    }
    Ok(MeanFieldFlow::from_array_unchecked(l))
}

/// `μ'(s') = Σ_{s,a} p[s', s, a] · lt[s, a]`.
pub(crate) fn push_forward(p: &Array3<f64>, lt: ArrayView2<'_, f64>) -> Array1<f64> {
    let (ns, _, na) = p.dim();
    let mut next = Array1::zeros(ns);
    for sn in 0..ns {
        let mut acc = 0.0;
        for s in 0..ns {
            for a in 0..na {
                acc += p[[sn, s, a]] * lt[[s, a]];
            }
        }
        next[sn] = acc;
    }
    next
}

/// Rewards and transitions evaluated once along a frozen flow.
///
/// Every backward recursion against a fixed population reuses these
/// tables; building them is the only place the environment callables are
/// invoked.
#[derive(Clone, Debug)]
pub struct FrozenModel {
    rewards: Vec<Array2<f64>>,
    transitions: Vec<Array3<f64>>,
}

impl FrozenModel {
    pub fn new(env: &Environment, flow: &MeanFieldFlow) -> Result<Self> {
        flow.check_compatible(env)?;
        let rewards = (0..env.stages())
            .map(|t| env.reward(t, flow.stage(t)))
            .collect::<Result<Vec<_>>>()?;
        let transitions = (0..env.horizon())
            .map(|t| env.transition(t, flow.stage(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrozenModel { rewards, transitions })
    }

    pub fn horizon(&self) -> usize {
        self.transitions.len()
    }

    pub fn reward(&self, t: usize) -> &Array2<f64> {
        &self.rewards[t]
    }

    /// `P_t[s', s, a]`; only defined for `t < T`.
    pub fn transition(&self, t: usize) -> &Array3<f64> {
        &self.transitions[t]
    }

    /// One Bellman backup: `r_t[s,a] + Σ_{s'} P_t[s', s, a] v_next[s']`, or
    /// `r_T` at the terminal stage.
    pub fn backup(&self, t: usize, v_next: Option<ArrayView1<'_, f64>>) -> Array2<f64> {
        let mut q = self.rewards[t].clone();
        if let Some(v_next) = v_next {
            let p = &self.transitions[t];
            let (ns, _, na) = p.dim();
            for s in 0..ns {
                for a in 0..na {
                    let mut acc = 0.0;
                    for sn in 0..ns {
                        acc += p[[sn, s, a]] * v_next[sn];
                    }
                    q[[s, a]] += acc;
                }
            }
        }
        q
    }

    /// Backward induction with a caller-supplied row aggregation
    /// `(t, Q_t) -> V_t`.
    pub fn backward<F>(&self, mut aggregate: F) -> QFunction
    where
        F: FnMut(usize, &Array2<f64>) -> Array1<f64>,
    {
        let stages = self.rewards.len();
        let (ns, na) = self.rewards[0].dim();
        let mut q = Array3::zeros((stages, ns, na));
        let mut v = Array2::zeros((stages, ns));
        for t in (0..stages).rev() {
            let qt = if t + 1 < stages {
                self.backup(t, Some(v.index_axis(Axis(0), t + 1)))
            } else {
                self.backup(t, None)
            };
            let vt = aggregate(t, &qt);
            q.index_axis_mut(Axis(0), t).assign(&qt);
            v.index_axis_mut(Axis(0), t).assign(&vt);
        }
        QFunction { q, v }
    }

    /// Policy evaluation: `V[t, s] = Σ_a π[t, s, a] Q[t, s, a]`.
    pub fn evaluate(&self, policy: &Policy) -> QFunction {
        let pi = policy.array();
        self.backward(|t, qt| (&pi.index_axis(Axis(0), t) * qt).sum_axis(Axis(1)))
    }

    /// Max backup with the first maximizer (row-major action order) selected.
    pub fn best_response(&self) -> (Policy, QFunction) {
        let stages = self.rewards.len();
        let (ns, na) = self.rewards[0].dim();
        let mut pi = Array3::zeros((stages, ns, na));
        let qf = self.backward(|t, qt| {
            let mut vt = Array1::zeros(ns);
            for (s, row) in qt.outer_iter().enumerate() {
                let (best, value) = first_argmax(row);
                pi[[t, s, best]] = 1.0;
                vt[s] = value;
            }
            vt
        });
        (Policy::from_array_unchecked(pi), qf)
    }
}

/// Index and value of the first maximal entry; NaN never wins.
pub(crate) fn first_argmax(row: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = 0;
    let mut value = row[0];
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > value || (value.is_nan() && !x.is_nan()) {
            best = i;
            value = x;
        }
    }
    (best, value)
}

/// Values of `policy` against the population `flow` (not necessarily the
/// flow the policy induces).
pub fn policy_q_values(env: &Environment, policy: &Policy, flow: &MeanFieldFlow) -> Result<QFunction> {
    policy.check_compatible(env)?;
    Ok(FrozenModel::new(env, flow)?.evaluate(policy))
}

/// Deterministic best response to a frozen flow and its optimal values.
pub fn best_response(env: &Environment, flow: &MeanFieldFlow) -> Result<(Policy, QFunction)> {
    Ok(FrozenModel::new(env, flow)?.best_response())
}

/// Conditional action distributions of a flow, uniform on states whose
/// mass is at most [`ZERO_MASS`].
pub fn policy_from_mean_field(flow: &MeanFieldFlow) -> Policy {
    let l = flow.array();
    let (stages, ns, na) = l.dim();
    let mut pi = Array3::zeros((stages, ns, na));
    for t in 0..stages {
        for s in 0..ns {
            let mass: f64 = (0..na).map(|a| l[[t, s, a]]).sum();
            for a in 0..na {
                pi[[t, s, a]] = if mass > ZERO_MASS {
                    l[[t, s, a]] / mass
                } else {
                    1.0 / na as f64
                };
            }
        }
    }
    Policy::from_array_unchecked(pi)
}

/// Everything exploitability computes along the way.
#[derive(Clone, Debug)]
pub struct ExploitabilityReport {
    pub exploitability: f64,
    pub flow: MeanFieldFlow,
    pub best_response: Policy,
    pub best_response_value: f64,
    pub policy_value: f64,
}

/// Best-response gain over `policy` against its own induced flow,
/// `Σ_s mu0(s) (V_BR[0, s] − V_π[0, s])`.
pub fn exploitability(env: &Environment, policy: &Policy) -> Result<f64> {
    Ok(exploitability_report(env, policy)?.exploitability)
}

pub fn exploitability_report(env: &Environment, policy: &Policy) -> Result<ExploitabilityReport> {
    let flow = induced_mean_field(env, policy)?;
    let model = FrozenModel::new(env, &flow)?;
    let (br, br_q) = model.best_response();
    let own = model.evaluate(policy);
    let best_response_value = br_q.start_value(env);
    let policy_value = own.start_value(env);
    Ok(ExploitabilityReport {
        exploitability: best_response_value - policy_value,
        flow,
        best_response: br,
        best_response_value,
        policy_value,
    })
}
