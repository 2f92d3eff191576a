//! The mean-field game model: environments, policies, mean-field flows and
//! stage-to-go values.
//!
//! States and actions live on multidimensional index grids ([`Shape`]).
//! Callables supplied by users see arrays in their original form: a
//! population slice `L_t` has shape `S ⊕ A`, a reward table has shape
//! `S ⊕ A` and a transition kernel has shape `S ⊕ S ⊕ A` (next state
//! first). Internally every per-stage table is stored flattened as
//! `(|S|, |A|)` in row-major order, and [`Policy::to_nd`] /
//! [`MeanFieldFlow::to_nd`] restore the original axes.
//!
//! Stage convention: an environment with horizon `T` has `T + 1` decision
//! stages `t = 0, ..., T`. Rewards accrue at every stage including the
//! terminal one; transitions are only consulted for `t < T`.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView2, ArrayView3, ArrayViewD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

/// Absolute tolerance for every probability comparison.
pub const PROB_TOL: f64 = 1e-9;

/// Below this state mass a conditional action distribution is undefined and
/// replaced by the uniform one.
pub const ZERO_MASS: f64 = 1e-12;

/// A multidimensional index grid. `Shape(vec![])` is not allowed; a scalar
/// space is written `Shape(vec![1])`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(MfgError::param(
                "shape",
                format!("dimensions must be a nonempty tuple of positive integers, got {dims:?}"),
            ));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    /// Number of grid points.
    pub fn size(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major multi-index of a flat index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.0.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.0).rev() {
            *slot = flat % d;
            flat /= d;
        }
        idx
    }

    /// Row-major flat index of a multi-index; `None` when out of range.
    pub fn ravel(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.0.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in idx.iter().zip(&self.0) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        Some(flat)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// `(t, L_t) -> r_t`, with `L_t` of shape `S ⊕ A` and output of shape `S ⊕ A`.
pub type RewardFn = Arc<dyn Fn(usize, ArrayViewD<'_, f64>) -> ArrayD<f64> + Send + Sync>;

/// `(t, L_t) -> P_t`, output of shape `S ⊕ S ⊕ A` indexed `[s', s, a]`.
pub type TransitionFn = Arc<dyn Fn(usize, ArrayViewD<'_, f64>) -> ArrayD<f64> + Send + Sync>;

/// Vector-Jacobian product of the reward map: given `g` with the shape of
/// `r_t`, returns `Σ_{s,a} g[s,a] · ∂r_t[s,a]/∂L_t` with the shape of `L_t`.
pub type RewardVjp =
    Arc<dyn Fn(usize, ArrayViewD<'_, f64>, ArrayViewD<'_, f64>) -> ArrayD<f64> + Send + Sync>;

/// Vector-Jacobian product of the transition map, analogous to [`RewardVjp`].
pub type TransitionVjp =
    Arc<dyn Fn(usize, ArrayViewD<'_, f64>, ArrayViewD<'_, f64>) -> ArrayD<f64> + Send + Sync>;

/// How the derivative of a callable with respect to `L_t` is obtained.
#[derive(Clone)]
pub enum Sensitivity<F> {
    /// The map does not depend on `L_t`.
    Independent,
    /// An exact vector-Jacobian product supplied with the environment.
    Exact(F),
    /// Unknown; approximated by central differences of the raw callable.
    Numerical,
}

impl<F> fmt::Debug for Sensitivity<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sensitivity::Independent => f.write_str("Independent"),
            Sensitivity::Exact(_) => f.write_str("Exact"),
            Sensitivity::Numerical => f.write_str("Numerical"),
        }
    }
}

/// A discrete-time, finite-horizon mean-field game.
#[derive(Clone)]
pub struct Environment {
    horizon: usize,
    state_shape: Shape,
    action_shape: Shape,
    mu0: Array1<f64>,
    r_max: f64,
    reward_fn: RewardFn,
    transition_fn: TransitionFn,
    reward_sensitivity: Sensitivity<RewardVjp>,
    transition_sensitivity: Sensitivity<TransitionVjp>,
    validate: bool,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("horizon", &self.horizon)
            .field("state_shape", &self.state_shape)
            .field("action_shape", &self.action_shape)
            .field("r_max", &self.r_max)
            .field("reward_sensitivity", &self.reward_sensitivity)
            .field("transition_sensitivity", &self.transition_sensitivity)
            .field("validate", &self.validate)
            .finish_non_exhaustive()
    }
}

impl Environment {
    /// Builds an environment. `mu0` must have shape `state_shape` and be a
    /// probability distribution; `r_max` must be positive and finite.
    ///
    /// Callable outputs are checked on every call (stochastic kernels,
    /// bounded rewards) until [`Environment::with_validation`] turns that
    /// off.
    pub fn new<R, P>(
        horizon: usize,
        state_shape: Shape,
        action_shape: Shape,
        mu0: ArrayD<f64>,
        r_max: f64,
        reward_fn: R,
        transition_fn: P,
    ) -> Result<Self>
    where
        R: Fn(usize, ArrayViewD<'_, f64>) -> ArrayD<f64> + Send + Sync + 'static,
        P: Fn(usize, ArrayViewD<'_, f64>) -> ArrayD<f64> + Send + Sync + 'static,
    {
        if mu0.shape() != state_shape.dims() {
            return Err(MfgError::ShapeMismatch {
                what: "mu0".into(),
                expected: state_shape.dims().to_vec(),
                actual: mu0.shape().to_vec(),
            });
        }
        let mu0: Array1<f64> = mu0.iter().copied().collect();
        if let Some((i, &m)) = mu0.iter().enumerate().find(|(_, m)| !(**m >= 0.0)) {
            return Err(MfgError::InvalidInitialDistribution(format!(
                "entry {:?} is {m}",
                state_shape.unravel(i)
            )));
        }
        let total: f64 = mu0.sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(MfgError::InvalidInitialDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(MfgError::param("r_max", format!("must be positive and finite, got {r_max}")));
        }
        Ok(Environment {
            horizon,
            state_shape,
            action_shape,
            mu0,
            r_max,
            reward_fn: Arc::new(reward_fn),
            transition_fn: Arc::new(transition_fn),
            reward_sensitivity: Sensitivity::Numerical,
            transition_sensitivity: Sensitivity::Numerical,
            validate: true,
        })
    }

    /// Enables (default) or disables validation of callable outputs.
    pub fn with_validation(mut self, validate: bool) -> Self {
        self.validate = validate;
        self
    }

    pub fn with_reward_sensitivity(mut self, s: Sensitivity<RewardVjp>) -> Self {
        self.reward_sensitivity = s;
        self
    }

    pub fn with_transition_sensitivity(mut self, s: Sensitivity<TransitionVjp>) -> Self {
        self.transition_sensitivity = s;
        self
    }

    /// Number of transitions `T`; there are `T + 1` stages.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stages(&self) -> usize {
        self.horizon + 1
    }

    pub fn state_shape(&self) -> &Shape {
        &self.state_shape
    }

    pub fn action_shape(&self) -> &Shape {
        &self.action_shape
    }

    pub fn n_states(&self) -> usize {
        self.state_shape.size()
    }

    pub fn n_actions(&self) -> usize {
        self.action_shape.size()
    }

    /// Initial state distribution, flattened.
    pub fn mu0(&self) -> &Array1<f64> {
        &self.mu0
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn validates(&self) -> bool {
        self.validate
    }

    pub fn reward_sensitivity(&self) -> &Sensitivity<RewardVjp> {
        &self.reward_sensitivity
    }

    pub fn transition_sensitivity(&self) -> &Sensitivity<TransitionVjp> {
        &self.transition_sensitivity
    }

    fn sa_dims(&self) -> Vec<usize> {
        [self.state_shape.dims(), self.action_shape.dims()].concat()
    }

    fn ssa_dims(&self) -> Vec<usize> {
        [self.state_shape.dims(), self.state_shape.dims(), self.action_shape.dims()].concat()
    }

    fn check_population(&self, lt: &ArrayView2<'_, f64>) -> Result<()> {
        let expected = [self.n_states(), self.n_actions()];
        if lt.shape() != expected {
            return Err(MfgError::ShapeMismatch {
                what: "population slice L_t".into(),
                expected: expected.to_vec(),
                actual: lt.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn call_nd<F>(
        &self,
        what: &str,
        f: F,
        lt: ArrayView2<'_, f64>,
        out_dims: &[usize],
    ) -> Result<Vec<f64>>
    where
        F: FnOnce(ArrayViewD<'_, f64>) -> ArrayD<f64>,
    {
        self.check_population(&lt)?;
        let lt = lt.as_standard_layout();
        let view = lt
            .view()
            .into_shape_with_order(IxDyn(&self.sa_dims()))
            .expect("standard layout reshapes");
        let out = f(view);
        if out.shape() != out_dims {
            return Err(MfgError::ShapeMismatch {
                what: what.to_string(),
                expected: out_dims.to_vec(),
                actual: out.shape().to_vec(),
            });
        }
        Ok(out.iter().copied().collect())
    }

    /// Reward table `r_t` at population `L_t`, flattened to `(|S|, |A|)`.
    pub fn reward(&self, t: usize, lt: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let r = self.reward_unchecked(t, lt)?;
        if self.validate {
            self.validate_reward(t, &r)?;
        }
        Ok(r)
    }

    /// Transition kernel `P_t[s', s, a]` at population `L_t`.
    pub fn transition(&self, t: usize, lt: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        let p = self.transition_unchecked(t, lt)?;
        if self.validate {
            self.validate_transition(t, &p)?;
        }
        Ok(p)
    }

    /// Reward callable without invariant checks (shapes are still checked).
    /// Used for perturbed, off-simplex inputs.
    pub fn reward_unchecked(&self, t: usize, lt: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let data = self.call_nd("reward_fn output", |v| (self.reward_fn)(t, v), lt, &self.sa_dims())?;
        Ok(Array2::from_shape_vec((ns, na), data).expect("length checked"))
    }

    pub fn transition_unchecked(&self, t: usize, lt: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let data = self.call_nd(
            "transition_fn output",
            |v| (self.transition_fn)(t, v),
            lt,
            &self.ssa_dims(),
        )?;
        Ok(Array3::from_shape_vec((ns, ns, na), data).expect("length checked"))
    }

    /// Checks that `r` is finite and bounded by `r_max`.
    pub fn validate_reward(&self, t: usize, r: &Array2<f64>) -> Result<()> {
        for ((s, a), &v) in r.indexed_iter() {
            if !(v.abs() <= self.r_max + PROB_TOL) {
                return Err(MfgError::RewardOutOfBounds {
                    t,
                    state: self.state_shape.unravel(s),
                    action: self.action_shape.unravel(a),
                    value: v,
                    r_max: self.r_max,
                });
            }
        }
        Ok(())
    }

    /// Checks that every `(s, a)` column of `p` is a probability vector.
    pub fn validate_transition(&self, t: usize, p: &Array3<f64>) -> Result<()> {
        let (ns, na) = (self.n_states(), self.n_actions());
        for s in 0..ns {
            for a in 0..na {
                let mut sum = 0.0;
                for sn in 0..ns {
                    let v = p[[sn, s, a]];
                    if !(v >= -PROB_TOL) || !v.is_finite() {
                        return Err(MfgError::TransitionNotStochastic {
                            t,
                            state: self.state_shape.unravel(s),
                            action: self.action_shape.unravel(a),
                            detail: format!(
                                "entry for next state {:?} is {v}",
                                self.state_shape.unravel(sn)
                            ),
                        });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(MfgError::TransitionNotStochastic {
                        t,
                        state: self.state_shape.unravel(s),
                        action: self.action_shape.unravel(a),
                        detail: format!("column sums to {sum}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// `Σ g[s,a] ∂r_t[s,a]/∂L_t`, or `None` when no exact derivative is known.
    pub(crate) fn reward_vjp(
        &self,
        t: usize,
        lt: ArrayView2<'_, f64>,
        g: ArrayView2<'_, f64>,
    ) -> Option<Result<Array2<f64>>> {
        match &self.reward_sensitivity {
            Sensitivity::Independent => {
                Some(Ok(Array2::zeros((self.n_states(), self.n_actions()))))
            }
            Sensitivity::Numerical => None,
            Sensitivity::Exact(f) => {
                let g = g.as_standard_layout();
                let gd = g.view().into_shape_with_order(IxDyn(&self.sa_dims())).expect("layout");
                Some(self.vjp_result(lt, |v| f(t, v, gd)))
            }
        }
    }

    pub(crate) fn transition_vjp(
        &self,
        t: usize,
        lt: ArrayView2<'_, f64>,
        g: ArrayView3<'_, f64>,
    ) -> Option<Result<Array2<f64>>> {
        match &self.transition_sensitivity {
            Sensitivity::Independent => {
                Some(Ok(Array2::zeros((self.n_states(), self.n_actions()))))
            }
            Sensitivity::Numerical => None,
            Sensitivity::Exact(f) => {
                let g = g.as_standard_layout();
                let gd = g.view().into_shape_with_order(IxDyn(&self.ssa_dims())).expect("layout");
                Some(self.vjp_result(lt, |v| f(t, v, gd)))
            }
        }
    }

    fn vjp_result<F>(&self, lt: ArrayView2<'_, f64>, f: F) -> Result<Array2<f64>>
    where
        F: FnOnce(ArrayViewD<'_, f64>) -> ArrayD<f64>,
    {
        let (ns, na) = (self.n_states(), self.n_actions());
        let data = self.call_nd("sensitivity output", f, lt, &self.sa_dims())?;
        Ok(Array2::from_shape_vec((ns, na), data).expect("length checked"))
    }
}

fn check_stagewise(
    what: &str,
    arr: &Array3<f64>,
    rows: impl Fn(&Array3<f64>, usize) -> Vec<(Vec<usize>, f64)>,
) -> Result<()> {
    if let Some(v) = arr.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(MfgError::InvalidPolicy(format!("{what} has invalid entry {v}")));
    }
    for t in 0..arr.len_of(Axis(0)) {
        for (idx, sum) in rows(arr, t) {
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(MfgError::InvalidPolicy(format!(
                    "{what} at t={t}, index {idx:?} sums to {sum}"
                )));
            }
        }
    }
    Ok(())
}

/// Per-stage conditional action distributions `pi[t, s, a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pi: Array3<f64>,
}

impl Policy {
    /// Validates nonnegativity and per-`(t, s)` normalization.
    pub fn new(pi: Array3<f64>) -> Result<Self> {
        check_stagewise("policy", &pi, |arr, t| {
            arr.index_axis(Axis(0), t)
                .outer_iter()
                .enumerate()
                .map(|(s, row)| (vec![s], row.sum()))
                .collect()
        })?;
        Ok(Policy { pi })
    }

    /// Builds a policy from an array of shape `(T+1) ⊕ S ⊕ A`.
    pub fn from_nd(env: &Environment, pi: ArrayViewD<'_, f64>) -> Result<Self> {
        let expected = [&[env.stages()][..], env.state_shape.dims(), env.action_shape.dims()].concat();
        if pi.shape() != expected.as_slice() {
            return Err(MfgError::ShapeMismatch {
                what: "policy".into(),
                expected,
                actual: pi.shape().to_vec(),
            });
        }
        let data: Vec<f64> = pi.iter().copied().collect();
        Policy::new(
            Array3::from_shape_vec((env.stages(), env.n_states(), env.n_actions()), data)
                .expect("length checked"),
        )
    }

    pub(crate) fn from_array_unchecked(pi: Array3<f64>) -> Self {
        Policy { pi }
    }

    /// `pi[t, s, a] = 1/|A|` everywhere.
    pub fn uniform(env: &Environment) -> Self {
        let na = env.n_actions();
        Policy {
            pi: Array3::from_elem((env.stages(), env.n_states(), na), 1.0 / na as f64),
        }
    }

    /// Deterministic policy choosing `actions[t][s]` (flat action index).
    pub fn deterministic(env: &Environment, actions: &Array2<usize>) -> Result<Self> {
        let (ns, na) = (env.n_states(), env.n_actions());
        if actions.shape() != [env.stages(), ns] {
            return Err(MfgError::ShapeMismatch {
                what: "deterministic action table".into(),
                expected: vec![env.stages(), ns],
                actual: actions.shape().to_vec(),
            });
        }
        let mut pi = Array3::zeros((env.stages(), ns, na));
        for ((t, s), &a) in actions.indexed_iter() {
            if a >= na {
                return Err(MfgError::InvalidPolicy(format!("action {a} out of range at t={t}, s={s}")));
            }
            pi[[t, s, a]] = 1.0;
        }
        Ok(Policy { pi })
    }

    pub fn array(&self) -> &Array3<f64> {
        &self.pi
    }

    pub fn into_array(self) -> Array3<f64> {
        self.pi
    }

    pub fn stages(&self) -> usize {
        self.pi.len_of(Axis(0))
    }

    /// Errors unless the policy's shape is `(T+1, |S|, |A|)` for `env`.
    pub fn check_compatible(&self, env: &Environment) -> Result<()> {
        check_shape("policy", self.pi.shape(), env)
    }

    /// The policy with its original `(T+1) ⊕ S ⊕ A` axes.
    pub fn to_nd(&self, env: &Environment) -> Result<ArrayD<f64>> {
        to_nd(&self.pi, env)
    }
}

/// Joint state-action population distributions `L[t, s, a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldFlow {
    l: Array3<f64>,
}

impl MeanFieldFlow {
    /// Validates nonnegativity and that every stage sums to one.
    pub fn new(l: Array3<f64>) -> Result<Self> {
        check_stagewise("mean-field flow", &l, |arr, t| vec![(vec![], arr.index_axis(Axis(0), t).sum())])
            .map_err(|e| match e {
                MfgError::InvalidPolicy(m) => MfgError::InvalidFlow(m),
                other => other,
            })?;
        Ok(MeanFieldFlow { l })
    }

    pub(crate) fn from_array_unchecked(l: Array3<f64>) -> Self {
        MeanFieldFlow { l }
    }

    pub fn array(&self) -> &Array3<f64> {
        &self.l
    }

    pub fn into_array(self) -> Array3<f64> {
        self.l
    }

    pub fn stages(&self) -> usize {
        self.l.len_of(Axis(0))
    }

    /// `L_t` as a `(|S|, |A|)` view.
    pub fn stage(&self, t: usize) -> ArrayView2<'_, f64> {
        self.l.index_axis(Axis(0), t)
    }

    /// State marginal `m_t(s) = Σ_a L[t, s, a]`.
    pub fn state_marginal(&self, t: usize) -> Array1<f64> {
        self.stage(t).sum_axis(Axis(1))
    }

    pub fn check_compatible(&self, env: &Environment) -> Result<()> {
        check_shape("mean-field flow", self.l.shape(), env)
    }

    pub fn to_nd(&self, env: &Environment) -> Result<ArrayD<f64>> {
        to_nd(&self.l, env)
    }
}

/// Stage-to-go action values `q[t, s, a]` and state values `v[t, s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QFunction {
    pub q: Array3<f64>,
    pub v: Array2<f64>,
}

impl QFunction {
    /// `Σ_s mu0(s) V[0, s]`.
    pub fn start_value(&self, env: &Environment) -> f64 {
        env.mu0().dot(&self.v.index_axis(Axis(0), 0))
    }
}

fn check_shape(what: &str, shape: &[usize], env: &Environment) -> Result<()> {
    let expected = [env.stages(), env.n_states(), env.n_actions()];
    if shape != expected {
        return Err(MfgError::ShapeMismatch {
            what: what.into(),
            expected: expected.to_vec(),
            actual: shape.to_vec(),
        });
    }
    Ok(())
}

fn to_nd(arr: &Array3<f64>, env: &Environment) -> Result<ArrayD<f64>> {
    check_shape("array", arr.shape(), env)?;
    let dims = [&[env.stages()][..], env.state_shape.dims(), env.action_shape.dims()].concat();
    Ok(ArrayD::from_shape_vec(IxDyn(&dims), arr.iter().copied().collect()).expect("size checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array};

    fn trivial_env(mu0: Vec<f64>) -> Result<Environment> {
        let n = mu0.len();
        Environment::new(
            0,
            Shape::new(vec![n])?,
            Shape::new(vec![2])?,
            arr1(&mu0).into_dyn(),
            1.0,
            move |_, _| ArrayD::zeros(IxDyn(&[n, 2])),
            move |_, _| ArrayD::zeros(IxDyn(&[n, n, 2])),
        )
    }

    #[test]
    fn shape_ravel_roundtrip() {
        let s = Shape::new(vec![2, 3, 4]).unwrap();
        for flat in 0..s.size() {
            assert_eq!(s.ravel(&s.unravel(flat)), Some(flat));
        }
        assert_eq!(s.unravel(23), vec![1, 2, 3]);
        assert_eq!(s.ravel(&[0, 3, 0]), None);
        assert!(Shape::new(vec![]).is_err());
        assert!(Shape::new(vec![2, 0]).is_err());
    }

    #[test]
    fn rejects_bad_mu0() {
        assert!(matches!(
            trivial_env(vec![0.5, 0.6]),
            Err(MfgError::InvalidInitialDistribution(_))
        ));
        assert!(matches!(
            trivial_env(vec![1.5, -0.5]),
            Err(MfgError::InvalidInitialDistribution(_))
        ));
        assert!(trivial_env(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::new(Array::from_elem((2, 2, 2), 0.5)).is_ok());
        assert!(Policy::new(Array::from_elem((2, 2, 2), 0.4)).is_err());
        let mut pi = Array::from_elem((1, 1, 2), 0.5);
        pi[[0, 0, 0]] = f64::NAN;
        assert!(Policy::new(pi).is_err());
    }

    #[test]
    fn flow_validation() {
        assert!(MeanFieldFlow::new(Array::from_elem((2, 2, 2), 0.25)).is_ok());
        assert!(matches!(
            MeanFieldFlow::new(Array::from_elem((2, 2, 2), 0.5)),
            Err(MfgError::InvalidFlow(_))
        ));
    }

    #[test]
    fn uniform_policy_entries() {
        let env = trivial_env(vec![1.0]).unwrap();
        let pi = Policy::uniform(&env);
        assert!(pi.array().iter().all(|&p| p == 0.5));
        assert!(Policy::new(pi.array().clone()).is_ok());
    }

    #[test]
    fn callable_shape_is_checked() {
        let env = Environment::new(
            0,
            Shape::new(vec![2]).unwrap(),
            Shape::new(vec![2]).unwrap(),
            arr1(&[1.0, 0.0]).into_dyn(),
            1.0,
            |_, _| ArrayD::zeros(IxDyn(&[3])),
            |_, _| ArrayD::zeros(IxDyn(&[2, 2, 2])),
        )
        .unwrap();
        let lt = Array2::from_elem((2, 2), 0.25);
        assert!(matches!(env.reward(0, lt.view()), Err(MfgError::ShapeMismatch { .. })));
    }

    #[test]
    fn nd_roundtrip_keeps_axes() {
        let env = Environment::new(
            1,
            Shape::new(vec![2, 3]).unwrap(),
            Shape::new(vec![2]).unwrap(),
            ArrayD::from_elem(IxDyn(&[2, 3]), 1.0 / 6.0),
            1.0,
            |_, l| ArrayD::zeros(l.raw_dim()),
            |_, _| ArrayD::from_elem(IxDyn(&[2, 3, 2, 3, 2]), 1.0 / 6.0),
        )
        .unwrap();
        let pi = Policy::uniform(&env);
        let nd = pi.to_nd(&env).unwrap();
        assert_eq!(nd.shape(), &[2, 2, 3, 2]);
        assert_eq!(Policy::from_nd(&env, nd.view()).unwrap(), pi);
    }
}
