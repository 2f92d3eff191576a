//! Mean-field occupation measure optimization.
//!
//! The equilibrium conditions are written over a free occupation measure
//! `L`, a value variable `y` and a Bellman-gap slack `z >= 0`:
//!
//! ```text
//! f(L, y, z) = c1 ‖A_L L − b‖² + c2 ‖A_Lᵀ y − z − c_L‖² + c3 ⟨z, L⟩
//! ```
//!
//! The first residual is flow consistency of `L` (rows `(t, s)`), the second
//! is dual feasibility with `z = V − Q` (entries `(t, s, a)`), the third is
//! complementary slackness. `f >= 0`, and `f = 0` certifies an equilibrium.
//! Rewards and kernels are evaluated at `L` itself, so the gradient includes
//! the population sensitivities of the environment.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dynamics::{induced_mean_field, policy_from_mean_field, push_forward};
use crate::error::{MfgError, Result};
use crate::model::{Environment, MeanFieldFlow, Policy};

use super::{project_simplex, IterativeSolver};

/// Penalty weights of the three objective terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfomoWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for MfomoWeights {
    fn default() -> Self {
        MfomoWeights { c1: 1.0, c2: 1.0, c3: 1.0 }
    }
}

/// Optimization variables with their box caps.
#[derive(Clone, Debug, PartialEq)]
pub struct MfomoPoint {
    pub l: Array3<f64>,
    pub y: Array2<f64>,
    pub z: Array3<f64>,
    pub y_cap: f64,
    pub z_cap: f64,
}

impl MfomoPoint {
    /// `y_cap = (T+1) r_max`, `z_cap = 2 (T+1) r_max`.
    pub fn caps(env: &Environment) -> (f64, f64) {
        let y_cap = env.stages() as f64 * env.r_max();
        (y_cap, 2.0 * y_cap)
    }

    /// Flow of the uniform policy, `y = 0`, `z = 0`.
    pub fn initial(env: &Environment) -> Result<Self> {
        let l = induced_mean_field(env, &Policy::uniform(env))?.into_array();
        let (y_cap, z_cap) = Self::caps(env);
        Ok(MfomoPoint {
            y: Array2::zeros((env.stages(), env.n_states())),
            z: Array3::zeros(l.raw_dim()),
            l,
            y_cap,
            z_cap,
        })
    }

    /// A point from explicit variables; shapes and feasibility are checked.
    pub fn new(env: &Environment, l: Array3<f64>, y: Array2<f64>, z: Array3<f64>) -> Result<Self> {
        let flow = MeanFieldFlow::new(l)?;
        flow.check_compatible(env)?;
        let l = flow.into_array();
        let (y_cap, z_cap) = Self::caps(env);
        if y.dim() != (env.stages(), env.n_states()) {
            return Err(MfgError::ShapeMismatch {
                what: "MFOMO y".into(),
                expected: vec![env.stages(), env.n_states()],
                actual: y.shape().to_vec(),
            });
        }
        if z.dim() != l.dim() {
            return Err(MfgError::ShapeMismatch {
                what: "MFOMO z".into(),
                expected: l.shape().to_vec(),
                actual: z.shape().to_vec(),
            });
        }
        if y.iter().any(|v| !(v.abs() <= y_cap)) {
            return Err(MfgError::param("y", format!("entries must lie in [-{y_cap}, {y_cap}]")));
        }
        if z.iter().any(|v| !(*v >= 0.0 && *v <= z_cap)) {
            return Err(MfgError::param("z", format!("entries must lie in [0, {z_cap}]")));
        }
        Ok(MfomoPoint { l, y, z, y_cap, z_cap })
    }

    pub fn flow(&self) -> MeanFieldFlow {
        MeanFieldFlow::from_array_unchecked(self.l.clone())
    }
}

/// Partial derivatives of the objective, one block per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct MfomoGradient {
    pub l: Array3<f64>,
    pub y: Array2<f64>,
    pub z: Array3<f64>,
}

struct Residuals {
    transitions: Vec<Array3<f64>>,
    /// flow consistency, `(t, s)`
    primal: Array2<f64>,
    /// dual feasibility, `(t, s, a)`
    dual: Array3<f64>,
}

fn residuals(env: &Environment, p: &MfomoPoint) -> Result<Residuals> {
    let stages = env.stages();
    let (ns, na) = (env.n_states(), env.n_actions());
    if p.l.dim() != (stages, ns, na) || p.z.dim() != p.l.dim() || p.y.dim() != (stages, ns) {
        return Err(MfgError::ShapeMismatch {
            what: "MFOMO point".into(),
            expected: vec![stages, ns, na],
            actual: p.l.shape().to_vec(),
        });
    }
    let stage = |t: usize| p.l.index_axis(Axis(0), t);
    let rewards = (0..stages)
        .map(|t| env.reward_unchecked(t, stage(t)))
        .collect::<Result<Vec<_>>>()?;
    let transitions = (0..env.horizon())
        .map(|t| env.transition_unchecked(t, stage(t)))
        .collect::<Result<Vec<_>>>()?;

    let mut primal = p.l.sum_axis(Axis(2));
    primal.row_mut(0).scaled_add(-1.0, env.mu0());
    for t in 1..stages {
        let pushed = push_forward(&transitions[t - 1], stage(t - 1));
        primal.row_mut(t).scaled_add(-1.0, &pushed);
    }

    let mut dual = Array3::zeros((stages, ns, na));
    for t in 0..stages {
        for s in 0..ns {
            for a in 0..na {
                let mut cont = 0.0;
                if t < env.horizon() {
                    let pt = &transitions[t];
                    for sn in 0..ns {
                        cont += pt[[sn, s, a]] * p.y[[t + 1, sn]];
                    }
                }
                dual[[t, s, a]] = p.y[[t, s]] - cont - p.z[[t, s, a]] - rewards[t][[s, a]];
            }
        }
    }
    Ok(Residuals { transitions, primal, dual })
}

fn value(w: &MfomoWeights, p: &MfomoPoint, r: &Residuals) -> f64 {
    let sq = |x: f64| x * x;
    w.c1 * r.primal.iter().map(|&x| sq(x)).sum::<f64>()
        + w.c2 * r.dual.iter().map(|&x| sq(x)).sum::<f64>()
        + w.c3 * p.z.iter().zip(p.l.iter()).map(|(z, l)| z * l).sum::<f64>()
}

/// The MFOMO objective. Defined for any `L`, feasible or not.
pub fn mfomo_objective(env: &Environment, point: &MfomoPoint, weights: &MfomoWeights) -> Result<f64> {
    let r = residuals(env, point)?;
    Ok(value(weights, point, &r))
}

const SENSITIVITY_STEP: f64 = 1e-6;

/// Central-difference vector-Jacobian product of an opaque map of `L_t`.
fn numerical_vjp<F>(lt: ArrayView2<'_, f64>, upstream: &[f64], mut f: F) -> Result<Array2<f64>>
where
    F: FnMut(ArrayView2<'_, f64>) -> Result<Vec<f64>>,
{
    let mut out = Array2::zeros(lt.raw_dim());
    let mut probe = lt.to_owned();
    for idx in 0..lt.len() {
        let (s, a) = (idx / lt.ncols(), idx % lt.ncols());
        let orig = probe[[s, a]];
        probe[[s, a]] = orig + SENSITIVITY_STEP;
        let plus = f(probe.view())?;
        probe[[s, a]] = orig - SENSITIVITY_STEP;
        let minus = f(probe.view())?;
        probe[[s, a]] = orig;
        out[[s, a]] = upstream
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(g, (hi, lo))| g * (hi - lo))
            .sum::<f64>()
            / (2.0 * SENSITIVITY_STEP);
    }
    Ok(out)
}

/// Objective value and its exact gradient in `(L, y, z)`.
///
/// Population sensitivities come from the environment's exact
/// vector-Jacobian products when available, else from central differences
/// of its callables.
pub fn mfomo_gradient(env: &Environment, p: &MfomoPoint, w: &MfomoWeights) -> Result<(f64, MfomoGradient)> {
    let res = residuals(env, p)?;
    let f = value(w, p, &res);
    let stages = env.stages();
    let (ns, na) = (env.n_states(), env.n_actions());
    let (e, d) = (&res.primal, &res.dual);

    let gz = &p.l * w.c3 - d * (2.0 * w.c2);

    let mut gy = d.sum_axis(Axis(2)) * (2.0 * w.c2);
    for t in 1..stages {
        let pt = &res.transitions[t - 1];
        for s in 0..ns {
            let mut acc = 0.0;
            for s2 in 0..ns {
                for a in 0..na {
                    acc += d[[t - 1, s2, a]] * pt[[s, s2, a]];
                }
            }
            gy[[t, s]] -= 2.0 * w.c2 * acc;
        }
    }

    let mut gl = &p.z * w.c3;
    for t in 0..stages {
        let lt = p.l.index_axis(Axis(0), t);
        let mut glt = gl.index_axis_mut(Axis(0), t);
        for s in 0..ns {
            for a in 0..na {
                glt[[s, a]] += 2.0 * w.c1 * e[[t, s]];
            }
        }
        if t < env.horizon() {
            let pt = &res.transitions[t];
            for s in 0..ns {
                for a in 0..na {
                    let mut acc = 0.0;
                    for sn in 0..ns {
                        acc += e[[t + 1, sn]] * pt[[sn, s, a]];
                    }
                    glt[[s, a]] -= 2.0 * w.c1 * acc;
                }
            }
        }

        // through r_t(L_t)
        let g_r = d.index_axis(Axis(0), t).mapv(|x| -2.0 * w.c2 * x);
        let via_r = match env.reward_vjp(t, lt, g_r.view()) {
            Some(v) => v?,
            None => numerical_vjp(lt, g_r.as_slice().expect("owned"), |l| {
                Ok(env.reward_unchecked(t, l)?.into_raw_vec_and_offset().0)
            })?,
        };
        glt += &via_r;

        // through P_t(L_t)
        if t < env.horizon() {
            let mut g_p = Array3::zeros((ns, ns, na));
            for sn in 0..ns {
                for s in 0..ns {
                    for a in 0..na {
                        g_p[[sn, s, a]] = -2.0 * w.c1 * e[[t + 1, sn]] * lt[[s, a]]
                            - 2.0 * w.c2 * d[[t, s, a]] * p.y[[t + 1, sn]];
                    }
                }
            }
            let via_p = match env.transition_vjp(t, lt, g_p.view()) {
                Some(v) => v?,
                None => numerical_vjp(lt, g_p.as_slice().expect("owned"), |l| {
                    Ok(env.transition_unchecked(t, l)?.into_raw_vec_and_offset().0)
                })?,
            };
            glt += &via_p;
        }
    }

    Ok((f, MfomoGradient { l: gl, y: gy, z: gz }))
}

/// One projected-gradient step with step size `lr`.
pub(crate) fn projected_step(p: &MfomoPoint, g: &MfomoGradient, lr: f64) -> MfomoPoint {
    let mut l = &p.l - &(&g.l * lr);
    for mut lt in l.outer_iter_mut() {
        let flat: Vec<f64> = lt.iter().copied().collect();
        for (dst, src) in lt.iter_mut().zip(project_simplex(&flat)) {
            *dst = src;
        }
    }
    let y = (&p.y - &(&g.y * lr)).mapv(|v| v.clamp(-p.y_cap, p.y_cap));
    let z = (&p.z - &(&g.z * lr)).mapv(|v| v.clamp(0.0, p.z_cap));
    MfomoPoint { l, y, z, y_cap: p.y_cap, z_cap: p.z_cap }
}

/// Projected gradient descent on the MFOMO objective. The reported policy
/// is the conditional of the current `L`.
#[derive(Clone, Debug)]
pub struct Mfomo {
    lr: f64,
    weights: MfomoWeights,
    point: MfomoPoint,
    policy: Policy,
}

impl Mfomo {
    pub fn new(env: &Environment, lr: f64, weights: MfomoWeights) -> Result<Self> {
        Self::from_point(MfomoPoint::initial(env)?, lr, weights)
    }

    /// Starts from an explicit point.
    pub fn from_point(point: MfomoPoint, lr: f64, weights: MfomoWeights) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(MfgError::param("lr", format!("must be positive, got {lr}")));
        }
        let policy = policy_from_mean_field(&point.flow());
        Ok(Mfomo { lr, weights, point, policy })
    }

    pub fn point(&self) -> &MfomoPoint {
        &self.point
    }

    pub fn objective(&self, env: &Environment) -> Result<f64> {
        mfomo_objective(env, &self.point, &self.weights)
    }
}

impl IterativeSolver for Mfomo {
    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn step(&mut self, env: &Environment, iteration: usize) -> Result<()> {
        let (f, g) = mfomo_gradient(env, &self.point, &self.weights)?;
        let finite = f.is_finite()
            && g.l.iter().chain(g.y.iter()).chain(g.z.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(MfgError::NonFinite {
                what: "MFOMO objective or gradient".into(),
                iteration,
            });
        }
        self.point = projected_step(&self.point, &g, self.lr);
        self.policy = policy_from_mean_field(&self.point.flow());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use ndarray::array;

    pub(crate) fn left_right_equilibrium(env: &Environment) -> MfomoPoint {
        let l = array![
            [[0.5, 0.5], [0.0, 0.0], [0.0, 0.0]],
            [[0.0, 0.0], [0.25, 0.25], [0.25, 0.25]]
        ];
        let y = array![[-0.5, -0.5, -0.5], [0.0, -0.5, -0.5]];
        MfomoPoint::new(env, l, y, Array3::zeros((2, 3, 2))).unwrap()
    }

    #[test]
    fn equilibrium_certificate_is_zero() {
        let env = zoo::left_right();
        let p = left_right_equilibrium(&env);
        assert!(mfomo_objective(&env, &p, &MfomoWeights::default()).unwrap() <= 1e-12);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let env = zoo::left_right();
        let p = left_right_equilibrium(&env);
        let mut solver = Mfomo::from_point(p.clone(), 0.1, MfomoWeights::default()).unwrap();
        for n in 0..20 {
            solver.step(&env, n).unwrap();
        }
        let q = solver.point();
        assert!((&q.l - &p.l).iter().all(|x| x.abs() < 1e-15));
        assert!((&q.y - &p.y).iter().all(|x| x.abs() < 1e-15));
        assert!(q.z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn feasible_flow_zeroes_consistency_term() {
        let env = zoo::random_linear(2, 3, 3, 2, 0.5).unwrap();
        let mut p = MfomoPoint::initial(&env).unwrap();
        p.y.fill(0.3);
        let only_primal = MfomoWeights { c1: 1.0, c2: 0.0, c3: 0.0 };
        assert!(mfomo_objective(&env, &p, &only_primal).unwrap() < 1e-25);
    }

    #[test]
    fn caps_follow_horizon_and_reward_bound() {
        let env = zoo::left_right();
        assert_eq!(MfomoPoint::caps(&env), (2.0, 4.0));
        let p = left_right_equilibrium(&env);
        let bad = MfomoPoint::new(&env, p.l.clone(), p.y.mapv(|v| v * 10.0), p.z.clone());
        assert!(bad.is_err());
    }

    #[test]
    fn projection_keeps_feasibility() {
        let env = zoo::random_linear(0, 2, 3, 2, 0.5).unwrap();
        let mut solver = Mfomo::new(&env, 0.5, MfomoWeights::default()).unwrap();
        for n in 0..50 {
            solver.step(&env, n).unwrap();
            let p = solver.point();
            for lt in p.l.outer_iter() {
                assert!((lt.sum() - 1.0).abs() < 1e-12);
                assert!(lt.iter().all(|&x| x >= 0.0));
            }
            assert!(p.z.iter().all(|&x| (0.0..=p.z_cap).contains(&x)));
            assert!(p.y.iter().all(|&x| x.abs() <= p.y_cap));
        }
    }

    #[test]
    fn numerical_sensitivity_matches_exact() {
        // same environment with the exact reward sensitivity stripped
        let exact = zoo::beach_bar(zoo::BeachBar { n: 4, bar: 1, horizon: 2, ..Default::default() }).unwrap();
        let numeric = exact
            .clone()
            .with_reward_sensitivity(crate::model::Sensitivity::Numerical)
            .with_transition_sensitivity(crate::model::Sensitivity::Numerical);
        let mut p = MfomoPoint::initial(&exact).unwrap();
        p.y.fill(-0.7);
        p.z.fill(0.1);
        let w = MfomoWeights::default();
        let (_, ga) = mfomo_gradient(&exact, &p, &w).unwrap();
        let (_, gb) = mfomo_gradient(&numeric, &p, &w).unwrap();
        let scale = ga.l.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = (&ga.l - &gb.l).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err <= 1e-6 * scale.max(1.0), "err {err}");
        assert_eq!(ga.y, gb.y);
        assert_eq!(ga.z, gb.z);
    }
}
