use ndarray::Array3;

use crate::dynamics::{induced_mean_field, policy_from_mean_field, FrozenModel};
use crate::error::{MfgError, Result};
use crate::model::{Environment, MeanFieldFlow, Policy};

use super::IterativeSolver;

/// (Damped) fictitious play in mean-field form.
///
/// The state is an averaged flow `M`, started at the flow of the uniform
/// policy. Each update best-responds to the flow induced by the current
/// policy `π = policy_from_mean_field(M)` and mixes the best response's
/// own flow into `M` with weight `1/(n+2)` (or the constant `alpha`).
#[derive(Clone, Debug)]
pub struct FictitiousPlay {
    alpha: Option<f64>,
    averaged: MeanFieldFlow,
    policy: Policy,
}

impl FictitiousPlay {
    pub fn new(env: &Environment, alpha: Option<f64>) -> Result<Self> {
        if let Some(a) = alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(MfgError::param("alpha", format!("must lie in (0, 1], got {a}")));
            }
        }
        let averaged = induced_mean_field(env, &Policy::uniform(env))?;
        let policy = policy_from_mean_field(&averaged);
        Ok(FictitiousPlay { alpha, averaged, policy })
    }

    pub fn averaged_flow(&self) -> &MeanFieldFlow {
        &self.averaged
    }

    pub fn weight(&self, iteration: usize) -> f64 {
        self.alpha.unwrap_or(1.0 / (iteration as f64 + 2.0))
    }
}

impl IterativeSolver for FictitiousPlay {
    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn step(&mut self, env: &Environment, iteration: usize) -> Result<()> {
        let flow = induced_mean_field(env, &self.policy)?;
        let (br, _) = FrozenModel::new(env, &flow)?.best_response();
        let br_flow = induced_mean_field(env, &br)?;
        let w = self.weight(iteration);
        let mixed: Array3<f64> = self.averaged.array() * (1.0 - w) + br_flow.array() * w;
        self.averaged = MeanFieldFlow::from_array_unchecked(mixed);
        self.policy = policy_from_mean_field(&self.averaged);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::exploitability;
    use crate::solvers::{run, SolveSettings};
    use crate::zoo;
    use ndarray::Axis;

    #[test]
    fn first_weight_is_one_half() {
        let env = zoo::left_right();
        let fp = FictitiousPlay::new(&env, None).unwrap();
        assert_eq!(fp.weight(0), 0.5);
        assert_eq!(fp.weight(2), 0.25);
        assert_eq!(FictitiousPlay::new(&env, Some(0.3)).unwrap().weight(7), 0.3);
        assert!(FictitiousPlay::new(&env, Some(0.0)).is_err());
    }

    #[test]
    fn undamped_left_right_oscillates() {
        let env = zoo::left_right();
        let mut fp = FictitiousPlay::new(&env, Some(1.0)).unwrap();
        assert!(exploitability(&env, fp.policy()).unwrap().abs() < 1e-12);
        let mut sides = Vec::new();
        for n in 0..6 {
            fp.step(&env, n).unwrap();
            assert!((exploitability(&env, fp.policy()).unwrap() - 1.0).abs() < 1e-12);
            let m = fp.averaged_flow().state_marginal(1);
            sides.push(if m[1] == 1.0 { 'L' } else if m[2] == 1.0 { 'R' } else { '?' });
        }
        assert_eq!(sides.iter().collect::<String>(), "LRLRLR");
    }

    #[test]
    fn averaging_is_convex() {
        let env = zoo::beach_bar(zoo::BeachBar { n: 5, bar: 2, horizon: 3, ..Default::default() }).unwrap();
        let mut fp = FictitiousPlay::new(&env, None).unwrap();
        for n in 0..20 {
            let before = fp.averaged_flow().clone();
            let flow = induced_mean_field(&env, fp.policy()).unwrap();
            let (br, _) = FrozenModel::new(&env, &flow).unwrap().best_response();
            let br_flow = induced_mean_field(&env, &br).unwrap();
            fp.step(&env, n).unwrap();
            let after = fp.averaged_flow();
            for ((m, b), x) in before.array().iter().zip(br_flow.array()).zip(after.array()) {
                assert!(*x >= m.min(*b) - 1e-15 && *x <= m.max(*b) + 1e-15);
            }
            for t in 0..env.stages() {
                assert!((after.array().index_axis(Axis(0), t).sum() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reduces_beach_bar_exploitability() {
        let env = zoo::beach_bar(zoo::BeachBar { n: 5, bar: 2, horizon: 3, ..Default::default() }).unwrap();
        let settings = SolveSettings::default().with_max_iter(200);
        let mut fp = FictitiousPlay::new(&env, None).unwrap();
        let res = run(&env, &settings, &mut fp, |_| {}).unwrap();
        assert!(res.final_exploitability() < 0.2 * res.exploitabilities[0]);
    }
}
