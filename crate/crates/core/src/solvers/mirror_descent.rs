use ndarray::{Array3, Axis};

use crate::dynamics::{induced_mean_field, FrozenModel};
use crate::error::{MfgError, Result};
use crate::model::{Environment, Policy};

use super::IterativeSolver;

/// Row-wise softmax over the action axis, max-shifted.
pub fn softmax_rows(y: &Array3<f64>) -> Array3<f64> {
    let mut out = y.clone();
    for mut row in out.lanes_mut(Axis(2)) {
        let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    out
}

/// Online mirror descent: accumulate the current policy's Q-values into
/// `y` and play `softmax(y)`.
#[derive(Clone, Debug)]
pub struct OnlineMirrorDescent {
    alpha: f64,
    cumulative: Array3<f64>,
    policy: Policy,
}

impl OnlineMirrorDescent {
    pub fn new(env: &Environment, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(MfgError::param("alpha", format!("must be positive, got {alpha}")));
        }
        let cumulative = Array3::zeros((env.stages(), env.n_states(), env.n_actions()));
        let policy = Policy::from_array_unchecked(softmax_rows(&cumulative));
        Ok(OnlineMirrorDescent { alpha, cumulative, policy })
    }

    pub fn cumulative_values(&self) -> &Array3<f64> {
        &self.cumulative
    }
}

impl IterativeSolver for OnlineMirrorDescent {
    fn policy(&self) -> &Policy {
        &self.policy
    }

    fn step(&mut self, env: &Environment, iteration: usize) -> Result<()> {
        let flow = induced_mean_field(env, &self.policy)?;
        let q = FrozenModel::new(env, &flow)?.evaluate(&self.policy).q;
        self.cumulative.scaled_add(self.alpha, &q);
        if self.cumulative.iter().any(|x| !x.is_finite()) {
            return Err(MfgError::NonFinite {
                what: "cumulative Q-values".into(),
                iteration: iteration + 1,
            });
        }
        self.policy = Policy::from_array_unchecked(softmax_rows(&self.cumulative));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{exploitability, first_argmax};
    use crate::solvers::{run, SolveSettings};
    use crate::zoo;
    use proptest::prelude::*;

    #[test]
    fn rps_uniform_is_a_fixed_point() {
        let env = zoo::rock_paper_scissors();
        let mut omd = OnlineMirrorDescent::new(&env, 1.0).unwrap();
        let start = omd.policy().clone();
        omd.step(&env, 0).unwrap();
        assert_eq!(omd.policy(), &start);
        assert!(exploitability(&env, omd.policy()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn beach_bar_halves_exploitability() {
        let env = zoo::beach_bar(zoo::BeachBar { n: 5, bar: 2, horizon: 3, ..Default::default() }).unwrap();
        let settings = SolveSettings::default().with_max_iter(300);
        let mut omd = OnlineMirrorDescent::new(&env, 1.0).unwrap();
        let res = run(&env, &settings, &mut omd, |_| {}).unwrap();
        assert!(res.best_exploitability() <= 0.5 * res.exploitabilities[0]);
    }

    #[test]
    fn softmax_handles_large_inputs() {
        let y = Array3::from_shape_vec((1, 1, 3), vec![1e300, 1e300, -1e300]).unwrap();
        let p = softmax_rows(&y);
        assert_eq!(p.as_slice().unwrap(), &[0.5, 0.5, 0.0]);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(ys in prop::collection::vec(-50.0f64..50.0, 4), c in -100.0f64..100.0) {
            let y = Array3::from_shape_vec((1, 1, 4), ys.clone()).unwrap();
            let shifted = y.mapv(|x| x + c);
            let (a, b) = (softmax_rows(&y), softmax_rows(&shifted));
            for (x, z) in a.iter().zip(b.iter()) {
                prop_assert!((x - z).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_preserves_argmax(ys in prop::collection::vec(-20.0f64..20.0, 1..8)) {
            let n = ys.len();
            let y = Array3::from_shape_vec((1, 1, n), ys).unwrap();
            let p = softmax_rows(&y);
            let row_y = y.index_axis(Axis(0), 0);
            let row_p = p.index_axis(Axis(0), 0);
            prop_assert_eq!(first_argmax(row_y.row(0)).0, first_argmax(row_p.row(0)).0);
            prop_assert!((row_p.sum() - 1.0).abs() < 1e-12);
        }
    }
}
