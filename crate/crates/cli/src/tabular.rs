//! Population-independent environments stored as dense JSON tables.

use std::path::Path;
use std::sync::Arc;

use mfgkit::{Environment, MeanFieldFlow, Policy, Sensitivity, Shape};
use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// On-disk form of a tabular environment. Arrays are nested row-major:
/// `rewards[t][s...][a...]` for `t = 0..=T` and
/// `transitions[t][s'...][s...][a...]` for `t = 0..T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularEnvFile {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub state_shape: Vec<usize>,
    #[serde(rename = "A")]
    pub action_shape: Vec<usize>,
    pub mu0: Value,
    pub rewards: Value,
    pub transitions: Value,
    pub r_max: f64,
}

/// Nested JSON arrays in row-major order.
pub fn to_nested(a: ArrayViewD<'_, f64>) -> Value {
    if a.ndim() == 0 {
        return Value::from(a[IxDyn(&[])]);
    }
    Value::Array(a.outer_iter().map(to_nested).collect())
}

/// Reads a nested array of the given shape; errors carry the index path of
/// the first offending element, e.g. `rewards[1][0]: expected 3 entries`.
pub fn from_nested(v: &Value, shape: &[usize], what: &str) -> Result<ArrayD<f64>, String> {
    fn walk(v: &Value, shape: &[usize], path: &mut String, out: &mut Vec<f64>) -> Result<(), String> {
        match shape.split_first() {
            None => match v.as_f64() {
                Some(x) if x.is_finite() => {
                    out.push(x);
                    Ok(())
                }
                _ => Err(format!("{path}: expected a finite number, found {v}")),
            },
            Some((&n, rest)) => {
                let items = v.as_array().ok_or_else(|| format!("{path}: expected an array"))?;
                if items.len() != n {
                    return Err(format!("{path}: expected {n} entries, found {}", items.len()));
                }
                for (i, item) in items.iter().enumerate() {
                    let len = path.len();
                    path.push_str(&format!("[{i}]"));
                    walk(item, rest, path, out)?;
                    path.truncate(len);
                }
                Ok(())
            }
        }
    }
    let mut out = Vec::with_capacity(shape.iter().product());
    let mut path = what.to_string();
    walk(v, shape, &mut path, &mut out)?;
    ArrayD::from_shape_vec(IxDyn(shape), out).map_err(|e| format!("{what}: {e}"))
}

impl TabularEnvFile {
    /// Snapshot of `env`'s tables at `flow`. Exact for environments that do
    /// not depend on the population.
    pub fn snapshot(env: &Environment, flow: &MeanFieldFlow) -> CliResult<Self> {
        flow.check_compatible(env).map_err(CliError::from_core)?;
        let s = env.state_shape().dims().to_vec();
        let a = env.action_shape().dims().to_vec();
        let sa: Vec<usize> = s.iter().chain(&a).copied().collect();
        let ssa: Vec<usize> = s.iter().chain(&s).chain(&a).copied().collect();
        let mut rewards = Vec::new();
        let mut transitions = Vec::new();
        for t in 0..env.stages() {
            let r = env.reward(t, flow.stage(t)).map_err(CliError::from_core)?;
            let r = r.into_shape_with_order(IxDyn(&sa)).expect("row-major reward table");
            rewards.push(to_nested(r.view()));
            if t < env.horizon() {
                let p = env.transition(t, flow.stage(t)).map_err(CliError::from_core)?;
                let p = p.into_shape_with_order(IxDyn(&ssa)).expect("row-major transition table");
                transitions.push(to_nested(p.view()));
            }
        }
        let mu0 = env.mu0().clone().into_shape_with_order(IxDyn(&s)).expect("row-major mu0");
        Ok(TabularEnvFile {
            horizon: env.horizon(),
            state_shape: s,
            action_shape: a,
            mu0: to_nested(mu0.view()),
            rewards: Value::Array(rewards),
            transitions: Value::Array(transitions),
            r_max: env.r_max(),
        })
    }

    /// Snapshot at the flow induced by the uniform policy.
    pub fn snapshot_uniform(env: &Environment) -> CliResult<Self> {
        let flow = mfgkit::induced_mean_field(env, &Policy::uniform(env)).map_err(CliError::from_core)?;
        Self::snapshot(env, &flow)
    }

    /// Builds and fully validates the environment.
    pub fn into_environment(self) -> Result<Environment, String> {
        let state = Shape::new(self.state_shape.clone()).map_err(|e| format!("S: {e}"))?;
        let action = Shape::new(self.action_shape.clone()).map_err(|e| format!("A: {e}"))?;
        let s = state.dims().to_vec();
        let sa: Vec<usize> = s.iter().chain(action.dims()).copied().collect();
        let ssa: Vec<usize> = s.iter().chain(&s).chain(action.dims()).copied().collect();
        let with_stages = |k: usize, inner: &[usize]| -> Vec<usize> {
            std::iter::once(k).chain(inner.iter().copied()).collect()
        };
        let mu0 = from_nested(&self.mu0, &s, "mu0")?;
        let rewards = from_nested(&self.rewards, &with_stages(self.horizon + 1, &sa), "rewards")?;
        let transitions = from_nested(&self.transitions, &with_stages(self.horizon, &ssa), "transitions")?;

        let rewards: Arc<Vec<ArrayD<f64>>> = Arc::new(rewards.outer_iter().map(|x| x.to_owned()).collect());
        let transitions: Arc<Vec<ArrayD<f64>>> =
            Arc::new(transitions.outer_iter().map(|x| x.to_owned()).collect());
        let (r_tab, p_tab) = (rewards.clone(), transitions.clone());
        let env = Environment::new(
            self.horizon,
            state,
            action,
            mu0,
            self.r_max,
            move |t, _| r_tab[t].clone(),
            move |t, _| p_tab[t].clone(),
        )
        .map_err(|e| e.to_string())?
        .with_reward_sensitivity(Sensitivity::Independent)
        .with_transition_sensitivity(Sensitivity::Independent);

        let flow = mfgkit::induced_mean_field(&env, &Policy::uniform(&env)).map_err(|e| e.to_string())?;
        for t in 0..env.stages() {
            env.reward(t, flow.stage(t)).map_err(|e| e.to_string())?;
        }
        Ok(env)
    }
}

/// Loads a tabular environment. Every failure (unreadable file, malformed
/// JSON, inconsistent shapes, non-stochastic kernels, rewards above `r_max`)
/// is a data error whose message names the offending location.
pub fn load_tabular_env(path: &Path) -> CliResult<Environment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let file: TabularEnvFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: malformed environment file: {e}", path.display())))?;
    file.into_environment()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_tabular_env(path: &Path, file: &TabularEnvFile) -> CliResult<()> {
    let text = serde_json::to_string_pretty(file).expect("serializable");
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
