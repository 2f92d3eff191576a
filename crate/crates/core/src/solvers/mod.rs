//! Equilibrium solvers sharing one iteration loop, stopping rule and
//! result record.
//!
//! Each algorithm is an [`IterativeSolver`] state machine exposing its
//! current policy; [`run`] drives it, records exploitability at the
//! recorded iterations and stops once [`check_stop`] holds or `max_iter`
//! updates have been made.
//!
//! Special cases worth knowing: fictitious play with `alpha = 1` is plain
//! fixed-point (best-response) iteration; GMF-V style value iteration is the
//! same scheme with an exact best-response oracle.

mod fictitious_play;
mod mfomo;
mod mirror_descent;
mod prior_descent;
mod simplex;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::exploitability;
use crate::error::{MfgError, Result};
use crate::model::{Environment, Policy};

pub use fictitious_play::FictitiousPlay;
pub use mfomo::{
    mfomo_gradient, mfomo_objective, Mfomo, MfomoGradient, MfomoPoint, MfomoWeights,
};
pub use mirror_descent::{softmax_rows, OnlineMirrorDescent};
pub use prior_descent::{soft_best_response, PriorDescent};
pub use simplex::project_simplex;

/// Iteration budget, stopping tolerances and snapshot thinning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub max_iter: usize,
    pub atol: f64,
    pub rtol: f64,
    pub record_every: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            max_iter: 300,
            atol: 1e-8,
            rtol: 1e-8,
            record_every: 1,
        }
    }
}

impl SolveSettings {
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tolerances(mut self, atol: f64, rtol: f64) -> Self {
        self.atol = atol;
        self.rtol = rtol;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(MfgError::param("max_iter", "must be positive"));
        }
        for (name, v) in [("atol", self.atol), ("rtol", self.rtol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MfgError::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.record_every == 0 || self.record_every > self.max_iter {
            return Err(MfgError::param(
                "record_every",
                format!("must lie in [1, max_iter={}], got {}", self.max_iter, self.record_every),
            ));
        }
        Ok(())
    }
}

/// `expl_n <= atol + rtol * expl_0`.
pub fn check_stop(settings: &SolveSettings, expl_0: f64, expl_n: f64) -> bool {
    expl_n <= settings.atol + settings.rtol * expl_0
}

/// Snapshots taken at the recorded iterations of a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    /// Iteration index of each snapshot.
    pub iterations: Vec<usize>,
    pub policies: Vec<Policy>,
    pub exploitabilities: Vec<f64>,
    /// Cumulative wall-clock seconds since the solve started.
    pub runtimes: Vec<f64>,
    pub converged: bool,
    /// Number of updates performed: the stopping iteration if converged,
    /// else `max_iter`.
    pub iterations_run: usize,
}

impl SolveResult {
    pub fn final_policy(&self) -> &Policy {
        self.policies.last().expect("iteration 0 is always recorded")
    }

    pub fn final_exploitability(&self) -> f64 {
        *self.exploitabilities.last().expect("iteration 0 is always recorded")
    }

    pub fn best_exploitability(&self) -> f64 {
        self.exploitabilities.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One row of the live iteration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub exploitability: f64,
    pub best_exploitability: f64,
    pub elapsed_s: f64,
}

/// A solver state machine: a current policy and an update rule.
pub trait IterativeSolver {
    /// The policy whose exploitability is the solver's quality signal.
    fn policy(&self) -> &Policy;

    /// Performs update `iteration -> iteration + 1`.
    fn step(&mut self, env: &Environment, iteration: usize) -> Result<()>;
}

/// Drives `solver` under `settings`, calling `observer` on every recorded
/// iteration as soon as it is available.
pub fn run<S, F>(env: &Environment, settings: &SolveSettings, solver: &mut S, mut observer: F) -> Result<SolveResult>
where
    S: IterativeSolver + ?Sized,
    F: FnMut(&IterationLog),
{
    settings.validate()?;
    let start = Instant::now();
    let mut out = SolveResult {
        iterations: Vec::new(),
        policies: Vec::new(),
        exploitabilities: Vec::new(),
        runtimes: Vec::new(),
        converged: false,
        iterations_run: settings.max_iter,
    };
    let mut best = f64::INFINITY;
    for n in 0..=settings.max_iter {
        if n % settings.record_every == 0 || n == settings.max_iter {
            let policy = solver.policy().clone();
            let expl = exploitability(env, &policy)?;
            if !expl.is_finite() {
                return Err(MfgError::NonFinite { what: "exploitability".into(), iteration: n });
            }
            best = best.min(expl);
            let elapsed_s = start.elapsed().as_secs_f64();
            out.iterations.push(n);
            out.policies.push(policy);
            out.exploitabilities.push(expl);
            out.runtimes.push(elapsed_s);
            observer(&IterationLog {
                iteration: n,
                exploitability: expl,
                best_exploitability: best,
                elapsed_s,
            });
            if check_stop(settings, out.exploitabilities[0], expl) {
                out.converged = true;
                out.iterations_run = n;
                break;
            }
        }
        if n == settings.max_iter {
            break;
        }
        solver.step(env, n)?;
    }
    Ok(out)
}

/// A hyperparameter value. `Unset` selects an algorithm's optional mode
/// (classic averaging in fictitious play).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Unset,
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(x) => Some(x),
            ParamValue::Unset => None,
        }
    }

    /// Parses `none`/`unset`, integers and floats.
    pub fn parse(raw: &str) -> Option<Self> {
        let raw = raw.trim();
        if raw.eq_ignore_ascii_case("none") || raw.eq_ignore_ascii_case("unset") {
            return Some(ParamValue::Unset);
        }
        if let Ok(i) = raw.parse::<i64>() {
            return Some(ParamValue::Int(i));
        }
        raw.parse::<f64>().ok().map(ParamValue::Float)
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Unset => f.write_str("unset"),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// A configured algorithm from the registry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    /// `alpha = None` averages with weight `1/(n+2)`; `Some(a)` damps with
    /// constant weight `a`.
    FictitiousPlay { alpha: Option<f64> },
    OnlineMirrorDescent { alpha: f64 },
    PriorDescent { eta: f64, n_inner: usize },
    Mfomo { lr: f64, weights: MfomoWeights },
}

impl Algorithm {
    pub const NAMES: [&'static str; 4] =
        ["fictitious_play", "online_mirror_descent", "prior_descent", "mfomo"];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FictitiousPlay { .. } => "fictitious_play",
            Algorithm::OnlineMirrorDescent { .. } => "online_mirror_descent",
            Algorithm::PriorDescent { .. } => "prior_descent",
            Algorithm::Mfomo { .. } => "mfomo",
        }
    }

    /// Names and defaults of the hyperparameters of `name`.
    pub fn param_defaults(name: &str) -> Result<Vec<(&'static str, ParamValue)>> {
        Ok(match name {
            "fictitious_play" => vec![("alpha", ParamValue::Unset)],
            "online_mirror_descent" => vec![("alpha", ParamValue::Float(1.0))],
            "prior_descent" => vec![("eta", ParamValue::Float(1.0)), ("n_inner", ParamValue::Int(50))],
            "mfomo" => vec![
                ("lr", ParamValue::Float(0.1)),
                ("c1", ParamValue::Float(1.0)),
                ("c2", ParamValue::Float(1.0)),
                ("c3", ParamValue::Float(1.0)),
            ],
            _ => return Err(unknown_algorithm(name)),
        })
    }

    pub fn default_for(name: &str) -> Result<Self> {
        Self::from_params(name, &Params::new())
    }

    /// Builds an algorithm from named hyperparameters; missing ones take
    /// their defaults, unknown names are rejected.
    pub fn from_params(name: &str, params: &Params) -> Result<Self> {
        let defaults = Self::param_defaults(name)?;
        if let Some(bad) = params.keys().find(|k| !defaults.iter().any(|(d, _)| d == k)) {
            return Err(MfgError::Unknown {
                kind: "algorithm parameter",
                name: bad.clone(),
                valid: defaults.iter().map(|(d, _)| d.to_string()).collect(),
            });
        }
        let get = |key: &str| -> ParamValue {
            params.get(key).copied().unwrap_or_else(|| {
                defaults.iter().find(|(d, _)| *d == key).map(|(_, v)| *v).expect("declared")
            })
        };
        let float = |key: &str| -> Result<f64> {
            get(key)
                .as_f64()
                .ok_or_else(|| MfgError::param(key, "a numeric value is required"))
        };
        let positive = |key: &str| -> Result<f64> {
            let v = float(key)?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(MfgError::param(key, format!("must be positive and finite, got {v}")))
            }
        };
        let alg = match name {
            "fictitious_play" => {
                let alpha = get("alpha").as_f64();
                if let Some(a) = alpha {
                    if !(a > 0.0 && a <= 1.0) {
                        return Err(MfgError::param("alpha", format!("must lie in (0, 1], got {a}")));
                    }
                }
                Algorithm::FictitiousPlay { alpha }
            }
            "online_mirror_descent" => Algorithm::OnlineMirrorDescent { alpha: positive("alpha")? },
            "prior_descent" => {
                let n_inner = match get("n_inner") {
                    ParamValue::Int(i) if i >= 1 => i as usize,
                    other => {
                        return Err(MfgError::param("n_inner", format!("must be a positive integer, got {other}")))
                    }
                };
                Algorithm::PriorDescent { eta: positive("eta")?, n_inner }
            }
            "mfomo" => {
                let mut c = [0.0; 3];
                for (slot, key) in c.iter_mut().zip(["c1", "c2", "c3"]) {
                    *slot = float(key)?;
                    if !(*slot >= 0.0 && slot.is_finite()) {
                        return Err(MfgError::param(key, format!("must be finite and >= 0, got {slot}")));
                    }
                }
                Algorithm::Mfomo {
                    lr: positive("lr")?,
                    weights: MfomoWeights { c1: c[0], c2: c[1], c3: c[2] },
                }
            }
            _ => unreachable!("param_defaults rejected unknown names"),
        };
        Ok(alg)
    }

    /// The full hyperparameter assignment, defaults included.
    pub fn params(&self) -> Params {
        let mut p = Params::new();
        match *self {
            Algorithm::FictitiousPlay { alpha } => {
                p.insert("alpha".into(), alpha.map_or(ParamValue::Unset, ParamValue::Float));
            }
            Algorithm::OnlineMirrorDescent { alpha } => {
                p.insert("alpha".into(), ParamValue::Float(alpha));
            }
            Algorithm::PriorDescent { eta, n_inner } => {
                p.insert("eta".into(), ParamValue::Float(eta));
                p.insert("n_inner".into(), ParamValue::Int(n_inner as i64));
            }
            Algorithm::Mfomo { lr, weights } => {
                p.insert("lr".into(), ParamValue::Float(lr));
                p.insert("c1".into(), ParamValue::Float(weights.c1));
                p.insert("c2".into(), ParamValue::Float(weights.c2));
                p.insert("c3".into(), ParamValue::Float(weights.c3));
            }
        }
        p
    }

    /// Fresh solver state for `env`.
    pub fn start(&self, env: &Environment) -> Result<Box<dyn IterativeSolver>> {
        Ok(match *self {
            Algorithm::FictitiousPlay { alpha } => Box::new(FictitiousPlay::new(env, alpha)?),
            Algorithm::OnlineMirrorDescent { alpha } => Box::new(OnlineMirrorDescent::new(env, alpha)?),
            Algorithm::PriorDescent { eta, n_inner } => Box::new(PriorDescent::new(env, eta, n_inner)?),
            Algorithm::Mfomo { lr, weights } => Box::new(Mfomo::new(env, lr, weights)?),
        })
    }

    pub fn solve(&self, env: &Environment, settings: &SolveSettings) -> Result<SolveResult> {
        self.solve_with_log(env, settings, |_| {})
    }

    pub fn solve_with_log<F>(&self, env: &Environment, settings: &SolveSettings, observer: F) -> Result<SolveResult>
    where
        F: FnMut(&IterationLog),
    {
        let mut solver = self.start(env)?;
        run(env, settings, solver.as_mut(), observer)
    }
}

pub(crate) fn unknown_algorithm(name: &str) -> MfgError {
    MfgError::Unknown {
        kind: "algorithm",
        name: name.to_string(),
        valid: Algorithm::NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn solve_fictitious_play(env: &Environment, settings: &SolveSettings, alpha: Option<f64>) -> Result<SolveResult> {
    Algorithm::FictitiousPlay { alpha }.solve(env, settings)
}

pub fn solve_online_mirror_descent(env: &Environment, settings: &SolveSettings, alpha: f64) -> Result<SolveResult> {
    Algorithm::OnlineMirrorDescent { alpha }.solve(env, settings)
}

pub fn solve_prior_descent(env: &Environment, settings: &SolveSettings, eta: f64, n_inner: usize) -> Result<SolveResult> {
    Algorithm::PriorDescent { eta, n_inner }.solve(env, settings)
}

pub fn solve_mfomo(env: &Environment, settings: &SolveSettings, lr: f64, weights: MfomoWeights) -> Result<SolveResult> {
    Algorithm::Mfomo { lr, weights }.solve(env, settings)
}
