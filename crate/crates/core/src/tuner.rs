//! Hyperparameter auto-tuning by seeded random search over a single
//! environment or a suite.
//!
//! A trial samples a configuration, solves every environment of the suite
//! with it and scores the outcomes with one of two metrics:
//!
//! * `shifted_geo_mean`: `exp(mean log(c_i + 1)) − 1`, where `c_i` is the
//!   number of iterations to converge on environment `i`, or `2·max_iter`
//!   if it did not converge;
//! * `failure_rate`: the fraction of environments that did not converge,
//!   ties broken by mean final exploitability.
//!
//! Lower is better for both. Configurations depend only on the seed, so a
//! run without timeout truncation is fully reproducible.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::model::Environment;
use crate::solvers::{unknown_algorithm, Algorithm, ParamValue, Params, SolveSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    /// Uniform (or log-uniform) real in `[low, high]`. With `optional`, a fair
    /// coin first decides whether the parameter is left unset.
    Continuous {
        low: f64,
        high: f64,
        scale: Scale,
        #[serde(default)]
        optional: bool,
    },
    /// Uniform (or log-uniform, rounded) integer in `[low, high]`.
    Integer { low: i64, high: i64, scale: Scale },
    Categorical { choices: Vec<ParamValue> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

/// Independent per-parameter search distributions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn continuous(mut self, name: &str, low: f64, high: f64, scale: Scale) -> Self {
        self.params.push(ParamSpec {
            name: name.into(),
            kind: ParamKind::Continuous { low, high, scale, optional: false },
        });
        self
    }

    pub fn optional_continuous(mut self, name: &str, low: f64, high: f64, scale: Scale) -> Self {
        self.params.push(ParamSpec {
            name: name.into(),
            kind: ParamKind::Continuous { low, high, scale, optional: true },
        });
        self
    }

    pub fn integer(mut self, name: &str, low: i64, high: i64, scale: Scale) -> Self {
        self.params.push(ParamSpec {
            name: name.into(),
            kind: ParamKind::Integer { low, high, scale },
        });
        self
    }

    pub fn categorical(mut self, name: &str, choices: Vec<ParamValue>) -> Self {
        self.params.push(ParamSpec {
            name: name.into(),
            kind: ParamKind::Categorical { choices },
        });
        self
    }

    /// The built-in search space of a registered algorithm.
    pub fn default_for(alg_name: &str) -> Result<Self> {
        Ok(match alg_name {
            "fictitious_play" => ParamSpace::new().optional_continuous("alpha", 1e-3, 1.0, Scale::Log),
            "online_mirror_descent" => ParamSpace::new().continuous("alpha", 1e-2, 1e2, Scale::Log),
            "prior_descent" => ParamSpace::new()
                .continuous("eta", 1e-3, 1e2, Scale::Log)
                .integer("n_inner", 1, 100, Scale::Linear),
            "mfomo" => ParamSpace::new()
                .continuous("lr", 1e-4, 1.0, Scale::Log)
                .continuous("c3", 1e-2, 1e2, Scale::Log),
            _ => return Err(unknown_algorithm(alg_name)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            let bad = |reason: &str| Err(MfgError::param(&p.name, reason.to_string()));
            match &p.kind {
                ParamKind::Continuous { low, high, scale, .. } => {
                    if !(low.is_finite() && high.is_finite() && low <= high) {
                        return bad("range must be finite and nonempty");
                    }
                    if *scale == Scale::Log && *low <= 0.0 {
                        return bad("logarithmic scale needs strictly positive bounds");
                    }
                }
                ParamKind::Integer { low, high, scale } => {
                    if low > high {
                        return bad("range must be nonempty");
                    }
                    if *scale == Scale::Log && *low <= 0 {
                        return bad("logarithmic scale needs strictly positive bounds");
                    }
                }
                ParamKind::Categorical { choices } => {
                    if choices.is_empty() {
                        return bad("needs at least one choice");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Draws one configuration, parameters independently and in declaration
/// order.
pub fn sample_config<R: Rng + ?Sized>(space: &ParamSpace, rng: &mut R) -> Params {
    let mut config = Params::new();
    for p in &space.params {
        let value = match &p.kind {
            ParamKind::Continuous { low, high, scale, optional } => {
                if *optional && rng.gen_bool(0.5) {
                    ParamValue::Unset
                } else {
                    ParamValue::Float(sample_real(rng, *low, *high, *scale))
                }
            }
            ParamKind::Integer { low, high, scale } => ParamValue::Int(match scale {
                Scale::Linear => rng.gen_range(*low..=*high),
                Scale::Log => {
                    let x = sample_real(rng, *low as f64, *high as f64, Scale::Log);
                    (x.round() as i64).clamp(*low, *high)
                }
            }),
            ParamKind::Categorical { choices } => choices[rng.gen_range(0..choices.len())],
        };
        config.insert(p.name.clone(), value);
    }
    config
}

fn sample_real<R: Rng + ?Sized>(rng: &mut R, low: f64, high: f64, scale: Scale) -> f64 {
    if low == high {
        return low;
    }
    match scale {
        Scale::Linear => rng.gen_range(low..high),
        Scale::Log => rng.gen_range(low.ln()..high.ln()).exp(),
    }
}

/// How a configuration fared on one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvOutcome {
    pub converged: bool,
    /// Iterations to the first successful stopping check, else `max_iter`.
    pub iterations: usize,
    /// `None` when the solve errored.
    pub final_exploitability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EnvOutcome {
    fn failed(settings: &SolveSettings, error: String) -> Self {
        EnvOutcome {
            converged: false,
            iterations: settings.max_iter,
            final_exploitability: None,
            error: Some(error),
        }
    }
}

/// Solves every environment of the suite with `config`. Solver failures
/// (including invalid configurations) become failed outcomes; only an
/// unknown algorithm name or an empty suite is an error.
///
/// Environments are solved concurrently; outcomes keep suite order.
pub fn evaluate_config(
    alg_name: &str,
    config: &Params,
    suite: &[Environment],
    settings: &SolveSettings,
) -> Result<Vec<EnvOutcome>> {
    Algorithm::param_defaults(alg_name)?;
    if suite.is_empty() {
        return Err(MfgError::EmptySuite);
    }
    let alg = match Algorithm::from_params(alg_name, config) {
        Ok(alg) => alg,
        Err(e) => return Ok(suite.iter().map(|_| EnvOutcome::failed(settings, e.to_string())).collect()),
    };
    let solve_one = |env: &Environment| match alg.solve(env, settings) {
        Ok(res) => EnvOutcome {
            converged: res.converged,
            iterations: res.iterations_run,
            final_exploitability: Some(res.final_exploitability()),
            error: None,
        },
        Err(e) => EnvOutcome::failed(settings, e.to_string()),
    };
    if suite.len() == 1 {
        return Ok(vec![solve_one(&suite[0])]);
    }
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = suite.iter().map(|env| scope.spawn(move || solve_one(env))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| EnvOutcome::failed(settings, "solver panicked".into())))
            .collect()
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ShiftedGeoMean,
    FailureRate,
}

impl Metric {
    pub const NAMES: [&'static str; 2] = ["shifted_geo_mean", "failure_rate"];
}

impl FromStr for Metric {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted_geo_mean" => Ok(Metric::ShiftedGeoMean),
            "failure_rate" => Ok(Metric::FailureRate),
            _ => Err(MfgError::Unknown {
                kind: "metric",
                name: s.to_string(),
                valid: Metric::NAMES.iter().map(|n| n.to_string()).collect(),
            }),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::ShiftedGeoMean => "shifted_geo_mean",
            Metric::FailureRate => "failure_rate",
        })
    }
}

/// A score compared lexicographically on `(value, tie_break)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub tie_break: f64,
}

impl Score {
    pub fn compare(&self, other: &Score) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.tie_break.total_cmp(&other.tie_break))
    }
}

/// `exp(mean_i log(c_i + 1)) − 1` with `c_i = 2·max_iter` for failures.
pub fn score_shifted_geo_mean(outcomes: &[EnvOutcome], max_iter: usize) -> f64 {
    let costs: Vec<usize> = outcomes
        .iter()
        .map(|o| if o.converged { o.iterations } else { 2 * max_iter })
        .collect();
    shifted_geo_mean(&costs)
}

/// `exp(mean log(c + 1)) − 1`.
pub fn shifted_geo_mean(costs: &[usize]) -> f64 {
    let mean_log = costs.iter().map(|&c| (c as f64 + 1.0).ln()).sum::<f64>() / costs.len() as f64;
    mean_log.exp() - 1.0
}

/// Fraction of unconverged environments; tie-break is the mean final
/// exploitability over environments that did not error (`f64::MAX` if all
/// did).
pub fn score_failure_rate(outcomes: &[EnvOutcome]) -> Score {
    let failures = outcomes.iter().filter(|o| !o.converged).count();
    let expls: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.final_exploitability)
        .filter(|e| e.is_finite())
        .collect();
    let tie_break = if expls.is_empty() {
        f64::MAX
    } else {
        expls.iter().sum::<f64>() / expls.len() as f64
    };
    Score {
        value: failures as f64 / outcomes.len() as f64,
        tie_break,
    }
}

pub fn score(metric: Metric, outcomes: &[EnvOutcome], max_iter: usize) -> Score {
    match metric {
        Metric::ShiftedGeoMean => Score {
            value: score_shifted_geo_mean(outcomes, max_iter),
            tie_break: 0.0,
        },
        Metric::FailureRate => score_failure_rate(outcomes),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub metric: Metric,
    pub n_trials: usize,
    /// Seconds; the trial in flight when it elapses still completes.
    pub timeout: Option<f64>,
    pub seed: u64,
    pub solve: SolveSettings,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings {
            metric: Metric::ShiftedGeoMean,
            n_trials: 20,
            timeout: None,
            seed: 0,
            solve: SolveSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: Params,
    pub outcomes: Vec<EnvOutcome>,
    pub score: Score,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub algorithm: String,
    pub metric: Metric,
    pub best_index: usize,
    pub best_config: Params,
    pub best_score: Score,
    pub history: Vec<TrialRecord>,
}

impl TuneReport {
    /// The tuned algorithm (defaults filled in for parameters the space did
    /// not cover).
    pub fn best_algorithm(&self) -> Result<Algorithm> {
        Algorithm::from_params(&self.algorithm, &self.best_config)
    }
}

/// Random search for the best configuration of `alg_name` on `suite`.
///
/// `space = None` uses [`ParamSpace::default_for`]. At least one trial runs
/// even if the timeout is zero.
pub fn tune(
    alg_name: &str,
    suite: &[Environment],
    space: Option<&ParamSpace>,
    settings: &TuneSettings,
) -> Result<TuneReport> {
    tune_with_observer(alg_name, suite, space, settings, |_| {})
}

/// [`tune`], reporting each finished trial to `observer`.
pub fn tune_with_observer<F>(
    alg_name: &str,
    suite: &[Environment],
    space: Option<&ParamSpace>,
    settings: &TuneSettings,
    mut observer: F,
) -> Result<TuneReport>
where
    F: FnMut(&TrialRecord),
{
    Algorithm::param_defaults(alg_name)?;
    if suite.is_empty() {
        return Err(MfgError::EmptySuite);
    }
    if settings.n_trials == 0 {
        return Err(MfgError::param("n_trials", "must be positive"));
    }
    if let Some(t) = settings.timeout {
        if !(t >= 0.0) {
            return Err(MfgError::param("timeout", format!("must be >= 0, got {t}")));
        }
    }
    settings.solve.validate()?;
    let default_space;
    let space = match space {
        Some(s) => s,
        None => {
            default_space = ParamSpace::default_for(alg_name)?;
            &default_space
        }
    };
    space.validate()?;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut history: Vec<TrialRecord> = Vec::with_capacity(settings.n_trials);
    let mut best: Option<usize> = None;
    for index in 0..settings.n_trials {
        if index > 0 {
            if let Some(limit) = settings.timeout {
                if start.elapsed().as_secs_f64() >= limit {
                    break;
                }
            }
        }
        let trial_start = Instant::now();
        let config = sample_config(space, &mut rng);
        let outcomes = evaluate_config(alg_name, &config, suite, &settings.solve)?;
        let score = score(settings.metric, &outcomes, settings.solve.max_iter);
        let record = TrialRecord {
            index,
            config,
            outcomes,
            score,
            wall_time_s: trial_start.elapsed().as_secs_f64(),
        };
        observer(&record);
        if best.is_none_or(|b| score.compare(&history[b].score) == Ordering::Less) {
            best = Some(index);
        }
        history.push(record);
    }
    let best_index = best.expect("at least one trial runs");
    Ok(TuneReport {
        algorithm: alg_name.to_string(),
        metric: settings.metric,
        best_index,
        best_config: history[best_index].config.clone(),
        best_score: history[best_index].score,
        history,
    })
}
