//! Ready-to-use environments, addressable by name through [`make`].
//!
//! | name                  | parameters                                              |
//! |-----------------------|---------------------------------------------------------|
//! | `left_right`          | none                                                    |
//! | `beach_bar`           | `n=10 bar=5 noise=0.1 T=5 log_eps=0.001`                |
//! | `rock_paper_scissors` | none                                                    |
//! | `random_linear`       | `seed=0 T=2 n_states=3 n_actions=2 coupling=0.5`        |
//!
//! Every built-in ships exact reward sensitivities, so the occupation-measure
//! solver never falls back to numerical differentiation on them.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{arr1, Array1, Array2, Array3, Array5, ArrayD, ArrayViewD, Ix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MfgError, Result};
use crate::model::{Environment, Sensitivity, Shape};

fn as2(l: ArrayViewD<'_, f64>) -> ndarray::ArrayView2<'_, f64> {
    l.into_dimensionality::<Ix2>().expect("built-in spaces are one-dimensional")
}

fn marginal(l: &ndarray::ArrayView2<'_, f64>, s: usize) -> f64 {
    l.row(s).sum()
}

/// Deterministic kernel where action `a` leads to state `target(a)` from
/// every state.
fn action_kernel(ns: usize, na: usize, target: impl Fn(usize) -> usize) -> ArrayD<f64> {
    let mut p = Array3::<f64>::zeros((ns, ns, na));
    for s in 0..ns {
        for a in 0..na {
            p[[target(a), s, a]] = 1.0;
        }
    }
    p.into_dyn()
}

fn shape1(n: usize) -> Shape {
    Shape::new(vec![n]).expect("positive")
}

/// Three states `{0: init, 1: left, 2: right}`, two actions (`0` left,
/// `1` right), one transition. At stage 1 each side pays minus its own
/// population mass; stage 0 pays nothing.
pub fn left_right() -> Environment {
    const LEFT: usize = 1;
    const RIGHT: usize = 2;
    let reward = |t: usize, l: ArrayViewD<'_, f64>| {
        let l = as2(l);
        let mut r = Array2::<f64>::zeros((3, 2));
        if t == 1 {
            for s in [LEFT, RIGHT] {
                let m = marginal(&l, s);
                r.row_mut(s).fill(-m);
            }
        }
        r.into_dyn()
    };
    let vjp = |t: usize, _l: ArrayViewD<'_, f64>, g: ArrayViewD<'_, f64>| {
        let g = as2(g);
        let mut out = Array2::<f64>::zeros((3, 2));
        if t == 1 {
            for s in [LEFT, RIGHT] {
                let gs = g.row(s).sum();
                out.row_mut(s).fill(-gs);
            }
        }
        out.into_dyn()
    };
    let kernel = action_kernel(3, 2, |a| if a == 0 { LEFT } else { RIGHT });
    Environment::new(
        1,
        shape1(3),
        shape1(2),
        arr1(&[1.0, 0.0, 0.0]).into_dyn(),
        1.0,
        reward,
        move |_, _| kernel.clone(),
    )
    .expect("left_right is well formed")
    .with_reward_sensitivity(Sensitivity::Exact(Arc::new(vjp)))
    .with_transition_sensitivity(Sensitivity::Independent)
}

/// Four states `{0: init, 1: R, 2: P, 3: S}`; action `i` moves to state
/// `i + 1`. At stage 1 a state earns the mass it beats minus the mass that
/// beats it.
pub fn rock_paper_scissors() -> Environment {
    // (beats, beaten_by) for R, P, S
    const TABLE: [(usize, usize); 3] = [(3, 2), (1, 3), (2, 1)];
    let reward = |t: usize, l: ArrayViewD<'_, f64>| {
        let l = as2(l);
        let mut r = Array2::<f64>::zeros((4, 3));
        if t == 1 {
            for (i, &(win, lose)) in TABLE.iter().enumerate() {
                let v = marginal(&l, win) - marginal(&l, lose);
                r.row_mut(i + 1).fill(v);
            }
        }
        r.into_dyn()
    };
    let vjp = |t: usize, _l: ArrayViewD<'_, f64>, g: ArrayViewD<'_, f64>| {
        let g = as2(g);
        let mut out = Array2::<f64>::zeros((4, 3));
        if t == 1 {
            for (i, &(win, lose)) in TABLE.iter().enumerate() {
                let gi = g.row(i + 1).sum();
                out.row_mut(win).mapv_inplace(|x| x + gi);
                out.row_mut(lose).mapv_inplace(|x| x - gi);
            }
        }
        out.into_dyn()
    };
    let kernel = action_kernel(4, 3, |a| a + 1);
    Environment::new(
        1,
        shape1(4),
        shape1(3),
        arr1(&[1.0, 0.0, 0.0, 0.0]).into_dyn(),
        1.0,
        reward,
        move |_, _| kernel.clone(),
    )
    .expect("rock_paper_scissors is well formed")
    .with_reward_sensitivity(Sensitivity::Exact(Arc::new(vjp)))
    .with_transition_sensitivity(Sensitivity::Independent)
}

/// Parameters of [`beach_bar`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeachBar {
    pub n: usize,
    pub bar: usize,
    pub noise: f64,
    pub horizon: usize,
    pub log_eps: f64,
}

impl Default for BeachBar {
    fn default() -> Self {
        BeachBar {
            n: 10,
            bar: 5,
            noise: 0.1,
            horizon: 5,
            log_eps: 1e-3,
        }
    }
}

/// Positions `0..n` on a beach with a bar at `bar`. Actions move
/// `{-1, 0, +1}` (clipped); with probability `noise` the move is replaced
/// by a uniformly random one. The reward is distance to the bar plus a
/// log-congestion penalty, `-|s - bar|/n - ln(m_t(s) + log_eps)`.
pub fn beach_bar(p: BeachBar) -> Result<Environment> {
    let BeachBar {
        n,
        bar,
        noise,
        horizon,
        log_eps,
    } = p;
    if n < 2 {
        return Err(MfgError::param("n", format!("must be at least 2, got {n}")));
    }
    if bar >= n {
        return Err(MfgError::param("bar", format!("must lie in [0, {}], got {bar}", n - 1)));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(MfgError::param("noise", format!("must lie in [0, 1], got {noise}")));
    }
    if horizon < 1 {
        return Err(MfgError::param("T", "must be at least 1"));
    }
    if !(log_eps > 0.0 && log_eps.is_finite()) {
        return Err(MfgError::param("log_eps", format!("must be positive, got {log_eps}")));
    }

    let step = move |s: usize, a: usize| (s + a).saturating_sub(1).min(n - 1);
    let mut kernel = Array3::<f64>::zeros((n, n, 3));
    for s in 0..n {
        for a in 0..3 {
            kernel[[step(s, a), s, a]] += 1.0 - noise;
            for b in 0..3 {
                kernel[[step(s, b), s, a]] += noise / 3.0;
            }
        }
    }
    let kernel = kernel.into_dyn();

    let nf = n as f64;
    let reward = move |_t: usize, l: ArrayViewD<'_, f64>| {
        let l = as2(l);
        let mut r = Array2::<f64>::zeros((n, 3));
        for s in 0..n {
            let v = -(s.abs_diff(bar) as f64) / nf - (marginal(&l, s) + log_eps).ln();
            r.row_mut(s).fill(v);
        }
        r.into_dyn()
    };
    let vjp = move |_t: usize, l: ArrayViewD<'_, f64>, g: ArrayViewD<'_, f64>| {
        let (l, g) = (as2(l), as2(g));
        let mut out = Array2::<f64>::zeros((n, 3));
        for s in 0..n {
            let d = -g.row(s).sum() / (marginal(&l, s) + log_eps);
            out.row_mut(s).fill(d);
        }
        out.into_dyn()
    };
    // Congestion term lies in [-ln(1 + eps), -ln(eps)].
    let r_max = 1.0 + log_eps.ln().abs().max(log_eps.ln_1p());
    Ok(Environment::new(
        horizon,
        shape1(n),
        shape1(3),
        Array1::from_elem(n, 1.0 / nf).into_dyn(),
        r_max,
        reward,
        move |_, _| kernel.clone(),
    )?
    .with_reward_sensitivity(Sensitivity::Exact(Arc::new(vjp)))
    .with_transition_sensitivity(Sensitivity::Independent))
}

/// A seeded environment with population-independent random kernels and
/// rewards affine in the population:
/// `r_t[s,a] = R0[t,s,a] + coupling · Σ W[t,s,a,s',a'] L_t[s',a']`.
///
/// Draw order from `ChaCha8Rng::seed_from_u64(seed)`: `R0` (row-major),
/// then the `T` kernels (row-major, before normalization), then `W`.
pub fn random_linear(
    seed: u64,
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    coupling: f64,
) -> Result<Environment> {
    if n_states == 0 {
        return Err(MfgError::param("n_states", "must be at least 1"));
    }
    if n_actions == 0 {
        return Err(MfgError::param("n_actions", "must be at least 1"));
    }
    if !coupling.is_finite() {
        return Err(MfgError::param("coupling", "must be finite"));
    }
    let (ns, na, stages) = (n_states, n_actions, horizon + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let base = Array3::from_shape_simple_fn((stages, ns, na), || rng.gen_range(-1.0..1.0));
    let mut kernels = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut p = Array3::from_shape_simple_fn((ns, ns, na), || rng.gen_range(0.05..1.0));
        for s in 0..ns {
            for a in 0..na {
                let total: f64 = (0..ns).map(|sn| p[[sn, s, a]]).sum();
                for sn in 0..ns {
                    p[[sn, s, a]] /= total;
                }
            }
        }
        kernels.push(p.into_dyn());
    }
    let weights: Array5<f64> =
        Array5::from_shape_simple_fn((stages, ns, na, ns, na), || rng.gen_range(-1.0..1.0));
    let w_max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let r_max = 1.0 + coupling.abs() * w_max;

    let weights = Arc::new(weights);
    let w = Arc::clone(&weights);
    let reward = move |t: usize, l: ArrayViewD<'_, f64>| {
        let l = as2(l);
        let mut r = base.index_axis(ndarray::Axis(0), t).to_owned();
        if coupling != 0.0 {
            for s in 0..ns {
                for a in 0..na {
                    let mut acc = 0.0;
                    for s2 in 0..ns {
                        for a2 in 0..na {
                            acc += w[[t, s, a, s2, a2]] * l[[s2, a2]];
                        }
                    }
                    r[[s, a]] += coupling * acc;
                }
            }
        }
        r.into_dyn()
    };
    let w = weights;
    let vjp = move |t: usize, _l: ArrayViewD<'_, f64>, g: ArrayViewD<'_, f64>| {
        let g = as2(g);
        let mut out = Array2::<f64>::zeros((ns, na));
        for s in 0..ns {
            for a in 0..na {
                let gsa = coupling * g[[s, a]];
                for s2 in 0..ns {
                    for a2 in 0..na {
                        out[[s2, a2]] += gsa * w[[t, s, a, s2, a2]];
                    }
                }
            }
        }
        out.into_dyn()
    };
    let transition = move |t: usize, _l: ArrayViewD<'_, f64>| kernels[t].clone();

    let reward_sensitivity = if coupling == 0.0 {
        Sensitivity::Independent
    } else {
        Sensitivity::Exact(Arc::new(vjp) as crate::model::RewardVjp)
    };
    Ok(Environment::new(
        horizon,
        shape1(ns),
        shape1(na),
        Array1::from_elem(ns, 1.0 / ns as f64).into_dyn(),
        r_max,
        reward,
        transition,
    )?
    .with_reward_sensitivity(reward_sensitivity)
    .with_transition_sensitivity(Sensitivity::Independent))
}

/// A keyword parameter of a registered environment.
#[derive(Clone, Copy, Debug)]
pub struct EnvParam {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

/// A registered environment constructor.
#[derive(Clone, Copy, Debug)]
pub struct EnvEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [EnvParam],
}

const BEACH_BAR_PARAMS: &[EnvParam] = &[
    EnvParam { name: "n", default: "10", help: "number of positions (>= 2)" },
    EnvParam { name: "bar", default: "5", help: "bar position in [0, n-1]" },
    EnvParam { name: "noise", default: "0.1", help: "probability of a random move, in [0, 1]" },
    EnvParam { name: "T", default: "5", help: "horizon (>= 1)" },
    EnvParam { name: "log_eps", default: "0.001", help: "congestion floor (> 0)" },
];

const RANDOM_LINEAR_PARAMS: &[EnvParam] = &[
    EnvParam { name: "seed", default: "0", help: "generator seed" },
    EnvParam { name: "T", default: "2", help: "horizon (>= 0)" },
    EnvParam { name: "n_states", default: "3", help: "number of states (>= 1)" },
    EnvParam { name: "n_actions", default: "2", help: "number of actions (>= 1)" },
    EnvParam { name: "coupling", default: "0.5", help: "population coupling strength" },
];

pub const REGISTRY: &[EnvEntry] = &[
    EnvEntry {
        name: "left_right",
        summary: "choose a side; each side pays minus its own crowd",
        params: &[],
    },
    EnvEntry {
        name: "beach_bar",
        summary: "walk towards a bar while avoiding crowded spots",
        params: BEACH_BAR_PARAMS,
    },
    EnvEntry {
        name: "rock_paper_scissors",
        summary: "population rock-paper-scissors",
        params: &[],
    },
    EnvEntry {
        name: "random_linear",
        summary: "seeded random kernels, rewards affine in the population",
        params: RANDOM_LINEAR_PARAMS,
    },
];

pub fn names() -> Vec<String> {
    REGISTRY.iter().map(|e| e.name.to_string()).collect()
}

struct Kwargs<'a> {
    env: &'static str,
    values: &'a BTreeMap<String, String>,
}

impl Kwargs<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let entry = REGISTRY.iter().find(|e| e.name == self.env).expect("registered");
        let param = entry.params.iter().find(|p| p.name == key).expect("declared");
        let raw = self.values.get(key).map(String::as_str).unwrap_or(param.default);
        raw.parse()
            .map_err(|_| MfgError::param(key, format!("cannot parse `{raw}` for {}", self.env)))
    }
}

/// Constructs a registered environment from string keyword arguments.
/// Unknown names and unknown keywords are rejected.
pub fn make(name: &str, kwargs: &BTreeMap<String, String>) -> Result<Environment> {
    let entry = REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| MfgError::Unknown {
        kind: "environment",
        name: name.to_string(),
        valid: names(),
    })?;
    if let Some(bad) = kwargs.keys().find(|k| !entry.params.iter().any(|p| p.name == k.as_str())) {
        return Err(MfgError::Unknown {
            kind: "environment parameter",
            name: bad.clone(),
            valid: entry.params.iter().map(|p| p.name.to_string()).collect(),
        });
    }
    let kw = Kwargs { env: entry.name, values: kwargs };
    match entry.name {
        "left_right" => Ok(left_right()),
        "rock_paper_scissors" => Ok(rock_paper_scissors()),
        "beach_bar" => beach_bar(BeachBar {
            n: kw.get("n")?,
            bar: kw.get("bar")?,
            noise: kw.get("noise")?,
            horizon: kw.get("T")?,
            log_eps: kw.get("log_eps")?,
        }),
        "random_linear" => random_linear(
            kw.get("seed")?,
            kw.get("T")?,
            kw.get("n_states")?,
            kw.get("n_actions")?,
            kw.get("coupling")?,
        ),
        _ => unreachable!("registry and constructors agree"),
    }
}
