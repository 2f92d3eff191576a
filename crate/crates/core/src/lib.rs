//! # mfgkit
//!
//! Discrete-time, finite-horizon mean-field games on finite state and
//! action spaces.
//!
//! * [`Environment`]: horizon, state/action shapes, initial distribution and
//!   reward/transition maps that depend on the stage and on the population's
//!   state-action distribution `L_t`.
//! * [`dynamics`]: exact mean-field induction, policy evaluation, best
//!   response and [`exploitability`].
//! * [`zoo`]: built-in environments (`left_right`, `beach_bar`,
//!   `rock_paper_scissors`, `random_linear`).
//! * [`solvers`]: fictitious play, online mirror descent, prior descent and
//!   occupation-measure optimization (MFOMO).
//! * [`tuner`]: seeded random-search hyperparameter tuning.
//!
//! ```
//! use mfgkit::{solvers::{Algorithm, SolveSettings}, zoo};
//!
//! let env = zoo::beach_bar(zoo::BeachBar { n: 5, bar: 2, horizon: 3, ..Default::default() }).unwrap();
//! let res = Algorithm::OnlineMirrorDescent { alpha: 1.0 }
//!     .solve(&env, &SolveSettings::default().with_max_iter(50))
//!     .unwrap();
//! assert!(res.best_exploitability() < res.exploitabilities[0]);
//! ```

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod model;
pub mod solvers;
pub mod tuner;
pub mod zoo;

pub use dynamics::{
    best_response, exploitability, induced_mean_field, policy_from_mean_field, policy_q_values,
    uniform_policy, FrozenModel,
};
pub use error::{MfgError, Result};
pub use model::{Environment, MeanFieldFlow, Policy, QFunction, Sensitivity, Shape, PROB_TOL, ZERO_MASS};
pub use solvers::{Algorithm, IterationLog, ParamValue, Params, SolveResult, SolveSettings};
pub use tuner::{Metric, ParamSpace, TuneReport, TuneSettings};
