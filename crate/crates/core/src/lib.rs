//! Time-dependent cohort state-transition models for health-economic
//! evaluation.
//!
//! A [`ModelSpec`] declares states, parameters, transitions, rewards and
//! strategies. From it the crate builds age-dependent (and optionally
//! residence-dependent, via tunnel states) transition arrays, runs the
//! cohort, and reports survival, life expectancy, prevalence and discounted
//! costs and QALYs. On top of that sit incremental cost-effectiveness
//! analysis and probabilistic sensitivity analysis.
//!
//! ```
//! use cstm_core::{Model, ModelVariant};
//!
//! let model = Model::builtin();
//! let totals = model.totals(ModelVariant::SimTime).unwrap();
//! assert_eq!(totals.len(), 4);
//! ```

pub mod cea;
pub mod econ;
pub mod engine;
pub mod epi;
mod error;
pub mod hazards;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod psa;
pub mod transition;
mod validation;

pub use error::{Error, Result};
pub use model::{
    builtin_life_table, builtin_sick_sicker, validate_spec, InitialStateVector, LifeTable,
    ModelSpec, ParameterSet, StateSpace, Strategy, TimeGrid,
};
pub use pipeline::{Model, ModelVariant, StrategyResult, StrategyTotals};
pub use validation::{ValidationReport, Violation};
