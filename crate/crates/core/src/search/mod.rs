//! Dropout-mask search: state space, cost, cooling, and the SA/RW loop.

mod anneal;
mod cost;
mod schedule;
mod space;

pub use anneal::{
    run_search, run_search_with, Algorithm, SearchConfig, SearchResult, TraceRecord, TRACE_HEADER,
};
pub use cost::{
    CostEvaluator, CostParams, MemoizedCost, StateCost, DEFAULT_PENALTY, DEFAULT_THRESHOLD,
};
pub use schedule::{
    estimate_initial_temperature, cost_range_t0_bound, mean_acceptance, solve_temperature,
    update_temperature, T0Mode, TemperatureEstimate, TemperatureSchedule, ACCEPTANCE_TOLERANCE,
    DEFAULT_T0_SAMPLES, DEFAULT_TARGET_ACCEPTANCE,
};
pub use space::{binomial, generate_neighbor, random_state, SearchSpaceBounds};

pub use crate::state::DropoutState;
