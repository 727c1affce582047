//! Downlink resource allocation with pairwise AP coordination.
//!
//! The solver splits the band into patterns. Each pattern fixes which physical APs or
//! cooperating AP pairs transmit, whom they serve and at what power. The bandwidth
//! shares of the patterns are then tuned to minimize the mean packet sojourn time of
//! the UEs' M/M/1 queues (or another concave utility of the service rates).

pub mod baselines;
pub mod channel;
pub mod error;
pub mod extended;
pub mod fp;
pub mod master;
pub mod matching;
pub mod network;
pub mod pursuit;
pub mod rates;
pub mod topology;

pub use baselines::{
    cutoff_sweep, max_rsrp_allocation, run_scenario, sweep_chain, uniform_traffic, CutoffResult, ScenarioKind, ScenarioResult,
    ScenarioRunner, SweepPoint, SweepSpec,
};
pub use channel::{compute_gains, ChannelParams, GainMatrix, PathLoss};
pub use error::{Error, Result};
pub use extended::{build_neighborhoods, enumerate_extended, CoopMode, ExtAp, ExtendedApSet, Neighborhoods};
pub use fp::{affine_value, greedy_pattern, solve_affine, solve_affine_from, AffineSolution, FpOptions, FpSolver, FpState};
pub use master::{margin_prices, solve_beta, solve_beta_from, sparsify, MarginPrices, MasterOptions, MasterSolution};
pub use network::Network;
pub use pursuit::{
    initial_allocation, initial_pattern, pursue, random_pattern, PatternSet, Progress, Pursuit, PursuitOptions, PursuitResult,
};
pub use rates::{
    allocation_rates, combine_rates, pattern_rates, spectral_efficiency, utility, utility_gradient, Allocation, Link, Pattern, RateVector,
    TrafficProfile, UtilityKind, UtilitySpec,
};
pub use topology::{generate_topology, Topology};
