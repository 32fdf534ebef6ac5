//! Energy-constrained HD-map data distribution from roadside units (RSUs)
//! to moving vehicles: domain model, channel and energy accounting, the
//! ETDM greedy allocator with its baselines, a discrete-time simulation
//! engine, and metrics aggregation.
//!
//! The crate is organized along the pipeline:
//!
//! * [`model`] — scenario types, validation, seeded generation, trace files
//! * [`feasibility`] — closed-form V2V transfer estimates
//! * [`channel`] — Shannon rates with path loss, interference and Poisson
//!   contention weighting
//! * [`energy`] — drive/receive energy and the demand-gating verdict
//! * [`scheduler`] — ETDM, the OA/PTA baselines, fleet planning, and an
//!   exhaustive minimum-time oracle
//! * [`engine`] — discrete-time execution of fleet plans
//! * [`metrics`] — aggregate statistics and the report CSV schema
//!
//! Everything is deterministic: scenarios embed their seed, and every run
//! is a pure function of (scenario, algorithm).

pub mod channel;
pub mod energy;
pub mod engine;
pub mod feasibility;
pub mod metrics;
pub mod model;
pub mod scheduler;

pub use engine::{run_scenario, run_scenario_with, EngineOptions, SimResult, Simulation};
pub use metrics::{summarize, MetricsReport};
pub use model::{
    generate_scenario, parse_trace, serialize_trace, validate_scenario, AllocationPlan, Branch,
    ChannelParams, EnergyParams, GeneratorParams, MapDemand, PlanEntry, Rsu, Scenario, Vehicle,
};
pub use scheduler::{
    etdm_multi, etdm_single, oa_allocate, oracle_min_time, plan_all, pta_allocate, Algorithm,
    FleetPlan, PlanOutcome, RsuOffer,
};
