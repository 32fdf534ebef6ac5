//! Discrete-time realization of fleet plans: vehicles move along their
//! branches, engage RSUs during the planned slices of their coverage
//! windows, and receive at rates driven by the live per-RSU occupancy.
//!
//! Time advances in steps of the scenario's `time_step_s`. Within a step,
//! reception is accounted with exact interval overlaps, so contention-free
//! deliveries do not depend on the step size; occupancy (and with it the
//! realized interference) is sampled once per step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel;
use crate::model::{Scenario, JOULES_PER_KWH};
use crate::scheduler::{plan_all, Algorithm, PlanOutcome};

/// Simulation switches beyond the scenario itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct EngineOptions {
    /// Compute rates as if every vehicle were alone at its RSU.
    pub disable_contention: bool,
}

/// Per-vehicle outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub vehicle_id: u32,
    /// The full map demand was delivered.
    pub completed: bool,
    /// The plan fell back to the basic layers.
    pub degraded: bool,
    /// Driving alone exceeds the battery; the vehicle never engaged.
    pub stranded: bool,
    /// Ran out of receive budget mid-transfer.
    pub energy_exhausted: bool,
    /// Demand the plan aimed for (full, basic, or the capacity bound).
    pub target_mb: f64,
    pub demand_full_mb: f64,
    pub delivered_mb: f64,
    pub transmission_time_s: f64,
    /// RSUs that delivered data to this vehicle, in first-use order.
    pub rsus_used: Vec<u32>,
}

/// One simulation run: per-vehicle records plus per-RSU access counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub algorithm: String,
    pub seed: u64,
    pub vehicles: Vec<VehicleRecord>,
    /// Distinct vehicles served, for every RSU of the scenario.
    pub rsu_access: BTreeMap<u32, u64>,
}

impl SimResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("simulation results are serializable")
    }
}

#[derive(Debug, Clone, Copy)]
struct Engagement {
    rsu_idx: usize,
    start_s: f64,
    end_s: f64,
}

#[derive(Debug)]
struct VehicleState {
    engagements: Vec<Engagement>,
    next: usize,
    target_mb: f64,
    delivered_mb: f64,
    transmission_time_s: f64,
    rx_budget_j: f64,
    done: bool,
    energy_exhausted: bool,
    degraded: bool,
    stranded: bool,
    rsus_used: Vec<u32>,
}

/// A stepping simulation over one scenario and policy.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    options: EngineOptions,
    algorithm: Algorithm,
    time_s: f64,
    states: Vec<VehicleState>,
    /// Per-RSU received-signal term at the lane offset.
    signals: Vec<f64>,
    rsu_ids: Vec<u32>,
    horizon_s: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, algorithm: Algorithm) -> Self {
        Self::with_options(scenario, algorithm, EngineOptions::default())
    }

    pub fn with_options(scenario: &'a Scenario, algorithm: Algorithm, options: EngineOptions) -> Self {
        let fleet = plan_all(scenario, algorithm);
        let rsu_index: BTreeMap<u32, usize> = scenario
            .rsus
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id, i))
            .collect();
        let signals: Vec<f64> = scenario
            .rsus
            .iter()
            .map(|r| channel::signal_term(r.lane_offset_m.max(f64::MIN_POSITIVE), r.tx_power_max_w, &scenario.channel))
            .collect();

        let mut states = Vec::with_capacity(scenario.vehicles.len());
        let mut horizon_s = 0.0f64;
        for (vehicle, (vid, outcome)) in scenario.vehicles.iter().zip(&fleet.outcomes) {
            debug_assert_eq!(vehicle.id, *vid);
            let mut state = VehicleState {
                engagements: Vec::new(),
                next: 0,
                target_mb: 0.0,
                delivered_mb: 0.0,
                transmission_time_s: 0.0,
                rx_budget_j: 0.0,
                done: true,
                energy_exhausted: false,
                degraded: false,
                stranded: matches!(outcome, PlanOutcome::Stranded),
                rsus_used: Vec::new(),
            };
            if let Some(plan) = outcome.plan() {
                state.degraded = plan.degraded;
                state.target_mb = match outcome {
                    PlanOutcome::Planned(_) if plan.degraded => vehicle.demand.basic_mb,
                    PlanOutcome::Planned(_) => vehicle.demand.full_mb,
                    PlanOutcome::Partial { demanded_mb, .. } => *demanded_mb,
                    PlanOutcome::Stranded => unreachable!(),
                };
                let drive_kwh = scenario.energy.drive_rate_kwh_per_km * vehicle.route_length_km;
                state.rx_budget_j =
                    ((vehicle.energy_remaining_kwh - drive_kwh) * JOULES_PER_KWH).max(0.0);

                // Engagements are laid serially along the branch: ETDM slices
                // sit at the middle of each coverage chord, baselines start
                // at window entry; overlapping coverage pushes a slice later
                // and may truncate it at the window exit.
                let mut cursor = 0.0f64;
                for entry in plan.entries.iter().filter(|e| e.engaged) {
                    let rsu_idx = rsu_index[&entry.rsu_id];
                    let rsu = &scenario.rsus[rsu_idx];
                    let half = channel::half_chord_m(rsu);
                    let enter_s =
                        vehicle.entry_time_s + (rsu.position_m - half).max(0.0) / vehicle.speed_mps;
                    let exit_s = vehicle.entry_time_s + (rsu.position_m + half) / vehicle.speed_mps;
                    let desired_start = match algorithm {
                        Algorithm::Etdm => {
                            let mid = 0.5 * (enter_s + exit_s);
                            (mid - 0.5 * entry.time_s).max(enter_s)
                        }
                        Algorithm::Oa | Algorithm::Pta { .. } => enter_s,
                    };
                    let start_s = desired_start.max(cursor);
                    let end_s = (start_s + entry.time_s).min(exit_s);
                    if end_s > start_s {
                        state.engagements.push(Engagement { rsu_idx, start_s, end_s });
                        cursor = end_s;
                        horizon_s = horizon_s.max(end_s);
                    }
                }
                state.done = state.engagements.is_empty() || state.target_mb <= 0.0;
            }
            states.push(state);
        }

        Simulation {
            scenario,
            options,
            algorithm,
            time_s: 0.0,
            states,
            signals,
            rsu_ids: scenario.rsus.iter().map(|r| r.id).collect(),
            horizon_s,
        }
    }

    pub fn now_s(&self) -> f64 {
        self.time_s
    }

    /// (vehicle index, engagement) pairs active in the step starting now.
    fn current_engagements(&self) -> Vec<(usize, Engagement, f64)> {
        let t0 = self.time_s;
        let t1 = self.time_s + self.scenario.time_step_s;
        let mut active = Vec::new();
        for (vi, state) in self.states.iter().enumerate() {
            if state.done {
                continue;
            }
            for eng in &state.engagements[state.next..] {
                if eng.start_s >= t1 {
                    break;
                }
                let overlap = eng.end_s.min(t1) - eng.start_s.max(t0);
                if overlap > 0.0 {
                    active.push((vi, *eng, overlap));
                }
            }
        }
        active
    }

    /// Vehicles engaged with this RSU during the step starting now.
    pub fn occupancy(&self, rsu_id: u32) -> usize {
        let Some(rsu_idx) = self.rsu_ids.iter().position(|&id| id == rsu_id) else {
            return 0;
        };
        self.current_engagements()
            .iter()
            .filter(|(_, eng, _)| eng.rsu_idx == rsu_idx)
            .count()
    }

    /// Advances one time step; returns false once the run is over.
    pub fn step(&mut self) -> bool {
        if self.finished() {
            return false;
        }
        let t1 = self.time_s + self.scenario.time_step_s;

        let active = self.current_engagements();
        let mut occupancy = vec![0usize; self.scenario.rsus.len()];
        for (_, eng, _) in &active {
            occupancy[eng.rsu_idx] += 1;
        }

        for (vi, eng, overlap) in active {
            let state = &mut self.states[vi];
            if state.done {
                continue;
            }
            let signal = self.signals[eng.rsu_idx];
            let interference = if self.options.disable_contention {
                0.0
            } else {
                // Every concurrent receiver of this RSU sits on the same
                // lane, so each contributes the lane-offset signal term.
                (occupancy[eng.rsu_idx] - 1) as f64 * signal
            };
            let rate = channel::rate_from_interference(
                self.scenario.rsus[eng.rsu_idx].bandwidth_mb_s,
                signal,
                interference,
                self.scenario.channel.noise_psd,
            );
            if rate <= 0.0 {
                continue;
            }

            let mut seconds = overlap;
            // Demand bound.
            let to_target = (state.target_mb - state.delivered_mb).max(0.0);
            seconds = seconds.min(to_target / rate);
            // Receive-energy bound.
            let affordable = state.rx_budget_j / self.scenario.energy.rx_power_w;
            if seconds >= affordable {
                seconds = affordable;
                state.energy_exhausted = true;
            }

            if seconds > 0.0 {
                state.delivered_mb += rate * seconds;
                state.transmission_time_s += seconds;
                state.rx_budget_j -= self.scenario.energy.rx_power_w * seconds;
                let rsu_id = self.rsu_ids[eng.rsu_idx];
                if !state.rsus_used.contains(&rsu_id) {
                    state.rsus_used.push(rsu_id);
                }
            }
            if state.delivered_mb >= state.target_mb - 1e-9 || state.energy_exhausted {
                state.done = true;
            }
        }

        for state in &mut self.states {
            while state.next < state.engagements.len() && state.engagements[state.next].end_s <= t1 {
                state.next += 1;
            }
            if state.next == state.engagements.len() {
                state.done = true;
            }
        }

        self.time_s = t1;
        !self.finished()
    }

    fn finished(&self) -> bool {
        self.time_s >= self.horizon_s || self.states.iter().all(|s| s.done)
    }

    /// Runs to completion and collects the result.
    pub fn run(mut self) -> SimResult {
        while self.step() {}

        let mut rsu_access: BTreeMap<u32, u64> =
            self.rsu_ids.iter().map(|&id| (id, 0)).collect();
        let mut vehicles = Vec::with_capacity(self.states.len());
        for (vehicle, state) in self.scenario.vehicles.iter().zip(&self.states) {
            for &rsu_id in &state.rsus_used {
                *rsu_access.get_mut(&rsu_id).expect("rsu ids are indexed") += 1;
            }
            vehicles.push(VehicleRecord {
                vehicle_id: vehicle.id,
                completed: state.delivered_mb >= vehicle.demand.full_mb - 1e-9,
                degraded: state.degraded,
                stranded: state.stranded,
                energy_exhausted: state.energy_exhausted,
                target_mb: state.target_mb,
                demand_full_mb: vehicle.demand.full_mb,
                delivered_mb: state.delivered_mb,
                transmission_time_s: state.transmission_time_s,
                rsus_used: state.rsus_used.clone(),
            });
        }
        SimResult {
            algorithm: self.algorithm.to_string(),
            seed: self.scenario.seed,
            vehicles,
            rsu_access,
        }
    }
}

/// Runs one scenario under one policy; a pure function of its inputs.
pub fn run_scenario(scenario: &Scenario, algorithm: Algorithm) -> SimResult {
    Simulation::new(scenario, algorithm).run()
}

/// [`run_scenario`] with explicit engine options.
pub fn run_scenario_with(scenario: &Scenario, algorithm: Algorithm, options: EngineOptions) -> SimResult {
    Simulation::with_options(scenario, algorithm, options).run()
}
