//! Transmission-time allocators: the ETDM greedy fractional-knapsack
//! allocator, the arrival-order (OA) and probabilistic (PTA) baselines, the
//! fleet-level planner with its energy gate, and an exhaustive minimum-time
//! oracle for small instances.
//!
//! ETDM sorts the reachable RSUs by expected rate, consumes whole contact
//! windows from the fastest down, and gives the last engaged RSU only the
//! fractional residue, which makes the plan time-minimal among all
//! allocations respecting the window bounds.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel;
use crate::energy::{self, Verdict};
use crate::model::{AllocationPlan, PlanEntry, Scenario, Vehicle};

/// One reachable RSU as the planner sees it: a Poisson-weighted rate over a
/// bounded contact window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsuOffer {
    pub rsu_id: u32,
    pub expected_rate_mb_s: f64,
    pub window_s: f64,
}

impl RsuOffer {
    pub fn capacity_mb(&self) -> f64 {
        self.expected_rate_mb_s * self.window_s
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    /// The offered windows cannot carry the demand; the boxed plan engages
    /// everything and delivers the stated maximum.
    #[error("insufficient capacity: at most {max_deliverable_mb} MB of {demand_mb} MB deliverable")]
    InsufficientCapacity {
        demand_mb: f64,
        max_deliverable_mb: f64,
        partial: Box<AllocationPlan>,
    },
}

thread_local! {
    static SORT_COMPARISONS: Cell<u64> = const { Cell::new(0) };
}

/// Comparisons spent in allocator sorts on this thread since the last reset.
pub fn sort_comparison_count() -> u64 {
    SORT_COMPARISONS.with(|c| c.get())
}

pub fn reset_sort_comparison_count() {
    SORT_COMPARISONS.with(|c| c.set(0));
}

fn build_plan(offers: &[RsuOffer], times: &[f64]) -> AllocationPlan {
    let mut delivered = 0.0;
    for (o, &t) in offers.iter().zip(times) {
        delivered += o.expected_rate_mb_s * t;
    }
    let entries = offers
        .iter()
        .zip(times)
        .map(|(o, &t)| {
            let data = o.expected_rate_mb_s * t;
            PlanEntry {
                rsu_id: o.rsu_id,
                engaged: t > 0.0,
                time_s: t,
                data_mb: data,
                fraction: if delivered > 0.0 { data / delivered } else { 0.0 },
            }
        })
        .collect();
    AllocationPlan {
        vehicle_id: 0,
        entries,
        total_time_s: times.iter().sum(),
        delivered_mb: delivered,
        degraded: false,
    }
}

/// Greedy time-minimal allocation of `demand_mb` over the offered windows.
/// Offers are consumed in descending expected-rate order (ties broken by
/// ascending RSU id); the last engaged RSU carries the fractional residue.
/// Entries of the returned plan keep the input (encounter) order.
pub fn etdm_single(demand_mb: f64, offers: &[RsuOffer]) -> Result<AllocationPlan, SchedulerError> {
    assert!(demand_mb > 0.0, "demand must be positive");
    let mut order: Vec<usize> = (0..offers.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        SORT_COMPARISONS.with(|c| c.set(c.get() + 1));
        offers[b]
            .expected_rate_mb_s
            .total_cmp(&offers[a].expected_rate_mb_s)
            .then(offers[a].rsu_id.cmp(&offers[b].rsu_id))
    });

    let mut times = vec![0.0; offers.len()];
    let mut remaining = demand_mb;
    for &i in &order {
        let offer = &offers[i];
        if offer.expected_rate_mb_s <= 0.0 || offer.window_s <= 0.0 {
            continue;
        }
        let capacity = offer.capacity_mb();
        if capacity < remaining {
            times[i] = offer.window_s;
            remaining -= capacity;
        } else {
            times[i] = remaining / offer.expected_rate_mb_s;
            remaining = 0.0;
            break;
        }
    }

    let plan = build_plan(offers, &times);
    if remaining > 0.0 {
        return Err(SchedulerError::InsufficientCapacity {
            demand_mb,
            max_deliverable_mb: plan.delivered_mb,
            partial: Box::new(plan),
        });
    }
    Ok(plan)
}

/// Arrival-order baseline: engage every encountered RSU in sequence,
/// transmitting for min(window, remaining / rate) until the demand is met.
pub fn oa_allocate(demand_mb: f64, encounters: &[RsuOffer]) -> Result<AllocationPlan, SchedulerError> {
    assert!(demand_mb > 0.0, "demand must be positive");
    let engage_all = |_: &RsuOffer| true;
    fcfs_fill(demand_mb, encounters, engage_all)
}

/// Probabilistic baseline: like OA, but each encounter is engaged with
/// independent probability `q` from the seeded generator. Deterministic in
/// the seed; q = 1 reproduces OA exactly.
pub fn pta_allocate(
    demand_mb: f64,
    encounters: &[RsuOffer],
    q: f64,
    rng_seed: u64,
) -> Result<AllocationPlan, SchedulerError> {
    assert!(demand_mb > 0.0, "demand must be positive");
    assert!((0.0..=1.0).contains(&q), "engage probability must be in [0, 1]");
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    fcfs_fill(demand_mb, encounters, move |_| rng.random::<f64>() < q)
}

fn fcfs_fill(
    demand_mb: f64,
    encounters: &[RsuOffer],
    mut engage: impl FnMut(&RsuOffer) -> bool,
) -> Result<AllocationPlan, SchedulerError> {
    let mut times = vec![0.0; encounters.len()];
    let mut remaining = demand_mb;
    for (i, offer) in encounters.iter().enumerate() {
        if remaining <= 0.0 {
            break;
        }
        if offer.expected_rate_mb_s <= 0.0 || offer.window_s <= 0.0 || !engage(offer) {
            continue;
        }
        let t = offer.window_s.min(remaining / offer.expected_rate_mb_s);
        times[i] = t;
        remaining -= offer.expected_rate_mb_s * t;
    }

    let plan = build_plan(encounters, &times);
    if remaining > 1e-12 * demand_mb.max(1.0) {
        return Err(SchedulerError::InsufficientCapacity {
            demand_mb,
            max_deliverable_mb: plan.delivered_mb,
            partial: Box::new(plan),
        });
    }
    Ok(plan)
}

/// Exhaustive minimum total transmission time for desk-scale instances:
/// tries every engagement ordering, fills whole windows along it and snaps
/// the fractional tail up to the grid. The result is within
/// `grid_s * offers.len()` of the true minimum.
pub fn oracle_min_time(
    demand_mb: f64,
    offers: &[RsuOffer],
    grid_s: f64,
) -> Result<f64, SchedulerError> {
    assert!(offers.len() <= 8, "oracle is for desk-scale instances");
    assert!(grid_s > 0.0, "grid resolution must be positive");
    assert!(demand_mb > 0.0, "demand must be positive");

    let mut indices: Vec<usize> = (0..offers.len()).collect();
    let mut best: Option<f64> = None;

    fn walk(
        offers: &[RsuOffer],
        indices: &mut [usize],
        head: usize,
        demand_mb: f64,
        grid_s: f64,
        best: &mut Option<f64>,
    ) {
        // Evaluate the current ordering: full windows, then a snapped tail.
        let mut acc_time = 0.0;
        let mut residue = demand_mb;
        for &i in indices.iter() {
            let offer = &offers[i];
            if offer.expected_rate_mb_s <= 0.0 || offer.window_s <= 0.0 {
                continue;
            }
            if offer.capacity_mb() >= residue {
                let tail = residue / offer.expected_rate_mb_s;
                let snapped = ((tail / grid_s).ceil() * grid_s).min(offer.window_s);
                let total = acc_time + snapped;
                if best.is_none_or(|b| total < b) {
                    *best = Some(total);
                }
                break;
            }
            acc_time += offer.window_s;
            residue -= offer.capacity_mb();
        }
        if head + 1 < indices.len() {
            for swap in head..indices.len() {
                indices.swap(head, swap);
                walk(offers, indices, head + 1, demand_mb, grid_s, best);
                indices.swap(head, swap);
            }
        }
    }

    walk(offers, &mut indices, 0, demand_mb, grid_s, &mut best);
    match best {
        Some(t) => Ok(t),
        None => {
            let all: Vec<f64> = offers.iter().map(|o| o.window_s.max(0.0)).collect();
            let plan = build_plan(offers, &all);
            Err(SchedulerError::InsufficientCapacity {
                demand_mb,
                max_deliverable_mb: plan.delivered_mb,
                partial: Box::new(plan),
            })
        }
    }
}

/// Data-distribution policy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Algorithm {
    Etdm,
    Oa,
    Pta { q: f64 },
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Etdm => write!(f, "etdm"),
            Algorithm::Oa => write!(f, "oa"),
            Algorithm::Pta { q } => write!(f, "pta:{q}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "etdm" => Ok(Algorithm::Etdm),
            "oa" => Ok(Algorithm::Oa),
            other => {
                if let Some(q) = other.strip_prefix("pta:") {
                    let q: f64 = q
                        .parse()
                        .map_err(|_| format!("invalid PTA probability `{q}`"))?;
                    if !(0.0..=1.0).contains(&q) {
                        return Err(format!("PTA probability {q} out of [0, 1]"));
                    }
                    Ok(Algorithm::Pta { q })
                } else {
                    Err(format!(
                        "unknown algorithm `{other}` (expected etdm, oa or pta:<q>)"
                    ))
                }
            }
        }
    }
}

/// Outcome of planning one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanOutcome {
    /// The (possibly degraded) demand fits the offered capacity.
    Planned(AllocationPlan),
    /// Capacity falls short; the plan engages everything and delivers what it can.
    Partial { plan: AllocationPlan, demanded_mb: f64 },
    /// Driving alone exceeds the battery; the vehicle is left out.
    Stranded,
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&AllocationPlan> {
        match self {
            PlanOutcome::Planned(plan) => Some(plan),
            PlanOutcome::Partial { plan, .. } => Some(plan),
            PlanOutcome::Stranded => None,
        }
    }
}

/// Fleet-wide planning result, keyed by vehicle in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetPlan {
    pub outcomes: Vec<(u32, PlanOutcome)>,
    /// Maximum planned total transmission time over all planning vehicles.
    pub makespan_s: f64,
}

/// Mixes the scenario seed, vehicle id and engage probability into the
/// per-vehicle PTA stream seed.
pub fn pta_stream_seed(scenario_seed: u64, vehicle_id: u32, q: f64) -> u64 {
    let mut x = scenario_seed
        ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(vehicle_id as u64 + 1)
        ^ q.to_bits().rotate_left(17);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// The offers one vehicle sees: its branch RSUs in encounter order, with
/// per-RSU expected rates shared across vehicles of the scenario.
pub fn vehicle_offers(scenario: &Scenario, vehicle: &Vehicle) -> Vec<RsuOffer> {
    let m = scenario.vehicle_count();
    scenario
        .branch_rsus(vehicle.branch)
        .into_iter()
        .map(|rsu| RsuOffer {
            rsu_id: rsu.id,
            expected_rate_mb_s: channel::expected_rate_at_offset(
                rsu,
                &scenario.channel,
                m,
                scenario.meeting_probability,
            ),
            window_s: channel::contact_window(rsu, vehicle),
        })
        .collect()
}

fn allocate(
    algorithm: Algorithm,
    demand_mb: f64,
    offers: &[RsuOffer],
    scenario_seed: u64,
    vehicle_id: u32,
) -> Result<AllocationPlan, SchedulerError> {
    match algorithm {
        Algorithm::Etdm => etdm_single(demand_mb, offers),
        Algorithm::Oa => oa_allocate(demand_mb, offers),
        Algorithm::Pta { q } => {
            pta_allocate(demand_mb, offers, q, pta_stream_seed(scenario_seed, vehicle_id, q))
        }
    }
}

/// Plans every vehicle of the scenario under the given policy. Each vehicle
/// passes the energy gate first: stranded vehicles are excluded, and a
/// full-demand plan whose reception energy breaks the budget is replanned
/// at the basic demand.
pub fn plan_all(scenario: &Scenario, algorithm: Algorithm) -> FleetPlan {
    let rx_power = scenario.energy.rx_power_w;
    let drive_rate = scenario.energy.drive_rate_kwh_per_km;
    let mut outcomes = Vec::with_capacity(scenario.vehicles.len());

    for vehicle in &scenario.vehicles {
        if energy::energy_feasible(vehicle, drive_rate, 0.0) == Verdict::Stranded {
            outcomes.push((vehicle.id, PlanOutcome::Stranded));
            continue;
        }
        let offers = vehicle_offers(scenario, vehicle);
        let with_id = |mut plan: AllocationPlan, degraded: bool| {
            plan.vehicle_id = vehicle.id;
            plan.degraded = degraded;
            plan
        };

        let full = allocate(algorithm, vehicle.demand.full_mb, &offers, scenario.seed, vehicle.id);
        let (candidate, demanded, capacity_short) = match full {
            Ok(plan) => (plan, vehicle.demand.full_mb, false),
            Err(SchedulerError::InsufficientCapacity { partial, .. }) => {
                (*partial, vehicle.demand.full_mb, true)
            }
        };

        let rx_joules = rx_power * candidate.total_time_s;
        let outcome = match energy::energy_feasible(vehicle, drive_rate, rx_joules) {
            Verdict::Stranded => PlanOutcome::Stranded,
            Verdict::Feasible => {
                if capacity_short {
                    PlanOutcome::Partial { plan: with_id(candidate, false), demanded_mb: demanded }
                } else {
                    PlanOutcome::Planned(with_id(candidate, false))
                }
            }
            Verdict::DegradeToBasic => {
                let basic = vehicle.demand.basic_mb;
                match allocate(algorithm, basic, &offers, scenario.seed, vehicle.id) {
                    Ok(plan) => PlanOutcome::Planned(with_id(plan, true)),
                    Err(SchedulerError::InsufficientCapacity { partial, .. }) => {
                        PlanOutcome::Partial { plan: with_id(*partial, true), demanded_mb: basic }
                    }
                }
            }
        };
        outcomes.push((vehicle.id, outcome));
    }

    let makespan_s = outcomes
        .iter()
        .filter_map(|(_, o)| o.plan().map(|p| p.total_time_s))
        .fold(0.0, f64::max);
    FleetPlan { outcomes, makespan_s }
}

/// Plans the whole fleet under ETDM and reports the planned makespan.
pub fn etdm_multi(scenario: &Scenario) -> FleetPlan {
    plan_all(scenario, Algorithm::Etdm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn offers(spec: &[(u32, f64, f64)]) -> Vec<RsuOffer> {
        spec.iter()
            .map(|&(rsu_id, rate, window)| RsuOffer {
                rsu_id,
                expected_rate_mb_s: rate,
                window_s: window,
            })
            .collect()
    }

    fn times(plan: &AllocationPlan) -> Vec<f64> {
        plan.entries.iter().map(|e| e.time_s).collect()
    }

    #[test]
    fn etdm_fills_fast_windows_first() {
        let offers = offers(&[(0, 10.0, 3.0), (1, 5.0, 4.0), (2, 2.0, 10.0)]);
        let plan = etdm_single(50.0, &offers).unwrap();
        assert_eq!(times(&plan), vec![3.0, 4.0, 0.0]);
        assert_eq!(plan.total_time_s, 7.0);
        assert_eq!(plan.delivered_mb, 50.0);
        assert!(!plan.entries[2].engaged);
    }

    #[test]
    fn etdm_gives_the_last_rsu_the_residue() {
        let offers = offers(&[(0, 10.0, 3.0), (1, 5.0, 4.0), (2, 2.0, 10.0)]);
        let plan = etdm_single(35.0, &offers).unwrap();
        assert_eq!(times(&plan), vec![3.0, 1.0, 0.0]);
        assert_eq!(plan.total_time_s, 4.0);
    }

    #[test]
    fn etdm_reports_the_max_deliverable_on_overload() {
        let offers = offers(&[(0, 10.0, 3.0), (1, 5.0, 4.0), (2, 2.0, 10.0)]);
        match etdm_single(80.0, &offers) {
            Err(SchedulerError::InsufficientCapacity { max_deliverable_mb, partial, .. }) => {
                assert_eq!(max_deliverable_mb, 70.0);
                assert_eq!(partial.total_time_s, 17.0);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn etdm_is_invariant_to_offer_order() {
        let shuffled = offers(&[(2, 2.0, 10.0), (0, 10.0, 3.0), (1, 5.0, 4.0)]);
        let plan = etdm_single(50.0, &shuffled).unwrap();
        assert_eq!(plan.total_time_s, 7.0);
        let by_id: Vec<(u32, f64)> = plan.entries.iter().map(|e| (e.rsu_id, e.time_s)).collect();
        assert!(by_id.contains(&(0, 3.0)) && by_id.contains(&(1, 4.0)) && by_id.contains(&(2, 0.0)));
    }

    #[test]
    fn etdm_breaks_rate_ties_by_ascending_rsu_id() {
        let offers = offers(&[(7, 5.0, 4.0), (3, 5.0, 4.0)]);
        let plan = etdm_single(10.0, &offers).unwrap();
        assert_eq!(times(&plan), vec![0.0, 2.0]);
    }

    #[test]
    fn oa_fills_in_encounter_order() {
        let encounters = offers(&[(0, 5.0, 4.0), (1, 10.0, 3.0)]);
        let plan = oa_allocate(25.0, &encounters).unwrap();
        assert_eq!(times(&plan), vec![4.0, 0.5]);
        assert_eq!(plan.total_time_s, 4.5);
        assert_eq!(plan.entries.iter().filter(|e| e.engaged).count(), 2);
    }

    #[test]
    fn oa_uses_one_rsu_when_the_first_window_suffices() {
        let encounters = offers(&[(0, 10.0, 3.0), (1, 5.0, 4.0)]);
        let plan = oa_allocate(20.0, &encounters).unwrap();
        assert_eq!(plan.entries.iter().filter(|e| e.engaged).count(), 1);
        assert_eq!(plan.total_time_s, 2.0);
    }

    #[test]
    fn etdm_never_loses_to_oa() {
        let encounters = offers(&[(0, 2.0, 10.0), (1, 10.0, 3.0), (2, 5.0, 4.0)]);
        let etdm = etdm_single(40.0, &encounters).unwrap();
        let oa = oa_allocate(40.0, &encounters).unwrap();
        assert!(etdm.total_time_s <= oa.total_time_s);
    }

    #[test]
    fn pta_with_certain_engagement_equals_oa() {
        let encounters = offers(&[(0, 5.0, 4.0), (1, 10.0, 3.0), (2, 2.0, 10.0)]);
        let oa = oa_allocate(30.0, &encounters).unwrap();
        let pta = pta_allocate(30.0, &encounters, 1.0, 99).unwrap();
        assert_eq!(oa, pta);
    }

    #[test]
    fn pta_with_zero_probability_delivers_nothing() {
        let encounters = offers(&[(0, 5.0, 4.0)]);
        match pta_allocate(10.0, &encounters, 0.0, 7) {
            Err(SchedulerError::InsufficientCapacity { max_deliverable_mb, .. }) => {
                assert_eq!(max_deliverable_mb, 0.0);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn pta_is_deterministic_in_the_seed() {
        let encounters = offers(&[(0, 5.0, 4.0), (1, 10.0, 3.0), (2, 2.0, 10.0), (3, 4.0, 5.0)]);
        let a = pta_allocate(30.0, &encounters, 0.7, 1234);
        let b = pta_allocate(30.0, &encounters, 0.7, 1234);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn oracle_confirms_the_greedy_examples() {
        let offers = offers(&[(0, 10.0, 3.0), (1, 5.0, 4.0), (2, 2.0, 10.0)]);
        let grid = 1e-4;
        let oracle = oracle_min_time(50.0, &offers, grid).unwrap();
        assert!((oracle - 7.0).abs() <= grid * 3.0 + 1e-9);
        let oracle = oracle_min_time(35.0, &offers, grid).unwrap();
        assert!((oracle - 4.0).abs() <= grid * 3.0 + 1e-9);
    }

    #[test]
    fn oracle_saturates_a_single_exact_offer() {
        let offers = offers(&[(0, 10.0, 4.0)]);
        assert_eq!(oracle_min_time(40.0, &offers, 0.001).unwrap(), 4.0);
    }

    #[test]
    fn oracle_time_vanishes_with_demand() {
        let offers = offers(&[(0, 10.0, 4.0), (1, 5.0, 2.0)]);
        assert!(oracle_min_time(1e-9, &offers, 0.001).unwrap() <= 0.001);
    }

    #[test]
    fn oracle_rejects_infeasible_demand() {
        let offers = offers(&[(0, 10.0, 3.0)]);
        assert!(matches!(
            oracle_min_time(31.0, &offers, 0.01),
            Err(SchedulerError::InsufficientCapacity { .. })
        ));
    }

    #[test]
    fn sort_cost_stays_within_n_log_n() {
        for n in [4usize, 32, 256, 2048] {
            let offers: Vec<RsuOffer> = (0..n)
                .map(|i| RsuOffer {
                    rsu_id: i as u32,
                    expected_rate_mb_s: ((i * 2654435761) % 1000) as f64 + 1.0,
                    window_s: 5.0,
                })
                .collect();
            reset_sort_comparison_count();
            let demand = 0.9 * offers.iter().map(RsuOffer::capacity_mb).sum::<f64>();
            etdm_single(demand, &offers).unwrap();
            let bound = 8.0 * n as f64 * (n as f64).log2() + 16.0;
            assert!(
                (sort_comparison_count() as f64) <= bound,
                "n={n}: {} comparisons > {bound}",
                sort_comparison_count()
            );
        }
    }

    #[test]
    fn algorithm_labels_round_trip() {
        for s in ["etdm", "oa", "pta:0.7"] {
            assert_eq!(s.parse::<Algorithm>().unwrap().to_string(), s);
        }
        assert!("pta:1.5".parse::<Algorithm>().is_err());
        assert!("fcfs".parse::<Algorithm>().is_err());
    }

    #[test]
    fn plan_entries_stay_consistent() {
        let offers = offers(&[(0, 10.0, 3.0), (1, 5.0, 4.0), (2, 2.0, 10.0)]);
        let plan = etdm_single(42.0, &offers).unwrap();
        let total_data: f64 = plan.entries.iter().map(|e| e.data_mb).sum();
        assert_relative_eq!(total_data, plan.delivered_mb, max_relative = 1e-9);
        let fractions: f64 = plan.entries.iter().map(|e| e.fraction).sum();
        assert_relative_eq!(fractions, 1.0, max_relative = 1e-9);
        for e in &plan.entries {
            assert!(!e.engaged || e.time_s > 0.0);
            assert!(e.engaged || e.time_s == 0.0);
        }
    }
}
