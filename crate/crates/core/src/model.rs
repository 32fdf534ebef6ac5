//! Domain types, scenario validation, seeded scenario generation, and
//! trace-file ingestion.
//!
//! Unit conventions: data in megabytes (MB), rates in MB/s, distances in
//! meters, routes in kilometers, battery budgets in kWh, receive energy in
//! joules. The road layout is three straight branches (A, B, C) meeting at
//! position 0; a vehicle drives its branch from position 0 and passes the
//! RSUs of that branch in position order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Joules per kilowatt-hour; bridges receive energy (J) and budgets (kWh).
pub const JOULES_PER_KWH: f64 = 3.6e6;
/// Kilometers per statute mile; basic map demand is specified per mile.
pub const KM_PER_MILE: f64 = 1.609_344;

/// Road branch leaving the junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    A,
    B,
    C,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::A, Branch::B, Branch::C];
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::A => write!(f, "A"),
            Branch::B => write!(f, "B"),
            Branch::C => write!(f, "C"),
        }
    }
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Branch::A),
            "B" => Ok(Branch::B),
            "C" => Ok(Branch::C),
            other => Err(format!("unknown branch label `{other}` (expected A, B or C)")),
        }
    }
}

/// Roadside unit serving a downlink to vehicles on its branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rsu {
    pub id: u32,
    /// Distance of the unit along its branch, from the junction.
    pub position_m: f64,
    /// Perpendicular distance to the lane; the representative link distance.
    pub lane_offset_m: f64,
    pub coverage_radius_m: f64,
    /// Serving downlink bandwidth in MB/s.
    pub bandwidth_mb_s: f64,
    /// Maximum downlink transmission power in watts; used as-is (no power control).
    pub tx_power_max_w: f64,
    pub branch: Branch,
}

/// Moving data consumer with a battery budget and a map-data demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    /// Seconds from scenario start at which the vehicle enters its branch.
    pub entry_time_s: f64,
    pub speed_mps: f64,
    pub branch: Branch,
    pub energy_remaining_kwh: f64,
    /// Full route length the battery must also cover, in km.
    pub route_length_km: f64,
    pub demand: MapDemand,
}

/// Map data required by a vehicle, full and degraded variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDemand {
    pub full_mb: f64,
    /// Reduced demand covering only the underlying map layers.
    pub basic_mb: f64,
}

/// Global wireless-channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path loss exponent sigma; received power decays as d^-sigma.
    pub path_loss_exponent: f64,
    /// Channel attenuation coefficient |h1| (dimensionless).
    pub fading_gain: f64,
    /// Noise power spectral density, in the same dimensionless convention
    /// as the received-power term.
    pub noise_psd: f64,
    /// Fallback receive bandwidth in MB/s for queries that do not go
    /// through a specific RSU.
    pub rx_bandwidth_default_mb_s: f64,
}

/// Global energy-accounting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Driving consumption per unit mileage, kWh/km.
    pub drive_rate_kwh_per_km: f64,
    /// Vehicle power draw while receiving data, watts.
    pub rx_power_w: f64,
}

/// Complete simulation input: layout, traffic, channel/energy parameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub rsus: Vec<Rsu>,
    pub vehicles: Vec<Vehicle>,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
    /// Probability that any two vehicles meet within one RSU's coverage;
    /// drives the Poisson contention model.
    pub meeting_probability: f64,
    pub seed: u64,
    pub time_step_s: f64,
}

impl Scenario {
    /// RSUs of one branch in the order a vehicle encounters them.
    pub fn branch_rsus(&self, branch: Branch) -> Vec<&Rsu> {
        let mut rsus: Vec<&Rsu> = self.rsus.iter().filter(|r| r.branch == branch).collect();
        rsus.sort_by(|a, b| {
            a.position_m
                .total_cmp(&b.position_m)
                .then(a.id.cmp(&b.id))
        });
        rsus
    }

    /// Vehicle count m entering the Poisson contention term.
    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }
}

/// One (RSU, engagement) row of an allocation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub rsu_id: u32,
    /// Engage flag c; false implies a zero time share.
    pub engaged: bool,
    /// Transmission time share t for this RSU, seconds.
    pub time_s: f64,
    pub data_mb: f64,
    /// Share of the delivered data, data_mb / delivered_mb.
    pub fraction: f64,
}

/// Per-vehicle transmission schedule produced by an allocator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub vehicle_id: u32,
    /// Entries in encounter order, one per offered RSU.
    pub entries: Vec<PlanEntry>,
    pub total_time_s: f64,
    pub delivered_mb: f64,
    /// True when the basic demand was substituted for the full demand.
    pub degraded: bool,
}

/// A broken invariant found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Human-readable location, e.g. `rsu[3]` or `vehicle[17]`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Checks every type invariant of a scenario. An empty list means valid;
/// violations are data, not failures.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |location: String, message: String| v.push(Violation { location, message });

    let mut seen_rsu = std::collections::HashSet::new();
    for (i, r) in s.rsus.iter().enumerate() {
        let loc = format!("rsu[{i}]");
        if !seen_rsu.insert(r.id) {
            push(loc.clone(), format!("duplicate RSU id {}", r.id));
        }
        if !(r.coverage_radius_m > 0.0) {
            push(loc.clone(), format!("coverage_radius_m ({}) must be > 0", r.coverage_radius_m));
        }
        if !(r.lane_offset_m >= 0.0 && r.lane_offset_m < r.coverage_radius_m) {
            push(
                loc.clone(),
                format!(
                    "lane_offset_m ({}) must be in [0, coverage_radius_m = {}); the RSU never covers the lane",
                    r.lane_offset_m, r.coverage_radius_m
                ),
            );
        }
        if !(r.bandwidth_mb_s > 0.0) {
            push(loc.clone(), format!("bandwidth_mb_s ({}) must be > 0", r.bandwidth_mb_s));
        }
        if !(r.tx_power_max_w > 0.0) {
            push(loc, format!("tx_power_max_w ({}) must be > 0", r.tx_power_max_w));
        }
    }

    let mut seen_vehicle = std::collections::HashSet::new();
    for (i, car) in s.vehicles.iter().enumerate() {
        let loc = format!("vehicle[{i}]");
        if !seen_vehicle.insert(car.id) {
            push(loc.clone(), format!("duplicate vehicle id {}", car.id));
        }
        if !(car.speed_mps > 0.0) {
            push(loc.clone(), format!("speed_mps ({}) must be > 0", car.speed_mps));
        }
        if !(car.energy_remaining_kwh >= 0.0) {
            push(loc.clone(), format!("energy_remaining_kwh ({}) must be >= 0", car.energy_remaining_kwh));
        }
        if !(car.route_length_km > 0.0) {
            push(loc.clone(), format!("route_length_km ({}) must be > 0", car.route_length_km));
        }
        if !(car.demand.basic_mb > 0.0 && car.demand.basic_mb <= car.demand.full_mb) {
            push(
                loc,
                format!(
                    "demand must satisfy 0 < basic_mb <= full_mb (basic {}, full {})",
                    car.demand.basic_mb, car.demand.full_mb
                ),
            );
        }
    }

    let ch = &s.channel;
    if !(ch.path_loss_exponent > 0.0) {
        push("channel".into(), format!("path_loss_exponent ({}) must be > 0", ch.path_loss_exponent));
    }
    if !(ch.fading_gain > 0.0) {
        push("channel".into(), format!("fading_gain ({}) must be > 0", ch.fading_gain));
    }
    if !(ch.noise_psd > 0.0) {
        push("channel".into(), format!("noise_psd ({}) must be > 0", ch.noise_psd));
    }
    if !(s.energy.drive_rate_kwh_per_km > 0.0) {
        push("energy".into(), format!("drive_rate_kwh_per_km ({}) must be > 0", s.energy.drive_rate_kwh_per_km));
    }
    if !(s.energy.rx_power_w > 0.0) {
        push("energy".into(), format!("rx_power_w ({}) must be > 0", s.energy.rx_power_w));
    }
    if !(s.meeting_probability > 0.0 && s.meeting_probability < 1.0) {
        push("scenario".into(), format!("meeting_probability ({}) must be in (0, 1)", s.meeting_probability));
    }
    if !(s.time_step_s > 0.0) {
        push("scenario".into(), format!("time_step_s ({}) must be > 0", s.time_step_s));
    }

    v
}

/// Ranges and counts for [`generate_scenario`]. Defaults mirror the standard
/// crossroad setup: 60 RSUs at ~100 m spacing with 100 m coverage, lane
/// offsets 20-70 m, bandwidths 1000-2000 MB/s, noise 0.3, 10 W receive power,
/// drive rate 0.15-0.25 kWh/km and 251 vehicles split 95/94/62 over the
/// branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub rsu_count: usize,
    pub coverage_radius_m: f64,
    pub rsu_spacing_range_m: (f64, f64),
    pub lane_offset_range_m: (f64, f64),
    pub bandwidth_range_mb_s: (f64, f64),
    pub tx_power_range_w: (f64, f64),
    pub path_loss_exponent: f64,
    pub fading_gain: f64,
    pub noise_psd: f64,
    pub rx_power_w: f64,
    pub drive_rate_range_kwh_per_km: (f64, f64),
    pub vehicle_count: usize,
    /// Relative traffic weights for branches A, B, C.
    pub branch_weights: [u32; 3],
    pub speed_range_mps: (f64, f64),
    /// Vehicles enter uniformly over this window (the traffic segment length).
    pub entry_window_s: f64,
    pub route_length_range_km: (f64, f64),
    pub energy_range_kwh: (f64, f64),
    pub demand_full_range_mb: (f64, f64),
    /// Basic (underlying-layers) demand per mile of route.
    pub basic_mb_per_mile: f64,
    pub meeting_probability: f64,
    pub time_step_s: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            rsu_count: 60,
            coverage_radius_m: 100.0,
            rsu_spacing_range_m: (50.0, 150.0),
            lane_offset_range_m: (20.0, 70.0),
            bandwidth_range_mb_s: (1000.0, 2000.0),
            tx_power_range_w: (20.0, 40.0),
            path_loss_exponent: 2.5,
            fading_gain: 1500.0,
            noise_psd: 0.3,
            rx_power_w: 10.0,
            drive_rate_range_kwh_per_km: (0.15, 0.25),
            vehicle_count: 251,
            branch_weights: [95, 94, 62],
            speed_range_mps: (10.0, 30.0),
            entry_window_s: 600.0,
            route_length_range_km: (10.0, 20.0),
            energy_range_kwh: (4.0, 6.0),
            demand_full_range_mb: (60_000.0, 120_000.0),
            basic_mb_per_mile: 60.0,
            meeting_probability: 0.005,
            time_step_s: 0.1,
        }
    }
}

/// Parameter-range rejection from [`generate_scenario`].
#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("range {name} = {range:?} is empty, negative or non-positive")]
    BadRange { name: &'static str, range: (f64, f64) },
    #[error("lane offsets up to {max_offset} m never fall below the coverage radius {radius} m")]
    OffsetOutsideCoverage { max_offset: f64, radius: f64 },
    #[error("{name} ({value}) must be strictly positive")]
    NonPositive { name: &'static str, value: f64 },
    #[error("vehicle_count and rsu_count must both be at least 1")]
    EmptyScenario,
    #[error("meeting_probability ({0}) must be in (0, 1)")]
    BadMeetingProbability(f64),
}

fn check_range(name: &'static str, range: (f64, f64), positive: bool) -> Result<(), GeneratorError> {
    if range.0 > range.1 || !range.0.is_finite() || !range.1.is_finite() {
        return Err(GeneratorError::BadRange { name, range });
    }
    let floor_ok = if positive { range.0 > 0.0 } else { range.0 >= 0.0 };
    if !floor_ok {
        return Err(GeneratorError::BadRange { name, range });
    }
    Ok(())
}

/// Splits `total` by the given weights using largest-remainder rounding;
/// ties go to the earlier branch.
pub fn split_by_weights(total: usize, weights: &[u32; 3]) -> [usize; 3] {
    let weight_sum: u64 = weights.iter().map(|&w| w as u64).sum();
    assert!(weight_sum > 0, "branch weights must not all be zero");
    let mut counts = [0usize; 3];
    let mut remainders = [(0.0f64, 0usize); 3];
    let mut assigned = 0usize;
    for i in 0..3 {
        let quota = total as f64 * weights[i] as f64 / weight_sum as f64;
        counts[i] = quota.floor() as usize;
        remainders[i] = (quota - quota.floor(), i);
        assigned += counts[i];
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = total - assigned;
    let mut k = 0;
    while leftover > 0 {
        counts[remainders[k % 3].1] += 1;
        leftover -= 1;
        k += 1;
    }
    counts
}

/// Deterministically generates a scenario from the given parameters and
/// seed; equal inputs produce structurally equal outputs, and every
/// generated scenario passes [`validate_scenario`].
pub fn generate_scenario(params: &GeneratorParams, seed: u64) -> Result<Scenario, GeneratorError> {
    check_range("rsu_spacing_range_m", params.rsu_spacing_range_m, true)?;
    check_range("lane_offset_range_m", params.lane_offset_range_m, false)?;
    check_range("bandwidth_range_mb_s", params.bandwidth_range_mb_s, true)?;
    check_range("tx_power_range_w", params.tx_power_range_w, true)?;
    check_range("drive_rate_range_kwh_per_km", params.drive_rate_range_kwh_per_km, true)?;
    check_range("speed_range_mps", params.speed_range_mps, true)?;
    check_range("route_length_range_km", params.route_length_range_km, true)?;
    check_range("energy_range_kwh", params.energy_range_kwh, false)?;
    check_range("demand_full_range_mb", params.demand_full_range_mb, true)?;
    if params.lane_offset_range_m.1 >= params.coverage_radius_m {
        return Err(GeneratorError::OffsetOutsideCoverage {
            max_offset: params.lane_offset_range_m.1,
            radius: params.coverage_radius_m,
        });
    }
    for (name, value) in [
        ("coverage_radius_m", params.coverage_radius_m),
        ("path_loss_exponent", params.path_loss_exponent),
        ("fading_gain", params.fading_gain),
        ("noise_psd", params.noise_psd),
        ("rx_power_w", params.rx_power_w),
        ("entry_window_s", params.entry_window_s),
        ("basic_mb_per_mile", params.basic_mb_per_mile),
        ("time_step_s", params.time_step_s),
    ] {
        if !(value > 0.0) {
            return Err(GeneratorError::NonPositive { name, value });
        }
    }
    if params.rsu_count == 0 || params.vehicle_count == 0 {
        return Err(GeneratorError::EmptyScenario);
    }
    if !(params.meeting_probability > 0.0 && params.meeting_probability < 1.0) {
        return Err(GeneratorError::BadMeetingProbability(params.meeting_probability));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha20Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    };

    let rsu_split = split_by_weights(params.rsu_count, &[1, 1, 1]);
    let mut rsus = Vec::with_capacity(params.rsu_count);
    let mut next_id = 0u32;
    for (bi, &branch) in Branch::ALL.iter().enumerate() {
        let mut position = 0.0;
        for _ in 0..rsu_split[bi] {
            position += uniform(&mut rng, params.rsu_spacing_range_m);
            rsus.push(Rsu {
                id: next_id,
                position_m: position,
                lane_offset_m: uniform(&mut rng, params.lane_offset_range_m),
                coverage_radius_m: params.coverage_radius_m,
                bandwidth_mb_s: uniform(&mut rng, params.bandwidth_range_mb_s),
                tx_power_max_w: uniform(&mut rng, params.tx_power_range_w),
                branch,
            });
            next_id += 1;
        }
    }

    let drive_rate = uniform(&mut rng, params.drive_rate_range_kwh_per_km);

    let vehicle_split = split_by_weights(params.vehicle_count, &params.branch_weights);
    let mut vehicles = Vec::with_capacity(params.vehicle_count);
    let mut next_vehicle = 0u32;
    for (bi, &branch) in Branch::ALL.iter().enumerate() {
        for _ in 0..vehicle_split[bi] {
            let route_length_km = uniform(&mut rng, params.route_length_range_km);
            let full_mb = uniform(&mut rng, params.demand_full_range_mb);
            let basic_mb =
                (params.basic_mb_per_mile * route_length_km / KM_PER_MILE).min(full_mb);
            vehicles.push(Vehicle {
                id: next_vehicle,
                entry_time_s: uniform(&mut rng, (0.0, params.entry_window_s)),
                speed_mps: uniform(&mut rng, params.speed_range_mps),
                branch,
                energy_remaining_kwh: uniform(&mut rng, params.energy_range_kwh),
                route_length_km,
                demand: MapDemand { full_mb, basic_mb },
            });
            next_vehicle += 1;
        }
    }

    Ok(Scenario {
        rsus,
        vehicles,
        channel: ChannelParams {
            path_loss_exponent: params.path_loss_exponent,
            fading_gain: params.fading_gain,
            noise_psd: params.noise_psd,
            rx_bandwidth_default_mb_s: params.bandwidth_range_mb_s.0,
        },
        energy: EnergyParams {
            drive_rate_kwh_per_km: drive_rate,
            rx_power_w: params.rx_power_w,
        },
        meeting_probability: params.meeting_probability,
        seed,
        time_step_s: params.time_step_s,
    })
}

pub const TRACE_HEADER: &str =
    "vehicle_id,entry_time_s,speed_mps,branch,energy_kwh,demand_full_mb,demand_basic_mb";

/// Trace-file parsing failure, located by line number and column name.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace header must be `{TRACE_HEADER}`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: expected 7 fields, got {got}")]
    BadFieldCount { line: usize, got: usize },
    #[error("line {line}, column {column}: {detail}")]
    BadField {
        line: usize,
        column: &'static str,
        detail: String,
    },
    #[error("trace read error: {0}")]
    Csv(#[from] csv::Error),
}

const TRACE_COLUMNS: [&str; 7] = [
    "vehicle_id",
    "entry_time_s",
    "speed_mps",
    "branch",
    "energy_kwh",
    "demand_full_mb",
    "demand_basic_mb",
];

/// Route length assigned to trace-borne vehicles; the trace schema does not
/// carry one.
pub const DEFAULT_TRACE_ROUTE_KM: f64 = 10.0;

/// Parses a vehicle trace in the CSV schema given by [`TRACE_HEADER`];
/// rows are preserved in file order, line 1 being the header. Route length
/// is outside the schema and set to [`DEFAULT_TRACE_ROUTE_KM`].
pub fn parse_trace(csv_text: &str) -> Result<Vec<Vehicle>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    {
        let headers = reader.headers()?;
        let got: Vec<&str> = headers.iter().collect();
        if got != TRACE_COLUMNS {
            return Err(TraceError::BadHeader(got.join(",")));
        }
    }

    fn field<T: FromStr>(
        record: &csv::StringRecord,
        line: usize,
        idx: usize,
    ) -> Result<T, TraceError>
    where
        T::Err: fmt::Display,
    {
        let raw = record.get(idx).unwrap_or("");
        raw.trim().parse::<T>().map_err(|e| TraceError::BadField {
            line,
            column: TRACE_COLUMNS[idx],
            detail: format!("cannot parse `{raw}`: {e}"),
        })
    }

    let mut vehicles = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != 7 {
            return Err(TraceError::BadFieldCount { line, got: record.len() });
        }
        vehicles.push(Vehicle {
            id: field(&record, line, 0)?,
            entry_time_s: field(&record, line, 1)?,
            speed_mps: field(&record, line, 2)?,
            branch: field(&record, line, 3)?,
            energy_remaining_kwh: field(&record, line, 4)?,
            route_length_km: DEFAULT_TRACE_ROUTE_KM,
            demand: MapDemand {
                full_mb: field(&record, line, 5)?,
                basic_mb: field(&record, line, 6)?,
            },
        });
    }
    Ok(vehicles)
}

/// Writes vehicles back to the trace CSV schema; inverse of [`parse_trace`].
pub fn serialize_trace(vehicles: &[Vehicle]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for v in vehicles {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            v.id,
            v.entry_time_s,
            v.speed_mps,
            v.branch,
            v.energy_remaining_kwh,
            v.demand.full_mb,
            v.demand.basic_mb
        ));
    }
    out
}
