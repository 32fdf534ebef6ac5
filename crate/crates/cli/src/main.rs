//! Command-line front end: scenario generation, single simulation runs,
//! volume/traffic sweeps and the V2V feasibility calculators. All outputs
//! are deterministic given the flags and the seeds embedded in scenarios.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use etdm_core::engine::run_scenario;
use etdm_core::feasibility::{self, FeasibilityError, V2vQuery};
use etdm_core::metrics::{self, REPORT_CSV_HEADER};
use etdm_core::model::{generate_scenario, validate_scenario, GeneratorParams, Scenario};
use etdm_core::scheduler::Algorithm;
use etdm_core::SimResult;

#[derive(Parser)]
#[command(name = "etdm", version, about = "Energy-aware map data distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random scenario and write it as JSON.
    Generate(GenerateArgs),
    /// Simulate one scenario under one algorithm and report a CSV row.
    Run(RunArgs),
    /// Sweep the per-vehicle demand at a fixed energy budget.
    SweepVolume(SweepVolumeArgs),
    /// Sweep the number of vehicles drawn from the scenario.
    SweepTraffic(SweepTrafficArgs),
    /// Closed-form V2V transfer estimates as a key=value report.
    Feasibility(FeasibilityArgs),
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    rsus: usize,
    #[arg(long, default_value_t = 251)]
    vehicles: usize,
    #[arg(long, default_value_t = 100.0)]
    coverage_radius_m: f64,
    /// Lane offset range in meters.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [20.0, 70.0])]
    lane_offset_m: Vec<f64>,
    /// Downlink bandwidth range in MB/s.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1000.0, 2000.0])]
    bandwidth_mb_s: Vec<f64>,
    /// Vehicle speed range in m/s.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [10.0, 30.0])]
    speed_mps: Vec<f64>,
    /// Full map demand range in MB.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [60000.0, 120000.0])]
    demand_mb: Vec<f64>,
    /// Battery budget range in kWh.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [4.0, 6.0])]
    energy_kwh: Vec<f64>,
    /// Route length range in km.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [10.0, 20.0])]
    route_km: Vec<f64>,
    #[arg(long, default_value_t = 600.0)]
    entry_window_s: f64,
    #[arg(long, default_value_t = 0.005)]
    meeting_probability: f64,
    #[arg(long, default_value_t = 0.1)]
    step_s: f64,
    /// Output scenario file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// One of: etdm, oa, pta:<q> with q in [0, 1].
    #[arg(value_parser = parse_algorithm)]
    algorithm: Algorithm,
    /// Append the report row here (with a header when new); stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a per-vehicle detail CSV.
    #[arg(long)]
    detail: Option<PathBuf>,
    /// Override the scenario's time step.
    #[arg(long)]
    step_s: Option<f64>,
    /// Override the scenario's embedded seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepVolumeArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 140.0)]
    from_gb: f64,
    #[arg(long, default_value_t = 300.0)]
    to_gb: f64,
    #[arg(long, default_value_t = 10.0)]
    step_gb: f64,
    /// Battery budget applied to every vehicle.
    #[arg(long, default_value_t = 5.0)]
    budget_kwh: f64,
    /// Comma-separated algorithms, e.g. etdm,oa,pta:0.7.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_algorithm)]
    algorithms: Vec<Algorithm>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    step_s: Option<f64>,
}

#[derive(Args)]
struct SweepTrafficArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 10)]
    from: usize,
    #[arg(long, default_value_t = 250)]
    to: usize,
    #[arg(long, default_value_t = 10)]
    step: usize,
    /// Comma-separated algorithms, e.g. etdm,oa,pta:0.7.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_algorithm)]
    algorithms: Vec<Algorithm>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    step_s: Option<f64>,
}

#[derive(Args)]
struct FeasibilityArgs {
    /// Communication range r in meters.
    #[arg(long)]
    range_m: f64,
    /// Lateral lane offset d in meters.
    #[arg(long)]
    offset_m: f64,
    /// Speed of the source vehicle, m/s.
    #[arg(long)]
    v1: f64,
    /// Speed of the target vehicle, m/s.
    #[arg(long)]
    v2: f64,
    /// Link rate R in MB/s.
    #[arg(long, default_value_t = 100.0)]
    rate_mb_s: f64,
    /// Map volume G to move, in MB.
    #[arg(long, default_value_t = 100_000.0)]
    data_mb: f64,
    /// Vehicles m on the reverse lane within the observation window.
    #[arg(long, default_value_t = 10)]
    reverse_count: u64,
    /// Observation window t in seconds.
    #[arg(long, default_value_t = 100.0)]
    time_s: f64,
    /// DSRC channel bandwidth B.
    #[arg(long, default_value_t = 100.0)]
    dsrc_bandwidth: f64,
    /// Distance factor D of the DSRC link.
    #[arg(long, default_value_t = 1.0)]
    distance_factor: f64,
    /// DSRC transmit power P_s.
    #[arg(long, default_value_t = 1.0)]
    tx_power: f64,
    /// Channel attenuation coefficient |h|.
    #[arg(long, default_value_t = 1.0)]
    fading: f64,
    /// Noise power spectral density N_0.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::SweepVolume(args) => cmd_sweep_volume(args),
        Command::SweepTraffic(args) => cmd_sweep_traffic(args),
        Command::Feasibility(args) => cmd_feasibility(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn pair(range: &[f64]) -> (f64, f64) {
    (range[0], range[1])
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let params = GeneratorParams {
        rsu_count: args.rsus,
        vehicle_count: args.vehicles,
        coverage_radius_m: args.coverage_radius_m,
        lane_offset_range_m: pair(&args.lane_offset_m),
        bandwidth_range_mb_s: pair(&args.bandwidth_mb_s),
        speed_range_mps: pair(&args.speed_mps),
        demand_full_range_mb: pair(&args.demand_mb),
        energy_range_kwh: pair(&args.energy_kwh),
        route_length_range_km: pair(&args.route_km),
        entry_window_s: args.entry_window_s,
        meeting_probability: args.meeting_probability,
        time_step_s: args.step_s,
        ..GeneratorParams::default()
    };
    let scenario = generate_scenario(&params, args.seed)?;
    let json = serde_json::to_string_pretty(&scenario)?;
    fs::write(&args.out, json).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "wrote scenario: {} RSUs, {} vehicles, seed {} -> {}",
        scenario.rsus.len(),
        scenario.vehicles.len(),
        scenario.seed,
        args.out.display()
    );
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario: Scenario =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!("invalid scenario {}:\n  {}", path.display(), list.join("\n  "));
    }
    Ok(scenario)
}

fn mean_full_demand(scenario: &Scenario) -> f64 {
    if scenario.vehicles.is_empty() {
        return 0.0;
    }
    scenario.vehicles.iter().map(|v| v.demand.full_mb).sum::<f64>() / scenario.vehicles.len() as f64
}

fn report_row(result: &SimResult, demand_mb: f64) -> String {
    let report = metrics::summarize(std::slice::from_ref(result)).expect("one result");
    metrics::report_csv_row(&report, &result.algorithm, result.seed, demand_mb)
}

const DETAIL_CSV_HEADER: &str = "vehicle_id,completed,degraded,stranded,energy_exhausted,\
target_mb,delivered_mb,transmission_time_s,rsus_used";

fn detail_csv(result: &SimResult) -> String {
    let mut out = String::from(DETAIL_CSV_HEADER);
    out.push('\n');
    for rec in &result.vehicles {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            rec.vehicle_id,
            rec.completed,
            rec.degraded,
            rec.stranded,
            rec.energy_exhausted,
            rec.target_mb,
            rec.delivered_mb,
            rec.transmission_time_s,
            rec.rsus_used.len(),
        ));
    }
    out
}

fn emit_csv(out: Option<&Path>, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(step) = args.step_s {
        scenario.time_step_s = step;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let result = run_scenario(&scenario, args.algorithm);
    let row = report_row(&result, mean_full_demand(&scenario));

    match &args.out {
        Some(path) => {
            let mut text = if path.exists() {
                fs::read_to_string(path)?
            } else {
                format!("{REPORT_CSV_HEADER}\n")
            };
            text.push_str(&row);
            text.push('\n');
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => println!("{REPORT_CSV_HEADER}\n{row}"),
    }
    if let Some(path) = &args.detail {
        fs::write(path, detail_csv(&result))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_sweep_volume(args: SweepVolumeArgs) -> Result<()> {
    if args.algorithms.is_empty() {
        bail!("at least one algorithm is required");
    }
    if args.from_gb > args.to_gb || args.step_gb <= 0.0 {
        bail!(
            "invalid demand sweep: from {} to {} step {}",
            args.from_gb,
            args.to_gb,
            args.step_gb
        );
    }
    let base = load_scenario(&args.scenario)?;

    let mut demands_gb = Vec::new();
    let mut gb = args.from_gb;
    while gb <= args.to_gb + 1e-9 {
        demands_gb.push(gb);
        gb += args.step_gb;
    }

    let points: Vec<(f64, Algorithm)> = demands_gb
        .iter()
        .flat_map(|&gb| args.algorithms.iter().map(move |&a| (gb, a)))
        .collect();

    let mut rows: Vec<((u64, String), String)> = points
        .par_iter()
        .map(|&(gb, algorithm)| {
            let demand_mb = gb * 1000.0;
            let mut scenario = base.clone();
            if let Some(step) = args.step_s {
                scenario.time_step_s = step;
            }
            for v in &mut scenario.vehicles {
                v.demand.full_mb = demand_mb;
                v.demand.basic_mb = v.demand.basic_mb.min(demand_mb);
                v.energy_remaining_kwh = args.budget_kwh;
            }
            let result = run_scenario(&scenario, algorithm);
            let key = ((demand_mb * 1000.0) as u64, algorithm.to_string());
            (key, report_row(&result, demand_mb))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let rows: Vec<String> = rows.into_iter().map(|(_, row)| row).collect();
    emit_csv(args.out.as_deref(), REPORT_CSV_HEADER, &rows)
}

/// Deterministically draws an n-vehicle subset, keeping the original order.
fn traffic_subset(base: &Scenario, n: usize) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(base.seed.wrapping_add(n as u64));
    let mut picked = rand::seq::index::sample(&mut rng, base.vehicles.len(), n).into_vec();
    picked.sort_unstable();
    let mut scenario = base.clone();
    scenario.vehicles = picked.into_iter().map(|i| base.vehicles[i].clone()).collect();
    scenario
}

fn cmd_sweep_traffic(args: SweepTrafficArgs) -> Result<()> {
    if args.algorithms.is_empty() {
        bail!("at least one algorithm is required");
    }
    if args.from < 1 || args.from > args.to || args.step == 0 {
        bail!("invalid traffic sweep: from {} to {} step {}", args.from, args.to, args.step);
    }
    let base = load_scenario(&args.scenario)?;
    if args.to > base.vehicles.len() {
        bail!(
            "sweep asks for {} vehicles but the scenario has {}",
            args.to,
            base.vehicles.len()
        );
    }
    if let Some(step) = args.step_s {
        // Applied per point below; validated here.
        if step <= 0.0 {
            bail!("time step must be positive");
        }
    }

    let counts: Vec<usize> = (args.from..=args.to).step_by(args.step).collect();
    let points: Vec<(usize, Algorithm)> = counts
        .iter()
        .flat_map(|&n| args.algorithms.iter().map(move |&a| (n, a)))
        .collect();

    let mut rows: Vec<((usize, String), String)> = points
        .par_iter()
        .map(|&(n, algorithm)| {
            let mut scenario = traffic_subset(&base, n);
            if let Some(step) = args.step_s {
                scenario.time_step_s = step;
            }
            let result = run_scenario(&scenario, algorithm);
            ((n, algorithm.to_string()), report_row(&result, mean_full_demand(&scenario)))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let rows: Vec<String> = rows.into_iter().map(|(_, row)| row).collect();
    emit_csv(args.out.as_deref(), REPORT_CSV_HEADER, &rows)
}

fn cmd_feasibility(args: FeasibilityArgs) -> Result<()> {
    let query = V2vQuery {
        range_m: args.range_m,
        lateral_offset_m: args.offset_m,
        speed1_mps: args.v1,
        speed2_mps: args.v2,
        rate_mb_s: args.rate_mb_s,
        total_data_mb: args.data_mb,
        reverse_lane_count: args.reverse_count,
        observation_time_s: args.time_s,
    };

    let contact = feasibility::contact_time_opposite(&query)?;
    println!("contact_time_opposite_s={contact}");

    match feasibility::contact_time_same_direction(&query) {
        Ok(t) => println!("contact_time_same_direction_s={t}"),
        Err(FeasibilityError::InfiniteContact) => {
            println!("contact_time_same_direction_s=infinite");
        }
        Err(e) => return Err(e.into()),
    }

    let capacity = feasibility::contact_capacity(contact, query.rate_mb_s);
    println!("contact_capacity_mb={capacity}");

    let rate = feasibility::dsrc_rate(
        args.dsrc_bandwidth,
        args.distance_factor,
        args.tx_power,
        args.fading,
        args.noise,
    );
    println!("dsrc_rate={rate}");

    if capacity > 0.0 {
        let fleet = feasibility::vehicles_needed(query.total_data_mb, capacity);
        println!("vehicles_needed={fleet}");
        let p = feasibility::meeting_probability(
            query.reverse_lane_count,
            query.range_m,
            query.speed1_mps,
            query.observation_time_s,
        );
        println!("meeting_probability={p}");
        match feasibility::v2v_distance_required(fleet, query.speed1_mps, contact, p) {
            Ok(d) => println!("v2v_distance_required_m={d}"),
            Err(FeasibilityError::Infeasible) => println!("v2v_distance_required_m=infeasible"),
            Err(e) => return Err(e.into()),
        }
    } else {
        println!("vehicles_needed=infeasible");
    }
    Ok(())
}
