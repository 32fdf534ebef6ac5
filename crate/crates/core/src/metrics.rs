//! Aggregation of simulation results into the evaluation quantities:
//! transmission-time statistics over completed vehicles, RSU usage, and the
//! load-balance measure (population variance of per-RSU hit rates).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::SimResult;

/// Aggregate view over one or more runs of a scenario family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub vehicles: usize,
    pub completed: usize,
    pub degraded: usize,
    pub stranded: usize,
    /// Maximum transmission time over completed vehicles (the min-max objective).
    pub makespan_s: Option<f64>,
    /// Fastest completed vehicle.
    pub min_time_s: Option<f64>,
    pub mean_time_s: Option<f64>,
    /// Transmission time of every completed vehicle, in result order.
    pub times_s: Vec<f64>,
    pub mean_rsus_per_vehicle: Option<f64>,
    /// RSUs used by each completed vehicle, in result order.
    pub rsus_used_counts: Vec<usize>,
    /// Distinct vehicles served per RSU, across all results.
    pub rsu_access: BTreeMap<u32, u64>,
    pub hit_rate_variance: Option<f64>,
    pub total_delivered_mb: f64,
}

/// Folds results into a report; `None` marks empty input. Time and RSU
/// statistics cover completed vehicles; delivered data covers everyone.
pub fn summarize(results: &[SimResult]) -> Option<MetricsReport> {
    if results.is_empty() {
        return None;
    }
    let mut report = MetricsReport {
        vehicles: 0,
        completed: 0,
        degraded: 0,
        stranded: 0,
        makespan_s: None,
        min_time_s: None,
        mean_time_s: None,
        times_s: Vec::new(),
        mean_rsus_per_vehicle: None,
        rsus_used_counts: Vec::new(),
        rsu_access: BTreeMap::new(),
        hit_rate_variance: None,
        total_delivered_mb: 0.0,
    };

    for result in results {
        for (&rsu_id, &count) in &result.rsu_access {
            *report.rsu_access.entry(rsu_id).or_insert(0) += count;
        }
        for rec in &result.vehicles {
            report.vehicles += 1;
            report.total_delivered_mb += rec.delivered_mb;
            if rec.degraded {
                report.degraded += 1;
            }
            if rec.stranded {
                report.stranded += 1;
            }
            if rec.completed {
                report.completed += 1;
                report.times_s.push(rec.transmission_time_s);
                report.rsus_used_counts.push(rec.rsus_used.len());
            }
        }
    }

    if report.completed > 0 {
        let n = report.completed as f64;
        report.makespan_s = report.times_s.iter().copied().reduce(f64::max);
        report.min_time_s = report.times_s.iter().copied().reduce(f64::min);
        report.mean_time_s = Some(report.times_s.iter().sum::<f64>() / n);
        report.mean_rsus_per_vehicle =
            Some(report.rsus_used_counts.iter().sum::<usize>() as f64 / n);
    }
    let counts: Vec<u64> = report.rsu_access.values().copied().collect();
    report.hit_rate_variance = hit_rate_variance(&counts);
    Some(report)
}

/// Population variance of per-RSU hit rates count_i / total, over every RSU
/// including unused ones. `None` when nothing was accessed at all.
pub fn hit_rate_variance(access_counts: &[u64]) -> Option<f64> {
    let total: u64 = access_counts.iter().sum();
    if total == 0 || access_counts.is_empty() {
        return None;
    }
    let n = access_counts.len() as f64;
    let mean = 1.0 / n;
    let variance = access_counts
        .iter()
        .map(|&c| {
            let rate = c as f64 / total as f64;
            (rate - mean) * (rate - mean)
        })
        .sum::<f64>()
        / n;
    Some(variance)
}

/// Column order of the aggregate report CSV.
pub const REPORT_CSV_HEADER: &str = "algorithm,seed,vehicles,demand_mb,makespan_s,min_time_s,\
mean_time_s,mean_rsus_per_vehicle,hit_rate_variance,completed,degraded,stranded,delivered_mb";

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// One CSV row in [`REPORT_CSV_HEADER`] order; absent statistics (no
/// completed vehicle, no accesses) render as empty fields.
pub fn report_csv_row(report: &MetricsReport, algorithm: &str, seed: u64, demand_mb: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        algorithm,
        seed,
        report.vehicles,
        demand_mb,
        opt(report.makespan_s),
        opt(report.min_time_s),
        opt(report.mean_time_s),
        opt(report.mean_rsus_per_vehicle),
        opt(report.hit_rate_variance),
        report.completed,
        report.degraded,
        report.stranded,
        report.total_delivered_mb,
    )
}
