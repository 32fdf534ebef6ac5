//! Closed-form vehicle-to-vehicle transfer calculators: contact time,
//! per-contact capacity, DSRC rate, fleet size and road distance needed to
//! move a given data volume between moving vehicles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inputs for the V2V transfer estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V2vQuery {
    /// Communication range r, meters.
    pub range_m: f64,
    /// Lateral offset d between the two lanes, meters; must satisfy d <= r.
    pub lateral_offset_m: f64,
    pub speed1_mps: f64,
    pub speed2_mps: f64,
    pub rate_mb_s: f64,
    pub total_data_mb: f64,
    /// Vehicles on the reverse lane within the observation window.
    pub reverse_lane_count: u64,
    pub observation_time_s: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeasibilityError {
    /// Both vehicles stationary; the opposite-direction contact time is undefined.
    #[error("contact time undefined: both speeds are zero")]
    UndefinedContact,
    /// Equal speeds in the same direction never break contact.
    #[error("contact time infinite: equal speeds in the same direction")]
    InfiniteContact,
    /// Zero meeting probability: no distance completes the transfer.
    #[error("transfer infeasible: meeting probability is zero")]
    Infeasible,
}

/// Contact time of two vehicles passing in opposite directions,
/// 2 * sqrt(r^2 - d^2) / (v1 + v2). Zero at tangent contact (d = r).
pub fn contact_time_opposite(q: &V2vQuery) -> Result<f64, FeasibilityError> {
    let closing = q.speed1_mps + q.speed2_mps;
    if closing == 0.0 {
        return Err(FeasibilityError::UndefinedContact);
    }
    let chord_half_sq = q.range_m * q.range_m - q.lateral_offset_m * q.lateral_offset_m;
    Ok(2.0 * chord_half_sq.max(0.0).sqrt() / closing)
}

/// Contact time of two vehicles in the same direction, 2r / |v1 - v2|.
pub fn contact_time_same_direction(q: &V2vQuery) -> Result<f64, FeasibilityError> {
    let relative = (q.speed1_mps - q.speed2_mps).abs();
    if relative == 0.0 {
        return Err(FeasibilityError::InfiniteContact);
    }
    Ok(2.0 * q.range_m / relative)
}

/// Data moved during one contact of length `contact_time_s` at `rate_mb_s`.
pub fn contact_capacity(contact_time_s: f64, rate_mb_s: f64) -> f64 {
    contact_time_s * rate_mb_s
}

/// DSRC link rate B * log2(1 + D * P_s * |h| / N_0), where D is the
/// distance factor of the link.
pub fn dsrc_rate(bandwidth: f64, distance_factor: f64, tx_power: f64, fading_gain: f64, noise_psd: f64) -> f64 {
    bandwidth * (1.0 + distance_factor * tx_power * fading_gain / noise_psd).log2()
}

/// Vehicles needed to carry `total_mb` when each contact moves at most
/// `capacity_mb`; rounded up so the fleet actually carries the volume.
pub fn vehicles_needed(total_mb: f64, capacity_mb: f64) -> u64 {
    (total_mb / capacity_mb).ceil() as u64
}

/// Probability that a reverse-lane vehicle participates in the transfer,
/// m * r / (v * t), clamped to [0, 1].
pub fn meeting_probability(reverse_count: u64, range_m: f64, speed_mps: f64, time_s: f64) -> f64 {
    (reverse_count as f64 * range_m / (speed_mps * time_s)).min(1.0)
}

/// Road distance needed to complete the transfer across `num_vehicles`
/// contacts of length `contact_time_s` at participation probability `p`.
pub fn v2v_distance_required(
    num_vehicles: u64,
    speed_mps: f64,
    contact_time_s: f64,
    p: f64,
) -> Result<f64, FeasibilityError> {
    if p == 0.0 {
        return Err(FeasibilityError::Infeasible);
    }
    Ok(num_vehicles as f64 * speed_mps * contact_time_s / p)
}
