//! Downlink rate model: Shannon capacity under power-law path loss, same-cell
//! interference from concurrent receivers, Poisson-weighted expected rates,
//! and the coverage-chord contact window.
//!
//! The received-signal term for a link at distance d is d^-sigma * P * |h1|.
//! With k vehicles concurrently served (k = 1 means the subject is alone),
//! the other k - 1 links act as interference added to the noise floor. The
//! planner weights rates by the Poisson law P(X = k) = e^-mp (mp)^k / k!
//! over k = 1..m-1, without renormalizing the truncated tail.

use thiserror::Error;

use crate::model::{ChannelParams, Rsu, Vehicle};

/// One (RSU, vehicle) downlink at a representative distance with `concurrent`
/// vehicles served by the same RSU (subject included; 1 = alone).
#[derive(Debug, Clone, Copy)]
pub struct LinkContext<'a> {
    pub rsu: &'a Rsu,
    pub vehicle: &'a Vehicle,
    pub distance_m: f64,
    pub concurrent_vehicles: usize,
}

impl<'a> LinkContext<'a> {
    /// Link at the RSU's lane offset, the representative constant distance.
    pub fn at_lane_offset(rsu: &'a Rsu, vehicle: &'a Vehicle, concurrent_vehicles: usize) -> Self {
        LinkContext {
            rsu,
            vehicle,
            distance_m: rsu.lane_offset_m,
            concurrent_vehicles,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    /// Path loss d^-sigma diverges at zero distance.
    #[error("singular geometry: link distance {distance_m} m (path loss diverges)")]
    SingularGeometry { distance_m: f64 },
}

/// Received-power term d^-sigma * P * |h1| of one downlink.
pub fn signal_term(distance_m: f64, tx_power_w: f64, ch: &ChannelParams) -> f64 {
    distance_m.powf(-ch.path_loss_exponent) * tx_power_w * ch.fading_gain
}

/// Shannon rate B * log2(1 + S / (N0 + I)).
pub fn rate_from_interference(bandwidth_mb_s: f64, signal: f64, interference: f64, noise_psd: f64) -> f64 {
    bandwidth_mb_s * (1.0 + signal / (noise_psd + interference)).log2()
}

/// Downlink rate of the context's link in MB/s. The k - 1 concurrent links
/// interfere at the subject's own distance and the RSU's full power.
pub fn downlink_rate(ctx: &LinkContext<'_>, ch: &ChannelParams) -> Result<f64, ChannelError> {
    if !(ctx.distance_m > 0.0) {
        return Err(ChannelError::SingularGeometry { distance_m: ctx.distance_m });
    }
    let signal = signal_term(ctx.distance_m, ctx.rsu.tx_power_max_w, ch);
    let interferers = ctx.concurrent_vehicles.saturating_sub(1);
    let interference = interferers as f64 * signal;
    Ok(rate_from_interference(ctx.rsu.bandwidth_mb_s, signal, interference, ch.noise_psd))
}

/// Probability that exactly `k` vehicles share one RSU, Poisson with mean
/// m * p.
pub fn concurrency_pmf(vehicle_count: usize, meeting_probability: f64, k: usize) -> f64 {
    let lambda = vehicle_count as f64 * meeting_probability;
    let mut pmf = (-lambda).exp();
    for i in 1..=k {
        pmf *= lambda / i as f64;
    }
    pmf
}

fn poisson_weighted_rate(
    bandwidth_mb_s: f64,
    signal: f64,
    noise_psd: f64,
    vehicle_count: usize,
    meeting_probability: f64,
    renormalize: bool,
) -> f64 {
    if vehicle_count <= 1 {
        return rate_from_interference(bandwidth_mb_s, signal, 0.0, noise_psd);
    }
    let lambda = vehicle_count as f64 * meeting_probability;
    let mut pmf = (-lambda).exp();
    let mut weighted = 0.0;
    let mut mass = 0.0;
    for k in 1..vehicle_count {
        pmf *= lambda / k as f64;
        let interference = (k - 1) as f64 * signal;
        weighted += pmf * rate_from_interference(bandwidth_mb_s, signal, interference, noise_psd);
        mass += pmf;
    }
    if renormalize && mass > 0.0 {
        weighted /= mass;
    }
    weighted
}

/// Poisson-weighted mean downlink rate over occupancies k = 1..m-1, the
/// planning-time rate of one (RSU, vehicle) link. For a single-vehicle
/// scenario this is the solo rate. The truncated weights are used as-is
/// unless `renormalize` is set.
pub fn expected_rate_with(
    ctx: &LinkContext<'_>,
    ch: &ChannelParams,
    vehicle_count: usize,
    meeting_probability: f64,
    renormalize: bool,
) -> Result<f64, ChannelError> {
    if !(ctx.distance_m > 0.0) {
        return Err(ChannelError::SingularGeometry { distance_m: ctx.distance_m });
    }
    let signal = signal_term(ctx.distance_m, ctx.rsu.tx_power_max_w, ch);
    Ok(poisson_weighted_rate(
        ctx.rsu.bandwidth_mb_s,
        signal,
        ch.noise_psd,
        vehicle_count,
        meeting_probability,
        renormalize,
    ))
}

/// Planner-side expected rate of an RSU at its own lane offset, the
/// representative distance shared by every vehicle on the branch. The
/// path-loss model is singular at a zero offset.
pub fn expected_rate_at_offset(
    rsu: &Rsu,
    ch: &ChannelParams,
    vehicle_count: usize,
    meeting_probability: f64,
) -> f64 {
    assert!(
        rsu.lane_offset_m > 0.0,
        "RSU {} sits on the lane; the path-loss model is singular at distance 0",
        rsu.id
    );
    let signal = signal_term(rsu.lane_offset_m, rsu.tx_power_max_w, ch);
    poisson_weighted_rate(
        rsu.bandwidth_mb_s,
        signal,
        ch.noise_psd,
        vehicle_count,
        meeting_probability,
        false,
    )
}

/// [`expected_rate_with`] without renormalization, the default planner rate.
pub fn expected_rate(
    ctx: &LinkContext<'_>,
    ch: &ChannelParams,
    vehicle_count: usize,
    meeting_probability: f64,
) -> Result<f64, ChannelError> {
    expected_rate_with(ctx, ch, vehicle_count, meeting_probability, false)
}

/// Time the vehicle spends inside the RSU's coverage circle: the chord
/// traversal 2 * sqrt(r^2 - d^2) / v. Zero when the lane is outside
/// coverage or the vehicle drives another branch.
pub fn contact_window(rsu: &Rsu, vehicle: &Vehicle) -> f64 {
    if rsu.branch != vehicle.branch {
        return 0.0;
    }
    let half_sq = rsu.coverage_radius_m * rsu.coverage_radius_m - rsu.lane_offset_m * rsu.lane_offset_m;
    if half_sq <= 0.0 {
        return 0.0;
    }
    2.0 * half_sq.sqrt() / vehicle.speed_mps
}

/// Half of the coverage chord cut by the lane, in meters; the vehicle is in
/// range while its position is within this distance of the RSU's position.
pub fn half_chord_m(rsu: &Rsu) -> f64 {
    let half_sq = rsu.coverage_radius_m * rsu.coverage_radius_m - rsu.lane_offset_m * rsu.lane_offset_m;
    half_sq.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, MapDemand};
    use approx::assert_relative_eq;

    fn rsu(bandwidth: f64, power: f64, offset: f64) -> Rsu {
        Rsu {
            id: 0,
            position_m: 100.0,
            lane_offset_m: offset,
            coverage_radius_m: 100.0,
            bandwidth_mb_s: bandwidth,
            tx_power_max_w: power,
            branch: Branch::A,
        }
    }

    fn vehicle(speed: f64) -> Vehicle {
        Vehicle {
            id: 0,
            entry_time_s: 0.0,
            speed_mps: speed,
            branch: Branch::A,
            energy_remaining_kwh: 5.0,
            route_length_km: 10.0,
            demand: MapDemand { full_mb: 100.0, basic_mb: 10.0 },
        }
    }

    fn unit_channel(sigma: f64) -> ChannelParams {
        ChannelParams {
            path_loss_exponent: sigma,
            fading_gain: 1.0,
            noise_psd: 1.0,
            rx_bandwidth_default_mb_s: 1.0,
        }
    }

    #[test]
    fn solo_unit_link_rate_is_one() {
        let r = rsu(1.0, 1.0, 50.0);
        let v = vehicle(20.0);
        let ctx = LinkContext { rsu: &r, vehicle: &v, distance_m: 1.0, concurrent_vehicles: 1 };
        assert_eq!(downlink_rate(&ctx, &unit_channel(2.0)).unwrap(), 1.0);
    }

    #[test]
    fn one_identical_interferer_gives_log2_of_1_5() {
        let r = rsu(1.0, 1.0, 50.0);
        let v = vehicle(20.0);
        let ctx = LinkContext { rsu: &r, vehicle: &v, distance_m: 1.0, concurrent_vehicles: 2 };
        assert_relative_eq!(
            downlink_rate(&ctx, &unit_channel(2.0)).unwrap(),
            0.584_962_500_721_156_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_distance_is_singular() {
        let r = rsu(1.0, 1.0, 50.0);
        let v = vehicle(20.0);
        let ctx = LinkContext { rsu: &r, vehicle: &v, distance_m: 0.0, concurrent_vehicles: 1 };
        assert!(matches!(
            downlink_rate(&ctx, &unit_channel(2.0)),
            Err(ChannelError::SingularGeometry { .. })
        ));
    }

    #[test]
    fn pmf_degenerate_limit() {
        assert_eq!(concurrency_pmf(1, 1e-300, 0), 1.0);
    }

    #[test]
    fn pmf_matches_reference_value() {
        assert_relative_eq!(concurrency_pmf(10, 0.1, 0), (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(concurrency_pmf(10, 0.1, 0), 0.367_879_441_171_442_33, max_relative = 1e-12);
    }

    #[test]
    fn pmf_normalizes_over_truncated_support() {
        for &(m, p) in &[(10usize, 0.1f64), (100, 0.1), (200, 0.1), (40, 0.5)] {
            let total: f64 = (0..=200).map(|k| concurrency_pmf(m, p, k)).sum();
            assert!((total - 1.0).abs() < 1e-9, "m={m} p={p} total={total}");
        }
    }

    #[test]
    fn two_vehicle_expected_rate_is_single_poisson_term() {
        let r = rsu(1.0, 1.0, 50.0);
        let v = vehicle(20.0);
        let ctx = LinkContext { rsu: &r, vehicle: &v, distance_m: 1.0, concurrent_vehicles: 1 };
        let ch = unit_channel(2.0);
        let p = 0.3f64;
        let solo = downlink_rate(&ctx, &ch).unwrap();
        let lambda = 2.0 * p;
        let expected = lambda * (-lambda).exp() * solo;
        assert_relative_eq!(expected_rate(&ctx, &ch, 2, p).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn tiny_meeting_probability_drives_expected_rate_to_zero() {
        let r = rsu(1.0, 1.0, 50.0);
        let v = vehicle(20.0);
        let ctx = LinkContext { rsu: &r, vehicle: &v, distance_m: 1.0, concurrent_vehicles: 1 };
        let ch = unit_channel(2.0);
        assert!(expected_rate(&ctx, &ch, 50, 1e-12).unwrap() < 1e-9);
    }

    #[test]
    fn expected_rate_never_exceeds_solo_rate() {
        let r = rsu(1500.0, 30.0, 45.0);
        let v = vehicle(20.0);
        let ch = ChannelParams {
            path_loss_exponent: 2.5,
            fading_gain: 1500.0,
            noise_psd: 0.3,
            rx_bandwidth_default_mb_s: 1000.0,
        };
        let ctx = LinkContext { rsu: &r, vehicle: &v, distance_m: 45.0, concurrent_vehicles: 1 };
        let solo = downlink_rate(&ctx, &ch).unwrap();
        for m in [2usize, 5, 50, 251] {
            let e = expected_rate(&ctx, &ch, m, 0.01).unwrap();
            assert!(e <= solo && e >= 0.0);
        }
    }

    #[test]
    fn contact_window_examples() {
        let v20 = vehicle(20.0);
        let v25 = vehicle(25.0);
        assert_eq!(contact_window(&rsu(1000.0, 30.0, 60.0), &v20), 8.0);
        assert_eq!(contact_window(&rsu(1000.0, 30.0, 0.0), &v25), 8.0);
        assert!(contact_window(&rsu(1000.0, 30.0, 99.999), &v20) < 0.05);
    }

    #[test]
    fn out_of_reach_window_is_zero_not_an_error() {
        let mut r = rsu(1000.0, 30.0, 100.0);
        r.lane_offset_m = 100.0;
        assert_eq!(contact_window(&r, &vehicle(20.0)), 0.0);
    }
}
