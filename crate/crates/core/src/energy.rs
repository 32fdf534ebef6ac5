//! Driving and reception energy accounting, and the feasibility verdict
//! that gates a vehicle's map demand.
//!
//! Reception energy is modeled as receive power times air time,
//! P_rx * M / R joules; drive energy is the per-mileage rate integrated
//! over the route. The two meet in [`energy_feasible`] through the
//! joules-per-kWh bridge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Vehicle, JOULES_PER_KWH};

/// Energy used to drive `distance_km` at `rate_kwh_per_km`, in kWh.
pub fn drive_energy(rate_kwh_per_km: f64, distance_km: f64) -> f64 {
    rate_kwh_per_km * distance_km
}

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    /// A zero-rate link never finishes; air time is unbounded.
    #[error("stalled link: transfer rate is zero")]
    StalledLink,
}

/// Energy to receive `data_mb` at `rate_mb_s` drawing `rx_power_w`, in joules.
pub fn rx_energy(data_mb: f64, rate_mb_s: f64, rx_power_w: f64) -> Result<f64, EnergyError> {
    if rate_mb_s == 0.0 {
        return Err(EnergyError::StalledLink);
    }
    Ok(rx_power_w * data_mb / rate_mb_s)
}

/// Three-way energy verdict for a vehicle, ordered worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    /// Driving alone exceeds the battery; the vehicle cannot take part.
    Stranded,
    /// The full demand breaks the budget; fall back to the basic layers.
    DegradeToBasic,
    /// Drive plus reception energy fits strictly inside the budget.
    Feasible,
}

/// Checks the full-demand transfer plan against the vehicle's battery:
/// reception joules plus route drive energy must stay strictly below the
/// remaining budget.
pub fn energy_feasible(vehicle: &Vehicle, drive_rate_kwh_per_km: f64, plan_rx_joules: f64) -> Verdict {
    let drive_kwh = drive_energy(drive_rate_kwh_per_km, vehicle.route_length_km);
    if drive_kwh > vehicle.energy_remaining_kwh {
        return Verdict::Stranded;
    }
    if drive_kwh + plan_rx_joules / JOULES_PER_KWH < vehicle.energy_remaining_kwh {
        Verdict::Feasible
    } else {
        Verdict::DegradeToBasic
    }
}
