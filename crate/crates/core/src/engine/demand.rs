use rand::Rng;
use rand_distr::Exp;

use crate::domain::{DriverParams, Lane, ScenarioConfig, VehicleKind};

/// One vehicle waiting to enter the road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub kind: VehicleKind,
    pub automated: bool,
    pub lane: Lane,
    pub driver: DriverParams,
}

/// Poisson arrivals at `traffic_volume / 3600` veh/s over `[0, horizon)`.
///
/// Class and automation are independent Bernoulli draws. Large vehicles
/// enter lanes 1–2, small vehicles any lane, uniformly.
pub fn generate_demand<R: Rng + ?Sized>(config: &ScenarioConfig, horizon: f64, rng: &mut R) -> Vec<Arrival> {
    let rate = config.traffic_volume / 3600.0;
    let gap = Exp::new(rate).expect("validated volume is positive");
    let lanes = config.layout.lane_count;
    let large_lanes = lanes.min(2);
    let mut out = Vec::with_capacity((rate * horizon * 1.1) as usize + 16);
    let mut t = rng.sample(gap);
    while t < horizon {
        let kind = if rng.random_bool(config.large_vehicle_share) {
            VehicleKind::Large
        } else {
            VehicleKind::Small
        };
        let automated = rng.random_bool(config.mpr);
        let lane = match kind {
            VehicleKind::Large => rng.random_range(1..=large_lanes),
            VehicleKind::Small => rng.random_range(1..=lanes),
        };
        let driver = config.driver.sample(kind.class(), rng);
        out.push(Arrival {
            time: t,
            kind,
            automated,
            lane,
            driver,
        });
        t += rng.sample(gap);
    }
    out
}
