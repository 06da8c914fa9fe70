#![allow(dead_code)]

use std::f64::consts::TAU;

use muse_core::units::{db_to_linear, dbm_to_watts};
use muse_core::{
    AntennaPattern, GridSpec, Point, PropagationModel, Receiver, RfLink, RfNetwork, RfSystem, SystemParams, Transmitter,
};
use rand::Rng;

pub const NOISE_DBM: f64 = -106.0;

/// 30 dBm ceiling, -200 dBm floor, -106 dBm noise.
pub fn params() -> SystemParams {
    SystemParams::new(1.0, dbm_to_watts(-200.0), dbm_to_watts(NOISE_DBM))
}

pub fn system(grid: GridSpec) -> RfSystem {
    RfSystem::empty(params(), PropagationModel::power_law(3.5), grid)
}

/// The 4.3 km x 3.7 km region at 100 m hexagons (676 regions).
pub fn reference_grid() -> GridSpec {
    GridSpec::rectangle(4300.0, 3700.0, 100.0)
}

/// 5 x 5 block of 100 m hexagons.
pub fn small_grid() -> GridSpec {
    GridSpec::rectangle(600.0, 540.0, 100.0)
}

pub fn random_point(rng: &mut impl Rng, grid: &GridSpec) -> Point {
    Point::new(rng.random_range(0.0..=grid.width), rng.random_range(0.0..=grid.height))
}

pub fn near(rng: &mut impl Rng, grid: &GridSpec, p: Point, max_d: f64) -> Point {
    let r = rng.random_range(1.0..max_d);
    let a = rng.random_range(0.0..TAU);
    Point::new(
        (p.x + r * a.cos()).clamp(0.0, grid.width),
        (p.y + r * a.sin()).clamp(0.0, grid.height),
    )
}

pub fn random_antenna(rng: &mut impl Rng) -> AntennaPattern {
    if rng.random_bool(0.7) {
        AntennaPattern::Omni
    } else {
        AntennaPattern::Sector {
            boresight: rng.random_range(-TAU..TAU),
            beamwidth: rng.random_range(0.3..3.0),
            main_gain: db_to_linear(rng.random_range(0.0..12.0)),
            back_gain: db_to_linear(rng.random_range(-20.0..0.0)),
        }
    }
}

pub fn random_transmitter(rng: &mut impl Rng, id: String, grid: &GridSpec) -> Transmitter {
    let mut t = Transmitter::omni(id, random_point(rng, grid), dbm_to_watts(rng.random_range(-20.0..30.0)));
    t.antenna = random_antenna(rng);
    t
}

pub fn random_receiver(rng: &mut impl Rng, id: String, at: Point, served: bool) -> Receiver {
    let mut r = Receiver::omni(id, at, db_to_linear(rng.random_range(0.0..20.0)));
    r.antenna = random_antenna(rng);
    if !served {
        r.explicit_margin = Some(dbm_to_watts(rng.random_range(-130.0..-90.0)));
    }
    r
}

/// Up to `max_tx` transmitters and `max_rx` receivers spread over one or two
/// networks. Receivers either join a transmitter's link (placed near it) or
/// sit in a receive-only link with an explicit margin.
pub fn random_system(rng: &mut impl Rng, grid: GridSpec, max_tx: usize, max_rx: usize) -> RfSystem {
    let mut sys = system(grid.clone());
    let n_tx = rng.random_range(0..=max_tx);
    let n_rx = rng.random_range(0..=max_rx);
    let mut links: Vec<RfLink> = (0..n_tx)
        .map(|k| RfLink::new(format!("l{k}"), Some(random_transmitter(rng, format!("t{k}"), &grid)), vec![]))
        .collect();
    for k in 0..n_rx {
        let id = format!("r{k}");
        if n_tx > 0 && rng.random_bool(0.7) {
            let link = rng.random_range(0..n_tx);
            let at = near(rng, &grid, links[link].transmitters[0].position, 600.0);
            links[link].receivers.push(random_receiver(rng, id, at, true));
        } else {
            let at = random_point(rng, &grid);
            links.push(RfLink::new(format!("lr{k}"), None, vec![random_receiver(rng, id, at, false)]));
        }
    }
    if links.is_empty() {
        return sys;
    }
    let split = rng.random_range(0..=links.len());
    let second = links.split_off(split);
    for (k, part) in [links, second].into_iter().enumerate() {
        if !part.is_empty() {
            let mut net = RfNetwork::new(format!("n{k}"), part);
            net.orthogonal_links = rng.random_bool(0.3);
            sys.add_network(net);
        }
    }
    sys
}
