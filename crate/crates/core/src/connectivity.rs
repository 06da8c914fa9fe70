//! Multi-band connectivity between adjacent unit regions.
//!
//! A candidate link from region A to region B transmits from A's sample point
//! at the largest power A's opportunity allows and is received at B's sample
//! point against B's occupancy.

use serde::Serialize;

use crate::engine::Engine;
use crate::error::{MuseError, Result};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkFeasibility {
    pub feasible: bool,
    /// Largest power the candidate transmitter may emit, W.
    pub max_power: f64,
    /// Linear SINR at B.
    pub sinr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityEdge {
    pub from: usize,
    pub to: usize,
    /// Indexed by band.
    pub bands: Vec<LinkFeasibility>,
    /// Feasible band with the highest SINR, lowest index on ties.
    pub best_band: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityMap {
    pub candidate_beta: f64,
    pub time: usize,
    /// Ordered adjacent pairs, by source region then destination region.
    pub edges: Vec<ConnectivityEdge>,
}

/// Evaluate a candidate link from region `a` to adjacent region `b`.
pub fn link_feasibility(
    engine: &Engine,
    a: usize,
    b: usize,
    band: usize,
    time: usize,
    candidate_beta: f64,
) -> Result<LinkFeasibility> {
    let grid = engine.grid();
    if a >= grid.region_count() || b >= grid.region_count() || !grid.are_adjacent(a, b) {
        return Err(MuseError::NotAdjacent(a, b));
    }
    if candidate_beta.is_nan() || candidate_beta <= 0.0 {
        return Err(MuseError::OutOfRange(format!("candidate beta {candidate_beta}")));
    }
    let (pa, pb) = (grid.sample_point(a), grid.sample_point(b));
    let p_max = engine.system().params.p_max;
    let max_power = engine.net_opportunity_at(pa, time, band)?.clamp(0.0, p_max);
    let gain = engine.system().propagation_for(band).gain(pa.distance(pb));
    let sinr = max_power * gain / engine.aggregate_occupancy_at(pb, time, band)?;
    Ok(LinkFeasibility {
        feasible: sinr >= candidate_beta,
        max_power,
        sinr,
    })
}

/// Evaluate every ordered adjacent pair in every band at one time quantum.
pub fn build_connectivity_map(engine: &Engine, candidate_beta: f64, time: usize) -> Result<ConnectivityMap> {
    let grid = engine.grid();
    let per_region = parallel::map_collect(engine.execution(), grid.region_count(), |a| {
        let mut targets = grid.neighbors(a);
        targets.sort_unstable();
        targets
            .into_iter()
            .map(|b| {
                let bands = (0..grid.band_count())
                    .map(|nu| link_feasibility(engine, a, b, nu, time, candidate_beta))
                    .collect::<Result<Vec<_>>>()?;
                let best_band = best_band(&bands);
                Ok(ConnectivityEdge {
                    from: a,
                    to: b,
                    bands,
                    best_band,
                })
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut edges = Vec::new();
    for r in per_region {
        edges.extend(r?);
    }
    Ok(ConnectivityMap {
        candidate_beta,
        time,
        edges,
    })
}

fn best_band(bands: &[LinkFeasibility]) -> Option<usize> {
    bands
        .iter()
        .enumerate()
        .filter(|(_, f)| f.feasible)
        .fold(None, |best: Option<(usize, f64)>, (i, f)| match best {
            Some((_, s)) if s >= f.sinr => best,
            _ => Some((i, f.sinr)),
        })
        .map(|(i, _)| i)
}
