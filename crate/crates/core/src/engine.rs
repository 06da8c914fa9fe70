//! Occupancy, opportunity and liability at points and cells, and their
//! aggregation into entity and system consumption.
//!
//! Per point `p` in band `nu` and quantum `tau`:
//!
//! - a transmitter occupies `P_t * g_t(t->p) * L(d)`, and the point's
//!   occupancy is the sum over active transmitters plus ambient noise;
//! - a receiver tolerates `margin = S / beta - W` more interference, where
//!   `S` is its serving signal and `W` the noise at its location;
//! - the receiver lets a source at `p` emit at most
//!   `(margin - I) / (L(d(p, r)) * g_r(r->p))`, where `I` is the interference
//!   it already sees from non-serving transmitters;
//! - the point's opportunity is the minimum of that over receivers, never
//!   more than `p_max` minus the occupancy.
//!
//! Cell values are the point values at the cell's sample point, with the
//! opportunity clamped so that occupancy, opportunity and liability add up to
//! `p_cmax` in every cell.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{MuseError, Result};
use crate::grid::{self, Cell, HexGrid};
use crate::model::{
    entity_selector, validate_system, Activity, AntennaPattern, EntityMembers, EntityQuery, Point,
    RfSystem,
};
use crate::parallel::{self, Execution, Sum};
use crate::propagation::{gain_or_peak, PropagationModel};
use crate::smf::{OpportunityMap, Provenance};

#[derive(Debug, Clone)]
struct TxEntry {
    id: String,
    network: usize,
    position: Point,
    power: f64,
    antenna: AntennaPattern,
    activity: Activity,
}

#[derive(Debug, Clone)]
struct RxEntry {
    id: String,
    network: usize,
    position: Point,
    beta: f64,
    antenna: AntennaPattern,
    explicit_margin: Option<f64>,
    activity: Activity,
    serving: Option<usize>,
    noise: f64,
}

/// Receiver state that only depends on the (time, band) slice.
#[derive(Debug, Clone, Copy)]
struct RxState {
    rx: usize,
    signal: f64,
    interference: f64,
    margin: f64,
}

#[derive(Debug, Clone)]
struct Slice {
    model: PropagationModel,
    txs: Vec<usize>,
    rxs: Vec<RxState>,
}

/// Values at one point, for one receiver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverAtPoint {
    pub receiver: String,
    pub margin: f64,
    /// Receiver-imposed bound on power sourced at the point.
    pub bound: f64,
    /// Existing interference projected back to the point.
    pub proportional_interference: f64,
    /// `bound - proportional_interference`; negative under harmful interference.
    pub opportunity: f64,
    pub liability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMetrics {
    pub point: Point,
    pub time: usize,
    pub band: usize,
    /// Per active transmitter, received power at the point.
    pub tx_occupancy: Vec<(String, f64)>,
    pub noise: f64,
    /// Aggregate occupancy including noise.
    pub occupancy: f64,
    pub receivers: Vec<ReceiverAtPoint>,
    /// Net opportunity, unclamped below.
    pub opportunity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub cell: Cell,
    pub occupancy: f64,
    pub opportunity: f64,
    pub raw_opportunity: f64,
    pub liability: f64,
    /// `(transmitter index, occupancy)` for each active transmitter.
    pub tx_occupancy: Vec<(usize, f64)>,
    /// `(receiver index, liability)` for each active receiver.
    pub rx_liability: Vec<(usize, f64)>,
    /// Active receivers already harmfully interfered at their own location.
    pub harmful: Vec<usize>,
}

impl CellMetrics {
    /// Occupancy alone is above the consumption ceiling (liability < 0).
    pub fn exceeds_ceiling(&self) -> bool {
        self.liability < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityShare {
    pub id: String,
    pub consumed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsumptionReport {
    pub regions: usize,
    pub time_quanta: usize,
    pub bands: usize,
    pub cell_count: usize,
    /// Physical area of one unit region, m^2.
    pub hex_area_m2: f64,
    pub p_cmax: f64,
    pub total: f64,
    pub utilized: f64,
    pub forbidden: f64,
    pub available: f64,
    pub transmitters: Vec<EntityShare>,
    pub receivers: Vec<EntityShare>,
    /// `|utilized + forbidden + available - total| / total`.
    pub conservation_residual: f64,
    /// Largest per-cell `|omega + gamma + phi - p_cmax| / p_cmax`.
    pub max_cell_residual: f64,
    /// Cells whose occupancy alone exceeds `p_cmax`.
    pub ceiling_breaches: usize,
}

impl ConsumptionReport {
    pub fn utilized_fraction(&self) -> f64 {
        self.utilized / self.total
    }

    pub fn forbidden_fraction(&self) -> f64 {
        self.forbidden / self.total
    }

    pub fn available_fraction(&self) -> f64 {
        self.available / self.total
    }

    /// Consumption of a set of transceivers.
    pub fn consumption_of(&self, members: &EntityMembers) -> f64 {
        let tx = self
            .transmitters
            .iter()
            .filter(|s| members.transmitters.contains(&s.id))
            .map(|s| s.consumed);
        let rx = self
            .receivers
            .iter()
            .filter(|s| members.receivers.contains(&s.id))
            .map(|s| s.consumed);
        tx.chain(rx).collect::<Sum>().value()
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    system: RfSystem,
    grid: HexGrid,
    txs: Vec<TxEntry>,
    rxs: Vec<RxEntry>,
    slices: Vec<Slice>,
    exec: Execution,
}

impl Engine {
    /// Validate the scenario, apply worst-case placement if requested and
    /// precompute per-slice receiver state.
    pub fn new(system: &RfSystem) -> Result<Self> {
        let report = validate_system(system);
        if !report.is_valid() {
            return Err(MuseError::InvalidSystem(report));
        }
        let grid = grid::tessellate(&system.grid)?;
        let system = if system.grid.worst_case_placement {
            place_worst_case(system, &grid)
        } else {
            system.clone()
        };

        let mut txs = Vec::new();
        let mut link_tx = BTreeMap::new();
        for (n, l, t) in system.transmitters() {
            link_tx.entry((n, l)).or_insert(txs.len());
            txs.push(TxEntry {
                id: t.id.clone(),
                network: n,
                position: t.position,
                power: t.tx_power,
                antenna: t.antenna,
                activity: t.activity.clone(),
            });
        }
        let rxs: Vec<RxEntry> = system
            .receivers()
            .map(|(n, l, r)| RxEntry {
                id: r.id.clone(),
                network: n,
                position: r.position,
                beta: r.beta,
                antenna: r.antenna,
                explicit_margin: r.explicit_margin,
                activity: r.activity.clone(),
                serving: link_tx.get(&(n, l)).copied(),
                noise: system.params.noise_in_region(grid.locate(r.position)),
            })
            .collect();

        let mut engine = Engine {
            system,
            grid,
            txs,
            rxs,
            slices: Vec::new(),
            exec: Execution::default(),
        };
        engine.slices = (0..engine.grid.horizon())
            .flat_map(|tau| (0..engine.grid.band_count()).map(move |nu| (tau, nu)))
            .map(|(tau, nu)| engine.build_slice(tau, nu))
            .collect();
        Ok(engine)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    /// The evaluated system, after any worst-case relocation.
    pub fn system(&self) -> &RfSystem {
        &self.system
    }

    pub fn grid(&self) -> &HexGrid {
        &self.grid
    }

    pub fn transmitter_count(&self) -> usize {
        self.txs.len()
    }

    pub fn receiver_count(&self) -> usize {
        self.rxs.len()
    }

    pub fn transmitter_id(&self, index: usize) -> &str {
        &self.txs[index].id
    }

    pub fn receiver_id(&self, index: usize) -> &str {
        &self.rxs[index].id
    }

    pub fn transmitter_index(&self, id: &str) -> Option<usize> {
        self.txs.iter().position(|t| t.id == id)
    }

    pub fn receiver_index(&self, id: &str) -> Option<usize> {
        self.rxs.iter().position(|r| r.id == id)
    }

    fn build_slice(&self, tau: usize, nu: usize) -> Slice {
        let model = self.system.propagation_for(nu);
        let txs: Vec<usize> = (0..self.txs.len())
            .filter(|&i| self.txs[i].activity.is_active(tau, nu))
            .collect();
        let rxs = (0..self.rxs.len())
            .filter(|&i| self.rxs[i].activity.is_active(tau, nu))
            .map(|i| {
                let rx = &self.rxs[i];
                let signal = rx
                    .serving
                    .filter(|s| txs.contains(s))
                    .map_or(0.0, |s| self.received_at_receiver(&model, s, i));
                let interference = txs
                    .iter()
                    .filter(|&&t| self.interferes(t, i))
                    .map(|&t| self.received_at_receiver(&model, t, i))
                    .collect::<Sum>()
                    .value();
                let margin = rx.explicit_margin.unwrap_or(signal / rx.beta - rx.noise);
                RxState {
                    rx: i,
                    signal,
                    interference,
                    margin,
                }
            })
            .collect();
        Slice { model, txs, rxs }
    }

    fn interferes(&self, tx: usize, rx: usize) -> bool {
        let r = &self.rxs[rx];
        if r.serving == Some(tx) {
            return false;
        }
        let t = &self.txs[tx];
        !(t.network == r.network && self.system.networks[r.network].orthogonal_links)
    }

    /// Power from `tx` at receiver `rx`, both antennas included.
    fn received_at_receiver(&self, model: &PropagationModel, tx: usize, rx: usize) -> f64 {
        let t = &self.txs[tx];
        let r = &self.rxs[rx];
        t.power
            * gain_or_peak(&t.antenna, t.position, r.position)
            * model.gain(t.position.distance(r.position))
            * gain_or_peak(&r.antenna, r.position, t.position)
    }

    fn tx_power_at(&self, model: &PropagationModel, tx: usize, p: Point) -> f64 {
        let t = &self.txs[tx];
        t.power * gain_or_peak(&t.antenna, t.position, p) * model.gain(t.position.distance(p))
    }

    fn rx_opportunity_at(&self, model: &PropagationModel, state: &RxState, p: Point) -> (f64, f64) {
        let r = &self.rxs[state.rx];
        let coupling = model.gain(p.distance(r.position)) * gain_or_peak(&r.antenna, r.position, p);
        (state.margin / coupling, state.interference / coupling)
    }

    fn slice(&self, tau: usize, nu: usize) -> Result<&Slice> {
        if tau >= self.grid.horizon() || nu >= self.grid.band_count() {
            return Err(MuseError::OutOfRange(format!("time {tau}, band {nu}")));
        }
        Ok(&self.slices[tau * self.grid.band_count() + nu])
    }

    fn noise_at(&self, p: Point) -> f64 {
        self.system.params.noise_in_region(self.grid.locate(p))
    }

    /// Power deposited at `p` by one transmitter; zero when it is inactive.
    pub fn tx_occupancy_at(&self, tx: usize, p: Point, tau: usize, nu: usize) -> Result<f64> {
        let slice = self.slice(tau, nu)?;
        if tx >= self.txs.len() {
            return Err(MuseError::OutOfRange(format!("transmitter {tx}")));
        }
        Ok(if slice.txs.contains(&tx) {
            self.tx_power_at(&slice.model, tx, p)
        } else {
            0.0
        })
    }

    /// Sum of active transmitter occupancies plus ambient noise.
    pub fn aggregate_occupancy_at(&self, p: Point, tau: usize, nu: usize) -> Result<f64> {
        let slice = self.slice(tau, nu)?;
        Ok(self.occupancy(slice, p, self.noise_at(p)))
    }

    fn occupancy(&self, slice: &Slice, p: Point, noise: f64) -> f64 {
        let mut sum: Sum = slice.txs.iter().map(|&t| self.tx_power_at(&slice.model, t, p)).collect();
        sum.add(noise);
        sum.value()
    }

    /// Interference the receiver can still tolerate in the slice. Negative
    /// when the receiver cannot meet its SINR requirement even without
    /// interferers.
    pub fn interference_margin(&self, rx: usize, tau: usize, nu: usize) -> Result<f64> {
        let r = self
            .rxs
            .get(rx)
            .ok_or_else(|| MuseError::OutOfRange(format!("receiver {rx}")))?;
        if let Some(m) = r.explicit_margin {
            return Ok(m);
        }
        let Some(serving) = r.serving else {
            return Err(MuseError::MissingMargin(r.id.clone()));
        };
        let slice = self.slice(tau, nu)?;
        let signal = if slice.txs.contains(&serving) {
            self.received_at_receiver(&slice.model, serving, rx)
        } else {
            0.0
        };
        Ok(signal / r.beta - r.noise)
    }

    /// Linear SINR of a receiver in a slice.
    pub fn receiver_sinr(&self, rx: usize, tau: usize, nu: usize) -> Result<f64> {
        let slice = self.slice(tau, nu)?;
        let state = slice
            .rxs
            .iter()
            .find(|s| s.rx == rx)
            .ok_or_else(|| MuseError::OutOfRange(format!("receiver {rx} inactive at ({tau}, {nu})")))?;
        Ok(state.signal / (self.rxs[rx].noise + state.interference))
    }

    /// Receiver-imposed interference opportunity at `p`.
    pub fn interference_opportunity(&self, rx: usize, p: Point, tau: usize, nu: usize) -> Result<f64> {
        let slice = self.slice(tau, nu)?;
        let state = slice
            .rxs
            .iter()
            .find(|s| s.rx == rx)
            .ok_or_else(|| MuseError::OutOfRange(format!("receiver {rx} inactive at ({tau}, {nu})")))?;
        let (bound, existing) = self.rx_opportunity_at(&slice.model, state, p);
        Ok(bound - existing)
    }

    /// Minimum receiver opportunity at `p`, capped by `p_max` minus the
    /// occupancy. With no active receivers this is the cap itself.
    pub fn net_opportunity_at(&self, p: Point, tau: usize, nu: usize) -> Result<f64> {
        let slice = self.slice(tau, nu)?;
        let occupancy = self.occupancy(slice, p, self.noise_at(p));
        Ok(self.net_opportunity(slice, p, occupancy))
    }

    fn net_opportunity(&self, slice: &Slice, p: Point, occupancy: f64) -> f64 {
        let ceiling = self.system.params.p_max - occupancy;
        slice
            .rxs
            .iter()
            .map(|s| {
                let (bound, existing) = self.rx_opportunity_at(&slice.model, s, p);
                bound - existing
            })
            .fold(ceiling, f64::min)
    }

    pub fn point_metrics(&self, p: Point, tau: usize, nu: usize) -> Result<PointMetrics> {
        let slice = self.slice(tau, nu)?;
        let p_cmax = self.system.params.p_cmax();
        let noise = self.noise_at(p);
        let tx_occupancy: Vec<(String, f64)> = slice
            .txs
            .iter()
            .map(|&t| (self.txs[t].id.clone(), self.tx_power_at(&slice.model, t, p)))
            .collect();
        let occupancy = self.occupancy(slice, p, noise);
        let receivers = slice
            .rxs
            .iter()
            .map(|s| {
                let (bound, existing) = self.rx_opportunity_at(&slice.model, s, p);
                let opportunity = bound - existing;
                ReceiverAtPoint {
                    receiver: self.rxs[s.rx].id.clone(),
                    margin: s.margin,
                    bound,
                    proportional_interference: existing,
                    opportunity,
                    liability: receiver_liability(p_cmax, occupancy, opportunity),
                }
            })
            .collect();
        Ok(PointMetrics {
            point: p,
            time: tau,
            band: nu,
            tx_occupancy,
            noise,
            occupancy,
            receivers,
            opportunity: self.net_opportunity(slice, p, occupancy),
        })
    }

    /// Core per-cell evaluation. Calls `on_tx` / `on_rx` with each active
    /// transmitter's occupancy and each active receiver's liability.
    fn evaluate_cell(
        &self,
        cell: &Cell,
        mut on_tx: impl FnMut(usize, f64),
        mut on_rx: impl FnMut(usize, f64, bool),
    ) -> (f64, f64, f64, f64) {
        let slice = &self.slices[cell.time * self.grid.band_count() + cell.band];
        let params = &self.system.params;
        let p_cmax = params.p_cmax();
        let p = cell.sample_point;

        let mut occ = Sum::default();
        for &t in &slice.txs {
            let w = self.tx_power_at(&slice.model, t, p);
            on_tx(t, w);
            occ.add(w);
        }
        occ.add(params.noise_in_region(Some(cell.region)));
        let omega = occ.value();

        let mut raw = params.p_max - omega;
        for s in &slice.rxs {
            let (bound, existing) = self.rx_opportunity_at(&slice.model, s, p);
            let opp = bound - existing;
            raw = raw.min(opp);
            on_rx(s.rx, receiver_liability(p_cmax, omega, opp), s.margin < s.interference);
        }

        let headroom = p_cmax - omega;
        let (gamma, phi) = if headroom <= 0.0 {
            (0.0, headroom)
        } else if raw >= headroom {
            (headroom, 0.0)
        } else if raw <= 0.0 {
            (0.0, headroom)
        } else {
            (raw, p_cmax - (omega + raw))
        };
        (omega, gamma, raw, phi)
    }

    pub fn cell_metrics(&self, cell: &Cell) -> CellMetrics {
        let mut tx_occupancy = Vec::new();
        let mut rx_liability = Vec::new();
        let mut harmful = Vec::new();
        let (occupancy, opportunity, raw_opportunity, liability) = self.evaluate_cell(
            cell,
            |t, w| tx_occupancy.push((t, w)),
            |r, l, h| {
                rx_liability.push((r, l));
                if h {
                    harmful.push(r);
                }
            },
        );
        CellMetrics {
            cell: *cell,
            occupancy,
            opportunity,
            raw_opportunity,
            liability,
            tx_occupancy,
            rx_liability,
            harmful,
        }
    }

    pub fn cell_metrics_at(&self, index: usize) -> CellMetrics {
        self.cell_metrics(&self.grid.cell(index))
    }

    /// Metrics of every cell, in cell order.
    pub fn all_cell_metrics(&self) -> Vec<CellMetrics> {
        parallel::map_collect(self.exec, self.grid.cell_count(), |i| self.cell_metrics_at(i))
    }

    /// Clamped opportunity of every cell.
    pub fn opportunity_map(&self) -> OpportunityMap {
        let values = parallel::map_collect(self.exec, self.grid.cell_count(), |i| {
            self.evaluate_cell(&self.grid.cell(i), |_, _| {}, |_, _, _| {}).1
        });
        OpportunityMap::new(&self.grid, values, self.system.params.p_cmax(), Provenance::GroundTruth)
            .expect("cell count matches grid")
    }

    pub fn system_report(&self) -> ConsumptionReport {
        let p_cmax = self.system.params.p_cmax();
        let n_tx = self.txs.len();
        let n_rx = self.rxs.len();
        let acc = parallel::map_reduce(
            self.exec,
            self.grid.cell_count(),
            |range| {
                let mut acc = Accumulator::new(n_tx, n_rx);
                for i in range {
                    let cell = self.grid.cell(i);
                    let (omega, gamma, _, phi) = self.evaluate_cell(
                        &cell,
                        |t, w| acc.per_tx[t].add(w),
                        |r, l, _| acc.per_rx[r].add(l),
                    );
                    acc.utilized.add(omega);
                    acc.available.add(gamma);
                    acc.forbidden.add(phi);
                    let residual = ((omega + gamma + phi) - p_cmax).abs() / p_cmax;
                    acc.max_cell_residual = acc.max_cell_residual.max(residual);
                    acc.ceiling_breaches += usize::from(phi < 0.0);
                }
                acc
            },
            Accumulator::new(n_tx, n_rx),
            Accumulator::merge,
        );

        let total = grid::total_spectrum_space(&self.system.grid, &self.system.params)
            .expect("grid validated at construction");
        let (utilized, forbidden, available) = (acc.utilized.value(), acc.forbidden.value(), acc.available.value());
        let share = |ids: Vec<&String>, sums: Vec<Sum>| {
            ids.into_iter()
                .zip(sums)
                .map(|(id, s)| EntityShare {
                    id: id.clone(),
                    consumed: s.value(),
                })
                .collect()
        };
        ConsumptionReport {
            regions: self.grid.region_count(),
            time_quanta: self.grid.horizon(),
            bands: self.grid.band_count(),
            cell_count: self.grid.cell_count(),
            hex_area_m2: self.grid.hex_area(),
            p_cmax,
            total,
            utilized,
            forbidden,
            available,
            transmitters: share(self.txs.iter().map(|t| &t.id).collect(), acc.per_tx),
            receivers: share(self.rxs.iter().map(|r| &r.id).collect(), acc.per_rx),
            conservation_residual: ((utilized + forbidden + available) - total).abs() / total,
            max_cell_residual: acc.max_cell_residual,
            ceiling_breaches: acc.ceiling_breaches,
        }
    }

    /// Spectrum consumed by an RF-entity: occupancy of its transmitters plus
    /// liability of its receivers, summed over all cells.
    pub fn entity_consumption(&self, query: &EntityQuery) -> Result<f64> {
        let members = entity_selector(&self.system, query)?;
        Ok(self.system_report().consumption_of(&members))
    }
}

fn receiver_liability(p_cmax: f64, occupancy: f64, opportunity: f64) -> f64 {
    (p_cmax - (occupancy + opportunity)).clamp(0.0, p_cmax)
}

struct Accumulator {
    utilized: Sum,
    forbidden: Sum,
    available: Sum,
    per_tx: Vec<Sum>,
    per_rx: Vec<Sum>,
    max_cell_residual: f64,
    ceiling_breaches: usize,
}

impl Accumulator {
    fn new(n_tx: usize, n_rx: usize) -> Self {
        Self {
            utilized: Sum::default(),
            forbidden: Sum::default(),
            available: Sum::default(),
            per_tx: vec![Sum::default(); n_tx],
            per_rx: vec![Sum::default(); n_rx],
            max_cell_residual: 0.0,
            ceiling_breaches: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.utilized = self.utilized.merge(other.utilized);
        self.forbidden = self.forbidden.merge(other.forbidden);
        self.available = self.available.merge(other.available);
        for (a, b) in self.per_tx.iter_mut().zip(other.per_tx) {
            *a = a.merge(b);
        }
        for (a, b) in self.per_rx.iter_mut().zip(other.per_rx) {
            *a = a.merge(b);
        }
        self.max_cell_residual = self.max_cell_residual.max(other.max_cell_residual);
        self.ceiling_breaches += other.ceiling_breaches;
        self
    }
}

/// Relocate every transceiver to the vertex of its hexagon farthest from the
/// sample point, preferring the vertex farthest from its link partner.
fn place_worst_case(system: &RfSystem, grid: &HexGrid) -> RfSystem {
    let mut placed = system.clone();
    for (net, orig_net) in placed.networks.iter_mut().zip(&system.networks) {
        for (link, orig) in net.links.iter_mut().zip(&orig_net.links) {
            let rx_centroid = (!orig.receivers.is_empty()).then(|| {
                let n = orig.receivers.len() as f64;
                let (sx, sy) = orig
                    .receivers
                    .iter()
                    .fold((0.0, 0.0), |(x, y), r| (x + r.position.x, y + r.position.y));
                Point::new(sx / n, sy / n)
            });
            let tx_pos = orig.transmitter().map(|t| t.position);
            for t in &mut link.transmitters {
                t.position = grid.worst_case_position(t.position, rx_centroid);
            }
            for r in &mut link.receivers {
                r.position = grid.worst_case_position(r.position, tx_pos);
            }
        }
    }
    placed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::{Receiver, RfLink, RfNetwork, SystemParams, Transmitter};
    use crate::propagation::PropagationModel;
    use crate::units::{db_to_linear, dbm_to_watts, watts_to_dbm};

    fn params() -> SystemParams {
        SystemParams::new(1.0, dbm_to_watts(-200.0), dbm_to_watts(-106.0))
    }

    fn reference_system() -> RfSystem {
        RfSystem::empty(params(), PropagationModel::power_law(3.5), GridSpec::rectangle(4300.0, 3700.0, 100.0))
    }

    fn point_fixture(tx_dbm: f64, rx: Point) -> Engine {
        let mut sys = reference_system();
        sys.add_network(RfNetwork::new(
            "n",
            vec![RfLink::new(
                "l",
                Some(Transmitter::omni("t", Point::new(1000.0, 2000.0), dbm_to_watts(tx_dbm))),
                vec![Receiver::omni("r", rx, db_to_linear(3.0))],
            )],
        ));
        Engine::new(&sys).unwrap()
    }

    const POINT: Point = Point::new(2250.0, 1800.0);

    #[test]
    fn table2_transmitter_occupancy() {
        // 6 dBm - 35 log10(1265.9 m); mpmath: -102.58396566833996 dBm
        let e = point_fixture(6.0, Point::new(1000.0, 2100.0));
        let w = e.tx_occupancy_at(0, POINT, 0, 0).unwrap();
        assert!((watts_to_dbm(w) + 102.583_965_668_339_96).abs() < 1e-9);
        let e = point_fixture(-24.0, Point::new(1000.0, 2100.0));
        let w = e.tx_occupancy_at(0, POINT, 0, 0).unwrap();
        assert!((watts_to_dbm(w) + 132.583_965_668_339_96).abs() < 1e-9);
    }

    #[test]
    fn occupancy_at_reference_distance_is_full_power() {
        let e = point_fixture(30.0, Point::new(1000.0, 2100.0));
        assert_eq!(e.tx_occupancy_at(0, Point::new(1000.5, 2000.0), 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn inactive_transmitter_occupies_nothing() {
        let mut sys = reference_system();
        sys.grid.horizon = 2;
        let mut t = Transmitter::omni("t", Point::new(10.0, 10.0), 0.1);
        t.activity = Activity::only([1], [0]);
        sys.add_network(RfNetwork::new("n", vec![RfLink::new("l", Some(t), vec![])]));
        let e = Engine::new(&sys).unwrap();
        assert_eq!(e.tx_occupancy_at(0, POINT, 0, 0).unwrap(), 0.0);
        assert!(e.tx_occupancy_at(0, POINT, 1, 0).unwrap() > 0.0);
        assert!(e.entity_consumption(&"t".into()).unwrap() > 0.0);
        let report = e.system_report();
        // quantum 0 carries noise only
        let quiet = e.cell_metrics(&e.grid().cell(e.grid().cell_index(3, 0, 0)));
        assert_eq!(quiet.tx_occupancy.len(), 0);
        assert!(report.transmitters[0].consumed > 0.0);
    }

    #[test]
    fn noise_only_occupancy() {
        let e = Engine::new(&reference_system()).unwrap();
        let w = e.aggregate_occupancy_at(POINT, 0, 0).unwrap();
        assert_eq!(w, dbm_to_watts(-106.0));
    }

    #[test]
    fn two_symmetric_transmitters_add() {
        let mut sys = reference_system();
        let a = Transmitter::omni("a", Point::new(1000.0, 1000.0), 0.01);
        let b = Transmitter::omni("b", Point::new(3000.0, 1000.0), 0.01);
        sys.add_network(RfNetwork::new(
            "n",
            vec![RfLink::new("la", Some(a), vec![]), RfLink::new("lb", Some(b), vec![])],
        ));
        let e = Engine::new(&sys).unwrap();
        let p = Point::new(2000.0, 1500.0);
        let single = 0.01 * (1000f64.hypot(500.0)).powf(-3.5);
        let expected = dbm_to_watts(-106.0) + 2.0 * single;
        let got = e.aggregate_occupancy_at(p, 0, 0).unwrap();
        assert!((got - expected).abs() / expected < 1e-14);
        let one = e.tx_occupancy_at(0, p, 0, 0).unwrap();
        assert!((one - single).abs() / single < 1e-14);
    }

    #[test]
    fn margins_from_point_fixture() {
        // (-94 dBm / 2) - (-106 dBm), mpmath: 1.744073671817921e-13 W
        let e = point_fixture(-24.0, Point::new(1000.0, 2100.0));
        let m = e.interference_margin(0, 0, 0).unwrap();
        assert!((m / 1.744_073_671_817_921_6e-13 - 1.0).abs() < 1e-9, "{m}");
        let e = point_fixture(6.0, Point::new(1000.0, 2100.0));
        let m = watts_to_dbm(e.interference_margin(0, 0, 0).unwrap());
        assert!((m + 67.000_546_778_777_88).abs() < 1e-9, "{m}");
    }

    #[test]
    fn huge_beta_gives_negative_margin() {
        let mut sys = reference_system();
        sys.add_network(RfNetwork::new(
            "n",
            vec![RfLink::new(
                "l",
                Some(Transmitter::omni("t", Point::new(1000.0, 2000.0), 1e-3)),
                vec![Receiver::omni("r", Point::new(1000.0, 2100.0), 1e300)],
            )],
        ));
        let e = Engine::new(&sys).unwrap();
        let m = e.interference_margin(0, 0, 0).unwrap();
        assert!((m + dbm_to_watts(-106.0)).abs() < 1e-25);
        let c = e.cell_metrics_at(0);
        assert_eq!(c.harmful, vec![0]);
        assert_eq!(c.opportunity, 0.0);
    }

    #[test]
    fn receiver_opportunity_matches_hand_link_budget() {
        // margin -97.584 dBm + 35 log10(1285.5 m); mpmath: 11.233123953932564 dBm
        let e = point_fixture(-24.0, Point::new(1000.0, 2100.0));
        let o = e.interference_opportunity(0, POINT, 0, 0).unwrap();
        assert!((watts_to_dbm(o) - 11.233_123_953_932_564).abs() < 1e-9);
        // high power: 41.8169 dBm before the p_max cap
        let e = point_fixture(6.0, Point::new(1000.0, 2100.0));
        let o = e.interference_opportunity(0, POINT, 0, 0).unwrap();
        assert!((watts_to_dbm(o) - 41.816_928_913_981_49).abs() < 1e-9);
        let net = e.net_opportunity_at(POINT, 0, 0).unwrap();
        assert!((net - (1.0 - e.aggregate_occupancy_at(POINT, 0, 0).unwrap())).abs() < 1e-16);
    }

    #[test]
    fn interference_equal_to_margin_leaves_no_opportunity() {
        // receiver beta chosen so its margin equals the interference it sees
        let mut sys = reference_system();
        let serving = Transmitter::omni("t", Point::new(1000.0, 1000.0), 1e-3);
        let rx_pos = Point::new(1000.0, 1100.0);
        let jammer = Transmitter::omni("j", Point::new(2000.0, 1100.0), 1e-3);
        let noise = dbm_to_watts(-106.0);
        let model = PropagationModel::power_law(3.5);
        let s = 1e-3 * model.gain(100.0);
        let i = 1e-3 * model.gain(1000.0);
        let beta = s / (i + noise);
        sys.add_network(RfNetwork::new(
            "n",
            vec![
                RfLink::new("l", Some(serving), vec![Receiver::omni("r", rx_pos, beta)]),
                RfLink::new("lj", Some(jammer), vec![]),
            ],
        ));
        let e = Engine::new(&sys).unwrap();
        for p in [POINT, Point::new(10.0, 10.0), Point::new(1000.0, 1150.0)] {
            let o = e.interference_opportunity(0, p, 0, 0).unwrap();
            let scale = e.point_metrics(p, 0, 0).unwrap().receivers[0].bound;
            assert!(o.abs() <= 1e-12 * scale, "{o} vs {scale}");
        }
    }

    #[test]
    fn min_rule_over_receivers() {
        // two receive-only receivers with explicit margins; bounds 11 and 19 dBm at p
        let mut sys = reference_system();
        let p = Point::new(2000.0, 2000.0);
        let ra = Point::new(2000.0, 1000.0);
        let rb = Point::new(3000.0, 2000.0);
        let model = PropagationModel::power_law(3.5);
        let mut a = Receiver::omni("a", ra, 1.0);
        a.explicit_margin = Some(dbm_to_watts(11.0) * model.gain(1000.0));
        let mut b = Receiver::omni("b", rb, 1.0);
        b.explicit_margin = Some(dbm_to_watts(19.0) * model.gain(1000.0));
        sys.add_network(RfNetwork::new(
            "astro",
            vec![RfLink::new("la", None, vec![a]), RfLink::new("lb", None, vec![b])],
        ));
        let e = Engine::new(&sys).unwrap();
        let net = e.net_opportunity_at(p, 0, 0).unwrap();
        assert!((watts_to_dbm(net) - 11.0).abs() < 1e-9);
    }

    #[test]
    fn empty_system_cells() {
        let e = Engine::new(&reference_system()).unwrap();
        let noise = dbm_to_watts(-106.0);
        let p_cmax = params().p_cmax();
        for c in e.all_cell_metrics() {
            assert_eq!(c.occupancy, noise);
            assert_eq!(c.opportunity, p_cmax - noise);
            assert_eq!(c.liability, 0.0);
        }
        assert_eq!(e.net_opportunity_at(POINT, 0, 0).unwrap(), 1.0 - noise);
        let r = e.system_report();
        assert_eq!(r.forbidden, 0.0);
        assert!((r.available - r.total).abs() / r.total < 1e-12);
    }

    #[test]
    fn table2_liabilities() {
        let cases = [
            (-24.0, Point::new(1000.0, 2100.0), 0.986_716_503_814_104_1),
            (6.0, Point::new(1000.0, 2100.0), 0.0),
            (6.0, Point::new(1000.0, 2500.0), 0.923_344_520_317_922_2),
        ];
        for (dbm, rx, expected) in cases {
            let e = point_fixture(dbm, rx);
            let pm = e.point_metrics(POINT, 0, 0).unwrap();
            let l = pm.receivers[0].liability;
            assert!((l - expected).abs() < 1e-12, "{dbm} {rx:?}: {l}");
        }
    }

    #[test]
    fn sinr_shift_is_exactly_30_db() {
        let rx = Point::new(1000.0, 2100.0);
        let lo = point_fixture(-24.0, rx).receiver_sinr(0, 0, 0).unwrap();
        let hi = point_fixture(6.0, rx).receiver_sinr(0, 0, 0).unwrap();
        assert!((10.0 * lo.log10() - 12.0).abs() < 1e-9);
        assert!((10.0 * (hi / lo).log10() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn cell_conservation_and_ranges() {
        let e = point_fixture(6.0, Point::new(1000.0, 2500.0));
        let p_cmax = params().p_cmax();
        for c in e.all_cell_metrics() {
            let total = c.occupancy + c.opportunity + c.liability;
            assert!(((total - p_cmax) / p_cmax).abs() <= 1e-12);
            assert!((0.0..=p_cmax).contains(&c.opportunity));
            assert!((0.0..=p_cmax).contains(&c.liability));
            assert!(c.occupancy >= dbm_to_watts(-106.0));
        }
    }

    #[test]
    fn parallel_and_sequential_reports_are_bitwise_equal() {
        let e = point_fixture(6.0, Point::new(1000.0, 2500.0));
        let a = e.clone().with_execution(Execution::Sequential).system_report();
        let b = e.with_execution(Execution::default()).system_report();
        assert_eq!(a, b);
        assert_eq!(a.utilized.to_bits(), b.utilized.to_bits());
    }

    #[test]
    fn orthogonal_links_do_not_interfere() {
        let mut sys = reference_system();
        let l1 = RfLink::new(
            "l1",
            Some(Transmitter::omni("t1", Point::new(1000.0, 1000.0), 0.01)),
            vec![Receiver::omni("r1", Point::new(1000.0, 1100.0), 2.0)],
        );
        let l2 = RfLink::new(
            "l2",
            Some(Transmitter::omni("t2", Point::new(1300.0, 1000.0), 0.01)),
            vec![Receiver::omni("r2", Point::new(1300.0, 1100.0), 2.0)],
        );
        sys.add_network(RfNetwork::new("n", vec![l1, l2]));
        let shared = Engine::new(&sys).unwrap();
        sys.networks[0].orthogonal_links = true;
        let ortho = Engine::new(&sys).unwrap();
        let a = shared.receiver_sinr(0, 0, 0).unwrap();
        let b = ortho.receiver_sinr(0, 0, 0).unwrap();
        assert!(b > a);
        assert!((b - shared.rxs[0].noise.recip() * ortho.slices[0].rxs[0].signal).abs() / b < 1e-12);
    }

    #[test]
    fn sector_receiver_shields_the_back() {
        let mut sys = reference_system();
        let mut rx = Receiver::omni("r", Point::new(2000.0, 2000.0), 2.0);
        rx.antenna = AntennaPattern::Sector {
            boresight: std::f64::consts::PI,
            beamwidth: std::f64::consts::FRAC_PI_2,
            main_gain: 4.0,
            back_gain: 0.1,
        };
        sys.add_network(RfNetwork::new(
            "n",
            vec![RfLink::new(
                "l",
                Some(Transmitter::omni("t", Point::new(1900.0, 2000.0), 0.001)),
                vec![rx],
            )],
        ));
        let e = Engine::new(&sys).unwrap();
        let front = e.interference_opportunity(0, Point::new(1500.0, 2000.0), 0, 0).unwrap();
        let back = e.interference_opportunity(0, Point::new(2500.0, 2000.0), 0, 0).unwrap();
        assert!((back / front - 40.0).abs() < 1e-9);
    }

    #[test]
    fn reference_transmitter_consumption() {
        let mut sys = reference_system();
        sys.add_network(RfNetwork::new(
            "n",
            vec![RfLink::new(
                "l",
                Some(Transmitter::omni("t", Point::new(1000.0, 2000.0), dbm_to_watts(15.0))),
                vec![],
            )],
        ));
        let e = Engine::new(&sys).unwrap();
        let omega = e.entity_consumption(&"t".into()).unwrap();
        assert!((omega - 1.8e-8).abs() < 0.1e-8, "{omega}");
    }

    #[test]
    fn invalid_system_rejected() {
        let mut sys = reference_system();
        sys.params.p_min = 2.0;
        assert!(matches!(Engine::new(&sys), Err(MuseError::InvalidSystem(_))));
        let e = Engine::new(&reference_system()).unwrap();
        assert!(matches!(e.entity_consumption(&"ghost".into()), Err(MuseError::NoSuchEntity(_))));
        assert!(e.aggregate_occupancy_at(POINT, 1, 0).is_err());
    }
}
