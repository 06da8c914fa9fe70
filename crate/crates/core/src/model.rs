//! Scenario model: transceivers, links, networks and the system they form.
//!
//! All powers are linear watts and all ratios linear; conversion from dB
//! happens when a scenario file is loaded (see [`crate::io`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{MuseError, Result};
use crate::grid::{self, GridSpec};
use crate::propagation::PropagationModel;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AntennaPattern {
    #[default]
    Omni,
    /// Main-lobe gain within +-beamwidth/2 of the boresight bearing, back
    /// gain elsewhere. Angles in radians, bearings counter-clockwise from +x.
    Sector {
        boresight: f64,
        beamwidth: f64,
        main_gain: f64,
        back_gain: f64,
    },
}

impl AntennaPattern {
    pub fn peak_gain(&self) -> f64 {
        match *self {
            AntennaPattern::Omni => 1.0,
            AntennaPattern::Sector { main_gain, .. } => main_gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Maximum permissible power at any point, W.
    pub p_max: f64,
    /// Floor power at any point, W.
    pub p_min: f64,
    /// Ambient noise per band, W.
    pub ambient_noise: f64,
    /// Per-region noise overrides, keyed by region index.
    pub noise_overrides: BTreeMap<usize, f64>,
}

impl SystemParams {
    pub fn new(p_max: f64, p_min: f64, ambient_noise: f64) -> Self {
        Self {
            p_max,
            p_min,
            ambient_noise,
            noise_overrides: BTreeMap::new(),
        }
    }

    /// Maximum consumption at a point.
    pub fn p_cmax(&self) -> f64 {
        self.p_max - self.p_min
    }

    pub fn noise_in_region(&self, region: Option<usize>) -> f64 {
        region
            .and_then(|r| self.noise_overrides.get(&r).copied())
            .unwrap_or(self.ambient_noise)
    }
}

/// Time quanta and bands in which a transceiver operates. `None` means all.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Activity {
    pub intervals: Option<BTreeSet<usize>>,
    pub bands: Option<BTreeSet<usize>>,
}

impl Activity {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn only(intervals: impl IntoIterator<Item = usize>, bands: impl IntoIterator<Item = usize>) -> Self {
        Self {
            intervals: Some(intervals.into_iter().collect()),
            bands: Some(bands.into_iter().collect()),
        }
    }

    pub fn is_active(&self, tau: usize, nu: usize) -> bool {
        self.intervals.as_ref().is_none_or(|s| s.contains(&tau))
            && self.bands.as_ref().is_none_or(|s| s.contains(&nu))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub id: String,
    pub position: Point,
    /// Transmit power, W.
    pub tx_power: f64,
    pub antenna: AntennaPattern,
    pub activity: Activity,
}

impl Transmitter {
    pub fn omni(id: impl Into<String>, position: Point, tx_power: f64) -> Self {
        Self {
            id: id.into(),
            position,
            tx_power,
            antenna: AntennaPattern::Omni,
            activity: Activity::always(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Receiver {
    pub id: String,
    pub position: Point,
    /// Minimum SINR for successful reception, linear.
    pub beta: f64,
    pub antenna: AntennaPattern,
    /// Interference margin in W. Required when the link has no transmitter;
    /// otherwise overrides the margin derived from the serving signal.
    pub explicit_margin: Option<f64>,
    pub activity: Activity,
}

impl Receiver {
    pub fn omni(id: impl Into<String>, position: Point, beta: f64) -> Self {
        Self {
            id: id.into(),
            position,
            beta,
            antenna: AntennaPattern::Omni,
            explicit_margin: None,
            activity: Activity::always(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RfLink {
    pub id: String,
    /// At most one entry in a valid system.
    pub transmitters: Vec<Transmitter>,
    pub receivers: Vec<Receiver>,
}

impl RfLink {
    pub fn new(id: impl Into<String>, transmitter: Option<Transmitter>, receivers: Vec<Receiver>) -> Self {
        Self {
            id: id.into(),
            transmitters: transmitter.into_iter().collect(),
            receivers,
        }
    }

    pub fn transmitter(&self) -> Option<&Transmitter> {
        self.transmitters.first()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RfNetwork {
    pub id: String,
    pub links: Vec<RfLink>,
    /// Links of this network do not interfere with each other.
    pub orthogonal_links: bool,
}

impl RfNetwork {
    pub fn new(id: impl Into<String>, links: Vec<RfLink>) -> Self {
        Self {
            id: id.into(),
            links,
            orthogonal_links: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfSystem {
    pub params: SystemParams,
    pub propagation: PropagationModel,
    pub grid: GridSpec,
    pub networks: Vec<RfNetwork>,
}

impl RfSystem {
    pub fn empty(params: SystemParams, propagation: PropagationModel, grid: GridSpec) -> Self {
        Self {
            params,
            propagation,
            grid,
            networks: Vec::new(),
        }
    }

    /// `(network, link, transmitter)` for every transmitter, in declaration order.
    pub fn transmitters(&self) -> impl Iterator<Item = (usize, usize, &Transmitter)> {
        self.networks.iter().enumerate().flat_map(|(n, net)| {
            net.links
                .iter()
                .enumerate()
                .flat_map(move |(l, link)| link.transmitters.iter().map(move |t| (n, l, t)))
        })
    }

    /// `(network, link, receiver)` for every receiver, in declaration order.
    pub fn receivers(&self) -> impl Iterator<Item = (usize, usize, &Receiver)> {
        self.networks.iter().enumerate().flat_map(|(n, net)| {
            net.links
                .iter()
                .enumerate()
                .flat_map(move |(l, link)| link.receivers.iter().map(move |r| (n, l, r)))
        })
    }

    /// Propagation model for a band, honoring per-band exponent overrides.
    pub fn propagation_for(&self, band: usize) -> PropagationModel {
        match self.grid.bands.get(band).and_then(|b| b.alpha) {
            Some(alpha) => self.propagation.with_alpha(alpha),
            None => self.propagation,
        }
    }

    pub fn add_network(&mut self, network: RfNetwork) -> &mut Self {
        self.networks.push(network);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    PowerBounds,
    Propagation,
    Grid,
    MultipleTransmitters,
    EmptyLink,
    TxPower,
    OutsideRegion,
    Beta,
    MissingMargin,
    ServingNotCoActive,
    ActivityOutOfRange,
    DuplicateId,
    Antenna,
    NoiseOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<&str> = self.violations.iter().map(|v| v.message.as_str()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Check every structural and physical invariant of a scenario.
pub fn validate_system(sys: &RfSystem) -> ValidationReport {
    use ViolationKind::*;
    let mut report = ValidationReport::default();
    let p = &sys.params;

    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !(positive(p.p_min) && positive(p.p_max) && p.p_max > p.p_min) {
        report.push(PowerBounds, format!("require p_max > p_min > 0 (p_max={}, p_min={})", p.p_max, p.p_min));
    }
    if !positive(p.ambient_noise) {
        report.push(PowerBounds, "ambient noise must be positive");
    }
    if !positive(sys.propagation.alpha) || !positive(sys.propagation.reference_distance) {
        report.push(Propagation, "path-loss exponent and reference distance must be positive");
    }
    for (i, band) in sys.grid.bands.iter().enumerate() {
        if band.alpha.is_some_and(|a| !positive(a)) {
            report.push(Propagation, format!("band {i} path-loss exponent must be positive"));
        }
    }

    let tessellation = grid::tessellate(&sys.grid);
    let region_count = match &tessellation {
        Ok(g) => Some(g.region_count()),
        Err(e) => {
            report.push(Grid, e.to_string());
            None
        }
    };
    for (&region, &noise) in &p.noise_overrides {
        if !positive(noise) {
            report.push(NoiseOverride, format!("noise override for region {region} must be positive"));
        }
        if region_count.is_some_and(|n| region >= n) {
            report.push(NoiseOverride, format!("noise override for unknown region {region}"));
        }
    }

    let horizon = sys.grid.horizon;
    let band_count = sys.grid.bands.len();
    let inside = |pt: Point| {
        let eps = 1e-9 * (sys.grid.width + sys.grid.height).max(1.0);
        pt.x >= -eps && pt.y >= -eps && pt.x <= sys.grid.width + eps && pt.y <= sys.grid.height + eps
    };
    let check_activity = |report: &mut ValidationReport, id: &str, a: &Activity| {
        if let Some(iv) = &a.intervals {
            if let Some(&bad) = iv.iter().find(|&&t| t >= horizon) {
                report.push(ActivityOutOfRange, format!("{id}: time quantum {bad} beyond horizon {horizon}"));
            }
        }
        if let Some(bs) = &a.bands {
            if let Some(&bad) = bs.iter().find(|&&b| b >= band_count) {
                report.push(ActivityOutOfRange, format!("{id}: band {bad} beyond {band_count} bands"));
            }
        }
    };
    let check_antenna = |report: &mut ValidationReport, id: &str, a: &AntennaPattern| {
        if let AntennaPattern::Sector {
            boresight,
            beamwidth,
            main_gain,
            back_gain,
        } = *a
        {
            let ok = boresight.is_finite()
                && beamwidth > 0.0
                && beamwidth <= std::f64::consts::TAU
                && main_gain >= 1.0
                && main_gain.is_finite()
                && back_gain > 0.0
                && back_gain <= main_gain;
            if !ok {
                report.push(Antenna, format!("{id}: sector pattern out of range"));
            }
        }
    };

    let mut seen = BTreeSet::new();
    let mut claim = |report: &mut ValidationReport, id: &str| {
        if !seen.insert(id.to_string()) {
            report.push(DuplicateId, format!("duplicate id {id}"));
        }
    };

    for net in &sys.networks {
        claim(&mut report, &net.id);
        for link in &net.links {
            claim(&mut report, &link.id);
            if link.transmitters.len() > 1 {
                report.push(MultipleTransmitters, format!("link {} has >1 transmitter", link.id));
            }
            if link.transmitters.is_empty() && link.receivers.is_empty() {
                report.push(EmptyLink, format!("link {} has no transceivers", link.id));
            }
            for t in &link.transmitters {
                claim(&mut report, &t.id);
                if !(t.tx_power > 0.0 && t.tx_power <= p.p_max) {
                    report.push(TxPower, format!("{}: transmit power {} W outside (0, p_max]", t.id, t.tx_power));
                }
                if !inside(t.position) {
                    report.push(OutsideRegion, format!("{} lies outside the region", t.id));
                }
                check_activity(&mut report, &t.id, &t.activity);
                check_antenna(&mut report, &t.id, &t.antenna);
            }
            for r in &link.receivers {
                claim(&mut report, &r.id);
                if !positive(r.beta) {
                    report.push(Beta, format!("{}: beta must be positive", r.id));
                }
                if !inside(r.position) {
                    report.push(OutsideRegion, format!("{} lies outside the region", r.id));
                }
                if r.explicit_margin.is_some_and(|m| !m.is_finite()) {
                    report.push(MissingMargin, format!("{}: explicit margin must be finite", r.id));
                }
                check_activity(&mut report, &r.id, &r.activity);
                check_antenna(&mut report, &r.id, &r.antenna);
                match link.transmitter() {
                    None if r.explicit_margin.is_none() => {
                        report.push(MissingMargin, format!("{}: receive-only receiver needs an explicit margin", r.id));
                    }
                    Some(t) if r.explicit_margin.is_none() => {
                        let uncovered = (0..horizon)
                            .flat_map(|tau| (0..band_count).map(move |nu| (tau, nu)))
                            .find(|&(tau, nu)| r.activity.is_active(tau, nu) && !t.activity.is_active(tau, nu));
                        if let Some((tau, nu)) = uncovered {
                            report.push(
                                ServingNotCoActive,
                                format!("{}: serving transmitter {} inactive at time {tau}, band {nu}", r.id, t.id),
                            );
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    report
}

/// Which RF-entity to resolve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityQuery {
    System,
    /// A network, link, transmitter or receiver id.
    Id(String),
}

impl From<&str> for EntityQuery {
    fn from(id: &str) -> Self {
        EntityQuery::Id(id.to_string())
    }
}

/// Transceivers composing an RF-entity, by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityMembers {
    pub transmitters: BTreeSet<String>,
    pub receivers: BTreeSet<String>,
}

impl EntityMembers {
    pub fn len(&self) -> usize {
        self.transmitters.len() + self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset(&self, other: &EntityMembers) -> bool {
        self.transmitters.is_subset(&other.transmitters) && self.receivers.is_subset(&other.receivers)
    }

    fn add_link(&mut self, link: &RfLink) {
        self.transmitters.extend(link.transmitters.iter().map(|t| t.id.clone()));
        self.receivers.extend(link.receivers.iter().map(|r| r.id.clone()));
    }
}

pub fn entity_selector(sys: &RfSystem, query: &EntityQuery) -> Result<EntityMembers> {
    let mut members = EntityMembers::default();
    let id = match query {
        EntityQuery::System => {
            sys.networks.iter().flat_map(|n| &n.links).for_each(|l| members.add_link(l));
            return Ok(members);
        }
        EntityQuery::Id(id) => id,
    };
    for net in &sys.networks {
        if &net.id == id {
            net.links.iter().for_each(|l| members.add_link(l));
            return Ok(members);
        }
        for link in &net.links {
            if &link.id == id {
                members.add_link(link);
                return Ok(members);
            }
            if link.transmitters.iter().any(|t| &t.id == id) {
                members.transmitters.insert(id.clone());
                return Ok(members);
            }
            if link.receivers.iter().any(|r| &r.id == id) {
                members.receivers.insert(id.clone());
                return Ok(members);
            }
        }
    }
    Err(MuseError::NoSuchEntity(id.clone()))
}
