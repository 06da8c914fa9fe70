//! Scenario files and result export.
//!
//! Scenarios are TOML with dB/dBm quantities; they are converted to linear
//! units on load and back on save. Maps and edge lists are CSV with floats in
//! shortest round-trip scientific notation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::connectivity::ConnectivityMap;
use crate::engine::{CellMetrics, Engine};
use crate::error::{MuseError, Result};
use crate::grid::{BandSpec, GridSpec, HexGrid, SamplePointPolicy};
use crate::model::{Activity, AntennaPattern, Point, Receiver, RfLink, RfNetwork, RfSystem, SystemParams, Transmitter};
use crate::propagation::{PropagationKind, PropagationModel};
use crate::smf::{OpportunityMap, Provenance};
use crate::units::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm};

pub const SCHEMA_VERSION: u32 = 1;

pub const MAP_HEADER: &str = "region_index,time_index,band_index,centroid_x_m,centroid_y_m,\
occupancy_w,opportunity_w,raw_opportunity_w,liability_w";

pub const CONNECTIVITY_HEADER: &str = "cell_a,cell_b,band,feasible,max_power_dbm,sinr_db,best_band";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub system: SystemSection,
    #[serde(default)]
    pub propagation: PropagationSection,
    pub grid: GridSection,
    #[serde(default)]
    pub networks: Vec<NetworkSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub p_max_dbm: f64,
    pub p_min_dbm: f64,
    pub noise_dbm: f64,
    /// Region index to noise level, dBm.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub noise_overrides_dbm: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    #[serde(default)]
    pub model: PropagationKind,
    pub alpha: f64,
    #[serde(default = "one")]
    pub reference_distance_m: f64,
}

impl Default for PropagationSection {
    fn default() -> Self {
        Self {
            model: PropagationKind::PowerLaw,
            alpha: 3.5,
            reference_distance_m: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

fn default_bands() -> Vec<BandSpec> {
    vec![BandSpec::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub width_m: f64,
    pub height_m: f64,
    pub hex_side_m: f64,
    #[serde(default = "one_usize")]
    pub time_quanta: usize,
    #[serde(default = "ten")]
    pub time_quantum_s: f64,
    #[serde(default = "default_bands")]
    pub bands: Vec<BandSpec>,
    #[serde(default)]
    pub sample_point: SamplePointSection,
    #[serde(default)]
    pub worst_case_placement: bool,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplePointSection {
    #[default]
    Centroid,
    Offset { dx_m: f64, dy_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AntennaSection {
    #[default]
    Omni,
    Sector {
        boresight_deg: f64,
        beamwidth_deg: f64,
        main_gain_db: f64,
        back_gain_db: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<BTreeSet<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub id: String,
    #[serde(default)]
    pub orthogonal_links: bool,
    #[serde(default)]
    pub links: Vec<LinkSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub id: String,
    #[serde(default)]
    pub transmitters: Vec<TransmitterSection>,
    #[serde(default)]
    pub receivers: Vec<ReceiverSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSection {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub power_dbm: f64,
    #[serde(default, skip_serializing_if = "is_omni")]
    pub antenna: AntennaSection,
    #[serde(default, skip_serializing_if = "is_always")]
    pub activity: ActivitySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub beta_db: f64,
    /// Interference margin, overriding the one derived from the serving signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "is_omni")]
    pub antenna: AntennaSection,
    #[serde(default, skip_serializing_if = "is_always")]
    pub activity: ActivitySection,
}

fn is_omni(a: &AntennaSection) -> bool {
    *a == AntennaSection::Omni
}

fn is_always(a: &ActivitySection) -> bool {
    a.time.is_none() && a.bands.is_none()
}

impl AntennaSection {
    fn to_pattern(self) -> AntennaPattern {
        match self {
            AntennaSection::Omni => AntennaPattern::Omni,
            AntennaSection::Sector {
                boresight_deg,
                beamwidth_deg,
                main_gain_db,
                back_gain_db,
            } => AntennaPattern::Sector {
                boresight: boresight_deg.to_radians(),
                beamwidth: beamwidth_deg.to_radians(),
                main_gain: db_to_linear(main_gain_db),
                back_gain: db_to_linear(back_gain_db),
            },
        }
    }

    fn from_pattern(p: AntennaPattern) -> Self {
        match p {
            AntennaPattern::Omni => AntennaSection::Omni,
            AntennaPattern::Sector {
                boresight,
                beamwidth,
                main_gain,
                back_gain,
            } => AntennaSection::Sector {
                boresight_deg: boresight.to_degrees(),
                beamwidth_deg: beamwidth.to_degrees(),
                main_gain_db: linear_to_db(main_gain),
                back_gain_db: linear_to_db(back_gain),
            },
        }
    }
}

impl From<&ActivitySection> for Activity {
    fn from(a: &ActivitySection) -> Self {
        Activity {
            intervals: a.time.clone(),
            bands: a.bands.clone(),
        }
    }
}

impl From<&Activity> for ActivitySection {
    fn from(a: &Activity) -> Self {
        ActivitySection {
            time: a.intervals.clone(),
            bands: a.bands.clone(),
        }
    }
}

impl ScenarioFile {
    pub fn into_system(self) -> Result<RfSystem> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(MuseError::Scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut params = SystemParams::new(
            dbm_to_watts(self.system.p_max_dbm),
            dbm_to_watts(self.system.p_min_dbm),
            dbm_to_watts(self.system.noise_dbm),
        );
        for (k, v) in &self.system.noise_overrides_dbm {
            let region = k
                .parse::<usize>()
                .map_err(|_| MuseError::Scenario(format!("noise override key {k:?} is not a region index")))?;
            params.noise_overrides.insert(region, dbm_to_watts(*v));
        }
        let propagation = PropagationModel {
            kind: self.propagation.model,
            alpha: self.propagation.alpha,
            reference_distance: self.propagation.reference_distance_m,
        };
        let g = &self.grid;
        let grid = GridSpec {
            width: g.width_m,
            height: g.height_m,
            hex_side: g.hex_side_m,
            time_quantum_s: g.time_quantum_s,
            horizon: g.time_quanta,
            bands: g.bands.clone(),
            sample_point_policy: match g.sample_point {
                SamplePointSection::Centroid => SamplePointPolicy::Centroid,
                SamplePointSection::Offset { dx_m, dy_m } => SamplePointPolicy::Offset { dx: dx_m, dy: dy_m },
            },
            worst_case_placement: g.worst_case_placement,
        };
        let mut sys = RfSystem::empty(params, propagation, grid);
        for n in &self.networks {
            let links = n
                .links
                .iter()
                .map(|l| RfLink {
                    id: l.id.clone(),
                    transmitters: l
                        .transmitters
                        .iter()
                        .map(|t| Transmitter {
                            id: t.id.clone(),
                            position: Point::new(t.x_m, t.y_m),
                            tx_power: dbm_to_watts(t.power_dbm),
                            antenna: t.antenna.to_pattern(),
                            activity: (&t.activity).into(),
                        })
                        .collect(),
                    receivers: l
                        .receivers
                        .iter()
                        .map(|r| Receiver {
                            id: r.id.clone(),
                            position: Point::new(r.x_m, r.y_m),
                            beta: db_to_linear(r.beta_db),
                            antenna: r.antenna.to_pattern(),
                            explicit_margin: r.margin_dbm.map(dbm_to_watts),
                            activity: (&r.activity).into(),
                        })
                        .collect(),
                })
                .collect();
            let mut net = RfNetwork::new(n.id.clone(), links);
            net.orthogonal_links = n.orthogonal_links;
            sys.add_network(net);
        }
        Ok(sys)
    }

    pub fn from_system(sys: &RfSystem) -> Self {
        let p = &sys.params;
        let g = &sys.grid;
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            system: SystemSection {
                p_max_dbm: watts_to_dbm(p.p_max),
                p_min_dbm: watts_to_dbm(p.p_min),
                noise_dbm: watts_to_dbm(p.ambient_noise),
                noise_overrides_dbm: p
                    .noise_overrides
                    .iter()
                    .map(|(k, v)| (k.to_string(), watts_to_dbm(*v)))
                    .collect(),
            },
            propagation: PropagationSection {
                model: sys.propagation.kind,
                alpha: sys.propagation.alpha,
                reference_distance_m: sys.propagation.reference_distance,
            },
            grid: GridSection {
                width_m: g.width,
                height_m: g.height,
                hex_side_m: g.hex_side,
                time_quanta: g.horizon,
                time_quantum_s: g.time_quantum_s,
                bands: g.bands.clone(),
                sample_point: match g.sample_point_policy {
                    SamplePointPolicy::Centroid => SamplePointSection::Centroid,
                    SamplePointPolicy::Offset { dx, dy } => SamplePointSection::Offset { dx_m: dx, dy_m: dy },
                },
                worst_case_placement: g.worst_case_placement,
            },
            networks: sys
                .networks
                .iter()
                .map(|n| NetworkSection {
                    id: n.id.clone(),
                    orthogonal_links: n.orthogonal_links,
                    links: n
                        .links
                        .iter()
                        .map(|l| LinkSection {
                            id: l.id.clone(),
                            transmitters: l
                                .transmitters
                                .iter()
                                .map(|t| TransmitterSection {
                                    id: t.id.clone(),
                                    x_m: t.position.x,
                                    y_m: t.position.y,
                                    power_dbm: watts_to_dbm(t.tx_power),
                                    antenna: AntennaSection::from_pattern(t.antenna),
                                    activity: (&t.activity).into(),
                                })
                                .collect(),
                            receivers: l
                                .receivers
                                .iter()
                                .map(|r| ReceiverSection {
                                    id: r.id.clone(),
                                    x_m: r.position.x,
                                    y_m: r.position.y,
                                    beta_db: linear_to_db(r.beta),
                                    margin_dbm: r.explicit_margin.map(watts_to_dbm),
                                    antenna: AntennaSection::from_pattern(r.antenna),
                                    activity: (&r.activity).into(),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<RfSystem> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| MuseError::Parse(e.to_string()))?;
    file.into_system()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<RfSystem> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

pub fn scenario_to_toml(sys: &RfSystem) -> Result<String> {
    toml::to_string(&ScenarioFile::from_system(sys)).map_err(|e| MuseError::Parse(e.to_string()))
}

/// Write one row per cell in cell order.
pub fn write_map_csv(engine: &Engine, metrics: &[CellMetrics], mut out: impl Write) -> Result<()> {
    writeln!(out, "{MAP_HEADER}")?;
    let grid = engine.grid();
    let mut line = String::new();
    for m in metrics {
        let c = grid.centroid(m.cell.region);
        line.clear();
        let _ = writeln!(
            line,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            m.cell.region, m.cell.time, m.cell.band, c.x, c.y, m.occupancy, m.opportunity, m.raw_opportunity, m.liability
        );
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRow {
    pub region: usize,
    pub time: usize,
    pub band: usize,
    pub centroid: Point,
    pub occupancy: f64,
    pub opportunity: f64,
    pub raw_opportunity: f64,
    pub liability: f64,
}

pub fn read_map_csv(input: impl BufRead) -> Result<Vec<MapRow>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != MAP_HEADER {
        return Err(MuseError::Parse(format!("unexpected map header {header:?}")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || MuseError::Parse(format!("map row {}: {line:?}", n + 2));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(MapRow {
            region: int(f[0])?,
            time: int(f[1])?,
            band: int(f[2])?,
            centroid: Point::new(float(f[3])?, float(f[4])?),
            occupancy: float(f[5])?,
            opportunity: float(f[6])?,
            raw_opportunity: float(f[7])?,
            liability: float(f[8])?,
        });
    }
    Ok(rows)
}

/// Opportunity column of a map CSV as a map. Rows must be complete and in
/// cell order.
pub fn opportunity_map_from_rows(rows: &[MapRow], p_cmax: f64, provenance: Provenance) -> Result<OpportunityMap> {
    let dim = |f: fn(&MapRow) -> usize| rows.iter().map(f).max().map_or(0, |m| m + 1);
    let shape = (dim(|r| r.region), dim(|r| r.time), dim(|r| r.band));
    let (_, t, b) = shape;
    for (i, r) in rows.iter().enumerate() {
        if (r.region * t + r.time) * b + r.band != i {
            return Err(MuseError::Parse(format!("map row {} out of cell order", i + 2)));
        }
    }
    OpportunityMap::from_shape(shape, rows.iter().map(|r| r.opportunity).collect(), p_cmax, provenance)
}

/// Matrix of one quantity for one slice, one text row per grid row, for
/// gnuplot's `matrix` mode. Regions are laid out by lattice coordinates.
pub fn heatmap_matrix(grid: &HexGrid, metrics: &[CellMetrics], time: usize, band: usize, value: fn(&CellMetrics) -> f64) -> String {
    let mut out = String::new();
    for row in 0..grid.rows() {
        let line: Vec<String> = (0..grid.cols())
            .map(|col| {
                let region = row * grid.cols() + col;
                format!("{:e}", value(&metrics[grid.cell_index(region, time, band)]))
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Write occupancy, opportunity and liability matrices for every slice into
/// `dir`, returning the file names.
pub fn write_heatmaps(grid: &HexGrid, metrics: &[CellMetrics], dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    type Quantity = (&'static str, fn(&CellMetrics) -> f64);
    let quantities: [Quantity; 3] = [
        ("occupancy", |m| m.occupancy),
        ("opportunity", |m| m.opportunity),
        ("liability", |m| m.liability),
    ];
    let mut names = Vec::new();
    for t in 0..grid.horizon() {
        for b in 0..grid.band_count() {
            for (q, f) in quantities {
                let name = format!("{q}_t{t}_b{b}.dat");
                std::fs::write(dir.join(&name), heatmap_matrix(grid, metrics, t, b, f))?;
                names.push(name);
            }
        }
    }
    Ok(names)
}

/// One row per (ordered pair, band).
pub fn write_connectivity_csv(map: &ConnectivityMap, mut out: impl Write) -> Result<()> {
    writeln!(out, "{CONNECTIVITY_HEADER}")?;
    for e in &map.edges {
        let best = e.best_band.map_or(String::new(), |b| b.to_string());
        for (band, f) in e.bands.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{:e},{:e},{}",
                e.from,
                e.to,
                band,
                f.feasible,
                watts_to_dbm(f.max_power),
                linear_to_db(f.sinr),
                best
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::build_connectivity_map;

    const SAMPLE: &str = r#"
schema_version = 1

[system]
p_max_dbm = 30.0
p_min_dbm = -200.0
noise_dbm = -106.0
noise_overrides_dbm = { "3" = -100.0 }

[propagation]
alpha = 3.5

[grid]
width_m = 1000.0
height_m = 800.0
hex_side_m = 100.0
time_quanta = 2
bands = [{ center_hz = 600e6, bandwidth_hz = 6e6 }, { center_hz = 606e6, bandwidth_hz = 6e6, alpha = 3.0 }]

[[networks]]
id = "tv"

[[networks.links]]
id = "broadcast"

[[networks.links.transmitters]]
id = "tower"
x_m = 200.0
y_m = 300.0
power_dbm = 15.0
activity = { time = [0] }

[[networks.links.receivers]]
id = "home"
x_m = 260.0
y_m = 300.0
beta_db = 6.0
activity = { time = [0] }
antenna = { kind = "sector", boresight_deg = 180.0, beamwidth_deg = 60.0, main_gain_db = 6.0, back_gain_db = -10.0 }

[[networks]]
id = "astro"

[[networks.links]]
id = "dish"

[[networks.links.receivers]]
id = "telescope"
x_m = 800.0
y_m = 600.0
beta_db = 0.0
margin_dbm = -120.0
"#;

    #[test]
    fn parses_and_converts_units() {
        let sys = parse_scenario(SAMPLE).unwrap();
        assert_eq!(sys.params.p_max, 1.0);
        assert_eq!(sys.params.noise_overrides[&3], dbm_to_watts(-100.0));
        assert_eq!(sys.grid.horizon, 2);
        assert_eq!(sys.propagation_for(1).alpha, 3.0);
        let tx = &sys.networks[0].links[0].transmitters[0];
        assert!((tx.tx_power - 10f64.powf(1.5) * 1e-3).abs() < 1e-15);
        assert!(tx.activity.is_active(0, 1) && !tx.activity.is_active(1, 0));
        let rx = &sys.networks[0].links[0].receivers[0];
        assert!((rx.beta - 3.981_071_705_534_972).abs() < 1e-12);
        assert!(matches!(rx.antenna, AntennaPattern::Sector { .. }));
        assert!(sys.networks[1].links[0].receivers[0].explicit_margin.is_some());
        Engine::new(&sys).unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let sys = parse_scenario(SAMPLE).unwrap();
        let again = parse_scenario(&scenario_to_toml(&sys).unwrap()).unwrap();
        assert_eq!(again.networks.len(), sys.networks.len());
        assert_eq!(again.grid, sys.grid);
        let (a, b) = (&sys.networks[0].links[0].receivers[0], &again.networks[0].links[0].receivers[0]);
        assert!((a.beta - b.beta).abs() / a.beta < 1e-12);
        assert_eq!(a.activity, b.activity);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("alpha = 3.5", "alpha = 3.5\nshadowing_db = 4.0");
        assert!(matches!(parse_scenario(&bad), Err(MuseError::Parse(_))));
        let bad = SAMPLE.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(parse_scenario(&bad), Err(MuseError::Scenario(_))));
    }

    #[test]
    fn map_csv_round_trip() {
        let sys = parse_scenario(SAMPLE).unwrap();
        let e = Engine::new(&sys).unwrap();
        let metrics = e.all_cell_metrics();
        let mut buf = Vec::new();
        write_map_csv(&e, &metrics, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), e.grid().cell_count() + 1);
        let rows = read_map_csv(text.as_bytes()).unwrap();
        for (r, m) in rows.iter().zip(&metrics) {
            assert_eq!(r.opportunity.to_bits(), m.opportunity.to_bits());
            assert_eq!(r.liability.to_bits(), m.liability.to_bits());
        }
        let map = opportunity_map_from_rows(&rows, sys.params.p_cmax(), Provenance::GroundTruth).unwrap();
        assert_eq!(map, e.opportunity_map());
    }

    #[test]
    fn heatmap_shape() {
        let sys = parse_scenario(SAMPLE).unwrap();
        let e = Engine::new(&sys).unwrap();
        let metrics = e.all_cell_metrics();
        let m = heatmap_matrix(e.grid(), &metrics, 1, 1, |c| c.opportunity);
        assert_eq!(m.lines().count(), e.grid().rows());
        assert!(m.lines().all(|l| l.split(' ').count() == e.grid().cols()));
    }

    #[test]
    fn connectivity_csv_rows() {
        let sys = parse_scenario(SAMPLE).unwrap();
        let e = Engine::new(&sys).unwrap();
        let map = build_connectivity_map(&e, 2.0, 0).unwrap();
        let mut buf = Vec::new();
        write_connectivity_csv(&map, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CONNECTIVITY_HEADER));
        assert_eq!(text.lines().count(), 1 + map.edges.len() * 2);
    }
}
