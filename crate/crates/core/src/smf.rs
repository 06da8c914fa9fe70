//! Scoring of spectrum management functions against ground truth.
//!
//! Every space is a per-cell min/max split of two opportunity maps, summed
//! over cells:
//!
//! | comparison           | overlap                | truth not covered        | covered beyond truth    |
//! |----------------------|------------------------|--------------------------|-------------------------|
//! | truth vs estimate    | recovered-available    | lost-available           | potentially-incursed    |
//! | truth vs policy cap  | implied-available      | implied-guard            | implied-incursed        |
//! | truth vs granted     | exploited-available    | unexploited-available    | incursed                |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;

use crate::engine::Engine;
use crate::error::{MuseError, Result};
use crate::grid::{self, HexGrid};
use crate::model::{Activity, Point, RfLink, RfNetwork, RfSystem, Transmitter};
use crate::parallel::{self, Execution, Sum};
use crate::units::dbm_to_watts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GroundTruth,
    ImpliedByPolicy,
    Estimated,
}

/// Per-cell opportunity values in cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityMap {
    regions: usize,
    time_quanta: usize,
    bands: usize,
    p_cmax: f64,
    values: Vec<f64>,
    provenance: Provenance,
}

impl OpportunityMap {
    pub fn new(grid: &HexGrid, values: Vec<f64>, p_cmax: f64, provenance: Provenance) -> Result<Self> {
        Self::from_shape(
            (grid.region_count(), grid.horizon(), grid.band_count()),
            values,
            p_cmax,
            provenance,
        )
    }

    /// Build from `(regions, time quanta, bands)`; values must lie in
    /// `[0, p_cmax]`.
    pub fn from_shape(
        shape: (usize, usize, usize),
        values: Vec<f64>,
        p_cmax: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        let (regions, time_quanta, bands) = shape;
        let expected = regions * time_quanta * bands;
        if values.len() != expected {
            return Err(MuseError::GridMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some((cell, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=p_cmax).contains(*v))
        {
            return Err(MuseError::CapOutOfRange { cell, cap: v, p_cmax });
        }
        Ok(Self {
            regions,
            time_quanta,
            bands,
            p_cmax,
            values,
            provenance,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.regions, self.time_quanta, self.bands)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn p_cmax(&self) -> f64 {
        self.p_cmax
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn total(&self) -> f64 {
        self.values.iter().copied().collect::<Sum>().value()
    }

    fn check_len(&self, other: usize) -> Result<()> {
        if other != self.values.len() {
            return Err(MuseError::GridMismatch {
                expected: self.values.len(),
                found: other,
            });
        }
        Ok(())
    }
}

/// Sum of a per-cell attribute.
pub fn smf_aggregate(theta: &[f64]) -> f64 {
    theta.iter().copied().collect::<Sum>().value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoverySpaces {
    pub recovered_available: f64,
    pub lost_available: f64,
    pub potentially_incursed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicySpaces {
    pub implied_available: f64,
    pub implied_guard: f64,
    pub implied_incursed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExploitationSpaces {
    pub exploited_available: f64,
    pub unexploited_available: f64,
    pub incursed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmfReport {
    /// Per-cell `other - truth`, W.
    pub theta: Vec<f64>,
    /// Sum of `theta`, W.
    pub aggregate: f64,
    /// Sum of the truth map, W.
    pub truth_total: f64,
    /// Spectrum space of the whole grid, `p_cmax * cells`, W.
    pub total_space: f64,
    pub recovery: Option<RecoverySpaces>,
    pub policy: Option<PolicySpaces>,
    pub exploitation: Option<ExploitationSpaces>,
}

/// `(sum min(truth, other), sum max(0, truth - other), sum max(0, other - truth))`
/// and the per-cell signed difference.
fn split(exec: Execution, truth: &[f64], other: &[f64]) -> (f64, f64, f64, Vec<f64>) {
    let theta = parallel::map_collect(exec, truth.len(), |i| other[i] - truth[i]);
    let sums = parallel::map_reduce(
        exec,
        truth.len(),
        |range| {
            let mut s = [Sum::default(); 3];
            for i in range {
                let (t, o) = (truth[i], other[i]);
                s[0].add(t.min(o));
                s[1].add((t - o).max(0.0));
                s[2].add((o - t).max(0.0));
            }
            s
        },
        [Sum::default(); 3],
        |a, b| [a[0].merge(b[0]), a[1].merge(b[1]), a[2].merge(b[2])],
    );
    (sums[0].value(), sums[1].value(), sums[2].value(), theta)
}

fn report(truth: &OpportunityMap, theta: Vec<f64>) -> SmfReport {
    SmfReport {
        aggregate: smf_aggregate(&theta),
        theta,
        truth_total: truth.total(),
        total_space: truth.p_cmax * truth.len() as f64,
        recovery: None,
        policy: None,
        exploitation: None,
    }
}

/// Score an estimated map against the truth.
pub fn compare_maps(truth: &OpportunityMap, other: &OpportunityMap) -> Result<SmfReport> {
    if truth.shape() != other.shape() {
        return Err(MuseError::GridMismatch {
            expected: truth.len(),
            found: other.len(),
        });
    }
    let (recovered, lost, incursed, theta) = split(Execution::default(), &truth.values, &other.values);
    Ok(SmfReport {
        recovery: Some(RecoverySpaces {
            recovered_available: recovered,
            lost_available: lost,
            potentially_incursed: incursed,
        }),
        ..report(truth, theta)
    })
}

/// Score a per-cell policy cap against the truth.
pub fn apply_policy(truth: &OpportunityMap, caps: &[f64]) -> Result<SmfReport> {
    truth.check_len(caps.len())?;
    if let Some((cell, &cap)) = caps
        .iter()
        .enumerate()
        .find(|(_, c)| !(0.0..=truth.p_cmax).contains(*c))
    {
        return Err(MuseError::CapOutOfRange {
            cell,
            cap,
            p_cmax: truth.p_cmax,
        });
    }
    let (available, guard, incursed, theta) = split(Execution::default(), &truth.values, caps);
    Ok(SmfReport {
        policy: Some(PolicySpaces {
            implied_available: available,
            implied_guard: guard,
            implied_incursed: incursed,
        }),
        ..report(truth, theta)
    })
}

/// Score granted per-cell powers against the truth.
pub fn exploitation_report(truth: &OpportunityMap, granted: &[f64]) -> Result<SmfReport> {
    truth.check_len(granted.len())?;
    if let Some(cell) = granted.iter().position(|g| g.is_nan() || *g < 0.0) {
        return Err(MuseError::OutOfRange(format!(
            "granted power {} at cell {cell}",
            granted[cell]
        )));
    }
    let (exploited, unexploited, incursed, theta) = split(Execution::default(), &truth.values, granted);
    Ok(SmfReport {
        exploitation: Some(ExploitationSpaces {
            exploited_available: exploited,
            unexploited_available: unexploited,
            incursed,
        }),
        ..report(truth, theta)
    })
}

/// Parametric stand-in for a sensing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingErrorModel {
    pub p_missed_detection: f64,
    /// Expected false positives per (time, band) slice.
    pub false_positive_rate: f64,
    /// Power range of false positives, dBm.
    pub false_positive_power_dbm: (f64, f64),
    pub geolocation_sigma_m: f64,
    pub power_error_sigma_db: f64,
    pub seed: u64,
}

impl SensingErrorModel {
    /// A perfect sensor.
    pub fn exact(seed: u64) -> Self {
        Self {
            p_missed_detection: 0.0,
            false_positive_rate: 0.0,
            false_positive_power_dbm: (-10.0, 20.0),
            geolocation_sigma_m: 0.0,
            power_error_sigma_db: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(MuseError::OutOfRange(what.to_string()));
        if !(0.0..=1.0).contains(&self.p_missed_detection) {
            return bad("p_missed_detection must be in [0, 1]");
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return bad("false_positive_rate must be finite and >= 0");
        }
        if !(self.geolocation_sigma_m >= 0.0 && self.power_error_sigma_db >= 0.0) {
            return bad("sigmas must be >= 0");
        }
        let (lo, hi) = self.false_positive_power_dbm;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return bad("false_positive_power_dbm must be a finite range");
        }
        Ok(())
    }
}

/// Opportunity map of the system as seen through a sensing error model.
///
/// Transmitters are missed with `p_missed_detection`, then survivors are
/// jittered in position and power. Served receivers whose transmitter was
/// missed disappear with it; receive-only receivers are kept. False
/// positives are added per slice, each active only in its slice. A zero-error
/// model returns the truth map bit for bit.
pub fn simulate_recovery(sys: &RfSystem, model: &SensingErrorModel) -> Result<OpportunityMap> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let (w, h) = (sys.grid.width, sys.grid.height);
    let geo = Normal::new(0.0, model.geolocation_sigma_m).map_err(|e| MuseError::OutOfRange(e.to_string()))?;
    let pow = Normal::new(0.0, model.power_error_sigma_db).map_err(|e| MuseError::OutOfRange(e.to_string()))?;

    let mut est = sys.clone();
    for net in &mut est.networks {
        for link in &mut net.links {
            let had_tx = !link.transmitters.is_empty();
            link.transmitters.retain(|_| rng.random::<f64>() >= model.p_missed_detection);
            for t in &mut link.transmitters {
                if model.geolocation_sigma_m > 0.0 {
                    t.position = Point::new(
                        (t.position.x + geo.sample(&mut rng)).clamp(0.0, w),
                        (t.position.y + geo.sample(&mut rng)).clamp(0.0, h),
                    );
                }
                if model.power_error_sigma_db > 0.0 {
                    let scaled = t.tx_power * 10f64.powf(pow.sample(&mut rng) / 10.0);
                    t.tx_power = scaled.clamp(sys.params.p_min, sys.params.p_max);
                }
            }
            if had_tx && link.transmitters.is_empty() {
                link.receivers.retain(|r| r.explicit_margin.is_some());
            }
        }
        net.links.retain(|l| !l.transmitters.is_empty() || !l.receivers.is_empty());
    }
    est.networks.retain(|n| !n.links.is_empty());

    if model.false_positive_rate > 0.0 {
        let poisson = Poisson::new(model.false_positive_rate).map_err(|e| MuseError::OutOfRange(e.to_string()))?;
        let (lo, hi) = model.false_positive_power_dbm;
        let mut links = Vec::new();
        for tau in 0..sys.grid.horizon {
            for nu in 0..sys.grid.bands.len() {
                let k = poisson.sample(&mut rng) as usize;
                for _ in 0..k {
                    let p = Point::new(rng.random_range(0.0..=w), rng.random_range(0.0..=h));
                    let dbm = if lo < hi { rng.random_range(lo..hi) } else { lo };
                    let power = dbm_to_watts(dbm).clamp(sys.params.p_min, sys.params.p_max);
                    let k = links.len();
                    let mut t = Transmitter::omni(format!("fp-{k}"), p, power);
                    t.activity = Activity::only([tau], [nu]);
                    links.push(RfLink::new(format!("fp-link-{k}"), Some(t), vec![]));
                }
            }
        }
        if !links.is_empty() {
            est.add_network(RfNetwork::new("false-positives", links));
        }
    }

    let map = Engine::new(&est)?.opportunity_map();
    let grid = grid::tessellate(&sys.grid)?;
    OpportunityMap::new(&grid, map.values, sys.params.p_cmax(), Provenance::Estimated)
}
