//! Spectrum consumption accounting over a discretized space-time-frequency grid.
//!
//! A scenario ([`RfSystem`]) of transmitters and receivers is laid over a
//! hexagonal tessellation ([`HexGrid`]). Every unit cell (region x time
//! quantum x band) gets an occupancy, an opportunity and a liability that
//! always sum to the per-point consumption ceiling; summing them yields the
//! utilized, available and forbidden spectrum spaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: scenario types, validation and entity selection
//! - [`propagation`]: path gain and antenna patterns
//! - [`grid`]: tessellation and cell indexing
//! - [`engine`]: point and cell metrics, entity and system consumption
//! - [`smf`]: scoring of spectrum management functions against a ground-truth map
//! - [`connectivity`]: per-band connectivity between adjacent cells
//! - [`io`]: scenario files and CSV exports

pub mod connectivity;
pub mod engine;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod parallel;
pub mod propagation;
pub mod smf;
pub mod units;

pub use connectivity::{build_connectivity_map, link_feasibility, ConnectivityMap, LinkFeasibility};
pub use engine::{CellMetrics, ConsumptionReport, Engine, PointMetrics};
pub use error::{MuseError, Result};
pub use grid::{BandSpec, Cell, GridSpec, HexGrid, SamplePointPolicy};
pub use model::{
    entity_selector, validate_system, AntennaPattern, EntityMembers, EntityQuery, Point,
    Receiver, RfLink, RfNetwork, RfSystem, SystemParams, Transmitter, ValidationReport,
};
pub use parallel::Execution;
pub use propagation::{directional_gain, inverse_path_gain_bound, path_gain, PropagationModel};
pub use smf::{OpportunityMap, Provenance, SensingErrorModel, SmfReport};
