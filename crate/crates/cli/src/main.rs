//! `muse`: compute spectrum consumption for a scenario file and export the
//! results as text, JSON or CSV.
//!
//! Exit codes: 0 success, 2 invalid input, 3 I/O failure. Failures are
//! reported on stderr as one JSON object.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use muse_core::connectivity::build_connectivity_map;
use muse_core::io::{load_scenario, opportunity_map_from_rows, read_map_csv, write_connectivity_csv, write_heatmaps, write_map_csv};
use muse_core::smf::{compare_maps, simulate_recovery};
use muse_core::units::{db_to_linear, watts_to_dbm};
use muse_core::{validate_system, Engine, EntityQuery, MuseError, Point, Provenance, RfSystem, SensingErrorModel};

#[derive(Parser)]
#[command(name = "muse", version, about = "Spectrum consumption over space, time and frequency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    Dbm,
    W,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and list every violation.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Occupancy, opportunity and liability at one point.
    Point {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, default_value_t = 0)]
        time_index: usize,
        #[arg(long, default_value_t = 0)]
        band: usize,
        #[arg(long, value_enum, default_value = "both")]
        units: Units,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Per-cell map as CSV.
    Map {
        #[command(flatten)]
        common: Common,
        /// Also write gnuplot matrices, one per quantity and slice, into this directory.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// System totals and per-entity consumption.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        json: bool,
    },
    /// Spectrum consumed by one network, link, transmitter or receiver.
    Entity {
        #[command(flatten)]
        common: Common,
        /// Entity id; the whole system when omitted.
        #[arg(long)]
        id: Option<String>,
    },
    /// Score an estimated opportunity map against the scenario's truth.
    Smf {
        #[command(flatten)]
        common: Common,
        /// Truth map CSV; computed from the scenario when omitted.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Estimated map CSV; simulated with the error model when omitted.
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        p_missed: f64,
        /// Expected false positives per time quantum and band.
        #[arg(long, default_value_t = 0.0)]
        fp_rate: f64,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        fp_min_dbm: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        fp_max_dbm: f64,
        #[arg(long, default_value_t = 0.0)]
        geo_sigma_m: f64,
        #[arg(long, default_value_t = 0.0)]
        power_sigma_db: f64,
        /// Include the per-cell error map in the JSON.
        #[arg(long)]
        cells: bool,
    },
    /// Candidate-link edge list between adjacent regions, per band.
    Connectivity {
        #[command(flatten)]
        common: Common,
        /// SINR the candidate link needs, dB.
        #[arg(long, allow_hyphen_values = true)]
        beta_db: f64,
        #[arg(long, default_value_t = 0)]
        time_index: usize,
    },
    /// System totals for a list of hexagon sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated hexagon side lengths, meters.
        #[arg(long, value_delimiter = ',', required = true)]
        hex_sides: Vec<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Core(MuseError),
    Io(io::Error, Option<PathBuf>),
}

impl From<MuseError> for Failure {
    fn from(e: MuseError) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e, None)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if !e.is_io() => 2,
            _ => 3,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Failure::Core(MuseError::InvalidSystem(report)) => serde_json::json!({
                "error": "validation",
                "message": report.to_string(),
                "violations": report.violations.iter().map(|v| v.message.clone()).collect::<Vec<_>>(),
            }),
            Failure::Core(e) if e.is_io() => serde_json::json!({ "error": "io", "message": e.to_string() }),
            Failure::Core(e) => serde_json::json!({ "error": "invalid-input", "message": e.to_string() }),
            Failure::Io(e, path) => serde_json::json!({
                "error": "io",
                "message": e.to_string(),
                "path": path.as_ref().map(|p| p.display().to_string()),
            }),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load(path: &Path) -> CliResult<RfSystem> {
    load_scenario(path).map_err(|e| match e {
        MuseError::Io(io) => Failure::Io(io, Some(path.to_path_buf())),
        other => Failure::Core(other),
    })
}

fn open_out(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::Io(e, Some(p.clone())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_power(w: f64, units: Units) -> String {
    let dbm = if w > 0.0 {
        format!("{:.4} dBm", watts_to_dbm(w))
    } else {
        "-inf dBm".to_string()
    };
    match units {
        Units::Dbm => dbm,
        Units::W => format!("{w:.6e} W"),
        Units::Both => format!("{dbm} ({:.6e} mW)", w * 1e3),
    }
}

fn engine_for(common: &Common) -> CliResult<Engine> {
    Ok(Engine::new(&load(&common.scenario)?)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { common } => {
            let sys = load(&common.scenario)?;
            let report = validate_system(&sys);
            if !report.is_valid() {
                return Err(MuseError::InvalidSystem(report).into());
            }
            let mut out = open_out(&common.out)?;
            writeln!(out, "ok: {} networks", sys.networks.len())?;
            out.flush()?;
        }
        Command::Point {
            common,
            x,
            y,
            time_index,
            band,
            units,
            json,
        } => {
            let engine = engine_for(&common)?;
            let sys = engine.system();
            if !(0.0..=sys.grid.width).contains(&x) || !(0.0..=sys.grid.height).contains(&y) {
                return Err(MuseError::OutsideRegion { x, y }.into());
            }
            let pm = engine.point_metrics(Point::new(x, y), time_index, band)?;
            let mut out = open_out(&common.out)?;
            if json {
                serde_json::to_writer_pretty(&mut out, &pm).map_err(io::Error::from)?;
                writeln!(out)?;
            } else {
                let p_cmax = sys.params.p_cmax();
                let headroom = p_cmax - pm.occupancy;
                let gamma = if headroom <= 0.0 { 0.0 } else { pm.opportunity.clamp(0.0, headroom) };
                let phi = if headroom <= 0.0 { headroom } else { headroom - gamma };
                writeln!(out, "point ({x}, {y}), time {time_index}, band {band}")?;
                for (id, w) in &pm.tx_occupancy {
                    writeln!(out, "  occupancy from {id}: {}", fmt_power(*w, units))?;
                }
                writeln!(out, "  noise: {}", fmt_power(pm.noise, units))?;
                writeln!(out, "  aggregate occupancy: {}", fmt_power(pm.occupancy, units))?;
                for r in &pm.receivers {
                    writeln!(out, "  receiver {}:", r.receiver)?;
                    writeln!(out, "    interference margin: {}", fmt_power(r.margin, units))?;
                    writeln!(out, "    bound at point: {}", fmt_power(r.bound, units))?;
                    writeln!(out, "    existing interference at point: {}", fmt_power(r.proportional_interference, units))?;
                    writeln!(out, "    opportunity: {}", fmt_power(r.opportunity, units))?;
                    writeln!(out, "    liability: {}", fmt_power(r.liability, units))?;
                }
                writeln!(out, "  net opportunity: {}", fmt_power(pm.opportunity, units))?;
                writeln!(out, "  opportunity (clamped): {}", fmt_power(gamma, units))?;
                writeln!(out, "  liability: {}", fmt_power(phi, units))?;
            }
            out.flush()?;
        }
        Command::Map { common, heatmap } => {
            let engine = engine_for(&common)?;
            let metrics = engine.all_cell_metrics();
            let mut out = open_out(&common.out)?;
            write_map_csv(&engine, &metrics, &mut out)?;
            out.flush()?;
            if let Some(dir) = heatmap {
                write_heatmaps(engine.grid(), &metrics, &dir)?;
            }
        }
        Command::Report { common, json } => {
            let engine = engine_for(&common)?;
            let r = engine.system_report();
            let mut out = open_out(&common.out)?;
            if json {
                serde_json::to_writer_pretty(&mut out, &r).map_err(io::Error::from)?;
                writeln!(out)?;
            } else {
                let pct = |x: f64| 100.0 * x / r.total;
                writeln!(out, "cells: {} ({} regions x {} quanta x {} bands)", r.cell_count, r.regions, r.time_quanta, r.bands)?;
                writeln!(out, "region area: {:.3} m^2", r.hex_area_m2)?;
                writeln!(out, "total:     {:e} W", r.total)?;
                writeln!(out, "utilized:  {:e} W ({:.4}%)", r.utilized, pct(r.utilized))?;
                writeln!(out, "forbidden: {:e} W ({:.4}%)", r.forbidden, pct(r.forbidden))?;
                writeln!(out, "available: {:e} W ({:.4}%)", r.available, pct(r.available))?;
                writeln!(out, "conservation residual: {:e}", r.conservation_residual)?;
                if r.ceiling_breaches > 0 {
                    writeln!(out, "cells with occupancy above the ceiling: {}", r.ceiling_breaches)?;
                }
                for s in &r.transmitters {
                    writeln!(out, "transmitter {}: {:e} W ({:.4}%)", s.id, s.consumed, pct(s.consumed))?;
                }
                for s in &r.receivers {
                    writeln!(out, "receiver {}: {:e} W ({:.4}%)", s.id, s.consumed, pct(s.consumed))?;
                }
            }
            out.flush()?;
        }
        Command::Entity { common, id } => {
            let engine = engine_for(&common)?;
            let query = id.as_deref().map_or(EntityQuery::System, EntityQuery::from);
            let consumed = engine.entity_consumption(&query)?;
            let total = muse_core::grid::total_spectrum_space(&engine.system().grid, &engine.system().params)?;
            let mut out = open_out(&common.out)?;
            writeln!(out, "{} {:e} W ({:.4}%)", id.as_deref().unwrap_or("system"), consumed, 100.0 * consumed / total)?;
            out.flush()?;
        }
        Command::Smf {
            common,
            truth,
            estimate,
            seed,
            p_missed,
            fp_rate,
            fp_min_dbm,
            fp_max_dbm,
            geo_sigma_m,
            power_sigma_db,
            cells,
        } => {
            let sys = load(&common.scenario)?;
            let p_cmax = sys.params.p_cmax();
            let read = |path: &PathBuf, provenance| -> CliResult<_> {
                let f = File::open(path).map_err(|e| Failure::Io(e, Some(path.clone())))?;
                let rows = read_map_csv(BufReader::new(f))?;
                Ok(opportunity_map_from_rows(&rows, p_cmax, provenance)?)
            };
            let truth = match &truth {
                Some(p) => read(p, Provenance::GroundTruth)?,
                None => Engine::new(&sys)?.opportunity_map(),
            };
            let estimate = match &estimate {
                Some(p) => read(p, Provenance::Estimated)?,
                None => {
                    let model = SensingErrorModel {
                        p_missed_detection: p_missed,
                        false_positive_rate: fp_rate,
                        false_positive_power_dbm: (fp_min_dbm, fp_max_dbm),
                        geolocation_sigma_m: geo_sigma_m,
                        power_error_sigma_db: power_sigma_db,
                        seed,
                    };
                    simulate_recovery(&sys, &model)?
                }
            };
            let mut report = compare_maps(&truth, &estimate)?;
            if !cells {
                report.theta.clear();
            }
            let mut out = open_out(&common.out)?;
            serde_json::to_writer_pretty(&mut out, &report).map_err(io::Error::from)?;
            writeln!(out)?;
            out.flush()?;
        }
        Command::Connectivity {
            common,
            beta_db,
            time_index,
        } => {
            let engine = engine_for(&common)?;
            let map = build_connectivity_map(&engine, db_to_linear(beta_db), time_index)?;
            let mut out = open_out(&common.out)?;
            write_connectivity_csv(&map, &mut out)?;
            out.flush()?;
        }
        Command::Sweep { common, hex_sides } => {
            let base = load(&common.scenario)?;
            let mut out = open_out(&common.out)?;
            writeln!(
                out,
                "hex_side_m,cells,utilized_w,forbidden_w,available_w,total_w,consumed_fraction,available_fraction"
            )?;
            for side in hex_sides {
                let mut sys = base.clone();
                sys.grid.hex_side = side;
                let r = Engine::new(&sys)?.system_report();
                writeln!(
                    out,
                    "{side},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                    r.cell_count,
                    r.utilized,
                    r.forbidden,
                    r.available,
                    r.total,
                    (r.utilized + r.forbidden) / r.total,
                    r.available_fraction()
                )?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("MUSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second initialization only happens in tests; the first one wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e, _)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Core(MuseError::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code())
        }
    }
}
