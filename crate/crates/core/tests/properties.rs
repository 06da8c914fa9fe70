mod common;

use muse_core::grid::tessellate;
use muse_core::io::{parse_scenario, scenario_to_toml};
use muse_core::{entity_selector, EntityQuery, Engine, Execution, GridSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn seeded(seed: u64, grid: GridSpec) -> muse_core::RfSystem {
    random_system(&mut ChaCha8Rng::seed_from_u64(seed), grid, 6, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cell_values_stay_in_range(seed in any::<u64>()) {
        let sys = seeded(seed, small_grid().with_horizon(2).with_bands(2));
        let engine = Engine::new(&sys).unwrap();
        let p_cmax = sys.params.p_cmax();
        for m in engine.all_cell_metrics() {
            prop_assert!(m.occupancy >= sys.params.ambient_noise);
            prop_assert!((0.0..=p_cmax).contains(&m.opportunity));
            prop_assert!(m.liability <= p_cmax);
            prop_assert!(m.liability >= 0.0 || m.exceeds_ceiling());
            prop_assert!(m.opportunity <= m.raw_opportunity.max(0.0));
            let residual = ((m.occupancy + m.opportunity + m.liability) - p_cmax).abs() / p_cmax;
            prop_assert!(residual <= 1e-12);
            for &(_, l) in &m.rx_liability {
                prop_assert!((0.0..=p_cmax).contains(&l));
            }
        }
    }

    #[test]
    fn report_is_independent_of_execution(seed in any::<u64>()) {
        let engine = Engine::new(&seeded(seed, reference_grid())).unwrap();
        let seq = engine.clone().with_execution(Execution::Sequential).system_report();
        let def = engine.system_report();
        prop_assert_eq!(seq.utilized.to_bits(), def.utilized.to_bits());
        prop_assert_eq!(seq.forbidden.to_bits(), def.forbidden.to_bits());
        prop_assert_eq!(seq.available.to_bits(), def.available.to_bits());
        prop_assert_eq!(seq, def);
    }

    #[test]
    fn entity_consumption_adds_up(seed in any::<u64>()) {
        let sys = seeded(seed, small_grid());
        let engine = Engine::new(&sys).unwrap();
        let report = engine.system_report();
        let whole = engine.entity_consumption(&EntityQuery::System).unwrap();
        let parts: f64 = sys.networks.iter().map(|n| engine.entity_consumption(&n.id.as_str().into()).unwrap()).sum();
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300));
        let direct: f64 = report.transmitters.iter().chain(&report.receivers).map(|s| s.consumed).sum();
        prop_assert!((whole - direct).abs() <= 1e-12 * whole.max(1e-300));
        for n in &sys.networks {
            let members = entity_selector(&sys, &n.id.as_str().into()).unwrap();
            prop_assert!(members.is_subset(&entity_selector(&sys, &EntityQuery::System).unwrap()));
        }
    }

    #[test]
    fn scenarios_survive_toml_round_trip(seed in any::<u64>()) {
        let sys = seeded(seed, small_grid().with_bands(2));
        let back = parse_scenario(&scenario_to_toml(&sys).unwrap()).unwrap();
        let a = Engine::new(&sys).unwrap().all_cell_metrics();
        let b = Engine::new(&back).unwrap().all_cell_metrics();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.occupancy - y.occupancy).abs() <= 1e-9 * x.occupancy);
            prop_assert!((x.opportunity - y.opportunity).abs() <= 1e-9 * sys.params.p_cmax());
        }
    }

    #[test]
    fn grid_cell_count_is_product(w in 300.0f64..5000.0, h in 300.0f64..5000.0, side in 50.0f64..150.0, t in 1usize..4, b in 1usize..4) {
        let spec = GridSpec::rectangle(w, h, side).with_horizon(t).with_bands(b);
        let g = tessellate(&spec).unwrap();
        prop_assert_eq!(g.cell_count(), g.region_count() * t * b);
        for i in [0, g.cell_count() / 2, g.cell_count() - 1] {
            let c = g.cell(i);
            prop_assert_eq!(g.cell_index(c.region, c.time, c.band), i);
        }
    }
}
