//! Tubes computed with cell margins hold for every state of a member cell,
//! not just its center.

use std::sync::Arc;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tubetree::grid::{Grid, GridSet};
use tubetree::reach::{ReachEngine, ReachOptions};
use tubetree::system::{Dynamics, SystemModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn robust_pre_with_margin_holds_off_center(seed in any::<u64>(), shear in prop_oneof![Just(0.0), Just(0.3), Just(1.0)]) {
        let mut rng = StdRng::seed_from_u64(seed);
        let grid = Arc::new(Grid::new(vec![0.0, 0.0], vec![6.0, 4.0], vec![12, 10]).unwrap());
        let controls: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let dynamics = Dynamics::Linear { a: vec![vec![1.0, shear], vec![0.0, 1.0]], b: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        let w = vec![vec![-0.05, -0.05], vec![-0.05, 0.05], vec![0.05, -0.05], vec![0.05, 0.05]];
        let model = SystemModel::new(2, dynamics, controls, w, 1.0).unwrap();
        let reach_model = model.with_cell_margin(grid.widths()).unwrap();
        let engine = ReachEngine::new(reach_model, grid.clone(), ReachOptions::default()).unwrap();
        let s = GridSet::from_cells(&grid, (0..grid.total_cells()).filter(|_| rng.gen_bool(0.7)).collect::<Vec<_>>());
        let pre = engine.robust_pre(&s).unwrap();
        for c in pre.iter_cells() {
            let center = grid.center(c);
            let points: Vec<Vec<f64>> = (0..16)
                .map(|_| center.iter().zip(grid.widths()).map(|(x, h)| x + rng.gen_range(-0.5..0.5) * h).collect())
                .collect();
            let ok = model.controls.iter().any(|u| {
                points.iter().all(|x| model.disturbances.iter().all(|w| s.contains(&model.step(x, u, w))))
            });
            prop_assert!(ok, "cell {} of the preimage has a state with no robust control", c);
        }
    }
}
