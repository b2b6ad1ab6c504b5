//! The two-dimensional integrator walkthrough: tube shapes and the first
//! synthesis iteration.

use std::sync::Arc;

use tubetree::formula::{parse, PredicateDef, PredicateTable, Shape};
use tubetree::grid::{Grid, GridSet};
use tubetree::reach::{ReachEngine, ReachOptions};
use tubetree::synth::SynthState;
use tubetree::system::{Dynamics, InputSet, SystemModel};
use tubetree::ttlt::{build, Ttlt};

const X0: [f64; 2] = [0.5, 0.8];

fn setup() -> (SystemModel, ReachEngine, Ttlt) {
    // 0.05-wide cells: the robust preimage loses about a third of a cell of
    // radius per step, which has to stay inside a two-cell shell over ten steps
    let grid = Arc::new(Grid::new(vec![-10.0, -10.0], vec![10.0, 10.0], vec![400, 400]).unwrap());
    let u = InputSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
    let w = InputSet::Ball { center: vec![0.0, 0.0], radius: 0.1 };
    let model = SystemModel::new(2, Dynamics::integrator(2), u.control_samples(9, 32), w.disturbance_samples(16), 1.0).unwrap();
    let table: PredicateTable = [
        PredicateDef::new("mu1", Shape::Ball { center: vec![0.0, 0.0], radius: 1.0 }).unwrap(),
        PredicateDef::new("mu2", Shape::Ball { center: vec![4.0, 4.0], radius: 5.0 }).unwrap(),
        PredicateDef::new("mu3", Shape::Ball { center: vec![3.0, 5.0], radius: 1.0 }).unwrap(),
    ]
    .into_iter()
    .collect();
    let engine = ReachEngine::new(model.clone(), grid, ReachOptions::default()).unwrap();
    let tree = build(&parse("F[5,10] G[0,10] mu1 & mu2 U[0,8] mu3").unwrap(), &table, &engine).unwrap();
    (model, engine, tree)
}

fn ball(grid: &Arc<Grid>, c: [f64; 2], r: f64) -> GridSet {
    GridSet::from_fn(grid, |x| ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() <= r)
}

/// Cells whose center lies within `cells` cell widths of the circle.
fn shell(grid: &Arc<Grid>, c: [f64; 2], r: f64, cells: f64) -> GridSet {
    let h = grid.widths()[0];
    GridSet::from_fn(grid, |x| {
        let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
        (d - r).abs() <= cells * h + 1e-9
    })
}

#[test]
fn tube_shapes_match_analytic_balls() {
    let (_, engine, tree) = setup();
    let grid = engine.grid().clone();
    let x4 = tree.tube_of(tree.find("X4").unwrap());
    let tol = shell(&grid, [0.0, 0.0], 0.9, 2.0);
    for k in [0, 5, 10] {
        let diff = x4.slice(k).bits().clone();
        let mut d = diff;
        let analytic = ball(&grid, [0.0, 0.0], 0.9);
        d.union_with(analytic.bits());
        let mut both = x4.slice(k).bits().clone();
        both.intersect_with(analytic.bits());
        d.difference_with(&both);
        d.difference_with(tol.bits());
        assert!(d.is_empty(), "X4({k}) leaves the shell in {} cells", d.count());
    }

    // With the always-tube at radius 1 and net robust progress 0.9 per step,
    // X2(k) is the ball of radius 10 - 0.9k. The robust grid preimage loses
    // about a third of a cell per step, so the inner side gets four cells.
    let x2 = tree.tube_of(tree.find("X2").unwrap());
    let h = grid.widths()[0];
    for k in 0..10 {
        assert!(x2.slice(k + 1).is_subset(x2.slice(k)).unwrap(), "X2 grows at {k}");
    }
    for k in 0..=10 {
        let s = x2.slice(k);
        let inscribed = grid_cells(&grid).filter(|&c| !s.contains_cell(c)).map(|c| norm(&grid.center(c))).fold(f64::INFINITY, f64::min);
        let outer = s.iter_cells().map(|c| norm(&grid.center(c))).fold(0.0, f64::max);
        let r = 10.0 - 0.9 * k as f64;
        assert!(inscribed > r - 4.0 * h, "X2({k}) inscribed radius {inscribed}");
        assert!(outer <= r + 2.0 * h, "X2({k}) outer radius {outer}");
    }
}

#[test]
fn first_iteration_walkthrough() {
    let (model, _, tree) = setup();
    let id = |l: &str| tree.find(l).unwrap();
    let (x1, x2, x3, x4) = (id("X1"), id("X2"), id("X3"), id("X4"));
    let (s1, s3) = (id("S(mu1)"), id("S(mu3)"));
    assert!(tree.check(&X0));

    let mut state = SynthState::new(&tree);
    let horizons: Vec<Option<usize>> = [x1, x2, x3, x4, s1, s3].iter().map(|&i| state.horizon(i)).collect();
    assert_eq!(horizons, vec![Some(0), Some(10), Some(8), Some(20), None, None]);
    assert_eq!(state.post(), sorted(&[x1, x2, x3]));

    let r = state.iterate(&model, &X0);
    assert_eq!(sorted(&r.labels), sorted(&[x1, x2, x3, x4, s1]));
    assert_eq!(sorted(&r.valid), sorted(&[x2, x3]));
    assert_eq!(state.activation(x2), Some(0));
    assert_eq!(state.activation(x3), Some(0));
    assert_eq!(state.slice_index(x1), 0);
    assert_eq!(state.slice_index(x2), 1);
    assert_eq!(state.slice_index(x3), 1);
    assert_eq!(state.slice_index(x4), 0);
    assert_eq!(r.post, sorted(&[x2, x3, s3]));

    // X2's control set is every sampled control
    let pos = |n| r.valid.iter().position(|&v| v == n).unwrap();
    assert_eq!(r.node_controls[pos(x2)], model.controls.len());

    // X3's set against direct simulation into X3(1)
    let next = tree.tube_of(x3).slice(1);
    let expect: Vec<usize> =
        (0..model.controls.len()).filter(|&u| model.disturbances.iter().all(|w| next.contains(&model.step(&X0, &model.controls[u], w)))).collect();
    assert_eq!(r.node_controls[pos(x3)], expect.len());
    assert_eq!(r.feasible, expect);
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

fn grid_cells(g: &Arc<Grid>) -> std::ops::Range<usize> {
    0..g.total_cells()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
