//! Tree satisfaction and online synthesis against direct formula evaluation
//! on small one-dimensional lattices.

use std::sync::Arc;

use tubetree::formula::{evaluate, parse, PredicateDef, PredicateTable, Shape, Signal};
use tubetree::grid::Grid;
use tubetree::reach::{ReachEngine, ReachOptions};
use tubetree::ttlt::{build, tree_satisfies};
use tubetree_oracle::suites::{completeness, reach_equivalence, saturating_line, soundness, synthesis_soundness, Outcome};

fn show(o: &Outcome) -> String {
    format!("{} mismatches over {} cases: {:#?}", o.mismatches, o.cases, o.failures)
}

#[test]
fn tubes_match_game_tree_on_random_lattices() {
    let o = reach_equivalence(11, 80);
    assert!(o.passed(), "{}", show(&o));
}

#[test]
fn tree_satisfaction_implies_formula_without_nesting() {
    let (o, checked) = soundness(12, 500, 8, false);
    assert!(checked >= 500);
    assert!(o.cases > 100, "only {} tree-satisfying trajectories", o.cases);
    assert!(o.passed(), "{}", show(&o));
}

#[test]
fn deterministic_satisfiability_agrees_without_nesting() {
    let o = completeness(13, 60, 6, false);
    assert!(o.passed(), "{}", show(&o));
}

#[test]
fn completed_runs_satisfy_the_formula_without_nesting() {
    let (o, completed, _) = synthesis_soundness(14, 100, 8, false);
    assert!(completed > 50);
    assert!(o.passed(), "{}", show(&o));
}

fn line(n: usize) -> (ReachEngine, PredicateTable) {
    let grid = Arc::new(Grid::new(vec![-0.5], vec![n as f64 - 0.5], vec![n]).unwrap());
    let model = saturating_line(n, &[-1.0, 0.0, 1.0], &[0.0]);
    let table = [
        PredicateDef::new("p", Shape::Box { lower: vec![-0.25], upper: vec![2.25] }).unwrap(),
        PredicateDef::new("q", Shape::Box { lower: vec![4.75], upper: vec![5.25] }).unwrap(),
    ]
    .into_iter()
    .collect();
    (ReachEngine::new(model, grid, ReachOptions::default()).unwrap(), table)
}

fn traj(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&x| vec![x]).collect()
}

// An always over an eventually is checked through tube membership only: the
// path asks for the eventually-tube at the last instant of the always window
// and one later visit of the target, not a visit within every window.
#[test]
fn always_eventually_is_not_enforced_per_instant() {
    let (e, t) = line(10);
    let f = parse("G[0,3] F[0,1] q").unwrap();
    let tree = build(&f, &t, &e).unwrap();
    let x = traj(&[4.0, 4.0, 4.0, 4.0, 5.0]);
    assert!(tree_satisfies(&tree, &x).unwrap().satisfied);
    assert!(!evaluate(&f, &t, &Signal::new(x, 1.0), 0).unwrap());
}

// A temporal left operand of an until is placed before the right operand in
// time, so a right operand due immediately is pushed back.
#[test]
fn temporal_left_operand_delays_the_right_operand() {
    let (e, t) = line(10);
    let f = parse("(G[2,2] p) U[0,0] q").unwrap();
    let tree = build(&f, &t, &e).unwrap();
    let x = traj(&[3.0, 4.0, 5.0]);
    assert!(tree_satisfies(&tree, &x).unwrap().satisfied);
    assert!(!evaluate(&f, &t, &Signal::new(x, 1.0), 0).unwrap());
}
