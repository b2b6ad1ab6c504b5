use std::sync::Arc;

use super::*;
use crate::formula::{parse, PredicateDef, PredicateTable, Shape};
use crate::grid::{Grid, GridSet};
use crate::reach::{ReachEngine, ReachOptions};
use crate::system::{Dynamics, InputSet, SystemModel};

fn example3() -> (ReachEngine, PredicateTable) {
    let grid = Arc::new(Grid::new(vec![-10.0, -10.0], vec![10.0, 10.0], vec![100, 100]).unwrap());
    let model = SystemModel::from_sets(
        2,
        Dynamics::integrator(2),
        &InputSet::Ball { center: vec![0.0, 0.0], radius: 1.0 },
        9,
        &InputSet::Ball { center: vec![0.0, 0.0], radius: 0.1 },
        16,
        1.0,
    )
    .unwrap();
    let table = [
        PredicateDef::new("mu1", Shape::Ball { center: vec![0.0, 0.0], radius: 1.0 }).unwrap(),
        PredicateDef::new("mu2", Shape::Ball { center: vec![4.0, 4.0], radius: 5.0 }).unwrap(),
        PredicateDef::new("mu3", Shape::Ball { center: vec![3.0, 5.0], radius: 1.0 }).unwrap(),
    ]
    .into_iter()
    .collect();
    (ReachEngine::new(model, grid, ReachOptions::default()).unwrap(), table)
}

fn line() -> (ReachEngine, PredicateTable) {
    let grid = Arc::new(Grid::new(vec![0.0], vec![10.0], vec![10]).unwrap());
    let model = SystemModel::new(1, Dynamics::integrator(1), vec![vec![-1.0], vec![0.0], vec![1.0]], vec![vec![0.0]], 1.0).unwrap();
    let table = [
        PredicateDef::new("a", Shape::Box { lower: vec![0.0], upper: vec![7.0] }).unwrap(),
        PredicateDef::new("b", Shape::Box { lower: vec![7.0], upper: vec![10.0] }).unwrap(),
    ]
    .into_iter()
    .collect();
    (ReachEngine::new(model, grid, ReachOptions::default()).unwrap(), table)
}

#[test]
fn single_predicate_tree() {
    let (e, t) = line();
    let tree = build(&parse("a").unwrap(), &t, &e).unwrap();
    assert_eq!(tree.len(), 1);
    assert!(tree.is_leaf(tree.root()));
    let s = GridSet::from_predicate(t.get("a").unwrap(), e.grid()).unwrap();
    assert_eq!(tree.tube_of(tree.root()).first(), &s);
    assert_eq!(tree.complete_paths(), vec![vec![0]]);
}

#[test]
fn example3_structure() {
    let (e, t) = example3();
    let tree = build(&parse("F[5,10] G[0,10] mu1 & mu2 U[0,8] mu3").unwrap(), &t, &e).unwrap();
    let id = |l: &str| tree.find(l).unwrap();
    assert_eq!(tree.tube_node_count(), 6);
    assert_eq!(tree.len(), 10);
    assert_eq!(tree.op_child(id("X1")).unwrap().1, OpKind::And);
    assert_eq!(tree.post(id("X1")), vec![id("X2"), id("X3")]);
    assert_eq!(tree.post(id("X2")), vec![id("X4")]);
    assert_eq!(tree.post(id("X4")), vec![id("S(mu1)")]);
    assert_eq!(tree.post(id("X3")), vec![id("S(mu3)")]);
    assert_eq!(tree.pre(id("X4")), Some(id("X2")));
    let paths = tree.complete_paths();
    assert_eq!(paths.len(), 2);
    let p1 = paths.iter().find(|p| p.contains(&id("X2"))).unwrap();
    assert_eq!(tree.mtfs(p1), vec![vec![id("X1")], vec![id("X2"), id("X4"), id("S(mu1)")]]);
    let c = tree.compress();
    assert_eq!(c.nodes.len(), 3);
    assert_eq!(c.nodes[0].members, vec![id("X1")]);
    assert_eq!(c.nodes[0].op, Some(OpKind::And));
    // root is the intersection of the two branch roots at time zero
    let r = tree.tube_of(id("X2")).first().intersect(tree.tube_of(id("X3")).first()).unwrap();
    assert_eq!(tree.tube_of(id("X1")).first(), &r);
    assert!(tree.check(&[0.5, 0.8]));
    let (n, m) = parse("F[5,10] G[0,10] mu1 & mu2 U[0,8] mu3").unwrap().operator_counts();
    assert!(tree.len() <= node_count_bound(n, m));
}

#[test]
fn eventually_matches_true_until() {
    let (e, t) = line();
    let a = build(&parse("F[1,3] b").unwrap(), &t, &e).unwrap();
    let b = build(&parse("true U[1,3] b").unwrap(), &t, &e).unwrap();
    assert_eq!(a.tube_of(a.root()), b.tube_of(b.root()));
}

#[test]
fn temporal_left_operand_replaces_leaves() {
    let (e, t) = line();
    let tree = build(&parse("(G[0,1] a) U[0,3] b").unwrap(), &t, &e).unwrap();
    // X1 -G- X2 -U- S(b)
    let root = tree.root();
    assert_eq!(tree.op_child(root).unwrap().1.to_string(), "G[0,1]");
    let x2 = tree.post(root)[0];
    assert!(matches!(tree.op_child(x2).unwrap().1, OpKind::Until(_)));
    assert_eq!(tree.label(tree.post(x2)[0]), "S(b)");
    assert_eq!(tree.leaves().count(), 1);
}

#[test]
fn path_and_tree_satisfaction_on_a_line() {
    let (e, t) = line();
    let tree = build(&parse("a U[0,4] b").unwrap(), &t, &e).unwrap();
    let traj = |v: &[f64]| v.iter().map(|&x| vec![x + 0.5]).collect::<Vec<_>>();
    let path = tree.complete_paths().remove(0);
    assert_eq!(path_satisfies(&tree, &path, &traj(&[4.0, 5.0, 6.0, 7.0, 7.0])).unwrap(), Some(vec![0, 3]));
    assert_eq!(path_satisfies(&tree, &path, &traj(&[4.0, 4.0, 4.0, 4.0, 4.0])).unwrap(), None);
    // too short to decide
    assert!(matches!(path_satisfies(&tree, &path, &traj(&[4.0, 5.0])), Err(TreeError::InsufficientSignal { .. })));
    // but a witness inside a short trajectory is conclusive
    assert!(tree_satisfies(&tree, &traj(&[6.0, 7.0])).unwrap().satisfied);
}

#[test]
fn disjunction_needs_one_branch() {
    let (e, t) = line();
    let tree = build(&parse("F[0,2] b | G[0,2] a").unwrap(), &t, &e).unwrap();
    assert_eq!(tree.complete_paths().len(), 2);
    let x: Vec<Vec<f64>> = [0.5, 1.5, 2.5].iter().map(|&v| vec![v]).collect();
    assert!(tree_satisfies(&tree, &x).unwrap().satisfied);
    let y: Vec<Vec<f64>> = [5.5, 11.0, 5.5].iter().map(|&v| vec![v]).collect();
    assert!(!tree_satisfies(&tree, &y).unwrap().satisfied);
}
