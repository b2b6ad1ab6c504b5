//! Randomized checks comparing the library against the brute-force
//! references. Each suite returns how many cases it ran and a description of
//! every disagreement.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tubetree::formula::{evaluate, evaluate_realtime, parse, to_pnf, Formula, PredicateDef, PredicateTable, Shape, Signal, StepInterval};
use tubetree::grid::{Grid, GridSet};
use tubetree::reach::{ReachEngine, ReachOptions, TargetSpec, Tube};
use tubetree::synth::{run_online, OnlineOptions};
use tubetree::system::{DisturbanceSource, Dynamics, SystemModel};
use tubetree::ttlt::{build, tree_satisfies, Ttlt};

use crate::game::{membership, LatticeGame, Schedule};
use crate::gen::{sequences, signal_1d, FormulaGen};
use crate::stl::holds;

#[derive(Debug, Default, Clone)]
pub struct Outcome {
    pub cases: usize,
    /// Total number of disagreements.
    pub mismatches: usize,
    /// The first few disagreements, described.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }

    fn fail(&mut self, msg: String) {
        self.mismatches += 1;
        if self.failures.len() < 20 {
            self.failures.push(msg);
        } else if self.failures.len() == 20 {
            self.failures.push("...".into());
        }
    }
}

/// A grid whose cell centers are the integer points `0..n` per dimension.
pub fn integer_grid(cells: &[usize]) -> Arc<Grid> {
    Arc::new(Grid::new(vec![-0.5; cells.len()], cells.iter().map(|&n| n as f64 - 0.5).collect(), cells.to_vec()).unwrap())
}

/// One-dimensional lattice `x' = clamp(x + u + w)` on the centers `0..n`.
pub fn saturating_line(n: usize, controls: &[f64], disturbances: &[f64]) -> SystemModel {
    let hi = (n - 1) as f64;
    SystemModel::new(
        1,
        Dynamics::custom(format!("saturating-line-{n}"), move |x, u, w| vec![(x[0] + u[0] + w[0]).clamp(0.0, hi)]),
        controls.iter().map(|&u| vec![u]).collect(),
        disturbances.iter().map(|&w| vec![w]).collect(),
        1.0,
    )
    .unwrap()
}

fn random_subset(rng: &mut StdRng, from: &[Vec<f64>], max: usize) -> Vec<Vec<f64>> {
    let k = rng.gen_range(1..=max.min(from.len()));
    let mut pool = from.to_vec();
    let mut out = Vec::new();
    for _ in 0..k {
        out.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    out
}

fn random_set(rng: &mut StdRng, grid: &Arc<Grid>, density: f64) -> GridSet {
    GridSet::from_cells(grid, (0..grid.total_cells()).filter(|_| rng.gen_bool(density)).collect::<Vec<_>>())
}

fn random_spec(rng: &mut StdRng, grid: &Arc<Grid>, density: f64, len: usize) -> (TargetSpec, Schedule) {
    if rng.gen_bool(0.5) {
        let s = random_set(rng, grid, density);
        let m = membership(&s);
        (TargetSpec::Constant(s), vec![m])
    } else {
        let slices: Vec<GridSet> = (0..len).map(|_| random_set(rng, grid, density)).collect();
        let sched = slices.iter().map(membership).collect();
        (TargetSpec::Tube(Tube::new(slices)), sched)
    }
}

/// A random tiny system: 1-D or 2-D, at most 25 cells, at most 3 controls
/// and 2 disturbances, with integer-valued dynamics so every successor is a
/// cell center.
fn random_system(rng: &mut StdRng) -> (SystemModel, Arc<Grid>, &'static str) {
    let kind = rng.gen_range(0..5);
    let offsets: Vec<Vec<f64>> = (-2..=2).map(|v| vec![v as f64]).collect();
    let offsets2: Vec<Vec<f64>> = (-1..=1).flat_map(|a| (-1..=1).map(move |b| vec![a as f64, b as f64])).collect();
    match kind {
        0 | 1 => {
            let n = rng.gen_range(3..=25);
            let grid = integer_grid(&[n]);
            let u = random_subset(rng, &offsets, 3);
            let w = random_subset(rng, &offsets[1..4], 2);
            if kind == 0 {
                (SystemModel::new(1, Dynamics::integrator(1), u, w, 1.0).unwrap(), grid, "1-D integrator")
            } else {
                let us: Vec<f64> = u.iter().map(|v| v[0]).collect();
                let ws: Vec<f64> = w.iter().map(|v| v[0]).collect();
                (saturating_line(n, &us, &ws), grid, "1-D saturating")
            }
        }
        _ => {
            let dims = [[5, 5], [4, 6], [6, 4], [3, 8], [8, 3], [2, 12]][rng.gen_range(0..6)];
            let grid = integer_grid(&dims);
            let u = random_subset(rng, &offsets2, 3);
            let w = random_subset(rng, &offsets2, 2);
            let (a, name) = match kind {
                2 => (vec![vec![1.0, 0.0], vec![0.0, 1.0]], "2-D integrator"),
                3 => (vec![vec![1.0, 1.0], vec![0.0, 1.0]], "2-D shear along dim 0"),
                _ => (vec![vec![1.0, 0.0], vec![1.0, 1.0]], "2-D shear along dim 1"),
            };
            let b = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
            (SystemModel::new(2, Dynamics::Linear { a, b }, u, w, 1.0).unwrap(), grid, name)
        }
    }
}

/// Every slice of both tube operators against the game-tree oracle on random
/// tiny instances.
pub fn reach_equivalence(seed: u64, instances: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome::default();
    for case in 0..instances {
        let (model, grid, name) = random_system(&mut rng);
        let b = rng.gen_range(0..=6);
        let a = rng.gen_range(0..=b);
        let td = rng.gen_range(0.05..0.4);
        let (target, tsched) = random_spec(&mut rng, &grid, td, b + 1);
        let cd = rng.gen_range(0.4..0.95);
        let (constraint, csched) = random_spec(&mut rng, &grid, cd, b + 1);
        let engine = ReachEngine::new(model.clone(), grid.clone(), ReachOptions::default()).unwrap();
        let game = LatticeGame::new(&model, &grid);
        let iv = StepInterval::new(a, b);
        let max = engine.max_reach_tube(&target, &constraint, iv).unwrap();
        let min = engine.min_reach_tube(&target, iv).unwrap();
        out.cases += 1;
        for k in 0..=b {
            for c in 0..grid.total_cells() {
                let want = game.max_reach(&tsched, &csched, a, b, k, c);
                if max.slice(k).contains_cell(c) != want {
                    out.fail(format!("case {case} ({name}, [{a},{b}]): max tube slice {k} cell {c}: oracle says {want}"));
                }
                let want = game.min_reach(&tsched, a, b, k, c);
                if min.slice(k).contains_cell(c) != want {
                    out.fail(format!("case {case} ({name}, [{a},{b}]): min tube slice {k} cell {c}: oracle says {want}"));
                }
            }
        }
    }
    out
}

fn line_table(n: usize, rng: &mut StdRng, count: usize) -> (PredicateTable, Vec<String>) {
    let mut table = PredicateTable::new();
    let mut ids = Vec::new();
    for i in 0..count {
        let lo = rng.gen_range(0..n);
        let hi = rng.gen_range(lo..n.min(lo + n / 2 + 1));
        let id = format!("p{i}");
        table.insert(PredicateDef::new(&id, Shape::Box { lower: vec![lo as f64 - 0.25], upper: vec![hi as f64 + 0.25] }).unwrap());
        ids.push(id);
    }
    (table, ids)
}

/// Formula-layer invariants on random (formula, signal) pairs: the library
/// evaluator agrees with the recursive reference, positive normal form
/// preserves satisfaction, `F` equals `true U`, and real-time evaluation with
/// the signal starting at `k` equals ordinary evaluation.
pub fn formula_properties(seed: u64, pairs: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut table = PredicateTable::new();
    for (id, lo, hi) in [("a", 1.0, 3.0), ("b", 2.0, 5.0), ("c", 4.0, 4.0)] {
        table.insert(PredicateDef::new(id, Shape::Box { lower: vec![lo], upper: vec![hi] }).unwrap());
    }
    let mut gen = FormulaGen::new(&["a", "b", "c"], 4, 3);
    gen.allow_not = true;
    let values: Vec<f64> = (0..7).map(|v| v as f64).collect();
    let mut out = Outcome::default();
    while out.cases < pairs {
        let f = gen.sample(&mut rng);
        let h = tubetree::formula::horizon_steps(&f, 1.0).unwrap();
        let len = h + 1 + rng.gen_range(0..4);
        let x = signal_1d(&mut rng, &values, len);
        let sig = Signal::new(x.clone(), 1.0);
        out.cases += 1;
        for k in 0..len - h {
            let lib = evaluate(&f, &table, &sig, k).unwrap();
            let reference = holds(&f, &table, &x, 1.0, k).expect("signal covers the horizon");
            if lib != reference {
                out.fail(format!("evaluate({f}) at {k} on {x:?}: library {lib}, reference {reference}"));
            }
            let pnf = to_pnf(&f).unwrap();
            if evaluate(&pnf, &table, &sig, k).unwrap() != lib {
                out.fail(format!("positive normal form of {f} changes the verdict at {k} on {x:?}"));
            }
            let desugared = f.desugar_eventually();
            if evaluate(&desugared, &table, &sig, k).unwrap() != lib {
                out.fail(format!("F as true-U changes {f} at {k} on {x:?}"));
            }
            let suffix = Signal::starting_at(x[k..].to_vec(), 1.0, k);
            match evaluate_realtime(&f, &table, &suffix, k) {
                Ok(v) if v == lib => {}
                other => out.fail(format!("real-time evaluation of {f} at l=k={k} gave {other:?}, expected {lib}")),
            }
        }
    }
    out
}

fn longest_path(tree: &Ttlt) -> usize {
    OnlineOptions::for_tree(tree, 0).max_steps
}

/// Deterministic completeness on saturating 1-D lattices: a formula is
/// satisfiable from `x0` (some control sequence yields a satisfying
/// trajectory) exactly when some control sequence yields a trajectory that
/// satisfies the tree. Every cell is tried as `x0`.
pub fn completeness(seed: u64, formulas: usize, max_horizon: usize, nested_temporal: bool) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome::default();
    while out.cases < formulas {
        let n = rng.gen_range(6..=20);
        let (table, ids) = line_table(n, &mut rng, 3);
        let names: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut gen = FormulaGen::new(&names, 3, 3);
        gen.max_horizon = max_horizon;
        gen.nested_temporal = nested_temporal;
        let f = gen.sample(&mut rng);
        let model = saturating_line(n, &[-1.0, 0.0, 1.0], &[0.0]);
        let grid = integer_grid(&[n]);
        let engine = ReachEngine::new(model.clone(), grid, ReachOptions::default()).unwrap();
        let tree = build(&f, &table, &engine).unwrap();
        let len = longest_path(&tree).max(tubetree::formula::horizon_steps(&f, 1.0).unwrap());
        if len > max_horizon {
            continue;
        }
        out.cases += 1;
        for x0 in 0..n {
            let mut sat_phi = false;
            let mut sat_tree = false;
            for seq in sequences(3, len) {
                let traj = simulate(&model, x0 as f64, &seq);
                sat_phi |= holds(&f, &table, &traj, 1.0, 0).unwrap();
                sat_tree |= tree_satisfies(&tree, &traj).map(|v| v.satisfied).unwrap_or(false);
                if sat_phi && sat_tree {
                    break;
                }
            }
            if sat_phi != sat_tree {
                out.fail(format!("{f} on {n} cells from x0={x0}: formula satisfiable {sat_phi}, tree satisfiable {sat_tree}"));
            }
        }
    }
    out
}

fn simulate(model: &SystemModel, x0: f64, seq: &[usize]) -> Vec<Vec<f64>> {
    let mut traj = vec![vec![x0]];
    for &u in seq {
        let x = traj.last().unwrap();
        traj.push(model.step(x, &model.controls[u], &model.disturbances[0]));
    }
    traj
}

/// Tree satisfaction implies formula satisfaction, over random closed-loop
/// trajectories of 1-D lattices with two-valued disturbances. Half of the
/// trajectories come from random controls, the other half from the online
/// controller (which aims at satisfying the tree). `trajectories` counts the
/// trajectories checked; `Outcome::cases` reports how many of them
/// satisfied the tree.
pub fn soundness(seed: u64, trajectories: usize, max_horizon: usize, nested_temporal: bool) -> (Outcome, usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome::default();
    let mut checked = 0;
    while checked < trajectories {
        let n = rng.gen_range(8..=20);
        let (table, ids) = line_table(n, &mut rng, 3);
        let names: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut gen = FormulaGen::new(&names, 3, 3);
        gen.max_horizon = max_horizon;
        gen.nested_temporal = nested_temporal;
        let f = gen.sample(&mut rng);
        let w = [[0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]][rng.gen_range(0..3)];
        let model = saturating_line(n, &[-1.0, 0.0, 1.0], &w);
        let engine = ReachEngine::new(model.clone(), integer_grid(&[n]), ReachOptions::default()).unwrap();
        let tree = build(&f, &table, &engine).unwrap();
        let len = longest_path(&tree).max(tubetree::formula::horizon_steps(&f, 1.0).unwrap()) + 1;
        for _ in 0..10 {
            checked += 1;
            let x0 = rng.gen_range(0..n) as f64;
            let traj = if rng.gen_bool(0.5) {
                let mut traj = vec![vec![x0]];
                for _ in 1..len {
                    let x = traj.last().unwrap();
                    let u = &model.controls[rng.gen_range(0..3)];
                    let w = &model.disturbances[rng.gen_range(0..model.disturbances.len())];
                    traj.push(model.step(x, u, w));
                }
                traj
            } else {
                let replay: Vec<Vec<f64>> = (0..len).map(|_| model.disturbances[rng.gen_range(0..model.disturbances.len())].clone()).collect();
                let mut source = DisturbanceSource::Replay { sequence: replay, next: 0 };
                let opts = OnlineOptions { max_steps: len, ..OnlineOptions::for_tree(&tree, 0) };
                let mut traj = run_online(&tree, &model, &[x0], &mut source, opts).unwrap().states;
                while traj.len() < len {
                    let x = traj.last().unwrap().clone();
                    traj.push(model.step(&x, &model.controls[1], &model.disturbances[0]));
                }
                traj
            };
            let Ok(verdict) = tree_satisfies(&tree, &traj) else { continue };
            if verdict.satisfied {
                out.cases += 1;
                if holds(&f, &table, &traj, 1.0, 0) != Some(true) {
                    out.fail(format!("{f} on {n} cells: trajectory {:?} satisfies the tree but not the formula", flat(&traj)));
                }
            }
        }
    }
    (out, checked)
}

/// Online synthesis soundness: on 1-D lattices with disturbances, every run
/// that starts inside the root set and completes yields a trajectory that
/// satisfies the formula. Returns the outcome plus counts of completed runs
/// and runs that ended with an empty control set.
pub fn synthesis_soundness(seed: u64, runs: usize, max_horizon: usize, nested_temporal: bool) -> (Outcome, usize, usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Outcome::default();
    let (mut completed, mut nexis) = (0, 0);
    while out.cases < runs {
        let n = rng.gen_range(8..=20);
        let (table, ids) = line_table(n, &mut rng, 3);
        let names: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut gen = FormulaGen::new(&names, 3, 3);
        gen.max_horizon = max_horizon;
        gen.nested_temporal = nested_temporal;
        let f = gen.sample(&mut rng);
        let model = saturating_line(n, &[-1.0, 0.0, 1.0], &[0.0, 1.0]);
        let engine = ReachEngine::new(model.clone(), integer_grid(&[n]), ReachOptions::default()).unwrap();
        let tree = build(&f, &table, &engine).unwrap();
        let roots: Vec<usize> = tree.tube_of(tree.root()).first().iter_cells().collect();
        if roots.is_empty() {
            continue;
        }
        out.cases += 1;
        let x0 = roots[rng.gen_range(0..roots.len())] as f64;
        let replay: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gen_range(0..2) as f64]).collect();
        let mut source = DisturbanceSource::Replay { sequence: replay, next: 0 };
        let run = run_online(&tree, &model, &[x0], &mut source, OnlineOptions::for_tree(&tree, 4)).unwrap();
        if run.satisfied() {
            completed += 1;
            let h = tubetree::formula::horizon_steps(&f, 1.0).unwrap();
            let mut traj = run.states.clone();
            while traj.len() <= h {
                let x = traj.last().unwrap().clone();
                traj.push(model.step(&x, &model.controls[1], &model.disturbances[0]));
            }
            // the formula may still depend on steps after the run stopped
            let decided = run.states.len() > h;
            if decided && holds(&f, &table, &traj, 1.0, 0) != Some(true) {
                out.fail(format!("{f} on {n} cells from {x0}: completed run {:?} violates the formula", flat(&run.states)));
            }
        } else {
            nexis += 1;
        }
    }
    (out, completed, nexis)
}

fn flat(traj: &[Vec<f64>]) -> Vec<f64> {
    traj.iter().map(|x| x[0]).collect()
}

/// Parses with the fixed one-dimensional predicate table used by examples.
pub fn parse_line_formula(text: &str) -> Formula {
    parse(text).unwrap()
}
