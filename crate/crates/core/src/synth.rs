//! Online control synthesis over a tree of reachable tubes.
//!
//! Each tube node `X_i` is instantiated at step `k` as a set node
//! `S_i(t_k) = X_i(k - t_a)` once activated, frozen otherwise. At every step
//! the loop finds the valid set nodes containing the state, advances them,
//! collects per-node one-step control sets and folds them through the
//! Boolean skeleton of the tree.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::bits::BitSet;
use crate::grid::GridSet;
use crate::reach::{robust_one_step_controls, NextGridRule};
use crate::system::{DisturbanceSource, SystemError, SystemModel};
use crate::ttlt::{backtrack, tree_satisfies, CompressedTree, NodeId, OpKind, TreeError, Ttlt};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("state has dimension {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
}

/// What the per-step bookkeeping looked like, for inspection and logs.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub k: usize,
    /// Set nodes containing the state whose horizon has not passed.
    pub labels: Vec<NodeId>,
    /// Valid set nodes after intersecting with the predicted set and pruning.
    pub valid: Vec<NodeId>,
    /// Nodes whose activation time was assigned at this step.
    pub activated: Vec<NodeId>,
    /// Control-set sizes of the valid nodes, in `valid` order.
    pub node_controls: Vec<usize>,
    /// Indices into the sampled control set.
    pub feasible: Vec<usize>,
    /// Prediction of the set nodes available at the next step.
    pub post: Vec<NodeId>,
}

/// Runtime state of the online loop.
#[derive(Debug, Clone)]
pub struct SynthState<'a> {
    tree: &'a Ttlt,
    compressed: CompressedTree,
    /// Current slice index of every tube node.
    slice: Vec<usize>,
    t_a: Vec<Option<usize>>,
    /// Deactivation step; `None` is unbounded.
    t_h: Vec<Option<usize>>,
    post: BTreeSet<NodeId>,
    /// Leaves reached so far; their obligations are met for good.
    discharged: BTreeSet<NodeId>,
    k: usize,
    rule: NextGridRule,
}

impl<'a> SynthState<'a> {
    /// Assigns horizons, activates the root's Boolean fragment at step zero
    /// and predicts it as the first set of available nodes.
    pub fn new(tree: &'a Ttlt) -> Self {
        let n = tree.len();
        let mut t_a = vec![None; n];
        let mut t_h = vec![None; n];
        let root = tree.root();
        // top-down: the arena places parents before children
        for id in tree.tube_nodes() {
            if tree.is_leaf(id) && id != root {
                continue;
            }
            let base = tree.pre(id).and_then(|p| t_h[p]).unwrap_or(0);
            t_h[id] = Some(base + tree.child_horizon(id));
        }
        let fragment = tree.boolean_fragment(root);
        for &j in &fragment {
            t_a[j] = Some(0);
        }
        SynthState {
            tree,
            compressed: tree.compress(),
            slice: vec![0; n],
            t_a,
            t_h,
            post: fragment.into_iter().collect(),
            discharged: BTreeSet::new(),
            k: 0,
            rule: NextGridRule::default(),
        }
    }

    pub fn with_rule(mut self, rule: NextGridRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn tree(&self) -> &Ttlt {
        self.tree
    }

    pub fn step(&self) -> usize {
        self.k
    }

    pub fn activation(&self, id: NodeId) -> Option<usize> {
        self.t_a[id]
    }

    pub fn horizon(&self, id: NodeId) -> Option<usize> {
        self.t_h[id]
    }

    /// Tube slice currently instantiated for a node.
    pub fn slice_index(&self, id: NodeId) -> usize {
        self.slice[id]
    }

    pub fn current(&self, id: NodeId) -> &GridSet {
        self.tree.tube_of(id).slice(self.slice[id])
    }

    pub fn post(&self) -> Vec<NodeId> {
        self.post.iter().copied().collect()
    }

    pub fn discharged(&self) -> Vec<NodeId> {
        self.discharged.iter().copied().collect()
    }

    /// Set nodes that contain `x` and whose horizon has not passed.
    pub fn labels(&self, x: &[f64]) -> Vec<NodeId> {
        self.tree
            .tube_nodes()
            .filter(|&i| self.t_h[i].is_none_or(|h| self.k <= h) && self.current(i).contains(x))
            .collect()
    }

    /// Labels intersected with the prediction, keeping only the deepest node
    /// per path: a node is dropped when one of its grandchildren is also
    /// valid. Reached leaves stay valid.
    pub fn tracking(&self, x: &[f64]) -> Vec<NodeId> {
        let raw: BTreeSet<NodeId> = self.labels(x).into_iter().filter(|i| self.post.contains(i)).chain(self.discharged.iter().copied()).collect();
        raw.iter().copied().filter(|&i| !self.tree.post(i).iter().any(|j| raw.contains(j))).collect()
    }

    /// Slice indices after one step: valid nodes still inside their operator
    /// window move along their tube, everything else is frozen.
    fn advanced(&self, valid: &[NodeId]) -> Vec<usize> {
        let mut next = self.slice.clone();
        for &i in valid {
            let t_a = self.t_a[i].expect("valid nodes are activated");
            if t_a + self.tree.child_horizon(i) > self.k {
                next[i] = self.k + 1 - t_a;
            }
        }
        next
    }

    /// Per-node control sets: all controls for leaves, robust one-step
    /// controls into the node's next set for inner nodes, nothing for nodes
    /// that are not valid.
    fn control_tree(&self, model: &SystemModel, x: &[f64], valid: &[NodeId], next: &[usize]) -> Vec<Option<BitSet>> {
        let nu = model.controls.len();
        let mut out = vec![None; self.tree.len()];
        for &i in valid {
            let mut set = BitSet::new(nu);
            if self.tree.is_leaf(i) {
                set = BitSet::full(nu);
            } else {
                let target = self.tree.tube_of(i).slice(next[i]);
                for u in robust_one_step_controls(model, x, target, self.rule) {
                    set.insert(u);
                }
            }
            out[i] = Some(set);
        }
        out
    }

    /// Union within each temporal fragment, then the Boolean backtrack.
    fn feasible(&self, nu: usize, controls: &[Option<BitSet>]) -> BitSet {
        let values: Vec<BitSet> = self
            .compressed
            .nodes
            .iter()
            .map(|c| {
                let mut acc = BitSet::new(nu);
                for m in &c.members {
                    if let Some(s) = &controls[*m] {
                        acc.union_with(s);
                    }
                }
                acc
            })
            .collect();
        backtrack(
            &self.compressed,
            values,
            |a, b| {
                let mut s = a.clone();
                s.union_with(b);
                s
            },
            |a, b| {
                let mut s = a.clone();
                s.intersect_with(b);
                s
            },
        )
    }

    /// Nodes possibly valid at the next step. A node always predicts itself;
    /// a node with a Boolean child adds its Boolean fragment; a node with an
    /// Until (Always) child adds its grandchildren, with their Boolean
    /// fragments, once the lower (upper) interval end has elapsed since its
    /// activation.
    fn post_set(&self, valid: &[NodeId]) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        for &i in valid {
            out.insert(i);
            let Some((_, op)) = self.tree.op_child(i) else { continue };
            let t_a = self.t_a[i].expect("valid nodes are activated");
            let open = match op {
                OpKind::And | OpKind::Or => {
                    out.extend(self.tree.boolean_fragment(i));
                    continue;
                }
                OpKind::Until(iv) => self.k + 1 >= t_a + iv.lo,
                OpKind::Always(iv) => self.k + 1 >= t_a + iv.hi,
            };
            if open {
                for g in self.tree.post(i) {
                    out.extend(self.tree.boolean_fragment(g));
                }
            }
        }
        out
    }

    /// One iteration at the measured state `x`: tracks valid nodes, assigns
    /// activation times, advances the tree and returns the feasible control
    /// indices. The prediction for the next step is prepared as well, so the
    /// caller only applies a control and measures again.
    pub fn iterate(&mut self, model: &SystemModel, x: &[f64]) -> StepRecord {
        let labels = self.labels(x);
        let valid = self.tracking(x);
        let mut activated = Vec::new();
        for &i in &valid {
            if self.t_a[i].is_none() {
                self.t_a[i] = Some(self.k);
                activated.push(i);
            }
            if self.tree.is_leaf(i) {
                self.discharged.insert(i);
            }
        }
        let next = self.advanced(&valid);
        let controls = self.control_tree(model, x, &valid, &next);
        let feasible = self.feasible(model.controls.len(), &controls);
        let post = self.post_set(&valid);
        let record = StepRecord {
            k: self.k,
            labels,
            node_controls: valid.iter().map(|&i| controls[i].as_ref().map_or(0, BitSet::count)).collect(),
            valid,
            activated,
            feasible: feasible.iter_ones().collect(),
            post: post.iter().copied().collect(),
        };
        self.slice = next;
        self.post = post;
        self.k += 1;
        record
    }

    /// Whether the reached leaves already satisfy the Boolean skeleton.
    pub fn obligations_met(&self) -> bool {
        let labels = self.compressed.nodes.iter().map(|c| c.members.iter().any(|m| self.discharged.contains(m))).collect();
        backtrack(&self.compressed, labels, |a, b| *a || *b, |a, b| *a && *b)
    }
}

/// Picks the control of smallest Euclidean norm, ties broken
/// lexicographically. Returns an index into `controls`.
pub fn choose_control(controls: &[Vec<f64>], feasible: &[usize]) -> Option<usize> {
    let norm = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>();
    feasible.iter().copied().min_by(|&a, &b| {
        let (ua, ub) = (&controls[a], &controls[b]);
        norm(ua).total_cmp(&norm(ub)).then_with(|| ua.iter().zip(ub).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The logged trajectory satisfies the tree.
    Completed,
    /// The feasible control set became empty at this step.
    NExis { step: usize },
    /// The step budget ran out before all obligations were met.
    MaxSteps,
}

#[derive(Debug, Clone, Copy)]
pub struct OnlineOptions {
    pub max_steps: usize,
    pub rule: NextGridRule,
}

impl OnlineOptions {
    /// Budget of the tree's longest path horizon plus `slack` steps.
    pub fn for_tree(tree: &Ttlt, slack: usize) -> Self {
        let longest = tree
            .complete_paths()
            .iter()
            .map(|p| p.iter().filter_map(|&id| tree.op(id)).map(|op| op.horizon()).sum::<usize>())
            .max()
            .unwrap_or(0);
        OnlineOptions { max_steps: longest + slack, rule: NextGridRule::default() }
    }
}

/// Closed-loop run. `states` has one more entry than `controls` and
/// `disturbances` unless the run stopped with an empty control set, in which
/// case the last state has no control.
#[derive(Debug, Clone, Serialize)]
pub struct OnlineRun {
    pub verdict: Verdict,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub feasible_counts: Vec<usize>,
    pub records: Vec<StepRecord>,
    /// Time codings of the satisfied paths when the run completed.
    pub codings: Vec<(Vec<NodeId>, Option<Vec<usize>>)>,
}

impl OnlineRun {
    pub fn satisfied(&self) -> bool {
        self.verdict == Verdict::Completed
    }
}

/// Runs the online loop from `x0` until the trajectory satisfies the tree,
/// the control set becomes empty, or the step budget runs out.
pub fn run_online(
    tree: &Ttlt,
    model: &SystemModel,
    x0: &[f64],
    disturbances: &mut DisturbanceSource,
    options: OnlineOptions,
) -> Result<OnlineRun, SynthError> {
    if x0.len() != model.state_dim {
        return Err(SynthError::Dimension { expected: model.state_dim, got: x0.len() });
    }
    let mut state = SynthState::new(tree).with_rule(options.rule);
    let mut run = OnlineRun {
        verdict: Verdict::MaxSteps,
        states: vec![x0.to_vec()],
        controls: vec![],
        disturbances: vec![],
        feasible_counts: vec![],
        records: vec![],
        codings: vec![],
    };
    loop {
        let x = run.states.last().unwrap().clone();
        let record = state.iterate(model, &x);
        let k = record.k;
        run.feasible_counts.push(record.feasible.len());
        let choice = choose_control(&model.controls, &record.feasible);
        run.records.push(record);
        if state.obligations_met() {
            if let Ok(v) = tree_satisfies(tree, &run.states) {
                if v.satisfied {
                    run.verdict = Verdict::Completed;
                    run.codings = v.paths;
                    return Ok(run);
                }
            }
        }
        let Some(u) = choice else {
            run.verdict = Verdict::NExis { step: k };
            return Ok(run);
        };
        if k >= options.max_steps {
            return Ok(run);
        }
        let u = model.controls[u].clone();
        let w = disturbances.next_disturbance()?;
        run.states.push(model.step(&x, &u, &w));
        run.controls.push(u);
        run.disturbances.push(w);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::formula::{parse, PredicateDef, PredicateTable, Shape};
    use crate::grid::Grid;
    use crate::reach::{ReachEngine, ReachOptions};
    use crate::system::Dynamics;
    use crate::ttlt::build;

    fn line(controls: Vec<f64>) -> (SystemModel, ReachEngine, PredicateTable) {
        let grid = Arc::new(Grid::new(vec![0.0], vec![10.0], vec![10]).unwrap());
        let model = SystemModel::new(1, Dynamics::integrator(1), controls.into_iter().map(|u| vec![u]).collect(), vec![vec![0.0]], 1.0).unwrap();
        let engine = ReachEngine::new(model.clone(), grid, ReachOptions::default()).unwrap();
        let table: PredicateTable = [
            PredicateDef::new("a", Shape::Box { lower: vec![0.0], upper: vec![7.0] }).unwrap(),
            PredicateDef::new("b", Shape::Box { lower: vec![7.0], upper: vec![10.0] }).unwrap(),
            PredicateDef::new("c", Shape::Box { lower: vec![0.0], upper: vec![2.0] }).unwrap(),
        ]
        .into_iter()
        .collect();
        (model, engine, table)
    }

    #[test]
    fn control_choice_prefers_small_then_lexicographic() {
        let us = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(choose_control(&us, &[0, 1]), Some(1));
        assert_eq!(choose_control(&us, &[0, 2]), Some(2));
        assert_eq!(choose_control(&us, &[0]), Some(0));
        assert_eq!(choose_control(&us, &[]), None);
    }

    #[test]
    fn single_node_tree() {
        let (model, engine, table) = line(vec![-1.0, 0.0, 1.0]);
        let tree = build(&parse("a").unwrap(), &table, &engine).unwrap();
        let s = SynthState::new(&tree);
        assert_eq!(s.activation(tree.root()), Some(0));
        assert_eq!(s.horizon(tree.root()), Some(0));
        assert_eq!(s.post(), vec![tree.root()]);
        let run = run_online(&tree, &model, &[3.5], &mut DisturbanceSource::Zero { dim: 1 }, OnlineOptions::for_tree(&tree, 2)).unwrap();
        assert_eq!(run.verdict, Verdict::Completed);
        assert_eq!(run.states.len(), 1);
    }

    #[test]
    fn outside_root_is_infeasible_at_once() {
        let (model, engine, table) = line(vec![-1.0, 0.0, 1.0]);
        let tree = build(&parse("a U[0,2] b").unwrap(), &table, &engine).unwrap();
        let run = run_online(&tree, &model, &[1.5], &mut DisturbanceSource::Zero { dim: 1 }, OnlineOptions::for_tree(&tree, 2)).unwrap();
        assert_eq!(run.verdict, Verdict::NExis { step: 0 });
        assert!(run.records[0].valid.is_empty());
    }

    #[test]
    fn reach_task_completes() {
        let (model, engine, table) = line(vec![-1.0, 0.0, 1.0]);
        let f = parse("a U[0,5] b").unwrap();
        let tree = build(&f, &table, &engine).unwrap();
        let run = run_online(&tree, &model, &[3.5], &mut DisturbanceSource::Zero { dim: 1 }, OnlineOptions::for_tree(&tree, 2)).unwrap();
        assert_eq!(run.verdict, Verdict::Completed);
        let last = run.states.last().unwrap()[0];
        assert!(last >= 7.0, "ended at {last}");
        assert!(run.states.len() <= 6);
    }

    #[test]
    fn frozen_node_with_zero_horizon() {
        let (model, engine, table) = line(vec![-1.0, 0.0, 1.0]);
        let tree = build(&parse("a & c").unwrap(), &table, &engine).unwrap();
        let mut s = SynthState::new(&tree);
        let r = s.iterate(&model, &[1.5]);
        // the root is pruned in favour of both leaves
        assert_eq!(r.valid.len(), 2);
        assert!(r.valid.iter().all(|&i| tree.is_leaf(i)));
        assert_eq!(r.feasible.len(), 3);
        assert!(s.obligations_met());
        for id in tree.tube_nodes() {
            assert_eq!(s.slice_index(id), 0);
        }
    }

    #[test]
    fn always_guard_waits_for_upper_end() {
        let (model, engine, table) = line(vec![-1.0, 0.0, 1.0]);
        let tree = build(&parse("G[0,2] a").unwrap(), &table, &engine).unwrap();
        let mut s = SynthState::new(&tree);
        let root = tree.root();
        let leaf = tree.post(root)[0];
        let r0 = s.iterate(&model, &[3.5]);
        assert_eq!(r0.post, vec![root]);
        let r1 = s.iterate(&model, &[3.5]);
        assert_eq!(r1.valid, vec![root]);
        assert_eq!(r1.post, vec![root, leaf]);
        let r2 = s.iterate(&model, &[3.5]);
        assert_eq!(r2.valid, vec![leaf]);
        assert!(s.obligations_met());
    }
}
