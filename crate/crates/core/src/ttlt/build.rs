use std::collections::HashMap;
use std::collections::VecDeque;

use super::{Node, NodeKind, OpKind, TreeError, Ttlt};
use crate::formula::{to_pnf, Formula, PredicateTable, StepInterval};
use crate::grid::GridSet;
use crate::reach::{ReachEngine, TargetSpec, Tube};

/// How a tube node's tube is derived from its operator child.
#[derive(Clone)]
enum Def {
    Leaf,
    Bool,
    Until { constraint: GridSet, interval: StepInterval },
    Always { interval: StepInterval },
}

#[derive(Clone)]
struct BNode {
    tube: Tube,
    leaf_label: Option<String>,
    def: Def,
    op: Option<(OpKind, Vec<BNode>)>,
}

impl BNode {
    fn leaf(set: GridSet, label: String) -> Self {
        BNode { tube: Tube::constant(set), leaf_label: Some(label), def: Def::Leaf, op: None }
    }
}

struct Builder<'a> {
    engine: &'a ReachEngine,
    table: &'a PredicateTable,
    period: f64,
    sets: HashMap<(String, bool), GridSet>,
}

/// Builds the tree of a formula. The formula is brought to positive normal
/// form and `F_I f` is read as `true U_I f`.
///
/// An Until whose left operand has no temporal operator uses the
/// rasterized left operand as a single constraint set.
pub fn build(formula: &Formula, table: &PredicateTable, engine: &ReachEngine) -> Result<Ttlt, TreeError> {
    let f = to_pnf(formula)?.desugar_eventually();
    let mut b = Builder { engine, table, period: engine.model().period, sets: HashMap::new() };
    let root = b.node(&f)?;
    Ok(flatten(root))
}

impl Builder<'_> {
    fn predicate(&mut self, id: &str, negated: bool) -> Result<GridSet, TreeError> {
        let key = (id.to_string(), negated);
        if let Some(s) = self.sets.get(&key) {
            return Ok(s.clone());
        }
        let (def, grid) = (self.table.get(id)?, self.engine.grid());
        let s = if self.engine.options().inner_predicates {
            GridSet::from_predicate_inner(def, grid, negated)?
        } else {
            let s = GridSet::from_predicate(def, grid)?;
            if negated {
                s.complement()
            } else {
                s
            }
        };
        self.sets.insert(key, s.clone());
        Ok(s)
    }

    /// Set of a temporal-free formula.
    fn raster(&mut self, f: &Formula) -> Result<GridSet, TreeError> {
        let grid = self.engine.grid();
        Ok(match f {
            Formula::True => GridSet::full(grid),
            Formula::False => GridSet::empty(grid),
            Formula::Pred(p) => self.predicate(p, false)?,
            Formula::NegPred(p) => self.predicate(p, true)?,
            Formula::And(a, b) => self.raster(a)?.intersect(&self.raster(b)?)?,
            Formula::Or(a, b) => self.raster(a)?.union(&self.raster(b)?)?,
            _ => unreachable!("raster called on a temporal formula"),
        })
    }

    fn node(&mut self, f: &Formula) -> Result<BNode, TreeError> {
        let grid = self.engine.grid().clone();
        Ok(match f {
            Formula::True => BNode::leaf(GridSet::full(&grid), "S(true)".into()),
            Formula::False => BNode::leaf(GridSet::empty(&grid), "S(false)".into()),
            Formula::Pred(p) => BNode::leaf(self.predicate(p, false)?, format!("S({p})")),
            Formula::NegPred(p) => BNode::leaf(self.predicate(p, true)?, format!("S(!{p})")),
            Formula::Not(_) | Formula::Eventually(..) => unreachable!("formula is desugared positive normal form"),
            Formula::And(a, b) | Formula::Or(a, b) => {
                let kind = if matches!(f, Formula::And(..)) { OpKind::And } else { OpKind::Or };
                let (ta, tb) = (self.node(a)?, self.node(b)?);
                let tube = combine(&ta.tube, &tb.tube, kind)?;
                BNode { tube, leaf_label: None, def: Def::Bool, op: Some((kind, vec![ta, tb])) }
            }
            Formula::Until(a, b, i) => {
                let interval = i.to_steps(self.period)?;
                let tb = self.node(b)?;
                if a.is_temporal_free() {
                    let constraint = self.raster(a)?;
                    let mut n = BNode {
                        tube: Tube::constant(constraint.clone()),
                        leaf_label: None,
                        def: Def::Until { constraint, interval },
                        op: Some((OpKind::Until(interval), vec![tb])),
                    };
                    self.refresh(&mut n)?;
                    n
                } else {
                    let mut ta = self.node(a)?;
                    attach_until(&mut ta, &tb, interval);
                    self.recompute(&mut ta)?;
                    ta
                }
            }
            Formula::Always(a, i) => {
                let interval = i.to_steps(self.period)?;
                let ta = self.node(a)?;
                let mut n = BNode {
                    tube: ta.tube.clone(),
                    leaf_label: None,
                    def: Def::Always { interval },
                    op: Some((OpKind::Always(interval), vec![ta])),
                };
                self.refresh(&mut n)?;
                n
            }
        })
    }

    /// Recomputes a node's tube from its (already current) children.
    fn refresh(&mut self, n: &mut BNode) -> Result<(), TreeError> {
        let child = |n: &BNode, i: usize| n.op.as_ref().unwrap().1[i].tube.clone();
        n.tube = match &n.def {
            Def::Leaf => return Ok(()),
            Def::Bool => {
                let (kind, _) = n.op.as_ref().unwrap();
                combine(&child(n, 0), &child(n, 1), *kind)?
            }
            Def::Until { constraint, interval } => {
                let target = TargetSpec::Constant(child(n, 0).first().clone());
                self.engine.max_reach_tube(&target, &TargetSpec::Constant(constraint.clone()), *interval)?
            }
            Def::Always { interval } => {
                let bad = TargetSpec::Constant(child(n, 0).first().complement());
                complement_tube(&self.engine.min_reach_tube(&bad, *interval)?)
            }
        };
        Ok(())
    }

    /// Refreshes every non-leaf node bottom-up.
    fn recompute(&mut self, n: &mut BNode) -> Result<(), TreeError> {
        if let Some((_, children)) = n.op.as_mut() {
            for c in children {
                self.recompute(c)?;
            }
        }
        self.refresh(n)
    }
}

/// Replaces every leaf `Y` of `t` by an Until node constrained to `Y(t0)`
/// whose child is a copy of `target`.
fn attach_until(t: &mut BNode, target: &BNode, interval: StepInterval) {
    match t.op.as_mut() {
        Some((_, children)) => {
            for c in children {
                attach_until(c, target, interval);
            }
        }
        None => {
            let constraint = t.tube.first().clone();
            t.leaf_label = None;
            t.def = Def::Until { constraint, interval };
            t.op = Some((OpKind::Until(interval), vec![target.clone()]));
        }
    }
}

fn complement_tube(t: &Tube) -> Tube {
    let mut out: Vec<GridSet> = Vec::with_capacity(t.len());
    for (k, s) in t.slices().iter().enumerate() {
        if k > 0 && s.ptr_eq(&t.slices()[k - 1]) {
            out.push(out[k - 1].clone());
        } else {
            out.push(s.complement());
        }
    }
    Tube::new(out)
}

/// Slice-wise intersection or union; the shorter tube holds its last slice.
fn combine(a: &Tube, b: &Tube, kind: OpKind) -> Result<Tube, TreeError> {
    let len = a.len().max(b.len());
    let mut out: Vec<GridSet> = Vec::with_capacity(len);
    for k in 0..len {
        let reuse = k > 0 && a.slice(k).ptr_eq(a.slice(k - 1)) && b.slice(k).ptr_eq(b.slice(k - 1));
        if reuse {
            out.push(out[k - 1].clone());
            continue;
        }
        let s = match kind {
            OpKind::And => a.slice(k).intersect(b.slice(k))?,
            OpKind::Or => a.slice(k).union(b.slice(k))?,
            _ => unreachable!(),
        };
        out.push(s);
    }
    Ok(Tube::new(out))
}

/// Lays the tree out in an arena. Non-leaf tube nodes are labelled `X1, X2, ...`:
/// the children of a Boolean operator are numbered together when their
/// parent is visited, then each subtree is numbered depth-first.
fn flatten(root: BNode) -> Ttlt {
    let mut nodes: Vec<Node> = Vec::new();
    let mut next_label = 1usize;
    let mut label = |b: &BNode| -> String {
        match &b.leaf_label {
            Some(l) if b.op.is_none() => l.clone(),
            _ => {
                let l = format!("X{next_label}");
                next_label += 1;
                l
            }
        }
    };
    let root_label = label(&root);
    nodes.push(Node { kind: NodeKind::Tube { tube: root.tube.clone(), label: root_label }, parent: None, children: vec![] });
    let mut stack: VecDeque<(usize, BNode)> = VecDeque::new();
    stack.push_back((0, root));
    // depth-first over tube nodes, each already labelled and placed
    while let Some((id, b)) = stack.pop_back() {
        let Some((kind, children)) = b.op else { continue };
        let op_id = nodes.len();
        nodes.push(Node { kind: NodeKind::Op(kind), parent: Some(id), children: vec![] });
        nodes[id].children.push(op_id);
        let mut placed = Vec::new();
        for c in children {
            let cid = nodes.len();
            let l = label(&c);
            nodes.push(Node { kind: NodeKind::Tube { tube: c.tube.clone(), label: l }, parent: Some(op_id), children: vec![] });
            nodes[op_id].children.push(cid);
            placed.push((cid, c));
        }
        for p in placed.into_iter().rev() {
            stack.push_back(p);
        }
    }
    Ttlt::from_nodes(nodes, 0)
}
