//! Trees of reachable tubes built from formulas.
//!
//! Tube nodes alternate with operator nodes. A tube node has at most one
//! operator child; `And`/`Or` operators have two tube children and
//! `Until`/`Always` operators have one. Leaves are predicate sets held
//! constant over time.

mod build;
mod paths;
mod sat;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::formula::{FormulaError, StepInterval};
use crate::grid::GridError;
use crate::reach::{ReachError, Tube};

pub use build::build;
pub use paths::{backtrack, CNodeId, CompressedNode, CompressedTree};
pub use sat::{path_satisfies, tree_satisfies, TreeVerdict};

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("trajectory has {len} samples; the verdict depends on steps up to {need}")]
    InsufficientSignal { len: usize, need: usize },
    #[error("node {0} is not on a complete path of this tree")]
    NotAPath(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OpKind {
    And,
    Or,
    Until(StepInterval),
    Always(StepInterval),
}

impl OpKind {
    pub fn is_boolean(&self) -> bool {
        matches!(self, OpKind::And | OpKind::Or)
    }

    /// Steps an operator spans: zero for Boolean operators, the upper
    /// interval bound for temporal ones.
    pub fn horizon(&self) -> usize {
        match self {
            OpKind::And | OpKind::Or => 0,
            OpKind::Until(i) | OpKind::Always(i) => i.hi,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::And => write!(f, "and"),
            OpKind::Or => write!(f, "or"),
            OpKind::Until(i) => write!(f, "U{i}"),
            OpKind::Always(i) => write!(f, "G{i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Tube { tube: Tube, label: String },
    Op(OpKind),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// A tube-based temporal logic tree.
#[derive(Debug, Clone)]
pub struct Ttlt {
    nodes: Vec<Node>,
    root: NodeId,
}

/// Serializable summary of one node.
#[derive(Debug, Clone, Serialize)]
pub struct NodeInfo {
    pub id: NodeId,
    pub kind: &'static str,
    pub label: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub slices: Option<usize>,
    pub cells_at_t0: Option<usize>,
}

impl Ttlt {
    pub(crate) fn from_nodes(nodes: Vec<Node>, root: NodeId) -> Self {
        Ttlt { nodes, root }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn tube(&self, id: NodeId) -> Option<&Tube> {
        match &self.nodes[id].kind {
            NodeKind::Tube { tube, .. } => Some(tube),
            NodeKind::Op(_) => None,
        }
    }

    /// Tube of a tube node; panics on operator nodes.
    pub fn tube_of(&self, id: NodeId) -> &Tube {
        self.tube(id).unwrap_or_else(|| panic!("node {id} is an operator node"))
    }

    pub fn op(&self, id: NodeId) -> Option<OpKind> {
        match &self.nodes[id].kind {
            NodeKind::Op(op) => Some(*op),
            NodeKind::Tube { .. } => None,
        }
    }

    pub fn label(&self, id: NodeId) -> String {
        match &self.nodes[id].kind {
            NodeKind::Tube { label, .. } => label.clone(),
            NodeKind::Op(op) => op.to_string(),
        }
    }

    pub fn find(&self, label: &str) -> Option<NodeId> {
        (0..self.nodes.len()).find(|&i| matches!(&self.nodes[i].kind, NodeKind::Tube { label: l, .. } if l == label))
    }

    pub fn is_tube(&self, id: NodeId) -> bool {
        self.tube(id).is_some()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.is_tube(id) && self.nodes[id].children.is_empty()
    }

    pub fn tube_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.is_tube(i))
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i))
    }

    /// The operator child of a tube node, if any.
    pub fn op_child(&self, id: NodeId) -> Option<(NodeId, OpKind)> {
        let c = *self.nodes[id].children.first()?;
        Some((c, self.op(c)?))
    }

    /// Tube nodes two levels below a tube node.
    pub fn post(&self, id: NodeId) -> Vec<NodeId> {
        self.op_child(id).map(|(op, _)| self.nodes[op].children.clone()).unwrap_or_default()
    }

    /// The tube node two levels above a tube node.
    pub fn pre(&self, id: NodeId) -> Option<NodeId> {
        self.parent(id).and_then(|op| self.parent(op))
    }

    /// Steps spanned by a tube node's operator child (zero for leaves).
    pub fn child_horizon(&self, id: NodeId) -> usize {
        self.op_child(id).map_or(0, |(_, op)| op.horizon())
    }

    /// Tube nodes reachable from `id` through Boolean operators only,
    /// including `id` itself, in breadth-first order.
    pub fn boolean_fragment(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            if let Some((op, kind)) = self.op_child(out[i]) {
                if kind.is_boolean() {
                    out.extend_from_slice(&self.nodes[op].children);
                }
            }
            i += 1;
        }
        out
    }

    /// Whether `x` lies in the root set at time zero.
    pub fn check(&self, x: &[f64]) -> bool {
        self.tube_of(self.root).first().contains(x)
    }

    pub fn tube_node_count(&self) -> usize {
        self.tube_nodes().count()
    }

    pub fn describe(&self) -> Vec<NodeInfo> {
        (0..self.nodes.len())
            .map(|id| {
                let n = &self.nodes[id];
                NodeInfo {
                    id,
                    kind: match n.kind {
                        NodeKind::Tube { .. } if n.children.is_empty() => "leaf",
                        NodeKind::Tube { .. } => "tube",
                        NodeKind::Op(_) => "op",
                    },
                    label: self.label(id),
                    parent: n.parent,
                    children: n.children.clone(),
                    slices: self.tube(id).map(|t| t.len()),
                    cells_at_t0: self.tube(id).map(|t| t.first().count()),
                }
            })
            .collect()
    }
}

/// Bound on the node count of a tree for a formula with `n` Boolean and `m`
/// temporal operators. The bound is stated for formulas with at least one
/// Boolean operator; a pure temporal chain is measured as if `n = 1`.
pub fn node_count_bound(n: usize, m: usize) -> usize {
    4 * n.max(1) * (n + m) + 1
}

#[cfg(test)]
mod tests;
