use super::{NodeId, OpKind, Ttlt};

pub type CNodeId = usize;

/// A node of the compressed tree: one maximal temporal fragment, i.e. a chain
/// of tube nodes linked by temporal operators, ending at a Boolean operator
/// or a leaf.
#[derive(Debug, Clone)]
pub struct CompressedNode {
    pub members: Vec<NodeId>,
    /// Boolean operator below the fragment and the fragments it joins.
    pub op: Option<OpKind>,
    pub children: Vec<CNodeId>,
    pub parent: Option<CNodeId>,
}

/// The tree with every maximal temporal fragment collapsed into one node,
/// leaving only Boolean operators between nodes.
#[derive(Debug, Clone)]
pub struct CompressedTree {
    pub nodes: Vec<CompressedNode>,
}

impl Ttlt {
    /// Root-to-leaf sequences alternating tube and operator nodes.
    pub fn complete_paths(&self) -> Vec<Vec<NodeId>> {
        let mut out = Vec::new();
        let mut stack = vec![vec![self.root()]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            match self.op_child(last) {
                None => out.push(path),
                Some((op, _)) => {
                    for &c in self.children(op).iter().rev() {
                        let mut p = path.clone();
                        p.push(op);
                        p.push(c);
                        stack.push(p);
                    }
                }
            }
        }
        out
    }

    /// Splits a complete path at its Boolean operators into maximal temporal
    /// fragments, each listing its tube nodes in order.
    pub fn mtfs(&self, path: &[NodeId]) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new()];
        for &id in path {
            match self.op(id) {
                Some(op) if op.is_boolean() => out.push(Vec::new()),
                Some(_) => {}
                None => out.last_mut().unwrap().push(id),
            }
        }
        out
    }

    pub fn compress(&self) -> CompressedTree {
        let mut nodes = Vec::new();
        self.compress_from(self.root(), None, &mut nodes);
        CompressedTree { nodes }
    }

    fn compress_from(&self, start: NodeId, parent: Option<CNodeId>, nodes: &mut Vec<CompressedNode>) -> CNodeId {
        let id = nodes.len();
        nodes.push(CompressedNode { members: vec![], op: None, children: vec![], parent });
        let mut members = vec![start];
        let mut cur = start;
        let mut below = None;
        while let Some((op_id, op)) = self.op_child(cur) {
            if op.is_boolean() {
                below = Some((op_id, op));
                break;
            }
            cur = self.children(op_id)[0];
            members.push(cur);
        }
        nodes[id].members = members;
        if let Some((op_id, op)) = below {
            nodes[id].op = Some(op);
            let kids: Vec<CNodeId> = self.children(op_id).iter().map(|&c| self.compress_from(c, Some(id), nodes)).collect();
            nodes[id].children = kids;
        }
        id
    }
}

impl CompressedTree {
    pub fn root(&self) -> CNodeId {
        0
    }

    pub fn leaves(&self) -> impl Iterator<Item = CNodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty())
    }

    /// Compressed node whose fragment contains tube node `id`.
    pub fn containing(&self, id: NodeId) -> Option<CNodeId> {
        (0..self.nodes.len()).find(|&c| self.nodes[c].members.contains(&id))
    }
}

/// Bottom-up evaluation over the compressed tree. Each node's value becomes
/// `own ∪ (c1 ∘ c2)` where `∘` is `intersect` under And and `union` under Or.
/// With Booleans this labels satisfied fragments; with control sets it yields
/// the feasible controls at the root.
pub fn backtrack<T: Clone>(
    tree: &CompressedTree,
    mut values: Vec<T>,
    union: impl Fn(&T, &T) -> T,
    intersect: impl Fn(&T, &T) -> T,
) -> T {
    assert_eq!(values.len(), tree.nodes.len());
    // children always come after their parent in the arena
    for id in (0..tree.nodes.len()).rev() {
        let n = &tree.nodes[id];
        let Some(op) = n.op else { continue };
        let mut it = n.children.iter().map(|&c| values[c].clone());
        let first = it.next().expect("Boolean fragment without children");
        let joined = it.fold(first, |acc, v| match op {
            OpKind::And => intersect(&acc, &v),
            _ => union(&acc, &v),
        });
        values[id] = union(&values[id], &joined);
    }
    values.swap_remove(0)
}
