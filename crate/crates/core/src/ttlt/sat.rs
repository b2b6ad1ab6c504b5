use super::{backtrack, NodeId, OpKind, TreeError, Ttlt};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Yes,
    No,
    /// No witness within the trajectory, but one may exist past its end.
    Unknown,
}

struct PathSearch<'a> {
    tree: &'a Ttlt,
    tubes: Vec<NodeId>,
    ops: Vec<OpKind>,
    x: &'a [Vec<f64>],
    memo: Vec<Vec<Option<(Outcome, usize)>>>,
}

impl PathSearch<'_> {
    fn inside(&self, i: usize, k: usize, slice: usize) -> bool {
        self.tree.tube_of(self.tubes[i]).slice(slice).contains(&self.x[k])
    }

    /// Whether the suffix of the path starting at tube `i`, activated at
    /// step `kappa`, admits a time coding. Also returns the chosen next
    /// activation time.
    fn solve(&mut self, i: usize, kappa: usize) -> Outcome {
        let len = self.x.len();
        if kappa >= len {
            return Outcome::Unknown;
        }
        if let Some((o, _)) = self.memo[i][kappa] {
            return o;
        }
        let n = self.tubes.len() - 1;
        let (outcome, choice) = if i == n {
            (if self.inside(i, kappa, 0) { Outcome::Yes } else { Outcome::No }, kappa)
        } else {
            let (lo, hi) = match self.ops[i] {
                OpKind::And | OpKind::Or => (0, 0),
                OpKind::Until(iv) => (iv.lo, iv.hi),
                OpKind::Always(iv) => (iv.hi, iv.hi),
            };
            let mut best = (Outcome::No, kappa);
            // x_k must stay in X_i(k - kappa) for every k in [kappa, kappa']
            for k in kappa..=kappa + hi {
                if k >= len {
                    best.0 = Outcome::Unknown;
                    break;
                }
                if !self.inside(i, k, k - kappa) {
                    break;
                }
                if k >= kappa + lo {
                    match self.solve(i + 1, k) {
                        Outcome::Yes => {
                            best = (Outcome::Yes, k);
                            break;
                        }
                        Outcome::Unknown => best.0 = Outcome::Unknown,
                        Outcome::No => {}
                    }
                }
            }
            best
        };
        self.memo[i][kappa] = Some((outcome, choice));
        outcome
    }

    fn coding(&self) -> Vec<usize> {
        let mut out = vec![0];
        for i in 0..self.tubes.len() - 1 {
            let kappa = *out.last().unwrap();
            out.push(self.memo[i][kappa].expect("coding requested before search").1);
        }
        out
    }
}

fn search(tree: &Ttlt, path: &[NodeId], x: &[Vec<f64>]) -> Result<(Outcome, Option<Vec<usize>>), TreeError> {
    let tubes: Vec<NodeId> = path.iter().copied().filter(|&id| tree.is_tube(id)).collect();
    let ops: Vec<OpKind> = path.iter().filter_map(|&id| tree.op(id)).collect();
    let valid = !tubes.is_empty()
        && tubes[0] == tree.root()
        && ops.len() + 1 == tubes.len()
        && tree.is_leaf(*tubes.last().unwrap())
        && path.windows(2).all(|w| tree.parent(w[1]) == Some(w[0]));
    if !valid {
        return Err(TreeError::NotAPath(path.last().copied().unwrap_or(0)));
    }
    let mut s = PathSearch { tree, memo: vec![vec![None; x.len()]; tubes.len()], tubes, ops, x };
    let o = s.solve(0, 0);
    let coding = (o == Outcome::Yes).then(|| s.coding());
    Ok((o, coding))
}

fn path_horizon(tree: &Ttlt, path: &[NodeId]) -> usize {
    path.iter().filter_map(|&id| tree.op(id)).map(|op| op.horizon()).sum()
}

/// Whether trajectory `x` (sampled from step 0) satisfies a complete path:
/// there is a time coding `kappa_0 = 0 <= kappa_1 <= ... <= kappa_N` such that
/// Boolean operators keep the time, `U_[a,b]` advances it by `a..=b`,
/// `G_[a,b]` by exactly `b`, the state stays in tube `i` (indexed from its
/// activation) on `[kappa_i, kappa_{i+1}]`, and `x(kappa_N)` lies in the leaf.
///
/// Returns the coding when satisfied. Errors if no coding was found but the
/// trajectory ends before the path horizon.
pub fn path_satisfies(tree: &Ttlt, path: &[NodeId], x: &[Vec<f64>]) -> Result<Option<Vec<usize>>, TreeError> {
    match search(tree, path, x)? {
        (Outcome::Yes, coding) => Ok(coding),
        (Outcome::No, _) => Ok(None),
        (Outcome::Unknown, _) => Err(TreeError::InsufficientSignal { len: x.len(), need: path_horizon(tree, path) + 1 }),
    }
}

#[derive(Debug, Clone)]
pub struct TreeVerdict {
    pub satisfied: bool,
    /// Each complete path with its time coding, if it is satisfied.
    pub paths: Vec<(Vec<NodeId>, Option<Vec<usize>>)>,
}

/// Whether trajectory `x` satisfies the tree: complete paths are checked
/// individually and combined through the Boolean structure of the
/// compressed tree.
pub fn tree_satisfies(tree: &Ttlt, x: &[Vec<f64>]) -> Result<TreeVerdict, TreeError> {
    let compressed = tree.compress();
    let mut labels = vec![false; compressed.nodes.len()];
    let mut unknown = false;
    let mut paths = Vec::new();
    let mut need = 0;
    for path in tree.complete_paths() {
        let (outcome, coding) = search(tree, &path, x)?;
        let leaf = *path.last().unwrap();
        let c = compressed.containing(leaf).expect("every leaf belongs to a fragment");
        labels[c] = outcome == Outcome::Yes;
        if outcome == Outcome::Unknown {
            unknown = true;
            need = need.max(path_horizon(tree, &path) + 1);
        }
        paths.push((path, coding));
    }
    let satisfied = backtrack(&compressed, labels, |a, b| *a || *b, |a, b| *a && *b);
    if !satisfied && unknown {
        return Err(TreeError::InsufficientSignal { len: x.len(), need });
    }
    Ok(TreeVerdict { satisfied, paths })
}
