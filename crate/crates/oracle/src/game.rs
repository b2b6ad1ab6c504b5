//! Tube membership by playing the game out over whole trajectory histories.

use std::sync::Arc;

use tubetree::grid::{Grid, GridSet};
use tubetree::system::SystemModel;

/// A system restricted to cell centers: `succ[c][u][w]` is the cell reached
/// from the center of `c`, or `None` when the successor leaves the grid.
#[derive(Debug, Clone)]
pub struct LatticeGame {
    pub succ: Vec<Vec<Vec<Option<usize>>>>,
}

/// Per-step membership: `sets[j]` is used at tube time `j`, the last entry
/// for every later step.
pub type Schedule = Vec<Vec<bool>>;

fn at(s: &Schedule, j: usize) -> &[bool] {
    &s[j.min(s.len() - 1)]
}

impl LatticeGame {
    pub fn new(model: &SystemModel, grid: &Arc<Grid>) -> Self {
        let succ = (0..grid.total_cells())
            .map(|c| {
                let x = grid.center(c);
                model
                    .controls
                    .iter()
                    .map(|u| model.disturbances.iter().map(|w| grid.cell_of(&model.step(&x, u, w))).collect())
                    .collect()
            })
            .collect();
        LatticeGame { succ }
    }

    pub fn cells(&self) -> usize {
        self.succ.len()
    }

    /// Whether some feedback strategy, against every disturbance sequence,
    /// drives the state from `cell` at tube time `k` into the target at a
    /// time in `[max(a, k), b]` while staying in the constraint before that
    /// time. Leaving the grid loses.
    pub fn max_reach(&self, target: &Schedule, constraint: &Schedule, a: usize, b: usize, k: usize, cell: usize) -> bool {
        let mut hist = vec![Some(cell)];
        self.controller_wins(target, constraint, a, b, k, &mut hist)
    }

    /// Status of a history under the reach-avoid objective: `Some(true)` if
    /// already won, `Some(false)` if already lost, `None` if undecided.
    fn reach_avoid_status(target: &Schedule, constraint: &Schedule, a: usize, b: usize, k: usize, hist: &[Option<usize>]) -> Option<bool> {
        for (i, c) in hist.iter().enumerate() {
            let t = k + i;
            let Some(c) = *c else { return Some(false) };
            if t >= a && t <= b && at(target, t)[c] {
                return Some(true);
            }
            if t >= b || !at(constraint, t)[c] {
                return Some(false);
            }
        }
        None
    }

    fn controller_wins(&self, target: &Schedule, constraint: &Schedule, a: usize, b: usize, k: usize, hist: &mut Vec<Option<usize>>) -> bool {
        if let Some(v) = Self::reach_avoid_status(target, constraint, a, b, k, hist) {
            return v;
        }
        let c = hist.last().unwrap().unwrap();
        (0..self.succ[c].len()).any(|u| {
            self.succ[c][u].iter().all(|&next| {
                hist.push(next);
                let v = self.controller_wins(target, constraint, a, b, k, hist);
                hist.pop();
                v
            })
        })
    }

    /// Whether, whatever the strategy, some disturbance sequence drives the
    /// state from `cell` at tube time `k` into the target at a time in
    /// `[max(a, k), b]`. Leaving the grid counts as reaching the target.
    pub fn min_reach(&self, target: &Schedule, a: usize, b: usize, k: usize, cell: usize) -> bool {
        let mut hist = vec![Some(cell)];
        self.adversary_wins(target, a, b, k, &mut hist)
    }

    fn hit_status(target: &Schedule, a: usize, b: usize, k: usize, hist: &[Option<usize>]) -> Option<bool> {
        for (i, c) in hist.iter().enumerate() {
            let t = k + i;
            let Some(c) = *c else { return Some(true) };
            if t >= a && t <= b && at(target, t)[c] {
                return Some(true);
            }
            if t >= b {
                return Some(false);
            }
        }
        None
    }

    fn adversary_wins(&self, target: &Schedule, a: usize, b: usize, k: usize, hist: &mut Vec<Option<usize>>) -> bool {
        if let Some(v) = Self::hit_status(target, a, b, k, hist) {
            return v;
        }
        let c = hist.last().unwrap().unwrap();
        (0..self.succ[c].len()).all(|u| {
            self.succ[c][u].iter().any(|&next| {
                hist.push(next);
                let v = self.adversary_wins(target, a, b, k, hist);
                hist.pop();
                v
            })
        })
    }
}

/// Membership vector of a grid set.
pub fn membership(s: &GridSet) -> Vec<bool> {
    (0..s.grid().total_cells()).map(|c| s.contains_cell(c)).collect()
}
