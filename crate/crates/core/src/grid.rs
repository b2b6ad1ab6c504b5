//! Uniform grids over a box-shaped working space and cell sets on them.
//!
//! A cell belongs to a set derived from a predicate when its center satisfies
//! the predicate. Complements are taken relative to the working space, and
//! points outside the grid are members of no set.

use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::io;
use std::sync::Arc;

use thiserror::Error;

use crate::bits::BitSet;
use crate::formula::PredicateDef;

/// Upper bound on the number of cells a grid may have unless overridden.
pub const DEFAULT_CELL_BUDGET: usize = 64_000_000;

/// Tolerance, in cell widths, for assigning points on a cell boundary.
const LOCATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("grid needs {cells} cells, over the budget of {budget}")]
    OverBudget { cells: u128, budget: usize },
    #[error("sets live on different grids")]
    Mismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("malformed run-length encoding: {0}")]
    Rle(String),
}

#[derive(Debug, Clone)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
    width: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells
            && self.lower.iter().zip(&other.lower).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for Grid {}

impl Hash for Grid {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.cells.hash(state);
        for v in self.lower.iter().chain(&self.upper) {
            v.to_bits().hash(state);
        }
    }
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self, GridError> {
        Self::with_budget(lower, upper, cells, DEFAULT_CELL_BUDGET)
    }

    pub fn with_budget(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>, budget: usize) -> Result<Self, GridError> {
        let n = lower.len();
        if n == 0 || upper.len() != n || cells.len() != n {
            return Err(GridError::Invalid("bounds and cell counts must have the same non-zero length".into()));
        }
        for d in 0..n {
            if !(lower[d].is_finite() && upper[d].is_finite() && lower[d] < upper[d]) {
                return Err(GridError::Invalid(format!("dimension {d}: need finite lower < upper")));
            }
            if cells[d] == 0 {
                return Err(GridError::Invalid(format!("dimension {d}: zero cells")));
            }
        }
        let total: u128 = cells.iter().map(|&c| c as u128).product();
        if total > budget as u128 {
            return Err(GridError::OverBudget { cells: total, budget });
        }
        let width = (0..n).map(|d| (upper[d] - lower[d]) / cells[d] as f64).collect();
        let mut strides = vec![1; n];
        for d in 1..n {
            strides[d] = strides[d - 1] * cells[d - 1];
        }
        Ok(Grid { lower, upper, cells, width, strides, total: total as usize })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn total_cells(&self) -> usize {
        self.total
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn widths(&self) -> &[f64] {
        &self.width
    }

    /// Flat-index stride of each dimension; dimension 0 varies fastest.
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Cell coordinate of `x` along dimension `d`, or `None` outside the grid.
    /// Cells are closed below and open above, and so is the grid itself:
    /// points on the upper face lie outside.
    pub fn coord_of(&self, d: usize, x: f64) -> Option<usize> {
        let t = (x - self.lower[d]) / self.width[d] + LOCATE_EPS;
        if !(t >= 0.0) {
            return None;
        }
        let i = t.floor() as usize;
        (i < self.cells[d]).then_some(i)
    }

    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for d in 0..self.dim() {
            idx += self.coord_of(d, x[d])? * self.strides[d];
        }
        Some(idx)
    }

    pub fn coords(&self, idx: usize) -> Vec<usize> {
        let mut rest = idx;
        self.cells
            .iter()
            .map(|&c| {
                let v = rest % c;
                rest /= c;
                v
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn center_coord(&self, d: usize, i: usize) -> f64 {
        self.lower[d] + (i as f64 + 0.5) * self.width[d]
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.coords(idx).iter().enumerate().map(|(d, &i)| self.center_coord(d, i)).collect()
    }
}

/// An immutable set of grid cells. Cloning is cheap.
#[derive(Clone)]
pub struct GridSet {
    grid: Arc<Grid>,
    bits: Arc<BitSet>,
}

impl PartialEq for GridSet {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && (Arc::ptr_eq(&self.bits, &other.bits) || self.bits == other.bits)
    }
}

impl Eq for GridSet {}

impl Hash for GridSet {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.grid.hash(state);
        self.bits.hash(state);
    }
}

impl std::fmt::Debug for GridSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GridSet({} of {} cells)", self.count(), self.grid.total_cells())
    }
}

impl GridSet {
    pub fn from_bits(grid: Arc<Grid>, bits: BitSet) -> Self {
        assert_eq!(bits.len(), grid.total_cells(), "bitset length must equal the cell count");
        GridSet { grid, bits: Arc::new(bits) }
    }

    pub fn empty(grid: &Arc<Grid>) -> Self {
        Self::from_bits(grid.clone(), BitSet::new(grid.total_cells()))
    }

    pub fn full(grid: &Arc<Grid>) -> Self {
        Self::from_bits(grid.clone(), BitSet::full(grid.total_cells()))
    }

    /// Cells whose center satisfies `keep`.
    pub fn from_fn(grid: &Arc<Grid>, mut keep: impl FnMut(&[f64]) -> bool) -> Self {
        let n = grid.dim();
        let mut bits = BitSet::new(grid.total_cells());
        let mut coords = vec![0usize; n];
        let mut center: Vec<f64> = (0..n).map(|d| grid.center_coord(d, 0)).collect();
        for idx in 0..grid.total_cells() {
            if keep(&center) {
                bits.insert(idx);
            }
            for d in 0..n {
                coords[d] += 1;
                if coords[d] < grid.cells[d] {
                    center[d] = grid.center_coord(d, coords[d]);
                    break;
                }
                coords[d] = 0;
                center[d] = grid.center_coord(d, 0);
            }
        }
        Self::from_bits(grid.clone(), bits)
    }

    /// Cells whose center satisfies the predicate.
    pub fn from_predicate(def: &PredicateDef, grid: &Arc<Grid>) -> Result<Self, GridError> {
        if def.dim() != grid.dim() {
            return Err(GridError::Dimension { expected: grid.dim(), got: def.dim() });
        }
        Ok(Self::from_fn(grid, |c| def.holds(c)))
    }

    /// Cells lying entirely inside the predicate region, or entirely outside
    /// it when `negated`, so membership of a cell implies the predicate (or
    /// its negation) for every state in the cell.
    pub fn from_predicate_inner(def: &PredicateDef, grid: &Arc<Grid>, negated: bool) -> Result<Self, GridError> {
        if def.dim() != grid.dim() {
            return Err(GridError::Dimension { expected: grid.dim(), got: def.dim() });
        }
        let half: Vec<f64> = grid.widths().iter().map(|w| w / 2.0).collect();
        Ok(Self::from_fn(grid, |c| {
            let lo: Vec<f64> = c.iter().zip(&half).map(|(c, h)| c - h).collect();
            let hi: Vec<f64> = c.iter().zip(&half).map(|(c, h)| c + h).collect();
            let (min, max) = def.range_over_box(&lo, &hi);
            if negated {
                max < 0.0
            } else {
                min >= 0.0
            }
        }))
    }

    pub fn from_cells(grid: &Arc<Grid>, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = BitSet::new(grid.total_cells());
        for c in cells {
            bits.insert(c);
        }
        Self::from_bits(grid.clone(), bits)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn bits(&self) -> &BitSet {
        &self.bits
    }

    /// True when both sets share the same underlying storage.
    pub fn ptr_eq(&self, other: &GridSet) -> bool {
        Arc::ptr_eq(&self.bits, &other.bits)
    }

    pub fn same_grid(&self, other: &GridSet) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check(&self, other: &GridSet) -> Result<(), GridError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.grid.cell_of(x).is_some_and(|i| self.bits.contains(i))
    }

    pub fn contains_cell(&self, idx: usize) -> bool {
        self.bits.contains(idx)
    }

    pub fn count(&self) -> usize {
        self.bits.count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.bits.is_full()
    }

    fn combine(&self, other: &GridSet, op: impl FnOnce(&mut BitSet, &BitSet)) -> Result<GridSet, GridError> {
        self.check(other)?;
        let mut bits = (*self.bits).clone();
        op(&mut bits, &other.bits);
        Ok(GridSet { grid: self.grid.clone(), bits: Arc::new(bits) })
    }

    pub fn union(&self, other: &GridSet) -> Result<GridSet, GridError> {
        if self.ptr_eq(other) {
            self.check(other)?;
            return Ok(self.clone());
        }
        self.combine(other, |a, b| a.union_with(b))
    }

    pub fn intersect(&self, other: &GridSet) -> Result<GridSet, GridError> {
        if self.ptr_eq(other) {
            self.check(other)?;
            return Ok(self.clone());
        }
        self.combine(other, |a, b| a.intersect_with(b))
    }

    pub fn difference(&self, other: &GridSet) -> Result<GridSet, GridError> {
        self.combine(other, |a, b| a.difference_with(b))
    }

    /// Complement relative to the working space.
    pub fn complement(&self) -> GridSet {
        GridSet { grid: self.grid.clone(), bits: Arc::new(self.bits.complement()) }
    }

    pub fn is_subset(&self, other: &GridSet) -> Result<bool, GridError> {
        self.check(other)?;
        Ok(self.bits.is_subset(&other.bits))
    }

    pub fn symmetric_difference_count(&self, other: &GridSet) -> Result<usize, GridError> {
        self.check(other)?;
        Ok(self.bits.symmetric_difference_count(&other.bits))
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    /// Run-length encoding: a header line describing the grid, then run
    /// lengths alternating between non-members and members, starting with
    /// non-members.
    pub fn to_rle(&self) -> String {
        let g = &self.grid;
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let cells = g.cells.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(out, "grid lower={} upper={} cells={}", join(&g.lower), join(&g.upper), cells).unwrap();
        let mut runs = Vec::new();
        let mut current = false;
        let mut run = 0usize;
        for i in 0..g.total_cells() {
            let b = self.bits.contains(i);
            if b != current {
                runs.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        runs.push(run);
        out.push_str(&runs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" "));
        out.push('\n');
        out
    }

    /// Parses the body of [`GridSet::to_rle`] against a known grid.
    pub fn from_rle(grid: &Arc<Grid>, text: &str) -> Result<GridSet, GridError> {
        let body = text
            .lines()
            .find(|l| !l.starts_with("grid ") && !l.trim().is_empty())
            .ok_or_else(|| GridError::Rle("missing run lengths".into()))?;
        let mut bits = BitSet::new(grid.total_cells());
        let mut pos = 0usize;
        let mut member = false;
        for tok in body.split_whitespace() {
            let run: usize = tok.parse().map_err(|_| GridError::Rle(format!("bad run '{tok}'")))?;
            if pos + run > grid.total_cells() {
                return Err(GridError::Rle("runs exceed the cell count".into()));
            }
            if member {
                for i in pos..pos + run {
                    bits.insert(i);
                }
            }
            pos += run;
            member = !member;
        }
        if pos != grid.total_cells() {
            return Err(GridError::Rle(format!("runs cover {pos} of {} cells", grid.total_cells())));
        }
        Ok(GridSet::from_bits(grid.clone(), bits))
    }

    /// Writes the centers of member cells as CSV with columns `x0..x{n-1}`.
    pub fn write_centers_csv(&self, mut w: impl io::Write) -> io::Result<()> {
        let n = self.grid.dim();
        let header: Vec<String> = (0..n).map(|d| format!("x{d}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for idx in self.iter_cells() {
            let c = self.grid.center(idx);
            let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
