//! One-step preimages and reachable tubes on a grid.
//!
//! A successor that leaves the grid is a loss for the controller: it is in no
//! set for the controller-side preimage and counts as hitting the target for
//! the disturbance-side one. Both operators thereby treat the working space
//! as a hard state constraint.
//!
//! For linear dynamics whose drift does not depend on the first state
//! coordinate, preimages are computed by shifting whole grid rows: inside a
//! group of rows that agree on the coordinates driving `A - I`, every
//! `(u, w)` pair moves every cell by the same index offset.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bits::BitSet;
use crate::formula::StepInterval;
use crate::grid::{Grid, GridError, GridSet};
use crate::system::{Dynamics, SystemModel};

/// Mirrors the boundary tolerance used when locating points in cells.
const LOCATE_EPS: f64 = 1e-9;

/// Default cap on `cells * slices` for a single tube.
pub const DEFAULT_MAX_TUBE_BITS: u128 = 16_000_000_000;

/// Largest successor table precomputed for the per-cell path.
const MAX_TABLE_ENTRIES: usize = 40_000_000;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("system has state dimension {model}, grid has {grid}")]
    Dimension { model: usize, grid: usize },
    #[error("tube would need {bits} bits, over the budget of {budget}")]
    MemoryBudget { bits: u128, budget: u128 },
    #[error("tube cache: {0}")]
    Cache(#[from] io::Error),
}

/// A finite sequence of sets indexed by steps `0..=K`. Indices past the end
/// read the last slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    slices: Vec<GridSet>,
}

impl Tube {
    pub fn new(slices: Vec<GridSet>) -> Self {
        assert!(!slices.is_empty(), "a tube needs at least one slice");
        Tube { slices }
    }

    pub fn constant(set: GridSet) -> Self {
        Tube { slices: vec![set] }
    }

    pub fn slice(&self, k: usize) -> &GridSet {
        &self.slices[k.min(self.slices.len() - 1)]
    }

    pub fn first(&self) -> &GridSet {
        &self.slices[0]
    }

    pub fn slices(&self) -> &[GridSet] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Last index `K`.
    pub fn horizon(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.slices[0].grid()
    }

    /// Number of distinct slice buffers, counting shared slices once.
    pub fn distinct_slices(&self) -> usize {
        1 + self.slices.windows(2).filter(|w| !w[0].ptr_eq(&w[1])).count()
    }
}

/// Target or constraint of a tube computation: a fixed set or a time-varying
/// tube read at the step being computed.
#[derive(Debug, Clone)]
pub enum TargetSpec {
    Constant(GridSet),
    Tube(Tube),
}

impl TargetSpec {
    pub fn at(&self, k: usize) -> &GridSet {
        match self {
            TargetSpec::Constant(s) => s,
            TargetSpec::Tube(t) => t.slice(k),
        }
    }

    fn unchanged(&self, k: usize) -> bool {
        match self {
            TargetSpec::Constant(_) => true,
            TargetSpec::Tube(t) => t.slice(k).ptr_eq(t.slice(k + 1)),
        }
    }

    fn digest(&self, h: &mut Sha256) {
        match self {
            TargetSpec::Constant(s) => {
                h.update([0u8]);
                digest_set(h, s);
            }
            TargetSpec::Tube(t) => {
                h.update([1u8]);
                h.update((t.len() as u64).to_le_bytes());
                for s in t.slices() {
                    digest_set(h, s);
                }
            }
        }
    }
}

impl From<GridSet> for TargetSpec {
    fn from(s: GridSet) -> Self {
        TargetSpec::Constant(s)
    }
}

fn digest_set(h: &mut Sha256, s: &GridSet) {
    for w in s.bits().words() {
        h.update(w.to_le_bytes());
    }
}

/// Where the successor of the current state is evaluated when choosing
/// one-step controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NextGridRule {
    /// From the measured state itself.
    #[default]
    Exact,
    /// From the center of the cell containing the measured state.
    CellCenter,
}

#[derive(Debug, Clone)]
pub struct ReachOptions {
    pub max_tube_bits: u128,
    /// Directory for persisting computed tubes across runs.
    pub cache_dir: Option<PathBuf>,
    /// Always use the per-cell preimage even when row shifting applies.
    pub force_per_cell: bool,
    /// Rasterize predicates to the cells lying entirely inside (or, for
    /// negated predicates, entirely outside) the region instead of the cells
    /// whose center satisfies it.
    pub inner_predicates: bool,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions { max_tube_bits: DEFAULT_MAX_TUBE_BITS, cache_dir: None, force_per_cell: false, inner_predicates: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReachStats {
    pub preimages: usize,
    pub tubes_computed: usize,
    pub memory_hits: usize,
    pub disk_hits: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    /// exists u, forall w
    Controller,
    /// forall u, exists w
    Adversary,
}

struct GroupPlan {
    offsets: Vec<Vec<i64>>,
    classes: Vec<Vec<u16>>,
}

struct ShiftPlan {
    n0: usize,
    row_words: usize,
    rows: usize,
    row_cells: Vec<usize>,
    row_strides: Vec<usize>,
    row_coords: Vec<u32>,
    row_group: Vec<u32>,
    groups: Vec<GroupPlan>,
    max_offsets: usize,
}

enum Plan {
    Shift(ShiftPlan),
    PerCell { table: Option<Vec<u32>> },
}

/// Computes preimages and tubes for one system on one grid, memoizing tubes
/// by content.
pub struct ReachEngine {
    model: SystemModel,
    grid: Arc<Grid>,
    plan: Plan,
    options: ReachOptions,
    memo: Mutex<HashMap<[u8; 32], Tube>>,
    stats: Mutex<ReachStats>,
}

impl std::fmt::Debug for ReachEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReachEngine")
            .field("cells", &self.grid.total_cells())
            .field("row_shift", &matches!(self.plan, Plan::Shift(_)))
            .finish()
    }
}

const OUTSIDE: u32 = u32::MAX;

impl ReachEngine {
    pub fn new(model: SystemModel, grid: Arc<Grid>, options: ReachOptions) -> Result<Self, ReachError> {
        if model.state_dim != grid.dim() {
            return Err(ReachError::Dimension { model: model.state_dim, grid: grid.dim() });
        }
        let plan = match shift_plan(&model, &grid) {
            Some(p) if !options.force_per_cell => Plan::Shift(p),
            _ => {
                let entries = grid.total_cells() * model.controls.len() * model.disturbances.len();
                let table = (entries <= MAX_TABLE_ENTRIES && grid.total_cells() < OUTSIDE as usize)
                    .then(|| successor_table(&model, &grid));
                Plan::PerCell { table }
            }
        };
        Ok(ReachEngine { model, grid, plan, options, memo: Mutex::new(HashMap::new()), stats: Mutex::default() })
    }

    pub fn options(&self) -> &ReachOptions {
        &self.options
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn stats(&self) -> ReachStats {
        *self.stats.lock().unwrap()
    }

    pub fn uses_row_shift(&self) -> bool {
        matches!(self.plan, Plan::Shift(_))
    }

    fn own(&self, s: &GridSet) -> Result<(), ReachError> {
        if Arc::ptr_eq(s.grid(), &self.grid) || **s.grid() == *self.grid {
            Ok(())
        } else {
            Err(GridError::Mismatch.into())
        }
    }

    /// Cells from which some control keeps every sampled disturbance's
    /// successor inside `s`.
    pub fn robust_pre(&self, s: &GridSet) -> Result<GridSet, ReachError> {
        self.pre(s, Side::Controller)
    }

    /// Cells from which every control admits a sampled disturbance whose
    /// successor lies in `s` (or leaves the grid).
    pub fn adversarial_pre(&self, s: &GridSet) -> Result<GridSet, ReachError> {
        self.pre(s, Side::Adversary)
    }

    fn pre(&self, s: &GridSet, side: Side) -> Result<GridSet, ReachError> {
        self.own(s)?;
        self.stats.lock().unwrap().preimages += 1;
        if side == Side::Controller && s.is_empty() {
            return Ok(GridSet::empty(&self.grid));
        }
        let bits = match &self.plan {
            Plan::Shift(p) => p.apply(s.bits(), side),
            Plan::PerCell { table } => self.per_cell(s.bits(), side, table.as_deref()),
        };
        Ok(GridSet::from_bits(self.grid.clone(), bits))
    }

    fn per_cell(&self, s: &BitSet, side: Side, table: Option<&[u32]>) -> BitSet {
        let (nu, nw) = (self.model.controls.len(), self.model.disturbances.len());
        let mut out = BitSet::new(self.grid.total_cells());
        let member = |succ: u32| -> bool {
            if succ == OUTSIDE {
                side == Side::Adversary
            } else {
                s.contains(succ as usize)
            }
        };
        for cell in 0..self.grid.total_cells() {
            let center = if table.is_none() { self.grid.center(cell) } else { Vec::new() };
            let succ = |u: usize, w: usize| -> u32 {
                match table {
                    Some(t) => t[(cell * nu + u) * nw + w],
                    None => locate(&self.grid, &self.model.step(&center, &self.model.controls[u], &self.model.disturbances[w])),
                }
            };
            let hit = match side {
                Side::Controller => (0..nu).any(|u| (0..nw).all(|w| member(succ(u, w)))),
                Side::Adversary => (0..nu).all(|u| (0..nw).any(|w| member(succ(u, w)))),
            };
            if hit {
                out.insert(cell);
            }
        }
        out
    }

    fn check_budget(&self, slices: usize) -> Result<(), ReachError> {
        let bits = self.grid.total_cells() as u128 * slices as u128;
        if bits > self.options.max_tube_bits {
            return Err(ReachError::MemoryBudget { bits, budget: self.options.max_tube_bits });
        }
        Ok(())
    }

    /// Maximal reachable tube: slice `k` holds the states from which some
    /// feedback policy reaches `target` at a step `k' in [max(a,k), b]` for
    /// every disturbance sequence, staying in `constraint` on `[k, k')`.
    ///
    /// `T_b = Tgt(b)`, and for `k < b`:
    /// `T_k = [k >= a] Tgt(k)  ∪  (Con(k) ∩ robust_pre(T_{k+1}))`.
    pub fn max_reach_tube(&self, target: &TargetSpec, constraint: &TargetSpec, interval: StepInterval) -> Result<Tube, ReachError> {
        self.tube(Side::Controller, target, Some(constraint), interval)
    }

    /// Minimal reachable tube: slice `k` holds the states from which, whatever
    /// the policy, some disturbance sequence reaches `target` at a step in
    /// `[max(a,k), b]`.
    ///
    /// `T_b = Tgt(b)`, and for `k < b`: `T_k = [k >= a] Tgt(k) ∪ adversarial_pre(T_{k+1})`.
    pub fn min_reach_tube(&self, target: &TargetSpec, interval: StepInterval) -> Result<Tube, ReachError> {
        self.tube(Side::Adversary, target, None, interval)
    }

    fn tube(&self, side: Side, target: &TargetSpec, constraint: Option<&TargetSpec>, iv: StepInterval) -> Result<Tube, ReachError> {
        self.own(target.at(0))?;
        if let Some(c) = constraint {
            self.own(c.at(0))?;
        }
        self.check_budget(iv.hi + 1)?;
        let key = self.cache_key(side, target, constraint, iv);
        if let Some(t) = self.memo.lock().unwrap().get(&key) {
            self.stats.lock().unwrap().memory_hits += 1;
            return Ok(t.clone());
        }
        if let Some(t) = self.load(&key)? {
            self.stats.lock().unwrap().disk_hits += 1;
            self.memo.lock().unwrap().insert(key, t.clone());
            return Ok(t);
        }
        let (a, b) = (iv.lo, iv.hi);
        let mut slices: Vec<Option<GridSet>> = vec![None; b + 1];
        slices[b] = Some(target.at(b).clone());
        for k in (0..b).rev() {
            let next = slices[k + 1].clone().unwrap();
            let stable = k + 2 <= b
                && next.ptr_eq(slices[k + 2].as_ref().unwrap())
                && (k >= a) == (k + 1 >= a)
                && target.unchanged(k)
                && constraint.is_none_or(|c| c.unchanged(k));
            if stable {
                slices[k] = Some(next);
                continue;
            }
            let mut t = match side {
                Side::Controller => self.robust_pre(&next)?,
                Side::Adversary => self.adversarial_pre(&next)?,
            };
            if let Some(c) = constraint {
                t = t.intersect(c.at(k))?;
            }
            if k >= a {
                t = t.union(target.at(k))?;
            }
            // share storage with the next slice when nothing changed
            slices[k] = Some(if t == next { next } else { t });
        }
        let tube = Tube::new(slices.into_iter().map(Option::unwrap).collect());
        self.stats.lock().unwrap().tubes_computed += 1;
        self.store(&key, &tube)?;
        self.memo.lock().unwrap().insert(key, tube.clone());
        Ok(tube)
    }

    fn cache_key(&self, side: Side, target: &TargetSpec, constraint: Option<&TargetSpec>, iv: StepInterval) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"tube-v1");
        h.update([side as u8]);
        h.update((iv.lo as u64).to_le_bytes());
        h.update((iv.hi as u64).to_le_bytes());
        h.update(self.model.fingerprint());
        for v in self.grid.lower().iter().chain(self.grid.upper()) {
            h.update(v.to_bits().to_le_bytes());
        }
        for &c in self.grid.cells() {
            h.update((c as u64).to_le_bytes());
        }
        target.digest(&mut h);
        match constraint {
            Some(c) => c.digest(&mut h),
            None => h.update([2u8]),
        }
        h.finalize().into()
    }

    fn cache_path(&self, key: &[u8; 32]) -> Option<PathBuf> {
        let persistent = !matches!(self.model.dynamics, Dynamics::Custom { .. });
        self.options.cache_dir.as_ref().filter(|_| persistent).map(|d| d.join(format!("{}.tube", hex::encode(key))))
    }

    fn store(&self, key: &[u8; 32], tube: &Tube) -> Result<(), ReachError> {
        let Some(path) = self.cache_path(key) else { return Ok(()) };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(b"TUBE1");
        buf.extend_from_slice(&(tube.len() as u64).to_le_bytes());
        for (i, s) in tube.slices().iter().enumerate() {
            if i > 0 && s.ptr_eq(&tube.slices()[i - 1]) {
                buf.push(1);
                continue;
            }
            buf.push(0);
            for w in s.bits().words() {
                buf.extend_from_slice(&w.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        fs::File::create(&tmp)?.write_all(&buf)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn load(&self, key: &[u8; 32]) -> Result<Option<Tube>, ReachError> {
        let Some(path) = self.cache_path(key) else { return Ok(None) };
        let mut buf = Vec::new();
        match fs::File::open(&path) {
            Ok(mut f) => f.read_to_end(&mut buf)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = || io::Error::new(io::ErrorKind::InvalidData, format!("corrupt cache file {}", path.display()));
        if buf.len() < 13 || &buf[..5] != b"TUBE1" {
            return Err(corrupt().into());
        }
        let n = u64::from_le_bytes(buf[5..13].try_into().unwrap()) as usize;
        let words = self.grid.total_cells().div_ceil(64);
        let mut pos = 13;
        let mut slices: Vec<GridSet> = Vec::with_capacity(n);
        for _ in 0..n {
            let flag = *buf.get(pos).ok_or_else(corrupt)?;
            pos += 1;
            if flag == 1 {
                slices.push(slices.last().ok_or_else(corrupt)?.clone());
                continue;
            }
            let end = pos + 8 * words;
            let raw = buf.get(pos..end).ok_or_else(corrupt)?;
            let ws = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
            slices.push(GridSet::from_bits(self.grid.clone(), BitSet::from_words(self.grid.total_cells(), ws)));
            pos = end;
        }
        if slices.is_empty() || pos != buf.len() {
            return Err(corrupt().into());
        }
        Ok(Some(Tube::new(slices)))
    }

    /// Indices of sampled controls whose successors from `x` lie in `target`
    /// for every sampled disturbance.
    pub fn robust_one_step_controls(&self, x: &[f64], target: &GridSet, rule: NextGridRule) -> Vec<usize> {
        robust_one_step_controls(&self.model, x, target, rule)
    }
}

/// See [`ReachEngine::robust_one_step_controls`].
pub fn robust_one_step_controls(model: &SystemModel, x: &[f64], target: &GridSet, rule: NextGridRule) -> Vec<usize> {
    let from = match rule {
        NextGridRule::Exact => x.to_vec(),
        NextGridRule::CellCenter => match target.grid().cell_of(x) {
            Some(c) => target.grid().center(c),
            None => return Vec::new(),
        },
    };
    (0..model.controls.len())
        .filter(|&u| model.disturbances.iter().all(|w| target.contains(&model.step(&from, &model.controls[u], w))))
        .collect()
}

/// One-off controller-side preimage.
pub fn robust_pre(model: &SystemModel, s: &GridSet) -> Result<GridSet, ReachError> {
    ReachEngine::new(model.clone(), s.grid().clone(), ReachOptions::default())?.robust_pre(s)
}

/// One-off disturbance-side preimage.
pub fn adversarial_pre(model: &SystemModel, s: &GridSet) -> Result<GridSet, ReachError> {
    ReachEngine::new(model.clone(), s.grid().clone(), ReachOptions::default())?.adversarial_pre(s)
}

fn locate(grid: &Grid, p: &[f64]) -> u32 {
    grid.cell_of(p).map_or(OUTSIDE, |c| c as u32)
}

fn successor_table(model: &SystemModel, grid: &Grid) -> Vec<u32> {
    let mut t = Vec::with_capacity(grid.total_cells() * model.controls.len() * model.disturbances.len());
    for cell in 0..grid.total_cells() {
        let c = grid.center(cell);
        for u in &model.controls {
            for w in &model.disturbances {
                t.push(locate(grid, &model.step(&c, u, w)));
            }
        }
    }
    t
}

fn shift_plan(model: &SystemModel, grid: &Grid) -> Option<ShiftPlan> {
    let Dynamics::Linear { a, b } = &model.dynamics else { return None };
    let n = grid.dim();
    // columns of A - I that are not identically zero drive the displacement
    let driving: Vec<usize> =
        (0..n).filter(|&j| (0..n).any(|i| a[i][j] - if i == j { 1.0 } else { 0.0 } != 0.0)).collect();
    if driving.contains(&0) {
        return None;
    }
    let n0 = grid.cells()[0];
    let rows = grid.total_cells() / n0;
    let row_cells: Vec<usize> = grid.cells()[1..].to_vec();
    let row_strides: Vec<usize> = grid.strides()[1..].iter().map(|s| s / n0).collect();
    let mut group_strides = vec![0usize; n];
    let mut groups_total = 1usize;
    for &d in &driving {
        group_strides[d] = groups_total;
        groups_total *= grid.cells()[d];
    }
    let mut row_coords = Vec::with_capacity(rows * (n - 1));
    let mut row_group = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut rest = r;
        let mut g = 0;
        for (i, &c) in row_cells.iter().enumerate() {
            let v = rest % c;
            rest /= c;
            row_coords.push(v as u32);
            g += v * group_strides[i + 1];
        }
        row_group.push(g as u32);
    }
    let bu: Vec<Vec<f64>> = model
        .controls
        .iter()
        .map(|u| (0..n).map(|i| b[i].iter().zip(u).map(|(p, q)| p * q).sum()).collect())
        .collect();
    let mut groups = Vec::with_capacity(groups_total);
    let mut max_offsets = 0;
    for g in 0..groups_total {
        let mut center = vec![0.0; n];
        for &d in &driving {
            center[d] = grid.center_coord(d, (g / group_strides[d]) % grid.cells()[d]);
        }
        let drift: Vec<f64> = (0..n)
            .map(|i| driving.iter().map(|&j| (a[i][j] - if i == j { 1.0 } else { 0.0 }) * center[j]).sum())
            .collect();
        let mut index: HashMap<Vec<i64>, u16> = HashMap::new();
        let mut offsets = Vec::new();
        let mut classes: Vec<Vec<u16>> = Vec::new();
        for bu_u in &bu {
            let mut class: Vec<u16> = model
                .disturbances
                .iter()
                .map(|w| {
                    let o: Vec<i64> = (0..n)
                        .map(|d| (0.5 + (drift[d] + bu_u[d] + w[d]) / grid.widths()[d] + LOCATE_EPS).floor() as i64)
                        .collect();
                    *index.entry(o.clone()).or_insert_with(|| {
                        offsets.push(o);
                        (offsets.len() - 1) as u16
                    })
                })
                .collect();
            class.sort_unstable();
            class.dedup();
            if !classes.contains(&class) {
                classes.push(class);
            }
        }
        // a class whose offsets include another class's offsets is redundant
        let keep: Vec<bool> = (0..classes.len())
            .map(|i| !(0..classes.len()).any(|j| j != i && classes[j].len() < classes[i].len() && classes[j].iter().all(|o| classes[i].contains(o))))
            .collect();
        let classes: Vec<Vec<u16>> = classes.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
        max_offsets = max_offsets.max(offsets.len());
        groups.push(GroupPlan { offsets, classes });
    }
    Some(ShiftPlan {
        n0,
        row_words: n0.div_ceil(64),
        rows,
        row_cells,
        row_strides,
        row_coords,
        row_group,
        groups,
        max_offsets,
    })
}

impl ShiftPlan {
    fn word_mask(&self, wi: usize) -> u64 {
        let bits = (self.n0 - 64 * wi).min(64);
        if bits == 64 {
            u64::MAX
        } else {
            (1u64 << bits) - 1
        }
    }

    fn apply(&self, s: &BitSet, side: Side) -> BitSet {
        let (rw, n0, nr) = (self.row_words, self.n0, self.row_cells.len());
        let mut out = BitSet::new(s.len());
        let mut bufs = vec![0u64; self.max_offsets * rw];
        let mut acc = vec![0u64; rw];
        let mut tmp = vec![0u64; rw];
        for r in 0..self.rows {
            let plan = &self.groups[self.row_group[r] as usize];
            let coords = &self.row_coords[r * nr..(r + 1) * nr];
            for (j, o) in plan.offsets.iter().enumerate() {
                let buf = &mut bufs[j * rw..(j + 1) * rw];
                let mut src = r as i64;
                let mut inside = true;
                for d in 0..nr {
                    let c = coords[d] as i64 + o[d + 1];
                    if c < 0 || c >= self.row_cells[d] as i64 {
                        inside = false;
                        break;
                    }
                    src += o[d + 1] * self.row_strides[d] as i64;
                }
                for (wi, slot) in buf.iter_mut().enumerate() {
                    let mask = self.word_mask(wi);
                    if !inside {
                        *slot = if side == Side::Adversary { mask } else { 0 };
                        continue;
                    }
                    let base = src * n0 as i64;
                    let first = 64 * wi as i64 + o[0];
                    let mut v = s.read_window(base + first, base, base + n0 as i64);
                    if side == Side::Adversary {
                        // bits whose source falls off the row count as hits
                        let lo = (-first).clamp(0, 64);
                        let hi = (n0 as i64 - first).clamp(0, 64);
                        let valid = if hi <= lo {
                            0
                        } else if hi - lo == 64 {
                            u64::MAX
                        } else {
                            ((1u64 << (hi - lo)) - 1) << lo
                        };
                        v |= !valid & mask;
                    }
                    *slot = v & mask;
                }
            }
            match side {
                Side::Controller => {
                    acc.iter_mut().for_each(|x| *x = 0);
                    for class in &plan.classes {
                        tmp.iter_mut().for_each(|x| *x = u64::MAX);
                        for &j in class {
                            let buf = &bufs[j as usize * rw..(j as usize + 1) * rw];
                            tmp.iter_mut().zip(buf).for_each(|(t, b)| *t &= b);
                        }
                        acc.iter_mut().zip(&tmp).for_each(|(a, t)| *a |= t);
                    }
                }
                Side::Adversary => {
                    acc.iter_mut().for_each(|x| *x = u64::MAX);
                    for class in &plan.classes {
                        tmp.iter_mut().for_each(|x| *x = 0);
                        for &j in class {
                            let buf = &bufs[j as usize * rw..(j as usize + 1) * rw];
                            tmp.iter_mut().zip(buf).for_each(|(t, b)| *t |= b);
                        }
                        acc.iter_mut().zip(&tmp).for_each(|(a, t)| *a &= t);
                    }
                }
            }
            for (wi, &v) in acc.iter().enumerate() {
                let bits = (n0 - 64 * wi).min(64) as u32;
                out.or_window(r * n0 + 64 * wi, v, bits);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::InputSet;
    use proptest::prelude::*;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(vec![0.0], vec![n as f64], vec![n]).unwrap())
    }

    fn walker(controls: &[f64], disturbances: &[f64]) -> SystemModel {
        SystemModel::new(
            1,
            Dynamics::integrator(1),
            controls.iter().map(|&u| vec![u]).collect(),
            disturbances.iter().map(|&w| vec![w]).collect(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn trivial_preimages() {
        let g = line(10);
        let m = walker(&[-1.0, 0.0, 1.0], &[0.0]);
        let e = ReachEngine::new(m, g.clone(), ReachOptions::default()).unwrap();
        assert!(e.uses_row_shift());
        assert!(e.robust_pre(&GridSet::empty(&g)).unwrap().is_empty());
        assert!(e.robust_pre(&GridSet::full(&g)).unwrap().is_full());
        assert!(e.adversarial_pre(&GridSet::empty(&g)).unwrap().is_empty());
        assert!(e.adversarial_pre(&GridSet::full(&g)).unwrap().is_full());
    }

    #[test]
    fn leaving_the_grid_is_a_loss_for_the_controller() {
        let g = line(5);
        let m = walker(&[1.0], &[0.0]);
        let e = ReachEngine::new(m, g.clone(), ReachOptions::default()).unwrap();
        let full = GridSet::full(&g);
        // the last cell can only step outside
        let pre = e.robust_pre(&full).unwrap();
        assert_eq!(pre.iter_cells().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let adv = e.adversarial_pre(&GridSet::empty(&g)).unwrap();
        assert_eq!(adv.iter_cells().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn reach_tube_on_a_line() {
        let g = line(10);
        let m = walker(&[-1.0, 0.0, 1.0], &[0.0]);
        let e = ReachEngine::new(m, g.clone(), ReachOptions::default()).unwrap();
        let tgt = GridSet::from_cells(&g, [9]);
        let tube = e
            .max_reach_tube(&tgt.clone().into(), &GridSet::full(&g).into(), StepInterval::new(0, 3))
            .unwrap();
        for k in 0..=3 {
            let expect: Vec<usize> = (9 - (3 - k)..10).collect();
            assert_eq!(tube.slice(k).iter_cells().collect::<Vec<_>>(), expect, "slice {k}");
        }
        // interval [2,3]: reaching early is not enough, but the walker can wait
        let tube = e.max_reach_tube(&tgt.into(), &GridSet::full(&g).into(), StepInterval::new(2, 3)).unwrap();
        assert_eq!(tube.slice(3).iter_cells().collect::<Vec<_>>(), vec![9]);
        assert_eq!(tube.slice(0).iter_cells().collect::<Vec<_>>(), (6..10).collect::<Vec<_>>());
    }

    #[test]
    fn target_outside_constraint_still_counts_at_hit_time() {
        let g = line(10);
        let m = walker(&[-1.0, 0.0, 1.0], &[0.0]);
        let e = ReachEngine::new(m, g.clone(), ReachOptions::default()).unwrap();
        let tgt = GridSet::from_cells(&g, [5]);
        let con = GridSet::from_cells(&g, 0..5);
        let tube = e.max_reach_tube(&tgt.into(), &con.into(), StepInterval::new(0, 2)).unwrap();
        assert_eq!(tube.slice(0).iter_cells().collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn memo_and_disk_cache() {
        let dir = std::env::temp_dir().join(format!("tubetree-cache-test-{}", std::process::id()));
        let g = line(20);
        let opts = ReachOptions { cache_dir: Some(dir.clone()), ..ReachOptions::default() };
        let e = ReachEngine::new(walker(&[-1.0, 1.0], &[0.0]), g.clone(), opts.clone()).unwrap();
        let tgt: TargetSpec = GridSet::from_cells(&g, [0, 1]).into();
        let t1 = e.min_reach_tube(&tgt, StepInterval::new(0, 6)).unwrap();
        let t2 = e.min_reach_tube(&tgt, StepInterval::new(0, 6)).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(e.stats().memory_hits, 1);
        let fresh = ReachEngine::new(walker(&[-1.0, 1.0], &[0.0]), g, opts).unwrap();
        let t3 = fresh.min_reach_tube(&tgt, StepInterval::new(0, 6)).unwrap();
        assert_eq!(t1, t3);
        assert_eq!(fresh.stats().disk_hits, 1);
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn budget_guard() {
        let g = line(1000);
        let opts = ReachOptions { max_tube_bits: 10_000, ..ReachOptions::default() };
        let e = ReachEngine::new(walker(&[0.0], &[0.0]), g.clone(), opts).unwrap();
        let r = e.min_reach_tube(&GridSet::empty(&g).into(), StepInterval::new(0, 50));
        assert!(matches!(r, Err(ReachError::MemoryBudget { .. })));
    }

    #[test]
    fn one_step_controls_respect_disturbance() {
        let g = Arc::new(Grid::new(vec![-5.0, -5.0], vec![5.0, 5.0], vec![50, 50]).unwrap());
        let m = SystemModel::from_sets(
            2,
            Dynamics::integrator(2),
            &InputSet::Ball { center: vec![0.0, 0.0], radius: 1.0 },
            5,
            &InputSet::Ball { center: vec![0.0, 0.0], radius: 0.1 },
            8,
            1.0,
        )
        .unwrap();
        let def = crate::formula::PredicateDef::new(
            "b",
            crate::formula::Shape::Ball { center: vec![1.0, 0.0], radius: 0.5 },
        )
        .unwrap();
        let tgt = GridSet::from_predicate(&def, &g).unwrap();
        let ok = robust_one_step_controls(&m, &[0.0, 0.0], &tgt, NextGridRule::Exact);
        assert!(!ok.is_empty());
        for &u in &ok {
            assert!((m.controls[u][0] - 1.0).abs() < 0.5);
        }
    }

    fn random_linear() -> impl Strategy<Value = (SystemModel, Arc<Grid>, Vec<bool>)> {
        (1usize..=3)
            .prop_flat_map(|n| {
                let cells = proptest::collection::vec(2usize..7, n);
                let drift = proptest::collection::vec(prop_oneof![Just(0.0), -0.6f64..0.6], n * n);
                let controls = proptest::collection::vec(proptest::collection::vec(-1.5f64..1.5, n), 1..4);
                let dist = proptest::collection::vec(proptest::collection::vec(-0.4f64..0.4, n), 1..3);
                (Just(n), cells, drift, controls, dist)
            })
            .prop_flat_map(|(n, cells, drift, controls, dist)| {
                let total: usize = cells.iter().product();
                (Just((n, cells, drift, controls, dist)), proptest::collection::vec(any::<bool>(), total))
            })
            .prop_map(|((n, cells, drift, controls, dist), bits)| {
                let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
                for i in 0..n {
                    for j in 1..n {
                        a[i][j] += drift[i * n + j];
                    }
                }
                let b: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
                let m = SystemModel::new(n, Dynamics::Linear { a, b }, controls, dist, 1.0).unwrap();
                let g = Arc::new(Grid::new(vec![-2.0; n], (0..n).map(|d| -2.0 + 0.7 * cells[d] as f64).collect(), cells).unwrap());
                (m, g, bits)
            })
    }

    proptest! {
        #[test]
        fn row_shift_agrees_with_per_cell((m, g, bits) in random_linear()) {
            let s = GridSet::from_cells(&g, bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i));
            let fast = ReachEngine::new(m.clone(), g.clone(), ReachOptions::default()).unwrap();
            let slow = ReachEngine::new(m, g, ReachOptions { force_per_cell: true, ..ReachOptions::default() }).unwrap();
            prop_assert!(fast.uses_row_shift());
            prop_assert!(!slow.uses_row_shift());
            prop_assert_eq!(fast.robust_pre(&s).unwrap(), slow.robust_pre(&s).unwrap());
            prop_assert_eq!(fast.adversarial_pre(&s).unwrap(), slow.adversarial_pre(&s).unwrap());
        }

        #[test]
        fn preimages_are_monotone((m, g, bits) in random_linear(), extra in any::<u64>()) {
            let e = ReachEngine::new(m, g.clone(), ReachOptions::default()).unwrap();
            let small = GridSet::from_cells(&g, bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i));
            let more = GridSet::from_cells(&g, (0..g.total_cells()).filter(|i| bits[*i] || (extra >> (i % 64)) & 1 == 1));
            prop_assert!(e.robust_pre(&small).unwrap().is_subset(&e.robust_pre(&more).unwrap()).unwrap());
            prop_assert!(e.adversarial_pre(&small).unwrap().is_subset(&e.adversarial_pre(&more).unwrap()).unwrap());
        }
    }
}
