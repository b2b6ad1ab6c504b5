//! The four commands as library functions returning serializable reports.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;
use tubetree::formula::{parse, Formula, FormulaError};
use tubetree::reach::ReachEngine;
use tubetree::synth::{run_online, OnlineOptions, OnlineRun, SynthError, Verdict};
use tubetree::system::DisturbanceSource;
use tubetree::ttlt::{build, NodeId, TreeError, Ttlt};

use crate::config::{ConfigError, Scenario};
use crate::monitor::{monitor as monitor_formula, MonitorVerdict};
use crate::trajectory;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("unknown branch '{0}'")]
    UnknownBranch(String),
    #[error("check failed for {target}: {reason} (use --force to synthesize anyway)")]
    CheckFailed { target: String, reason: String },
    #[error("trajectory has {samples} samples but the verdict depends on steps 0..={horizon}")]
    ShortTrajectory { samples: usize, horizon: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CommandError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    pub widths: Vec<f64>,
}

impl GridInfo {
    pub fn of(s: &Scenario) -> Self {
        GridInfo {
            lower: s.grid.lower().to_vec(),
            upper: s.grid.upper().to_vec(),
            cells: s.grid.cells().to_vec(),
            widths: s.grid.widths().to_vec(),
        }
    }
}

/// The formula a command works on: the scenario formula or a named branch.
#[derive(Debug, Clone)]
pub struct Target {
    pub name: String,
    pub formula: Formula,
}

impl Target {
    pub fn select(s: &Scenario, branch: Option<&str>) -> Result<Target, CommandError> {
        match branch {
            None => Ok(Target { name: "formula".into(), formula: s.formula.clone() }),
            Some(name) => {
                let b = s.config.branches.iter().find(|b| b.name == name).ok_or_else(|| CommandError::UnknownBranch(name.into()))?;
                Ok(Target { name: b.name.clone(), formula: parse(&b.formula)? })
            }
        }
    }
}

pub fn build_tree(s: &Scenario, engine: &ReachEngine, formula: &Formula) -> Result<(Ttlt, Duration), CommandError> {
    let t = Instant::now();
    let tree = build(formula, &s.table, engine)?;
    Ok((tree, t.elapsed()))
}

fn online_options(s: &Scenario, tree: &Ttlt) -> OnlineOptions {
    let mut o = OnlineOptions::for_tree(tree, s.config.synthesis.slack);
    o.rule = s.config.next_grid_rule();
    o
}

/// How much a passing or failing check is worth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    /// x0 is outside the root set at t0, so no trajectory from x0 satisfies
    /// the tree (up to grid resolution).
    Refuted,
    /// x0 is in the root set, which is necessary but not sufficient.
    NecessaryOnly,
    /// x0 is in the root set and a disturbance-free run satisfied the formula.
    Nominal,
    /// Deterministic system: a run from x0 satisfied the formula.
    Witnessed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub outcome: &'static str,
    pub steps: usize,
    pub nexis_step: Option<usize>,
    pub monitor: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetCheck {
    pub name: String,
    pub formula: String,
    pub tube_nodes: usize,
    pub x0_in_root: bool,
    pub root_cells: usize,
    pub probe: Option<Probe>,
    pub pass: bool,
    pub strength: Strength,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub grid: GridInfo,
    pub x0: Vec<f64>,
    pub deterministic: bool,
    /// Verdict on the scenario formula; when it is the disjunction of the
    /// branches, a passing branch is enough.
    pub pass: bool,
    pub formula: TargetCheck,
    pub branches: Vec<TargetCheck>,
}

fn outcome(v: Verdict) -> (&'static str, Option<usize>) {
    match v {
        Verdict::Completed => ("completed", None),
        Verdict::NExis { step } => ("nexis", Some(step)),
        Verdict::MaxSteps => ("max_steps", None),
    }
}

/// Root membership plus a dry synthesis run with zero disturbance.
pub fn check_target(s: &Scenario, target: &Target, tree: &Ttlt) -> Result<TargetCheck, CommandError> {
    let x0 = &s.config.x0;
    let in_root = tree.check(x0);
    let mut out = TargetCheck {
        name: target.name.clone(),
        formula: target.formula.to_string(),
        tube_nodes: tree.tube_node_count(),
        x0_in_root: in_root,
        root_cells: tree.tube_of(tree.root()).first().count(),
        probe: None,
        pass: false,
        strength: Strength::Refuted,
        reason: String::new(),
    };
    if !in_root {
        out.reason = "x0 is outside the root set at t0; no trajectory from x0 can satisfy the tree".into();
        return Ok(out);
    }
    let mut zero = DisturbanceSource::Zero { dim: s.model.state_dim };
    let run = run_online(tree, &s.model, x0, &mut zero, online_options(s, tree))?;
    let (name, nexis_step) = outcome(run.verdict);
    let verdict = monitor_formula(&target.formula, &s.table, &run.states, s.model.period)?;
    let completed = run.verdict == Verdict::Completed && verdict.satisfied == Some(true);
    out.probe = Some(Probe { outcome: name, steps: run.controls.len(), nexis_step, monitor: verdict.satisfied });
    out.pass = completed;
    out.strength = match (completed, s.is_deterministic()) {
        (false, _) => Strength::NecessaryOnly,
        (true, true) => Strength::Witnessed,
        (true, false) => Strength::Nominal,
    };
    out.reason = match (completed, nexis_step) {
        (true, _) => "x0 is in the root set and a dry synthesis run satisfied the formula".into(),
        (false, Some(k)) => format!("x0 is in the root set but the dry synthesis run found no feasible control at step {k}"),
        (false, None) => format!("x0 is in the root set but the dry synthesis run ended with {name}"),
    };
    Ok(out)
}

fn disjuncts(f: &Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::Or(a, b) => {
            disjuncts(a, out);
            disjuncts(b, out);
        }
        _ => out.push(f.clone()),
    }
}

/// Whether `f` is syntactically the disjunction of `parts`.
fn is_disjunction_of(f: &Formula, parts: &[Formula]) -> bool {
    let mut ds = Vec::new();
    disjuncts(f, &mut ds);
    !parts.is_empty() && ds.len() == parts.len() && ds.iter().all(|d| parts.contains(d))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckTiming {
    pub build_seconds: Vec<(String, f64)>,
}

pub fn check(s: &Scenario, engine: &ReachEngine) -> Result<(CheckReport, CheckTiming), CommandError> {
    let mut timing = CheckTiming { build_seconds: Vec::new() };
    let main = Target::select(s, None)?;
    let (tree, dt) = build_tree(s, engine, &main.formula)?;
    timing.build_seconds.push((main.name.clone(), dt.as_secs_f64()));
    let formula = check_target(s, &main, &tree)?;
    drop(tree);
    let mut branches = Vec::new();
    for b in &s.config.branches {
        let target = Target::select(s, Some(&b.name))?;
        let (tree, dt) = build_tree(s, engine, &target.formula)?;
        timing.build_seconds.push((target.name.clone(), dt.as_secs_f64()));
        branches.push((target.formula.clone(), check_target(s, &target, &tree)?));
    }
    let parts: Vec<Formula> = branches.iter().map(|(f, _)| f.clone()).collect();
    let pass = formula.pass || (is_disjunction_of(&s.formula, &parts) && branches.iter().any(|(_, c)| c.pass));
    let report = CheckReport {
        scenario: s.config.name.clone(),
        grid: GridInfo::of(s),
        x0: s.config.x0.clone(),
        deterministic: s.is_deterministic(),
        pass,
        formula,
        branches: branches.into_iter().map(|(_, c)| c).collect(),
    };
    Ok((report, timing))
}

#[derive(Debug, Clone, Serialize)]
pub struct PathCoding {
    pub nodes: Vec<String>,
    pub coding: Option<Vec<usize>>,
}

/// Per-realization verdict. `satisfied` is the monitor's verdict on the
/// emitted trajectory, so it agrees with `tubetree monitor` on the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunVerdict {
    pub realization: usize,
    pub disturbance_seed: u64,
    pub target: String,
    pub formula: String,
    pub outcome: &'static str,
    pub nexis_step: Option<usize>,
    pub steps: usize,
    pub satisfied: bool,
    pub monitor: MonitorVerdict,
    pub paths: Vec<PathCoding>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

impl Stats {
    fn of(values: impl IntoIterator<Item = usize>) -> Option<Stats> {
        let (mut min, mut max, mut sum, mut n) = (usize::MAX, 0, 0usize, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        (n > 0).then(|| Stats { min, mean: sum as f64 / n as f64, max })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunBrief {
    pub realization: usize,
    pub outcome: &'static str,
    pub satisfied: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub target: String,
    pub formula: String,
    pub grid: GridInfo,
    pub seed: u64,
    pub realizations: usize,
    pub satisfied: usize,
    pub satisfaction_rate: f64,
    pub completed: usize,
    pub nexis: usize,
    pub max_steps: usize,
    /// Sizes of the feasible control set over all steps of all runs.
    pub feasible_controls: Option<Stats>,
    pub forced: bool,
    pub runs: Vec<RunBrief>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunTiming {
    pub realization: usize,
    pub seconds: f64,
    pub steps: usize,
    pub seconds_per_step: f64,
}

/// Wall-clock numbers, kept apart so that the other outputs are reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct SynthTiming {
    pub build_seconds: f64,
    pub max_seconds_per_step: f64,
    pub runs: Vec<RunTiming>,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub realizations: usize,
    pub out: PathBuf,
    pub force: bool,
    pub branch: Option<String>,
}

fn run_one(s: &Scenario, tree: &Ttlt, target: &Target, seed: u64, i: usize, out: &Path) -> Result<(RunVerdict, Vec<usize>, RunTiming), CommandError> {
    let mut source = s.disturbances(seed, i)?;
    let t = Instant::now();
    let run: OnlineRun = run_online(tree, &s.model, &s.config.x0, &mut source, online_options(s, tree))?;
    let seconds = t.elapsed().as_secs_f64();
    let csv_path = out.join(format!("realization_{i:03}.csv"));
    trajectory::write(&csv_path, &run, s.model.period, s.model.control_dim()).map_err(|source| CommandError::Csv { path: csv_path.clone(), source })?;
    let mv = monitor_formula(&target.formula, &s.table, &run.states, s.model.period)?;
    let (name, nexis_step) = outcome(run.verdict);
    let label = |path: &[NodeId]| path.iter().map(|&id| tree.label(id)).collect();
    let verdict = RunVerdict {
        realization: i,
        disturbance_seed: seed.wrapping_add(i as u64),
        target: target.name.clone(),
        formula: target.formula.to_string(),
        outcome: name,
        nexis_step,
        steps: run.controls.len(),
        satisfied: mv.satisfied == Some(true),
        monitor: mv,
        paths: run.codings.iter().map(|(p, c)| PathCoding { nodes: label(p), coding: c.clone() }).collect(),
    };
    write_json(&out.join(format!("realization_{i:03}.json")), &verdict)?;
    let steps = run.controls.len();
    let timing = RunTiming { realization: i, seconds, steps, seconds_per_step: if steps > 0 { seconds / steps as f64 } else { 0.0 } };
    Ok((verdict, run.feasible_counts, timing))
}

/// Runs `realizations` seeded closed-loop simulations and writes one CSV and
/// one verdict JSON per run plus `summary.json` and `timing.json`.
pub fn synthesize(s: &Scenario, engine: &ReachEngine, opts: &SynthOptions) -> Result<(Summary, SynthTiming), CommandError> {
    let target = Target::select(s, opts.branch.as_deref())?;
    let (tree, build_time) = build_tree(s, engine, &target.formula)?;
    let pre = check_target(s, &target, &tree)?;
    if !pre.pass && !opts.force {
        return Err(CommandError::CheckFailed { target: target.name, reason: pre.reason });
    }
    create_dir(&opts.out)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(opts.realizations.max(1));
    let mut results: Vec<Option<Result<_, CommandError>>> = (0..opts.realizations).map(|_| None).collect();
    let size = opts.realizations.div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        for (c, chunk) in results.chunks_mut(size).enumerate() {
            let (tree, target) = (&tree, &target);
            scope.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_one(s, tree, target, opts.seed, c * size + j, &opts.out));
                }
            });
        }
    });
    let mut verdicts = Vec::new();
    let mut counts = Vec::new();
    let mut timings = Vec::new();
    for r in results {
        let (v, f, t) = r.expect("every realization ran")?;
        verdicts.push(v);
        counts.extend(f);
        timings.push(t);
    }
    let n = verdicts.len();
    let satisfied = verdicts.iter().filter(|v| v.satisfied).count();
    let count = |o: &str| verdicts.iter().filter(|v| v.outcome == o).count();
    let summary = Summary {
        scenario: s.config.name.clone(),
        target: target.name.clone(),
        formula: target.formula.to_string(),
        grid: GridInfo::of(s),
        seed: opts.seed,
        realizations: n,
        satisfied,
        satisfaction_rate: if n > 0 { satisfied as f64 / n as f64 } else { 0.0 },
        completed: count("completed"),
        nexis: count("nexis"),
        max_steps: count("max_steps"),
        feasible_controls: Stats::of(counts),
        forced: !pre.pass,
        runs: verdicts.iter().map(|v| RunBrief { realization: v.realization, outcome: v.outcome, satisfied: v.satisfied, steps: v.steps }).collect(),
    };
    let timing = SynthTiming {
        build_seconds: build_time.as_secs_f64(),
        max_seconds_per_step: timings.iter().map(|t| t.seconds_per_step).fold(0.0, f64::max),
        runs: timings,
    };
    write_json(&opts.out.join("summary.json"), &summary)?;
    write_json(&opts.out.join("timing.json"), &timing)?;
    Ok((summary, timing))
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub formula: String,
    pub trajectory: PathBuf,
    #[serde(flatten)]
    pub verdict: MonitorVerdict,
}

/// Monitors a trajectory file against the scenario formula, a branch, or a
/// formula given as text.
pub fn monitor(s: &Scenario, path: &Path, formula: Option<&str>, branch: Option<&str>) -> Result<MonitorReport, CommandError> {
    let f = match formula {
        Some(text) => parse(text)?,
        None => Target::select(s, branch)?.formula,
    };
    for id in f.predicates() {
        s.table.get(&id)?;
    }
    let states = trajectory::read_states(path).map_err(|source| CommandError::Csv { path: path.to_path_buf(), source })?;
    let verdict = monitor_formula(&f, &s.table, &states, s.model.period)?;
    if verdict.satisfied.is_none() {
        return Err(CommandError::ShortTrajectory { samples: verdict.samples, horizon: verdict.horizon });
    }
    Ok(MonitorReport { formula: f.to_string(), trajectory: path.to_path_buf(), verdict })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportNode {
    pub id: usize,
    pub kind: &'static str,
    pub label: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub slices: Option<usize>,
    pub cells_at_t0: Option<usize>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub target: String,
    pub formula: String,
    pub grid: GridInfo,
    pub tube_nodes: usize,
    pub nodes: Vec<ExportNode>,
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    pub out: PathBuf,
    pub branch: Option<String>,
    /// Write every slice where the tube changes instead of only t0.
    pub all_slices: bool,
    /// Also write cell centers of the exported slices as CSV.
    pub centers: bool,
}

/// Node ids in preorder from the root.
fn preorder(tree: &Ttlt) -> Vec<NodeId> {
    let mut order = Vec::with_capacity(tree.len());
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        order.push(id);
        stack.extend(tree.children(id).iter().rev());
    }
    order
}

/// Writes `nodes.csv`, `edges.csv`, `manifest.json` and tube slices under
/// `tubes/`. Nodes are numbered in preorder.
pub fn export_tree(s: &Scenario, engine: &ReachEngine, opts: &ExportOptions) -> Result<Manifest, CommandError> {
    let target = Target::select(s, opts.branch.as_deref())?;
    let (tree, _) = build_tree(s, engine, &target.formula)?;
    let order = preorder(&tree);
    let mut renumber = vec![0; tree.len()];
    for (new, &old) in order.iter().enumerate() {
        renumber[old] = new;
    }
    let tubes_dir = opts.out.join("tubes");
    create_dir(&tubes_dir)?;
    let info = tree.describe();
    let mut nodes = Vec::new();
    for (new, &old) in order.iter().enumerate() {
        let d = &info[old];
        let mut files = Vec::new();
        if let Some(tube) = tree.tube(old) {
            let ks: Vec<usize> = if opts.all_slices {
                (0..tube.len()).filter(|&k| k == 0 || tube.slice(k).symmetric_difference_count(tube.slice(k - 1)) != Ok(0)).collect()
            } else {
                vec![0]
            };
            for k in ks {
                let stem = format!("node{new:03}_k{k:04}");
                let rle = tubes_dir.join(format!("{stem}.rle"));
                fs::write(&rle, tube.slice(k).to_rle()).map_err(io_err(&rle))?;
                files.push(format!("tubes/{stem}.rle"));
                if opts.centers {
                    let csv = tubes_dir.join(format!("{stem}.csv"));
                    let file = fs::File::create(&csv).map_err(io_err(&csv))?;
                    tube.slice(k).write_centers_csv(BufWriter::new(file)).map_err(io_err(&csv))?;
                    files.push(format!("tubes/{stem}.csv"));
                }
            }
        }
        nodes.push(ExportNode {
            id: new,
            kind: if d.kind == "leaf" || d.kind == "tube" { d.kind } else { "operator" },
            label: d.label.clone(),
            parent: d.parent.map(|p| renumber[p]),
            children: d.children.iter().map(|&c| renumber[c]).collect(),
            slices: d.slices,
            cells_at_t0: d.cells_at_t0,
            files,
        });
    }
    let nodes_csv = opts.out.join("nodes.csv");
    let mut w = csv::Writer::from_path(&nodes_csv).map_err(|source| CommandError::Csv { path: nodes_csv.clone(), source })?;
    let mut edges = String::from("parent,child\n");
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    let rows = std::iter::once(["id", "kind", "label", "parent", "slices", "cells_at_t0"].map(String::from)).chain(
        nodes.iter().map(|n| [n.id.to_string(), n.kind.to_string(), n.label.clone(), opt(n.parent), opt(n.slices), opt(n.cells_at_t0)]),
    );
    for row in rows {
        w.write_record(&row).map_err(|source| CommandError::Csv { path: nodes_csv.clone(), source })?;
    }
    w.flush().map_err(io_err(&nodes_csv))?;
    for n in &nodes {
        for c in &n.children {
            edges.push_str(&format!("{},{c}\n", n.id));
        }
    }
    let edges_csv = opts.out.join("edges.csv");
    fs::write(&edges_csv, edges).map_err(io_err(&edges_csv))?;
    let manifest = Manifest {
        scenario: s.config.name.clone(),
        target: target.name,
        formula: target.formula.to_string(),
        grid: GridInfo::of(s),
        tube_nodes: tree.tube_node_count(),
        nodes,
    };
    write_json(&opts.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
