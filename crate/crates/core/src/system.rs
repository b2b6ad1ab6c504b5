//! Discrete-time systems `x+ = f(x, u, w)` with sampled control and
//! disturbance sets, plus disturbance sources for closed-loop simulation.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("replayed disturbance sequence exhausted after {0} samples")]
    ReplayExhausted(usize),
}

pub type StepFn = dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// System dynamics. Linear dynamics are `x+ = A x + B u + w`.
#[derive(Clone)]
pub enum Dynamics {
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    Custom { name: String, f: Arc<StepFn> },
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Linear { a, b } => f.debug_struct("Linear").field("a", a).field("b", b).finish(),
            Dynamics::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl Dynamics {
    /// `x+ = x + u + w` in `n` dimensions.
    pub fn integrator(n: usize) -> Self {
        let eye: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Dynamics::Linear { a: eye.clone(), b: eye }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Dynamics::Custom { name: name.into(), f: Arc::new(f) }
    }
}

/// A compact set of inputs, used to draw control and disturbance samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Points { points: Vec<Vec<f64>> },
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![(lo + hi) / 2.0];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn dedup(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12)) {
            out.push(p);
        }
    }
    out
}

impl InputSet {
    pub fn dim(&self) -> usize {
        match self {
            InputSet::Box { lower, .. } => lower.len(),
            InputSet::Ball { center, .. } => center.len(),
            InputSet::Points { points } => points.first().map_or(0, |p| p.len()),
        }
    }

    fn validate(&self, what: &str) -> Result<(), SystemError> {
        let bad = |m: &str| Err(SystemError::Invalid(format!("{what}: {m}")));
        match self {
            InputSet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box bounds need equal non-zero length");
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
                    return bad("box needs finite lower <= upper");
                }
            }
            InputSet::Ball { center, radius } => {
                if center.is_empty() || !(radius.is_finite() && *radius >= 0.0) {
                    return bad("ball needs a center and a finite non-negative radius");
                }
            }
            InputSet::Points { points } => {
                let n = self.dim();
                if points.is_empty() || n == 0 || points.iter().any(|p| p.len() != n) {
                    return bad("point list must be non-empty with consistent dimension");
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        const TOL: f64 = 1e-9;
        match self {
            InputSet::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v >= l - TOL && *v <= u + TOL),
            InputSet::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() <= radius + TOL
            }
            InputSet::Points { points } => points.iter().any(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() < TOL)),
        }
    }

    /// Control samples: a lattice with `per_dim` points per dimension,
    /// restricted to the set; balls additionally get `ring` points on their
    /// boundary circle when two-dimensional.
    pub fn control_samples(&self, per_dim: usize, ring: usize) -> Vec<Vec<f64>> {
        match self {
            InputSet::Box { lower, upper } => {
                let axes: Vec<Vec<f64>> = lower.iter().zip(upper).map(|(&l, &u)| linspace(l, u, per_dim)).collect();
                dedup(cartesian(&axes))
            }
            InputSet::Ball { center, radius } => {
                let axes: Vec<Vec<f64>> = center.iter().map(|&c| linspace(c - radius, c + radius, per_dim)).collect();
                let mut pts: Vec<Vec<f64>> = cartesian(&axes).into_iter().filter(|p| self.contains(p)).collect();
                if center.len() == 2 {
                    pts.extend(circle(center, *radius, ring));
                }
                dedup(pts)
            }
            InputSet::Points { points } => points.clone(),
        }
    }

    /// Disturbance samples: box vertices, points on a ball's boundary
    /// (`ring` directions in two dimensions, axis and diagonal points
    /// otherwise), or the listed points.
    pub fn disturbance_samples(&self, ring: usize) -> Vec<Vec<f64>> {
        match self {
            InputSet::Box { lower, upper } => {
                let axes: Vec<Vec<f64>> = lower
                    .iter()
                    .zip(upper)
                    .map(|(&l, &u)| if l == u { vec![l] } else { vec![l, u] })
                    .collect();
                cartesian(&axes)
            }
            InputSet::Ball { center, radius } => {
                let n = center.len();
                if *radius == 0.0 {
                    return vec![center.clone()];
                }
                if n == 2 {
                    return circle(center, *radius, ring.max(4));
                }
                let mut pts = Vec::new();
                for d in 0..n {
                    for s in [-1.0, 1.0] {
                        let mut p = center.clone();
                        p[d] += s * radius;
                        pts.push(p);
                    }
                }
                if n > 1 {
                    let r = radius / (n as f64).sqrt();
                    let signs = cartesian(&vec![vec![-1.0, 1.0]; n]);
                    pts.extend(signs.into_iter().map(|s| s.iter().zip(center).map(|(a, c)| c + a * r).collect()));
                }
                dedup(pts)
            }
            InputSet::Points { points } => points.clone(),
        }
    }

    /// Draws a point uniformly from the set.
    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            InputSet::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(&l, &u)| if l == u { l } else { rng.gen_range(l..=u) }).collect()
            }
            InputSet::Ball { center, radius } => loop {
                let p: Vec<f64> = center.iter().map(|&c| c + rng.gen_range(-1.0..=1.0) * radius).collect();
                if self.contains(&p) {
                    break p;
                }
            },
            InputSet::Points { points } => points[rng.gen_range(0..points.len())].clone(),
        }
    }
}

fn circle(center: &[f64], radius: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            vec![center[0] + radius * t.cos(), center[1] + radius * t.sin()]
        })
        .collect()
}

/// A sampled-data system: dynamics, finite control and disturbance samples,
/// and the sampling period.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub state_dim: usize,
    pub dynamics: Dynamics,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub period: f64,
}

impl SystemModel {
    pub fn new(
        state_dim: usize,
        dynamics: Dynamics,
        controls: Vec<Vec<f64>>,
        disturbances: Vec<Vec<f64>>,
        period: f64,
    ) -> Result<Self, SystemError> {
        let invalid = |m: String| Err(SystemError::Invalid(m));
        if state_dim == 0 {
            return invalid("state dimension must be positive".into());
        }
        if !(period > 0.0 && period.is_finite()) {
            return invalid(format!("period must be positive, got {period}"));
        }
        if controls.is_empty() || disturbances.is_empty() {
            return invalid("control and disturbance samples must be non-empty".into());
        }
        let m = controls[0].len();
        if controls.iter().any(|u| u.len() != m) {
            return invalid("control samples have inconsistent dimension".into());
        }
        if disturbances.iter().any(|w| w.len() != state_dim) {
            return invalid("disturbance samples must have the state dimension".into());
        }
        if let Dynamics::Linear { a, b } = &dynamics {
            if a.len() != state_dim || a.iter().any(|r| r.len() != state_dim) {
                return invalid("A must be n x n".into());
            }
            if b.len() != state_dim || b.iter().any(|r| r.len() != m) {
                return invalid(format!("B must be n x {m}"));
            }
        }
        Ok(SystemModel { state_dim, dynamics, controls, disturbances, period })
    }

    /// Builds the samples from set descriptions.
    pub fn from_sets(
        state_dim: usize,
        dynamics: Dynamics,
        controls: &InputSet,
        control_samples_per_dim: usize,
        disturbances: &InputSet,
        ring: usize,
        period: f64,
    ) -> Result<Self, SystemError> {
        controls.validate("control set")?;
        disturbances.validate("disturbance set")?;
        Self::new(
            state_dim,
            dynamics,
            controls.control_samples(control_samples_per_dim, ring),
            disturbances.disturbance_samples(ring),
            period,
        )
    }

    pub fn control_dim(&self) -> usize {
        self.controls[0].len()
    }

    pub fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Linear { a, b } => (0..self.state_dim)
                .map(|i| {
                    let ax: f64 = a[i].iter().zip(x).map(|(p, q)| p * q).sum();
                    let bu: f64 = b[i].iter().zip(u).map(|(p, q)| p * q).sum();
                    ax + bu + w[i]
                })
                .collect(),
            Dynamics::Custom { f, .. } => f(x, u, w),
        }
    }

    /// A copy for tube computation whose disturbance samples also cover how
    /// far any state of a cell can be from the cell center, so that a control
    /// that works from a center in the copy works from every state of that
    /// cell in `self`.
    ///
    /// The disturbance set is taken as the bounding box of the samples and
    /// widened by `|A| h / 2` per axis, where `h` holds the cell widths. Each
    /// axis is sampled densely enough (spacing below one cell) that every
    /// cell the widened box touches receives a sample. Linear dynamics only.
    pub fn with_cell_margin(&self, widths: &[f64]) -> Result<SystemModel, SystemError> {
        let Dynamics::Linear { a, .. } = &self.dynamics else {
            return Err(SystemError::Invalid("cell margins need linear dynamics".into()));
        };
        if widths.len() != self.state_dim || widths.iter().any(|h| !(*h > 0.0)) {
            return Err(SystemError::Invalid("one positive cell width per state axis expected".into()));
        }
        let axes: Vec<Vec<f64>> = (0..self.state_dim)
            .map(|i| {
                let margin: f64 = a[i].iter().zip(widths).map(|(v, h)| v.abs() * h / 2.0).sum();
                let lo = self.disturbances.iter().map(|w| w[i]).fold(f64::INFINITY, f64::min) - margin;
                let hi = self.disturbances.iter().map(|w| w[i]).fold(f64::NEG_INFINITY, f64::max) + margin;
                let n = ((hi - lo) / widths[i]).floor() as usize + 2;
                linspace(lo, hi, n)
            })
            .collect();
        SystemModel::new(self.state_dim, self.dynamics.clone(), self.controls.clone(), cartesian(&axes), self.period)
    }

    /// Bytes identifying the model's behavior, for caching.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut push = |v: f64| out.extend_from_slice(&v.to_bits().to_le_bytes());
        push(self.period);
        push(self.state_dim as f64);
        for p in self.controls.iter().chain(&self.disturbances) {
            push(f64::NAN);
            p.iter().for_each(|&v| push(v));
        }
        match &self.dynamics {
            Dynamics::Linear { a, b } => {
                for row in a.iter().chain(b) {
                    row.iter().for_each(|&v| push(v));
                }
            }
            Dynamics::Custom { name, f } => {
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&(Arc::as_ptr(f) as *const () as usize).to_le_bytes());
            }
        }
        out
    }
}

/// Produces the disturbance applied to the plant at each step.
#[derive(Debug, Clone)]
pub enum DisturbanceSource {
    Zero { dim: usize },
    Uniform { set: InputSet, rng: ChaCha8Rng },
    /// Cycles through the given extreme points.
    Extreme { points: Vec<Vec<f64>>, next: usize },
    Replay { sequence: Vec<Vec<f64>>, next: usize },
}

impl DisturbanceSource {
    pub fn uniform(set: InputSet, seed: u64) -> Self {
        DisturbanceSource::Uniform { set, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_disturbance(&mut self) -> Result<Vec<f64>, SystemError> {
        match self {
            DisturbanceSource::Zero { dim } => Ok(vec![0.0; *dim]),
            DisturbanceSource::Uniform { set, rng } => Ok(set.sample_uniform(rng)),
            DisturbanceSource::Extreme { points, next } => {
                let w = points[*next % points.len()].clone();
                *next += 1;
                Ok(w)
            }
            DisturbanceSource::Replay { sequence, next } => {
                let w = sequence.get(*next).cloned().ok_or(SystemError::ReplayExhausted(sequence.len()))?;
                *next += 1;
                Ok(w)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_step() {
        let d = 0.2;
        let m = SystemModel::new(
            3,
            Dynamics::Linear {
                a: vec![vec![1.0, 0.0, d], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                b: vec![vec![0.0, 0.0], vec![d, 0.0], vec![0.0, d]],
            },
            vec![vec![0.0, 0.0]],
            vec![vec![0.0; 3]],
            d,
        )
        .unwrap();
        let x = m.step(&[1.0, -2.0, 2.0], &[1.0, -1.0], &[0.01, 0.0, 0.0]);
        let expect = [1.41, -1.8, 1.8];
        for (a, b) in x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let r = SystemModel::new(2, Dynamics::integrator(3), vec![vec![0.0; 3]], vec![vec![0.0; 2]], 1.0);
        assert!(r.is_err());
        assert!(SystemModel::new(2, Dynamics::integrator(2), vec![], vec![vec![0.0; 2]], 1.0).is_err());
    }

    #[test]
    fn ball_samples_stay_inside() {
        let u = InputSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let s = u.control_samples(9, 32);
        assert!(s.iter().all(|p| u.contains(p)));
        assert!(s.len() > 50);
        let w = InputSet::Ball { center: vec![0.0, 0.0], radius: 0.1 }.disturbance_samples(16);
        assert_eq!(w.len(), 16);
    }

    #[test]
    fn box_disturbance_vertices() {
        let w = InputSet::Box { lower: vec![-0.05; 3], upper: vec![0.05; 3] };
        assert_eq!(w.disturbance_samples(0).len(), 8);
    }

    #[test]
    fn seeded_uniform_is_reproducible() {
        let set = InputSet::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] };
        let mut a = DisturbanceSource::uniform(set.clone(), 7);
        let mut b = DisturbanceSource::uniform(set.clone(), 7);
        for _ in 0..10 {
            let w = a.next_disturbance().unwrap();
            assert!(set.contains(&w));
            assert_eq!(w, b.next_disturbance().unwrap());
        }
    }

    #[test]
    fn cell_margin_widens_and_fills() {
        let m = SystemModel::new(1, Dynamics::integrator(1), vec![vec![0.0]], vec![vec![-0.1], vec![0.1]], 1.0).unwrap();
        let w: Vec<f64> = m.with_cell_margin(&[1.0]).unwrap().disturbances.iter().map(|w| w[0]).collect();
        assert_eq!(w.len(), 3);
        assert!((w[0] + 0.6).abs() < 1e-12 && w[1].abs() < 1e-12 && (w[2] - 0.6).abs() < 1e-12);
        let custom = SystemModel::new(1, Dynamics::custom("id", |x, _, _| x.to_vec()), vec![vec![0.0]], vec![vec![0.0]], 1.0).unwrap();
        assert!(custom.with_cell_margin(&[1.0]).is_err());
    }

    #[test]
    fn replay_exhausts() {
        let mut r = DisturbanceSource::Replay { sequence: vec![vec![1.0]], next: 0 };
        assert_eq!(r.next_disturbance().unwrap(), vec![1.0]);
        assert!(r.next_disturbance().is_err());
    }
}
