use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FormulaError;

/// Geometry of a predicate region `{x : g(x) >= 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// `g(x) = normal . x + offset`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `g(x) = radius - |x - center|`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box; bounds may be infinite.
    /// `g(x) = min_d min(x_d - lower_d, upper_d - x_d)`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub id: String,
    #[serde(flatten)]
    pub shape: Shape,
}

impl PredicateDef {
    pub fn new(id: impl Into<String>, shape: Shape) -> Result<Self, FormulaError> {
        let def = PredicateDef { id: id.into(), shape };
        def.validate()?;
        Ok(def)
    }

    fn validate(&self) -> Result<(), FormulaError> {
        let bad = |why: &str| Err(FormulaError::BadPredicate { id: self.id.clone(), reason: why.to_string() });
        match &self.shape {
            Shape::Halfspace { normal, offset } => {
                if normal.is_empty() || normal.iter().chain([offset]).any(|v| !v.is_finite()) {
                    return bad("halfspace needs a finite, non-empty normal and offset");
                }
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|v| !v.is_finite()) || !(*radius >= 0.0) {
                    return bad("ball needs a finite center and non-negative radius");
                }
            }
            Shape::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box bounds must have equal, non-zero length");
                }
                if lower.iter().zip(upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
                    return bad("box needs lower <= upper in every dimension");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Halfspace { normal, .. } => normal.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lower, .. } => lower.len(),
        }
    }

    /// The predicate function `g(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match &self.shape {
            Shape::Halfspace { normal, offset } => normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() + offset,
            Shape::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                radius - d2.sqrt()
            }
            Shape::Box { lower, upper } => {
                let mut g = f64::INFINITY;
                for ((l, u), v) in lower.iter().zip(upper).zip(x) {
                    g = g.min(v - l).min(u - v);
                }
                g
            }
        }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.value(x) >= 0.0
    }

    /// Smallest and largest value of `g` over the closed box `[lo, hi]`.
    pub fn range_over_box(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        debug_assert!(lo.len() == self.dim() && hi.len() == self.dim());
        match &self.shape {
            Shape::Halfspace { normal, offset } => {
                let (mut min, mut max) = (*offset, *offset);
                for ((n, l), h) in normal.iter().zip(lo).zip(hi) {
                    min += (n * l).min(n * h);
                    max += (n * l).max(n * h);
                }
                (min, max)
            }
            Shape::Ball { center, radius } => {
                let (mut near, mut far) = (0.0, 0.0);
                for ((c, l), h) in center.iter().zip(lo).zip(hi) {
                    let d = c.clamp(*l, *h) - c;
                    near += d * d;
                    let f = (c - l).abs().max((h - c).abs());
                    far += f * f;
                }
                (radius - far.sqrt(), radius - near.sqrt())
            }
            Shape::Box { lower, upper } => {
                // g is a minimum of per-axis terms, so both extremes split by axis
                let (mut min, mut max) = (f64::INFINITY, f64::INFINITY);
                for (((bl, bu), l), h) in lower.iter().zip(upper).zip(lo).zip(hi) {
                    min = min.min(l - bl).min(bu - h);
                    let best = match (bl.is_finite(), bu.is_finite()) {
                        (false, false) => f64::INFINITY,
                        (false, true) => bu - l,
                        (true, false) => h - bl,
                        (true, true) => {
                            let x = ((bl + bu) / 2.0).clamp(*l, *h);
                            (x - bl).min(bu - x)
                        }
                    };
                    max = max.min(best);
                }
                (min, max)
            }
        }
    }
}

/// Predicates keyed by identifier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredicateTable {
    defs: BTreeMap<String, PredicateDef>,
}

impl PredicateTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, def: PredicateDef) {
        self.defs.insert(def.id.clone(), def);
    }

    pub fn get(&self, id: &str) -> Result<&PredicateDef, FormulaError> {
        self.defs.get(id).ok_or_else(|| FormulaError::UnknownPredicate(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PredicateDef> {
        self.defs.values()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }
}

impl FromIterator<PredicateDef> for PredicateTable {
    fn from_iter<I: IntoIterator<Item = PredicateDef>>(iter: I) -> Self {
        let mut t = PredicateTable::new();
        for d in iter {
            t.insert(d);
        }
        t
    }
}
