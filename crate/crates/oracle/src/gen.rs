//! Seeded random formulas and signals.

use rand::Rng;
use tubetree::formula::{Formula, Interval};

/// Shape of generated formulas. Intervals are whole multiples of `period`.
#[derive(Debug, Clone)]
pub struct FormulaGen {
    pub preds: Vec<String>,
    pub max_depth: usize,
    /// Largest upper interval end, in steps.
    pub max_hi: usize,
    /// Emit `Not` nodes (never above an Until, so a positive normal form
    /// always exists).
    pub allow_not: bool,
    /// Emit negated predicates.
    pub allow_neg_pred: bool,
    pub period: f64,
    /// Bound on the total horizon in steps.
    pub max_horizon: usize,
    /// Allow temporal operators inside the operands of temporal operators.
    /// When false, temporal operands are Boolean combinations of predicates.
    pub nested_temporal: bool,
}

impl FormulaGen {
    pub fn new(preds: &[&str], max_depth: usize, max_hi: usize) -> Self {
        FormulaGen {
            preds: preds.iter().map(|s| s.to_string()).collect(),
            max_depth,
            max_hi,
            allow_not: false,
            allow_neg_pred: true,
            period: 1.0,
            max_horizon: usize::MAX,
            nested_temporal: true,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Formula {
        self.node(rng, self.max_depth, false, true, self.max_horizon)
    }

    fn interval(&self, rng: &mut impl Rng, budget: usize) -> (Interval, usize) {
        let hi = rng.gen_range(0..=self.max_hi.min(budget));
        let lo = rng.gen_range(0..=hi);
        (Interval::closed(lo as f64 * self.period, hi as f64 * self.period).unwrap(), hi)
    }

    fn leaf(&self, rng: &mut impl Rng) -> Formula {
        let roll = rng.gen_range(0..10);
        if roll == 0 {
            return Formula::True;
        }
        let p = self.preds[rng.gen_range(0..self.preds.len())].clone();
        if self.allow_neg_pred && roll <= 3 {
            Formula::NegPred(p)
        } else {
            Formula::Pred(p)
        }
    }

    fn node(&self, rng: &mut impl Rng, depth: usize, negated: bool, temporal: bool, budget: usize) -> Formula {
        if depth == 0 || rng.gen_bool(0.2) {
            return self.leaf(rng);
        }
        let inner = temporal && self.nested_temporal;
        let sub = |rng: &mut _, neg, t, b| self.node(rng, depth - 1, neg, t, b);
        let choices = if self.allow_not { 7 } else { 6 };
        let mut roll = rng.gen_range(0..choices);
        if !temporal && (2..=5).contains(&roll) {
            roll = rng.gen_range(0..2);
        }
        match roll {
            0 => Formula::and(sub(rng, negated, temporal, budget), sub(rng, negated, temporal, budget)),
            1 => Formula::or(sub(rng, negated, temporal, budget), sub(rng, negated, temporal, budget)),
            2 | 3 if !negated => {
                let (i, hi) = self.interval(rng, budget);
                let rest = budget - hi;
                Formula::until(sub(rng, negated, inner, rest), sub(rng, negated, inner, rest), i)
            }
            2 | 4 => {
                let (i, hi) = self.interval(rng, budget);
                Formula::always(sub(rng, negated, inner, budget - hi), i)
            }
            3 | 5 => {
                let (i, hi) = self.interval(rng, budget);
                Formula::eventually(sub(rng, negated, inner, budget - hi), i)
            }
            _ => Formula::not(sub(rng, !negated, temporal, budget)),
        }
    }
}

/// A one-dimensional signal of `len` samples drawn from `values`.
pub fn signal_1d(rng: &mut impl Rng, values: &[f64], len: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| vec![values[rng.gen_range(0..values.len())]]).collect()
}

/// Every control sequence of length `len` over `n` controls, as index
/// vectors, in lexicographic order.
pub fn sequences(n: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.checked_pow(len as u32).expect("too many sequences");
    (0..total).map(move |mut i| {
        let mut s = vec![0; len];
        for slot in s.iter_mut().rev() {
            *slot = i % n;
            i /= n;
        }
        s
    })
}
