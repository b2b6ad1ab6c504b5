//! STL syntax, positive normal form, horizons and discrete-time semantics.
//!
//! Until is evaluated with the left operand required on the half-open range
//! `[k, k')` before the witness `k'`; this matches the reachable-tube recursion
//! used to build trees, where the constraint is not re-imposed at the hit time.

mod ast;
mod parse;
mod predicate;

use std::collections::HashMap;

use thiserror::Error;

pub use ast::{Formula, Interval, StepInterval};
pub use parse::parse;
pub use predicate::{PredicateDef, PredicateTable, Shape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("interval [{lo}, {hi}] contains no sampling instant for period {period}")]
    EmptyStepInterval { lo: f64, hi: f64, period: f64 },
    #[error("sampling period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("unbounded temporal interval; horizon is infinite")]
    Unbounded,
    #[error("unsupported formula: {0}")]
    Unsupported(String),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("predicate '{id}': {reason}")]
    BadPredicate { id: String, reason: String },
    #[error("predicate '{id}' has dimension {expected}, signal sample has {got}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("signal covers steps {first}..={last} but evaluation needs {need_first}..={need_last}")]
    InsufficientSignal { first: usize, last: usize, need_first: usize, need_last: usize },
    #[error("real-time start step {l} outside window [{k}, {max}]")]
    RealtimeDomain { k: usize, l: usize, max: usize },
}

/// Rewrites a formula into positive normal form by pushing negations down to
/// predicates. `!(true U_I f)` becomes `G_I !f`; any other negated Until is
/// rejected since the normal form has no release operator.
pub fn to_pnf(f: &Formula) -> Result<Formula, FormulaError> {
    Ok(match f {
        Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => f.clone(),
        Formula::Not(a) => negate(a)?,
        Formula::And(a, b) => Formula::and(to_pnf(a)?, to_pnf(b)?),
        Formula::Or(a, b) => Formula::or(to_pnf(a)?, to_pnf(b)?),
        Formula::Until(a, b, i) => Formula::until(to_pnf(a)?, to_pnf(b)?, *i),
        Formula::Always(a, i) => Formula::always(to_pnf(a)?, *i),
        Formula::Eventually(a, i) => Formula::eventually(to_pnf(a)?, *i),
    })
}

fn negate(f: &Formula) -> Result<Formula, FormulaError> {
    Ok(match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Pred(p) => Formula::NegPred(p.clone()),
        Formula::NegPred(p) => Formula::Pred(p.clone()),
        Formula::Not(a) => to_pnf(a)?,
        Formula::And(a, b) => Formula::or(negate(a)?, negate(b)?),
        Formula::Or(a, b) => Formula::and(negate(a)?, negate(b)?),
        Formula::Always(a, i) => Formula::eventually(negate(a)?, *i),
        Formula::Eventually(a, i) => Formula::always(negate(a)?, *i),
        Formula::Until(a, b, i) if **a == Formula::True => Formula::always(negate(b)?, *i),
        Formula::Until(..) => {
            return Err(FormulaError::Unsupported(format!("negated until has no positive normal form: (not {f})")))
        }
    })
}

/// Time horizon in seconds.
pub fn horizon(f: &Formula) -> Result<f64, FormulaError> {
    Ok(match f {
        Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => 0.0,
        Formula::Not(a) => horizon(a)?,
        Formula::And(a, b) | Formula::Or(a, b) => horizon(a)?.max(horizon(b)?),
        Formula::Until(a, b, i) => bounded(i)? + horizon(a)?.max(horizon(b)?),
        Formula::Always(a, i) | Formula::Eventually(a, i) => bounded(i)? + horizon(a)?,
    })
}

fn bounded(i: &Interval) -> Result<f64, FormulaError> {
    if i.is_bounded() {
        Ok(i.hi)
    } else {
        Err(FormulaError::Unbounded)
    }
}

/// Time horizon in sampling steps, using the per-operator step mapping.
pub fn horizon_steps(f: &Formula, period: f64) -> Result<usize, FormulaError> {
    Ok(match f {
        Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => 0,
        Formula::Not(a) => horizon_steps(a, period)?,
        Formula::And(a, b) | Formula::Or(a, b) => horizon_steps(a, period)?.max(horizon_steps(b, period)?),
        Formula::Until(a, b, i) => i.to_steps(period)?.hi + horizon_steps(a, period)?.max(horizon_steps(b, period)?),
        Formula::Always(a, i) | Formula::Eventually(a, i) => i.to_steps(period)?.hi + horizon_steps(a, period)?,
    })
}

/// A sampled signal. `samples[j]` is the state at absolute step `start + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<Vec<f64>>,
    pub period: f64,
    pub start: usize,
}

impl Signal {
    pub fn new(samples: Vec<Vec<f64>>, period: f64) -> Self {
        Signal { samples, period, start: 0 }
    }

    pub fn starting_at(samples: Vec<Vec<f64>>, period: f64, start: usize) -> Self {
        Signal { samples, period, start }
    }

    fn last(&self) -> Option<usize> {
        (self.start + self.samples.len()).checked_sub(1)
    }

    fn covers(&self, from: usize, to: usize) -> Result<(), FormulaError> {
        match self.last() {
            Some(last) if from >= self.start && to <= last => Ok(()),
            last => Err(FormulaError::InsufficientSignal {
                first: self.start,
                last: last.unwrap_or(0),
                need_first: from,
                need_last: to,
            }),
        }
    }
}

/// Satisfaction of `f` at every sample of `signal`. Entries whose evaluation
/// window runs past the end of the signal are false.
pub fn satisfaction(f: &Formula, table: &PredicateTable, signal: &Signal) -> Result<Vec<bool>, FormulaError> {
    let n = signal.samples.len();
    Ok(match f {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Pred(p) | Formula::NegPred(p) => {
            let def = table.get(p)?;
            let neg = matches!(f, Formula::NegPred(_));
            let mut out = Vec::with_capacity(n);
            for x in &signal.samples {
                if x.len() != def.dim() {
                    return Err(FormulaError::DimensionMismatch { id: p.clone(), expected: def.dim(), got: x.len() });
                }
                out.push(def.holds(x) != neg);
            }
            out
        }
        Formula::Not(a) => satisfaction(a, table, signal)?.into_iter().map(|v| !v).collect(),
        Formula::And(a, b) | Formula::Or(a, b) => {
            let sa = satisfaction(a, table, signal)?;
            let sb = satisfaction(b, table, signal)?;
            let and = matches!(f, Formula::And(..));
            sa.iter().zip(&sb).map(|(x, y)| if and { *x && *y } else { *x || *y }).collect()
        }
        Formula::Until(a, b, i) => {
            let iv = i.to_steps(signal.period)?;
            let sa = satisfaction(a, table, signal)?;
            let sb = satisfaction(b, table, signal)?;
            until_vector(&sa, &sb, iv)
        }
        Formula::Eventually(a, i) => {
            let iv = i.to_steps(signal.period)?;
            let sb = satisfaction(a, table, signal)?;
            until_vector(&vec![true; n], &sb, iv)
        }
        Formula::Always(a, i) => {
            let iv = i.to_steps(signal.period)?;
            let sa = satisfaction(a, table, signal)?;
            let prefix = prefix_counts(&sa);
            (0..n)
                .map(|k| {
                    let (lo, hi) = (k + iv.lo, k + iv.hi);
                    hi < n && prefix[hi + 1] - prefix[lo] == hi + 1 - lo
                })
                .collect()
        }
    })
}

fn prefix_counts(v: &[bool]) -> Vec<usize> {
    let mut p = Vec::with_capacity(v.len() + 1);
    p.push(0);
    for &b in v {
        p.push(p.last().unwrap() + b as usize);
    }
    p
}

fn until_vector(sa: &[bool], sb: &[bool], iv: StepInterval) -> Vec<bool> {
    let n = sa.len();
    // first index >= k where the left operand fails
    let mut next_fail = vec![n; n + 1];
    for k in (0..n).rev() {
        next_fail[k] = if sa[k] { next_fail[k + 1] } else { k };
    }
    let prefix = prefix_counts(sb);
    (0..n)
        .map(|k| {
            if k + iv.hi >= n {
                return false;
            }
            let lo = k + iv.lo;
            let hi = (k + iv.hi).min(next_fail[k]);
            lo <= hi && prefix[hi + 1] > prefix[lo]
        })
        .collect()
}

/// Boolean satisfaction of `f` by `signal` at absolute step `k`.
pub fn evaluate(f: &Formula, table: &PredicateTable, signal: &Signal, k: usize) -> Result<bool, FormulaError> {
    let h = horizon_steps(f, signal.period)?;
    signal.covers(k, k + h)?;
    Ok(satisfaction(f, table, signal)?[k - signal.start])
}

/// Real-time satisfaction of `f` at step `k` by a partial signal known from
/// step `l = signal.start` onward. Requires `k <= l <= k + horizon`.
/// For `l == k` this coincides with [`evaluate`].
pub fn evaluate_realtime(f: &Formula, table: &PredicateTable, signal: &Signal, k: usize) -> Result<bool, FormulaError> {
    let l = signal.start;
    let h = horizon_steps(f, signal.period)?;
    if l < k || l > k + h {
        return Err(FormulaError::RealtimeDomain { k, l, max: k + h });
    }
    signal.covers(l, k + h)?;
    if l == k {
        return evaluate(f, table, signal, k);
    }
    let f = to_pnf(f)?;
    let mut rt = Realtime { table, signal, cache: HashMap::new() };
    rt.eval(&f, k)
}

struct Realtime<'a> {
    table: &'a PredicateTable,
    signal: &'a Signal,
    cache: HashMap<*const Formula, Vec<bool>>,
}

impl Realtime<'_> {
    fn standard(&mut self, f: &Formula, k: usize) -> Result<bool, FormulaError> {
        let key = f as *const Formula;
        if !self.cache.contains_key(&key) {
            let v = satisfaction(f, self.table, self.signal)?;
            self.cache.insert(key, v);
        }
        Ok(self.cache[&key][k - self.signal.start])
    }

    fn eval(&mut self, f: &Formula, k: usize) -> Result<bool, FormulaError> {
        let l = self.signal.start;
        if k >= l {
            return self.standard(f, k);
        }
        let period = self.signal.period;
        match f {
            Formula::True => Ok(true),
            Formula::False | Formula::Pred(_) | Formula::NegPred(_) => Ok(false),
            Formula::Not(_) => unreachable!("formula is in positive normal form"),
            Formula::And(a, b) => Ok(self.eval(a, k)? && self.eval(b, k)?),
            Formula::Or(a, b) => Ok(self.eval(a, k)? || self.eval(b, k)?),
            Formula::Until(a, b, i) => self.until(a, b, i.to_steps(period)?, k),
            Formula::Eventually(b, i) => self.until(&Formula::True, b, i.to_steps(period)?, k),
            Formula::Always(a, i) => {
                let iv = i.to_steps(period)?;
                let from = if a.is_temporal_free() { (k + iv.lo).max(l) } else { k + iv.lo };
                for kp in from..=k + iv.hi {
                    if !self.eval(a, kp)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    fn until(&mut self, a: &Formula, b: &Formula, iv: StepInterval, k: usize) -> Result<bool, FormulaError> {
        let l = self.signal.start;
        let from = if b.is_temporal_free() { (k + iv.lo).max(l) } else { k + iv.lo };
        'witness: for kp in from..=k + iv.hi {
            if !self.eval(b, kp)? {
                continue;
            }
            for kpp in l..kp {
                if !self.standard(a, kpp)? {
                    continue 'witness;
                }
            }
            return Ok(true);
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_1d() -> PredicateTable {
        [
            PredicateDef::new("p", Shape::Box { lower: vec![1.0], upper: vec![f64::INFINITY] }).unwrap(),
            PredicateDef::new("q", Shape::Box { lower: vec![3.0], upper: vec![f64::INFINITY] }).unwrap(),
        ]
        .into_iter()
        .collect()
    }

    fn sig(v: &[f64]) -> Signal {
        Signal::new(v.iter().map(|&x| vec![x]).collect(), 1.0)
    }

    #[test]
    fn pnf_pushes_negation() {
        let f = parse("!(G[0,2] p & F[1,3] !q)").unwrap();
        let g = to_pnf(&f).unwrap();
        assert!(g.is_pnf());
        assert_eq!(g.to_string(), "(or (eventually [0,2] (not p)) (always [1,3] q))");
    }

    #[test]
    fn pnf_rejects_general_negated_until() {
        let f = parse("!(p U[0,2] q)").unwrap();
        assert!(matches!(to_pnf(&f), Err(FormulaError::Unsupported(_))));
        let f = parse("!(true U[0,2] q)").unwrap();
        assert_eq!(to_pnf(&f).unwrap().to_string(), "(always [0,2] (not q))");
    }

    #[test]
    fn horizons() {
        let f = parse("F[5,10] G[0,10] mu1 & mu2 U[0,8] mu3").unwrap();
        assert_eq!(horizon(&f).unwrap(), 20.0);
        assert_eq!(horizon_steps(&f, 1.0).unwrap(), 20);
        assert_eq!(horizon(&parse("mu1").unwrap()).unwrap(), 0.0);
        assert!(matches!(horizon(&parse("G[0,inf] mu1").unwrap()), Err(FormulaError::Unbounded)));
    }

    #[test]
    fn until_left_operand_is_half_open() {
        let t = table_1d();
        let f = parse("p U[0,3] q").unwrap();
        // p holds at 0 and 1, q at 2 where p fails: witness at 2 needs p only on [0,2)
        assert!(evaluate(&f, &t, &sig(&[1.0, 2.0, 0.0 + 3.0, 0.0]), 0).unwrap());
        assert!(!evaluate(&f, &t, &sig(&[1.0, 0.0, 3.0, 3.0]), 0).unwrap());
        // witness at the start needs nothing from the left operand
        assert!(evaluate(&f, &t, &sig(&[3.0, 0.0, 0.0, 0.0]), 0).unwrap());
    }

    #[test]
    fn always_and_eventually() {
        let t = table_1d();
        let s = sig(&[0.0, 1.0, 1.0, 0.0, 3.0]);
        assert!(evaluate(&parse("G[1,2] p").unwrap(), &t, &s, 0).unwrap());
        assert!(!evaluate(&parse("G[1,3] p").unwrap(), &t, &s, 0).unwrap());
        assert!(evaluate(&parse("F[2,4] q").unwrap(), &t, &s, 0).unwrap());
        assert!(!evaluate(&parse("F[0,3] q").unwrap(), &t, &s, 0).unwrap());
    }

    #[test]
    fn insufficient_signal() {
        let t = table_1d();
        let f = parse("G[0,5] p").unwrap();
        assert!(matches!(evaluate(&f, &t, &sig(&[1.0; 5]), 0), Err(FormulaError::InsufficientSignal { .. })));
    }

    #[test]
    fn realtime_domain_and_degeneration() {
        let t = table_1d();
        let f = parse("p U[0,5] q").unwrap();
        let s = sig(&[1.0, 1.0, 1.0, 3.0, 1.0, 1.0]);
        assert_eq!(evaluate_realtime(&f, &t, &s, 0).unwrap(), evaluate(&f, &t, &s, 0).unwrap());
        let late = Signal::starting_at(vec![vec![1.0]; 3], 1.0, 9);
        assert!(matches!(evaluate_realtime(&f, &t, &late, 0), Err(FormulaError::RealtimeDomain { .. })));
    }

    #[test]
    fn realtime_suffix_already_in_target() {
        let t = table_1d();
        let f = parse("p U[0,5] q").unwrap();
        // known from step 3 onward; the suffix starts inside q
        let s = Signal::starting_at(vec![vec![3.0], vec![0.0], vec![0.0]], 1.0, 3);
        assert!(evaluate_realtime(&f, &t, &s, 0).unwrap());
        // predicates before the known suffix cannot be established
        let g = parse("q").unwrap();
        let s = Signal::starting_at(vec![vec![3.0]], 1.0, 0);
        assert!(evaluate_realtime(&g, &t, &s, 0).unwrap());
    }
}
