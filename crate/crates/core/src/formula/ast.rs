use std::fmt;

use serde::{Deserialize, Serialize};

use super::FormulaError;

/// Slack used when mapping interval endpoints onto sampling steps, so that
/// endpoints which are exact multiples of the period survive float noise.
const STEP_EPS: f64 = 1e-9;

/// A time interval in seconds. The upper bound may be infinite; the interval
/// may be right-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub right_open: bool,
}

/// An interval mapped to sampling steps, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepInterval {
    pub lo: usize,
    pub hi: usize,
}

impl StepInterval {
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi, "empty step interval [{lo}, {hi}]");
        StepInterval { lo, hi }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.lo <= k && k <= self.hi
    }
}

impl fmt::Display for StepInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Result<Self, FormulaError> {
        Self::new(lo, hi, false)
    }

    pub fn new(lo: f64, hi: f64, right_open: bool) -> Result<Self, FormulaError> {
        let bad = lo.is_nan() || hi.is_nan() || lo < 0.0 || !lo.is_finite() || hi < lo || (right_open && hi == lo);
        if bad {
            return Err(FormulaError::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi, right_open })
    }

    pub fn is_bounded(&self) -> bool {
        self.hi.is_finite()
    }

    /// Maps the interval onto steps of length `period`: closed `[a,b]` becomes
    /// `[ceil(a/d), floor(b/d)]`, right-open `[a,b)` becomes `[ceil(a/d), ceil(b/d)-1]`.
    pub fn to_steps(&self, period: f64) -> Result<StepInterval, FormulaError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(FormulaError::InvalidPeriod(period));
        }
        if !self.is_bounded() {
            return Err(FormulaError::Unbounded);
        }
        let lo = (self.lo / period - STEP_EPS).ceil().max(0.0);
        let hi = if self.right_open {
            (self.hi / period - STEP_EPS).ceil() - 1.0
        } else {
            (self.hi / period + STEP_EPS).floor()
        };
        if hi < lo {
            return Err(FormulaError::EmptyStepInterval { lo: self.lo, hi: self.hi, period });
        }
        Ok(StepInterval::new(lo as usize, hi as usize))
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let close = if self.right_open { ')' } else { ']' };
        write!(f, "[{},{}{}", fmt_num(self.lo), fmt_num(self.hi), close)
    }
}

/// An STL formula. `Not` may wrap anything in a raw formula; in positive
/// normal form negation only appears as `NegPred`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Pred(String),
    NegPred(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>, Interval),
    Always(Box<Formula>, Interval),
    Eventually(Box<Formula>, Interval),
}

impl Formula {
    pub fn pred(id: impl Into<String>) -> Self {
        Formula::Pred(id.into())
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(a: Formula, b: Formula, i: Interval) -> Self {
        Formula::Until(Box::new(a), Box::new(b), i)
    }

    pub fn always(a: Formula, i: Interval) -> Self {
        Formula::Always(Box::new(a), i)
    }

    pub fn eventually(a: Formula, i: Interval) -> Self {
        Formula::Eventually(Box::new(a), i)
    }

    /// True if the formula contains no temporal operator.
    pub fn is_temporal_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => true,
            Formula::Not(a) => a.is_temporal_free(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_temporal_free() && b.is_temporal_free(),
            Formula::Until(..) | Formula::Always(..) | Formula::Eventually(..) => false,
        }
    }

    /// True if negation only appears directly on predicates.
    pub fn is_pnf(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => true,
            Formula::Not(_) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b, _) => a.is_pnf() && b.is_pnf(),
            Formula::Always(a, _) | Formula::Eventually(a, _) => a.is_pnf(),
        }
    }

    /// Number of Boolean (`And`/`Or`) and temporal operators.
    pub fn operator_counts(&self) -> (usize, usize) {
        match self {
            Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => (0, 0),
            Formula::Not(a) => a.operator_counts(),
            Formula::And(a, b) | Formula::Or(a, b) => {
                let (n1, m1) = a.operator_counts();
                let (n2, m2) = b.operator_counts();
                (n1 + n2 + 1, m1 + m2)
            }
            Formula::Until(a, b, _) => {
                let (n1, m1) = a.operator_counts();
                let (n2, m2) = b.operator_counts();
                (n1 + n2, m1 + m2 + 1)
            }
            Formula::Always(a, _) | Formula::Eventually(a, _) => {
                let (n, m) = a.operator_counts();
                (n, m + 1)
            }
        }
    }

    /// Predicate identifiers referenced by the formula, in first-use order.
    pub fn predicates(&self) -> Vec<String> {
        fn walk(f: &Formula, out: &mut Vec<String>) {
            match f {
                Formula::True | Formula::False => {}
                Formula::Pred(p) | Formula::NegPred(p) => {
                    if !out.contains(p) {
                        out.push(p.clone());
                    }
                }
                Formula::Not(a) | Formula::Always(a, _) | Formula::Eventually(a, _) => walk(a, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b, _) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Rewrites `F_I phi` as `true U_I phi` everywhere.
    pub fn desugar_eventually(&self) -> Formula {
        match self {
            Formula::True | Formula::False | Formula::Pred(_) | Formula::NegPred(_) => self.clone(),
            Formula::Not(a) => Formula::not(a.desugar_eventually()),
            Formula::And(a, b) => Formula::and(a.desugar_eventually(), b.desugar_eventually()),
            Formula::Or(a, b) => Formula::or(a.desugar_eventually(), b.desugar_eventually()),
            Formula::Until(a, b, i) => Formula::until(a.desugar_eventually(), b.desugar_eventually(), *i),
            Formula::Always(a, i) => Formula::always(a.desugar_eventually(), *i),
            Formula::Eventually(a, i) => Formula::until(Formula::True, a.desugar_eventually(), *i),
        }
    }
}

impl fmt::Display for Formula {
    /// Canonical S-expression form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::NegPred(p) => write!(f, "(not {p})"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::And(a, b) => write!(f, "(and {a} {b})"),
            Formula::Or(a, b) => write!(f, "(or {a} {b})"),
            Formula::Until(a, b, i) => write!(f, "(until {i} {a} {b})"),
            Formula::Always(a, i) => write!(f, "(always {i} {a})"),
            Formula::Eventually(a, i) => write!(f, "(eventually {i} {a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_interval_steps() {
        let i = Interval::closed(5.0, 10.0).unwrap();
        assert_eq!(i.to_steps(1.0).unwrap(), StepInterval::new(5, 10));
        let i = Interval::closed(0.0, 16.0).unwrap();
        assert_eq!(i.to_steps(0.2).unwrap(), StepInterval::new(0, 80));
        let i = Interval::closed(0.3, 0.9).unwrap();
        assert_eq!(i.to_steps(0.2).unwrap(), StepInterval::new(2, 4));
    }

    #[test]
    fn right_open_interval_steps() {
        let i = Interval::new(0.0, 1.0, true).unwrap();
        assert_eq!(i.to_steps(0.2).unwrap(), StepInterval::new(0, 4));
        let i = Interval::new(0.0, 1.1, true).unwrap();
        assert_eq!(i.to_steps(0.2).unwrap(), StepInterval::new(0, 5));
    }

    #[test]
    fn interval_without_sample_is_rejected() {
        let i = Interval::closed(0.1, 0.15).unwrap();
        assert!(matches!(i.to_steps(0.2), Err(FormulaError::EmptyStepInterval { .. })));
    }

    #[test]
    fn invalid_intervals() {
        assert!(Interval::closed(2.0, 1.0).is_err());
        assert!(Interval::closed(-1.0, 1.0).is_err());
        assert!(Interval::closed(f64::NAN, 1.0).is_err());
        assert!(Interval::closed(0.0, f64::INFINITY).unwrap().to_steps(1.0).is_err());
    }

    #[test]
    fn operator_counts() {
        let f = Formula::and(
            Formula::eventually(Formula::always(Formula::pred("mu1"), Interval::closed(0.0, 10.0).unwrap()), Interval::closed(5.0, 10.0).unwrap()),
            Formula::until(Formula::pred("mu2"), Formula::pred("mu3"), Interval::closed(0.0, 8.0).unwrap()),
        );
        assert_eq!(f.operator_counts(), (1, 3));
        assert_eq!(f.predicates(), vec!["mu1", "mu2", "mu3"]);
    }
}
