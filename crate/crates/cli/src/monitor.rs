//! Prefix monitoring with three-valued (Kleene) semantics.
//!
//! Samples past the end of a trajectory prefix are unknown. The verdict of a
//! prefix is `True`/`False` once every extension agrees, and the earliest such
//! prefix is reported as the step at which the formula was decided.

use serde::Serialize;
use tubetree::formula::{horizon_steps, Formula, FormulaError, PredicateTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tri {
    False,
    Unknown,
    True,
}

impl Tri {
    fn not(self) -> Tri {
        match self {
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
            Tri::True => Tri::False,
        }
    }

    pub fn decided(self) -> Option<bool> {
        match self {
            Tri::False => Some(false),
            Tri::Unknown => None,
            Tri::True => Some(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonitorVerdict {
    /// `None` when the trajectory ends before the verdict is settled.
    pub satisfied: Option<bool>,
    /// First step whose sample settled the verdict.
    pub decided_at: Option<usize>,
    pub samples: usize,
    /// Last step the formula can depend on.
    pub horizon: usize,
}

/// Three-valued satisfaction of `f` at steps `0..len`, knowing only the first
/// `known` samples.
fn sat(f: &Formula, table: &PredicateTable, samples: &[Vec<f64>], known: usize, len: usize, period: f64) -> Result<Vec<Tri>, FormulaError> {
    let at = |v: &[Tri], k: usize| v.get(k).copied().unwrap_or(Tri::Unknown);
    Ok(match f {
        Formula::True => vec![Tri::True; len],
        Formula::False => vec![Tri::False; len],
        Formula::Pred(p) | Formula::NegPred(p) => {
            let def = table.get(p)?;
            let neg = matches!(f, Formula::NegPred(_));
            (0..len)
                .map(|k| {
                    if k >= known {
                        return Ok(Tri::Unknown);
                    }
                    let x = &samples[k];
                    if x.len() != def.dim() {
                        return Err(FormulaError::DimensionMismatch { id: p.clone(), expected: def.dim(), got: x.len() });
                    }
                    Ok(if def.holds(x) != neg { Tri::True } else { Tri::False })
                })
                .collect::<Result<_, _>>()?
        }
        Formula::Not(a) => sat(a, table, samples, known, len, period)?.into_iter().map(Tri::not).collect(),
        Formula::And(a, b) | Formula::Or(a, b) => {
            let sa = sat(a, table, samples, known, len, period)?;
            let sb = sat(b, table, samples, known, len, period)?;
            let and = matches!(f, Formula::And(..));
            sa.iter().zip(&sb).map(|(x, y)| if and { *x.min(y) } else { *x.max(y) }).collect()
        }
        Formula::Until(a, b, i) => {
            let iv = i.to_steps(period)?;
            let sa = sat(a, table, samples, known, len, period)?;
            let sb = sat(b, table, samples, known, len, period)?;
            (0..len)
                .map(|k| {
                    let mut acc = Tri::False;
                    let mut left = Tri::True;
                    for j in k..=k + iv.hi {
                        if j >= k + iv.lo {
                            acc = acc.max(left.min(at(&sb, j)));
                        }
                        left = left.min(at(&sa, j));
                        if acc == Tri::True || left == Tri::False {
                            break;
                        }
                    }
                    acc
                })
                .collect()
        }
        Formula::Eventually(a, i) | Formula::Always(a, i) => {
            let iv = i.to_steps(period)?;
            let sa = sat(a, table, samples, known, len, period)?;
            let always = matches!(f, Formula::Always(..));
            (0..len)
                .map(|k| {
                    let window = (k + iv.lo..=k + iv.hi).map(|j| at(&sa, j));
                    if always {
                        window.min().unwrap_or(Tri::True)
                    } else {
                        window.max().unwrap_or(Tri::False)
                    }
                })
                .collect()
        }
    })
}

/// Verdict of `f` at step 0 given only the first `known` samples.
pub fn prefix_verdict(f: &Formula, table: &PredicateTable, samples: &[Vec<f64>], known: usize, period: f64) -> Result<Tri, FormulaError> {
    let h = horizon_steps(f, period)?;
    Ok(sat(f, table, samples, known.min(samples.len()), h + 1, period)?[0])
}

/// Monitors a trajectory from step 0. More samples never flip a settled
/// verdict, so the deciding step is found by bisection.
pub fn monitor(f: &Formula, table: &PredicateTable, samples: &[Vec<f64>], period: f64) -> Result<MonitorVerdict, FormulaError> {
    let horizon = horizon_steps(f, period)?;
    let usable = samples.len().min(horizon + 1);
    let full = prefix_verdict(f, table, samples, usable, period)?;
    let mut out = MonitorVerdict { satisfied: full.decided(), decided_at: None, samples: samples.len(), horizon };
    if out.satisfied.is_some() {
        let (mut lo, mut hi) = (0, usable);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if prefix_verdict(f, table, samples, mid, period)? == full {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        // `lo` samples suffice; the last of them is step lo - 1
        out.decided_at = Some(lo.saturating_sub(1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tubetree::formula::{parse, PredicateDef, Shape};

    fn table() -> PredicateTable {
        [
            PredicateDef::new("p", Shape::Box { lower: vec![0.0], upper: vec![1.0] }).unwrap(),
            PredicateDef::new("q", Shape::Box { lower: vec![2.0], upper: vec![3.0] }).unwrap(),
        ]
        .into_iter()
        .collect()
    }

    fn xs(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn until_decided_at_witness() {
        let f = parse("p U[0,4] q").unwrap();
        let v = monitor(&f, &table(), &xs(&[0.5, 0.5, 2.5]), 1.0).unwrap();
        assert_eq!(v.satisfied, Some(true));
        assert_eq!(v.decided_at, Some(2));
    }

    #[test]
    fn until_violated_when_left_fails_first() {
        let f = parse("p U[0,4] q").unwrap();
        let v = monitor(&f, &table(), &xs(&[0.5, 5.0, 2.5, 2.5, 2.5]), 1.0).unwrap();
        assert_eq!(v.satisfied, Some(false));
        assert_eq!(v.decided_at, Some(1));
    }

    #[test]
    fn short_trace_stays_open() {
        let f = parse("G[0,4] p").unwrap();
        let v = monitor(&f, &table(), &xs(&[0.5, 0.5]), 1.0).unwrap();
        assert_eq!(v.satisfied, None);
        assert_eq!(v.decided_at, None);
    }

    #[test]
    fn true_is_decided_immediately() {
        let v = monitor(&Formula::True, &table(), &xs(&[9.0]), 1.0).unwrap();
        assert_eq!(v.satisfied, Some(true));
        assert_eq!(v.decided_at, Some(0));
    }
}
