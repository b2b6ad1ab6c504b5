//! Recursive STL semantics over sample indices, Until read as
//! `exists k' in k+[a,b]: b(k') and forall k'' in [k, k'): a(k'')`.

use tubetree::formula::{Formula, PredicateTable};

/// Satisfaction of `f` at index `k` of `samples`, or `None` if some sample
/// the definition looks at is missing.
pub fn holds(f: &Formula, table: &PredicateTable, samples: &[Vec<f64>], period: f64, k: usize) -> Option<bool> {
    let at = |j: usize| samples.get(j);
    Some(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Pred(p) => table.get(p).ok()?.value(at(k)?) >= 0.0,
        Formula::NegPred(p) => table.get(p).ok()?.value(at(k)?) < 0.0,
        Formula::Not(a) => !holds(a, table, samples, period, k)?,
        Formula::And(a, b) => {
            let (x, y) = (holds(a, table, samples, period, k)?, holds(b, table, samples, period, k)?);
            x && y
        }
        Formula::Or(a, b) => {
            let (x, y) = (holds(a, table, samples, period, k)?, holds(b, table, samples, period, k)?);
            x || y
        }
        Formula::Until(a, b, i) => {
            let iv = i.to_steps(period).ok()?;
            let mut found = false;
            for kp in k + iv.lo..=k + iv.hi {
                let right = holds(b, table, samples, period, kp)?;
                let mut left = true;
                for kpp in k..kp {
                    left &= holds(a, table, samples, period, kpp)?;
                }
                found |= right && left;
            }
            found
        }
        Formula::Always(a, i) => {
            let iv = i.to_steps(period).ok()?;
            let mut all = true;
            for kp in k + iv.lo..=k + iv.hi {
                all &= holds(a, table, samples, period, kp)?;
            }
            all
        }
        Formula::Eventually(a, i) => {
            let iv = i.to_steps(period).ok()?;
            let mut any = false;
            for kp in k + iv.lo..=k + iv.hi {
                any |= holds(a, table, samples, period, kp)?;
            }
            any
        }
    })
}
