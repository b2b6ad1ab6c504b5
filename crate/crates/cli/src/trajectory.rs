//! Trajectory CSV files: `k, t, x1.., u1.., w1.., feasible_count`.
//!
//! The last row of a run that stopped with an empty control set has empty
//! control and disturbance fields.

use std::io;
use std::path::Path;

use tubetree::synth::OnlineRun;

pub fn header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.extend((1..=n).map(|i| format!("w{i}")));
    h.push("feasible_count".into());
    h
}

pub fn write(path: &Path, run: &OnlineRun, period: f64, control_dim: usize) -> Result<(), csv::Error> {
    let n = run.states.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(n, control_dim))?;
    for (k, x) in run.states.iter().enumerate() {
        let mut row = vec![k.to_string(), (k as f64 * period).to_string()];
        row.extend(x.iter().map(f64::to_string));
        match (run.controls.get(k), run.disturbances.get(k)) {
            (Some(u), Some(d)) => {
                row.extend(u.iter().map(f64::to_string));
                row.extend(d.iter().map(f64::to_string));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), control_dim + n)),
        }
        row.push(run.feasible_counts.get(k).map_or(String::new(), usize::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// State samples of a trajectory file. With a header, the `x<i>` columns are
/// used in index order; without one, every column is a state coordinate.
pub fn read_states(path: &Path) -> Result<Vec<Vec<f64>>, csv::Error> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).flexible(true).from_path(path)?;
    let mut records = r.records();
    let Some(first) = records.next().transpose()? else { return Ok(Vec::new()) };
    let state_cols: Option<Vec<usize>> = if first.iter().all(|c| c.parse::<f64>().is_ok()) {
        None
    } else {
        let mut cols: Vec<(usize, usize)> =
            first.iter().enumerate().filter_map(|(i, name)| Some((name.strip_prefix('x')?.parse::<usize>().ok()?, i))).collect();
        cols.sort();
        Some(cols.into_iter().map(|(_, i)| i).collect())
    };
    let parse_row = |rec: &csv::StringRecord, line: usize| -> Result<Vec<f64>, csv::Error> {
        let pick: Vec<&str> = match &state_cols {
            Some(cols) => cols.iter().map(|&i| rec.get(i).unwrap_or("")).collect(),
            None => rec.iter().collect(),
        };
        pick.iter()
            .map(|v| v.parse::<f64>().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: '{v}': {e}")).into()))
            .collect()
    };
    let mut out = Vec::new();
    if state_cols.is_none() {
        out.push(parse_row(&first, 1)?);
    }
    for (i, rec) in records.enumerate() {
        out.push(parse_row(&rec?, i + 2)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tubetree::synth::Verdict;

    #[test]
    fn round_trip_keeps_states() {
        let run = OnlineRun {
            verdict: Verdict::NExis { step: 1 },
            states: vec![vec![0.5, -1.0], vec![0.25, 2.0]],
            controls: vec![vec![1.0]],
            disturbances: vec![vec![0.0, 0.1]],
            feasible_counts: vec![3, 0],
            records: vec![],
            codings: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write(&p, &run, 0.2, 1).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "k,t,x1,x2,u1,w1,w2,feasible_count\n0,0,0.5,-1,1,0,0.1,3\n1,0.2,0.25,2,,,,0\n");
        assert_eq!(read_states(&p).unwrap(), run.states);
    }

    #[test]
    fn headerless_rows_are_states() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "1, 2\n3,4\n").unwrap();
        assert_eq!(read_states(&p).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }
}
