//! Trace CSV and system JSON file formats.
//!
//! Trace files: header `t, x1..xn, u1..um, w1..we`, one row per sample.
//! Inputs and disturbances in the final row are written as zero (there is no
//! stored input at the last sample). An optional comment line `# loop=l`
//! tags the run as a lasso; `#` lines are otherwise ignored, which lets
//! writers embed their configuration in the header.
//!
//! System files: JSON with keys `A`, `B`, `E`, `c`, `x_bounds`, `u_bounds`,
//! `dt` (matrices row-major as lists of rows).

use std::path::Path;

use super::{AffineSystem, Run, TraceError};

/// Renders a run in the trace CSV format. `header_comments` lines are
/// emitted first, each prefixed with `# `.
pub fn write_run_csv(run: &Run, header_comments: &[String]) -> String {
    let mut out = String::new();
    for c in header_comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    if let Some(l) = run.loop_index() {
        out.push_str(&format!("# loop={l}\n"));
    }
    let (n, m, e) = (run.state_dim(), run.input_dim(), run.disturbance_dim());
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.extend((1..=e).map(|i| format!("w{i}")));
    out.push_str(&cols.join(","));
    out.push('\n');
    for k in 0..=run.horizon() {
        let mut row = vec![format!("{}", k as f64 * run.dt())];
        row.extend(run.state(k).iter().map(|v| format!("{v}")));
        row.extend(run.input_or_zero(k).iter().map(|v| format!("{v}")));
        row.extend(run.disturbance_or_zero(k).iter().map(|v| format!("{v}")));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses the trace CSV format. Errors carry the 1-based row number of the
/// offending line.
pub fn read_run_csv(text: &str) -> Result<Run, TraceError> {
    let mut loop_index: Option<usize> = None;
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_row = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let row_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(l) = comment.strip_prefix("loop=") {
                loop_index = Some(l.trim().parse().map_err(|_| TraceError::Csv {
                    row: row_no,
                    msg: format!("bad loop index {l:?}"),
                })?);
            }
            continue;
        }
        match &header {
            None => {
                header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
                header_row = row_no;
            }
            Some(h) => {
                let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
                let vals = vals.map_err(|_| TraceError::Csv {
                    row: row_no,
                    msg: "non-numeric cell".into(),
                })?;
                if vals.len() != h.len() {
                    return Err(TraceError::Csv {
                        row: row_no,
                        msg: format!("expected {} columns, got {}", h.len(), vals.len()),
                    });
                }
                rows.push(vals);
            }
        }
    }

    let header = header.ok_or(TraceError::Csv { row: 1, msg: "missing header row".into() })?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(TraceError::Csv { row: header_row, msg: "first column must be t".into() });
    }
    let count = |prefix: char| header.iter().filter(|h| h.starts_with(prefix) && h[1..].chars().all(|c| c.is_ascii_digit()) && h.len() > 1).count();
    let (n, m, e) = (count('x'), count('u'), count('w'));
    if 1 + n + m + e != header.len() {
        return Err(TraceError::Csv { row: header_row, msg: "header must be t, x1..xn, u1..um, w1..we".into() });
    }
    if rows.len() < 2 {
        return Err(TraceError::Csv { row: header_row, msg: "need at least two samples".into() });
    }
    let dt = rows[1][0] - rows[0][0];
    if !(dt > 0.0) {
        return Err(TraceError::Csv { row: header_row + 2, msg: "time column must increase".into() });
    }

    let last = rows.len() - 1;
    let states: Vec<Vec<f64>> = rows.iter().map(|r| r[1..1 + n].to_vec()).collect();
    let inputs: Vec<Vec<f64>> = rows[..last].iter().map(|r| r[1 + n..1 + n + m].to_vec()).collect();
    let disturbances: Vec<Vec<f64>> =
        rows[..last].iter().map(|r| r[1 + n + m..1 + n + m + e].to_vec()).collect();

    let run = Run::new(states, inputs, disturbances, dt)?;
    match loop_index {
        Some(l) => run.with_loop(l),
        None => Ok(run),
    }
}

pub fn write_system_json(sys: &AffineSystem) -> String {
    serde_json::to_string_pretty(sys).expect("system serialization cannot fail")
}

pub fn read_system_json(text: &str) -> Result<AffineSystem, TraceError> {
    let sys: AffineSystem =
        serde_json::from_str(text).map_err(|e| TraceError::SystemFormat(e.to_string()))?;
    sys.validate()?;
    Ok(sys)
}

pub fn read_system_file(path: &Path) -> Result<AffineSystem, TraceError> {
    read_system_json(&std::fs::read_to_string(path)?)
}

pub fn read_run_file(path: &Path) -> Result<Run, TraceError> {
    read_run_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Matrix;

    #[test]
    fn run_csv_round_trip_with_loop() {
        let run = Run::new(
            vec![vec![0.0, 1.0], vec![0.5, 1.5], vec![0.5, 1.5]],
            vec![vec![0.25], vec![0.0]],
            vec![vec![1.0], vec![2.0]],
            0.5,
        )
        .unwrap()
        .with_loop(2)
        .unwrap();
        let text = write_run_csv(&run, &["config: demo".into()]);
        let back = read_run_csv(&text).unwrap();
        assert_eq!(back, run);
        assert_eq!(back.loop_index(), Some(2));
    }

    #[test]
    fn csv_error_carries_row_number() {
        let text = "t,x1\n0,1\n1,oops\n";
        match read_run_csv(text) {
            Err(TraceError::Csv { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected Csv error, got {other:?}"),
        }
    }

    #[test]
    fn system_json_round_trip() {
        let sys = AffineSystem {
            a: Matrix::from_rows(vec![vec![1.0, 0.1], vec![0.0, 0.9]]).unwrap(),
            b: Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap(),
            e: Matrix::from_rows(vec![vec![0.5], vec![0.0]]).unwrap(),
            c: vec![0.0, 0.1],
            x_bounds: vec![(-10.0, 10.0), (-5.0, 5.0)],
            u_bounds: vec![(-1.0, 1.0)],
            u_integral: vec![false],
            dt: 0.25,
        };
        let text = write_system_json(&sys);
        let back = read_system_json(&text).unwrap();
        assert_eq!(back.a, sys.a);
        assert_eq!(back.x_bounds, sys.x_bounds);
        assert_eq!(back.dt, sys.dt);
    }

    #[test]
    fn system_json_rejects_infinite_bounds() {
        let text = r#"{
            "A": [[1.0]], "B": [[1.0]], "E": [[0.0]], "c": [0.0],
            "x_bounds": [[0.0, 1e400]], "u_bounds": [[0.0, 1.0]], "dt": 1.0
        }"#;
        assert!(read_system_json(text).is_err());
    }
}
