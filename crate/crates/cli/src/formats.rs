//! CSV outputs. Floats are written in Rust's shortest round-trip decimal
//! form, so [`read_sweep_csv`] and [`read_metrics_csv`] recover the exact
//! values that were written.

use std::fmt::Write as _;

use dbb_core::{StepMetrics, SweepRecord};

use crate::error::CliError;

pub const SWEEP_HEADER: &str =
    "lambda,n,epoch,mse_dbb_emp,mse_dbb_closed,mse_pt_emp,mse_pt_closed,stderr_dbb,stderr_pt";
pub const METRICS_HEADER: &str = "step,mean_reward,entropy,zero_var_frac,clip_frac";

pub fn write_sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.lambda,
            r.n,
            r.epoch,
            r.mse_dbb_empirical,
            r.mse_dbb_closed,
            r.mse_point_empirical,
            r.mse_point_closed,
            r.stderr_dbb,
            r.stderr_point
        )
        .expect("writing to a String");
    }
    out
}

fn rows<'a>(
    text: &'a str,
    header: &'static str,
    what: &'static str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(CliError::Parse {
                what,
                detail: format!("expected header {header:?}, found {other:?}"),
            })
        }
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect())))
}

fn field<T: std::str::FromStr>(
    what: &'static str,
    line: usize,
    value: &str,
) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Parse {
        what,
        detail: format!("line {line}: cannot parse {value:?}"),
    })
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRecord>, CliError> {
    const WHAT: &str = "sweep csv";
    rows(text, SWEEP_HEADER, WHAT)?
        .map(|(line, f)| {
            if f.len() != 9 {
                return Err(CliError::Parse {
                    what: WHAT,
                    detail: format!("line {line}: expected 9 fields, found {}", f.len()),
                });
            }
            let n: usize = field(WHAT, line, f[1])?;
            Ok(SweepRecord {
                lambda: field(WHAT, line, f[0])?,
                n,
                epoch: field(WHAT, line, f[2])?,
                mse_dbb_empirical: field(WHAT, line, f[3])?,
                mse_dbb_closed: field(WHAT, line, f[4])?,
                mse_point_empirical: field(WHAT, line, f[5])?,
                mse_point_closed: field(WHAT, line, f[6])?,
                stderr_dbb: field(WHAT, line, f[7])?,
                stderr_point: field(WHAT, line, f[8])?,
                point_variance_degenerate: n == 1,
            })
        })
        .collect()
}

pub fn write_metrics_csv(steps: &[StepMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for s in steps {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.step, s.mean_reward, s.entropy, s.zero_var_frac, s.clip_frac
        )
        .expect("writing to a String");
    }
    out
}

/// One parsed metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub mean_reward: f64,
    pub entropy: f64,
    pub zero_var_frac: f64,
    pub clip_frac: f64,
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, CliError> {
    const WHAT: &str = "metrics csv";
    rows(text, METRICS_HEADER, WHAT)?
        .map(|(line, f)| {
            if f.len() != 5 {
                return Err(CliError::Parse {
                    what: WHAT,
                    detail: format!("line {line}: expected 5 fields, found {}", f.len()),
                });
            }
            Ok(MetricsRow {
                step: field(WHAT, line, f[0])?,
                mean_reward: field(WHAT, line, f[1])?,
                entropy: field(WHAT, line, f[2])?,
                zero_var_frac: field(WHAT, line, f[3])?,
                clip_frac: field(WHAT, line, f[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(lambda: f64, n: usize, x: f64) -> SweepRecord {
        SweepRecord {
            lambda,
            n,
            epoch: 3,
            mse_dbb_empirical: x,
            mse_dbb_closed: x / 3.0,
            mse_point_empirical: 1e-300,
            mse_point_closed: 0.0,
            stderr_dbb: x * x,
            stderr_point: 0.1 + 0.2,
            point_variance_degenerate: n == 1,
        }
    }

    #[test]
    fn sweep_csv_round_trips_exactly() {
        let recs = vec![
            record(0.1, 8, 0.123_456_789_012_345_68),
            record(1.0 / 3.0, 1, 2.5e-17),
        ];
        let text = write_sweep_csv(&recs);
        assert!(text.starts_with(SWEEP_HEADER));
        assert_eq!(read_sweep_csv(&text).unwrap(), recs);
    }

    #[test]
    fn metrics_csv_round_trips_exactly() {
        let steps = vec![StepMetrics {
            step: 1,
            epoch: 1,
            mean_reward: 0.2375,
            entropy: 16f64.ln(),
            zero_var_frac: 0.05,
            clip_frac: 0.0,
            groups: 20,
            collapsed_groups: 1,
            nonfinite_advantages: 0,
        }];
        let rows = read_metrics_csv(&write_metrics_csv(&steps)).unwrap();
        assert_eq!(rows[0].entropy, 16f64.ln());
        assert_eq!(rows[0].mean_reward, 0.2375);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(read_sweep_csv("lambda,n\n").is_err());
        let bad = format!("{SWEEP_HEADER}\n0.5,8,1,x,0,0,0,0,0\n");
        assert!(read_sweep_csv(&bad).is_err());
        let short = format!("{METRICS_HEADER}\n1,0.5\n");
        assert!(read_metrics_csv(&short).is_err());
    }
}
