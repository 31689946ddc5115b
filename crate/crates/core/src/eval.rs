//! Group-wise accuracy, the RMSE gap between groups, and the Welch test
//! behind the significance flags. Also the trace CSV format.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::data::{RatingSet, UserId};
use crate::error::EvalError;
use crate::mf::{self, MfModel};
use crate::simulation::{SimulationTrace, TracePoint};

/// Variance floor applied to each sample so fully separated constant
/// samples still give a finite statistic.
pub const VARIANCE_FLOOR: f64 = 1e-12;

pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

pub const ROLLING_WINDOW: usize = 10;

pub const TRACE_HEADER: &str = "iteration,n_known,acq_protected,acq_unprotected,rmse_all,rmse_protected,rmse_unprotected,rmse_diff,t_stat,p_value,rolling_rmse_all_w10";

/// Sample unit fed to the t-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestUnit {
    /// One squared error per test rating.
    #[default]
    Rating,
    /// One mean squared error per test user.
    User,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupReport {
    pub rmse_protected: f64,
    pub rmse_unprotected: f64,
    pub rmse_diff: f64,
    pub n_protected: usize,
    pub n_unprotected: usize,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
/// Returns `(t, p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64), EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::InsufficientSamples {
            left: a.len(),
            right: b.len(),
        });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let sa = va.max(VARIANCE_FLOOR) / a.len() as f64;
    let sb = vb.max(VARIANCE_FLOOR) / b.len() as f64;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    Ok((t, student_t_two_sided_p(t, df)))
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x.clamp(0.0, 1.0)).clamp(0.0, 1.0)
}

fn per_user_mse(model: &MfModel, part: &RatingSet) -> Vec<f64> {
    let mut out = Vec::new();
    let mut cur: Option<(UserId, f64, usize)> = None;
    for x in part.iter() {
        let se = (x.rating - model.predict(x.user, x.item)).powi(2);
        match cur.as_mut() {
            Some((u, sum, n)) if *u == x.user => {
                *sum += se;
                *n += 1;
            }
            _ => {
                if let Some((_, sum, n)) = cur.take() {
                    out.push(sum / n as f64);
                }
                cur = Some((x.user, se, 1));
            }
        }
    }
    if let Some((_, sum, n)) = cur {
        out.push(sum / n as f64);
    }
    out
}

/// RMSE per group and the significance of the gap.
pub fn group_report(
    model: &MfModel,
    protected: &RatingSet,
    unprotected: &RatingSet,
    unit: TestUnit,
) -> Result<GroupReport, EvalError> {
    if protected.is_empty() {
        return Err(EvalError::EmptyGroup("protected"));
    }
    if unprotected.is_empty() {
        return Err(EvalError::EmptyGroup("unprotected"));
    }
    let se_p = mf::squared_errors(model, protected)?;
    let se_u = mf::squared_errors(model, unprotected)?;
    let rmse_protected = mf::rmse(model, protected)?;
    let rmse_unprotected = mf::rmse(model, unprotected)?;
    let (t_statistic, p_value) = match unit {
        TestUnit::Rating => welch_t_test(&se_p, &se_u)?,
        TestUnit::User => welch_t_test(
            &per_user_mse(model, protected),
            &per_user_mse(model, unprotected),
        )?,
    };
    Ok(GroupReport {
        rmse_protected,
        rmse_unprotected,
        rmse_diff: rmse_protected - rmse_unprotected,
        n_protected: protected.len(),
        n_unprotected: unprotected.len(),
        t_statistic,
        p_value,
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}

/// Trailing mean of `rmse_all` over at most [`ROLLING_WINDOW`] points.
pub fn rolling_rmse(points: &[TracePoint]) -> Vec<f64> {
    (0..points.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(ROLLING_WINDOW);
            let w = &points[lo..=k];
            w.iter().map(|p| p.rmse_all).sum::<f64>() / w.len() as f64
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    let rolling = rolling_rmse(&trace.points);
    for (p, roll) in trace.points.iter().zip(rolling) {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            p.iteration,
            p.n_known,
            p.acq_protected,
            p.acq_unprotected,
            p.rmse_all,
            p.rmse_protected,
            p.rmse_unprotected,
            p.rmse_diff,
            p.t_statistic,
            p.p_value,
            roll
        )?;
    }
    Ok(())
}

pub fn trace_csv_string(trace: &SimulationTrace) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace csv is ASCII")
}

/// Write the trace to `path.partial` and rename it into place.
pub fn trace_to_csv(trace: &SimulationTrace, path: &Path) -> Result<(), EvalError> {
    if trace.points.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    write_atomic(path, trace_csv_string(trace).as_bytes())?;
    Ok(())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Parse a trace CSV. The rolling column is checked for shape but not
/// stored; it is recomputed on write.
pub fn parse_trace_csv(text: &str) -> Result<SimulationTrace, EvalError> {
    let bad = |line: usize, reason: String| EvalError::TraceFormat { line, reason };
    let mut lines = text.split_terminator('\n');
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        _ => return Err(bad(1, "missing or wrong header".into())),
    }
    let mut points = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad(lineno, format!("expected 11 fields, found {}", f.len())));
        }
        let int = |ix: usize| -> Result<usize, EvalError> {
            f[ix].parse().map_err(|_| bad(lineno, format!("bad integer {:?}", f[ix])))
        };
        let real = |ix: usize| -> Result<f64, EvalError> {
            f[ix].parse().map_err(|_| bad(lineno, format!("bad number {:?}", f[ix])))
        };
        real(10)?;
        points.push(TracePoint {
            iteration: int(0)?,
            n_known: int(1)?,
            acq_protected: int(2)?,
            acq_unprotected: int(3)?,
            rmse_all: real(4)?,
            rmse_protected: real(5)?,
            rmse_unprotected: real(6)?,
            rmse_diff: real(7)?,
            t_statistic: real(8)?,
            p_value: real(9)?,
        });
    }
    Ok(SimulationTrace { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.5, 3.0, 7.0];
        let (t, p) = welch_t_test(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn shifted_samples_match_reference() {
        // Frozen from scipy.stats.ttest_ind(..., equal_var=False).
        let (t, p) = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(t, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.346_593_507_087_334_2, epsilon = 1e-9);

        let (t, p) = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0, 9.0], &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.5])
            .unwrap();
        assert_abs_diff_eq!(t, -0.743_522_395_644_914_3, epsilon = 1e-9);
        assert_abs_diff_eq!(p, 0.474_908_541_862_040_9, epsilon = 1e-9);

        let (t, p) = welch_t_test(&[0.5, 1.25, 2.0, 8.0], &[3.0, 3.5, 4.25, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(t, -0.786_373_611_476_120_3, epsilon = 1e-9);
        assert_abs_diff_eq!(p, 0.480_362_524_233_092_8, epsilon = 1e-9);
    }

    #[test]
    fn separated_constant_samples() {
        let (t, p) = welch_t_test(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!(t.is_finite() && t < 0.0);
        assert!(p < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            welch_t_test(&[1.0], &[1.0, 2.0]),
            Err(EvalError::InsufficientSamples { left: 1, right: 2 })
        ));
    }

    fn const_model(n_users: usize, mu: f64) -> MfModel {
        MfModel::from_parts(mu, vec![0.0; n_users], vec![0.0], vec![0.0; n_users], vec![0.0], 1, (0.0, 5.0))
            .unwrap()
    }

    #[test]
    fn constructed_gap_is_significant() {
        // The model predicts 1 everywhere; protected ratings are 3 (error^2 = 4),
        // unprotected ratings are 1 (error^2 = 0).
        let m = const_model(6, 1.0);
        let p = RatingSet::from_interactions((0..3).map(|u| Interaction::new(u, 0, 3.0, 0))).unwrap();
        let u = RatingSet::from_interactions((3..6).map(|u| Interaction::new(u, 0, 1.0, 0))).unwrap();
        let r = group_report(&m, &p, &u, TestUnit::Rating).unwrap();
        assert_eq!(r.rmse_protected, 2.0);
        assert_eq!(r.rmse_unprotected, 0.0);
        assert_eq!(r.rmse_diff, 2.0);
        assert!(r.p_value < 1e-12 && r.significant);
        assert_eq!((r.n_protected, r.n_unprotected), (3, 3));
    }

    #[test]
    fn mirrored_groups_are_not_significant() {
        let m = const_model(6, 3.0);
        let p = RatingSet::from_interactions(
            [(0, 1.0), (1, 4.0), (2, 5.0)].map(|(u, r)| Interaction::new(u, 0, r, 0)),
        )
        .unwrap();
        let u = RatingSet::from_interactions(
            [(3, 1.0), (4, 4.0), (5, 5.0)].map(|(u, r)| Interaction::new(u, 0, r, 0)),
        )
        .unwrap();
        let r = group_report(&m, &p, &u, TestUnit::Rating).unwrap();
        assert_abs_diff_eq!(r.rmse_diff, 0.0, epsilon = 1e-15);
        assert!(r.p_value > 0.5 && !r.significant);

        let r = group_report(&m, &p, &u, TestUnit::User).unwrap();
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn empty_group_is_rejected() {
        let m = const_model(1, 3.0);
        let t = RatingSet::from_interactions([Interaction::new(0, 0, 3.0, 0)]).unwrap();
        assert!(matches!(
            group_report(&m, &RatingSet::new(), &t, TestUnit::Rating),
            Err(EvalError::EmptyGroup("protected"))
        ));
        assert!(matches!(
            group_report(&m, &t, &RatingSet::new(), TestUnit::Rating),
            Err(EvalError::EmptyGroup("unprotected"))
        ));
    }

    fn point(iteration: usize, rmse_all: f64) -> TracePoint {
        TracePoint {
            iteration,
            n_known: iteration * 3,
            acq_protected: 1,
            acq_unprotected: 2,
            rmse_all,
            rmse_protected: rmse_all + 0.01,
            rmse_unprotected: rmse_all - 0.01,
            rmse_diff: 0.02,
            t_statistic: 2.5,
            p_value: 0.0125,
        }
    }

    #[test]
    fn csv_layout() {
        let trace = SimulationTrace {
            points: vec![point(0, 1.0), point(1, 0.9), point(2, 0.8)],
        };
        let text = trace_csv_string(&trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(
            lines[2],
            "1,3,1,2,0.900000,0.910000,0.890000,0.020000,2.500000,0.012500,0.950000"
        );
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn rolling_window_truncates_at_start() {
        let pts: Vec<TracePoint> = (0..15).map(|k| point(k, k as f64)).collect();
        let r = rolling_rmse(&pts);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[3], 1.5);
        // k = 12: mean of 3..=12
        assert_eq!(r[12], 7.5);
    }

    #[test]
    fn csv_reparse_is_byte_identical() {
        let trace = SimulationTrace {
            points: vec![point(0, 1.048_123), point(5, 0.999_999), point(10, -0.0)],
        };
        let text = trace_csv_string(&trace);
        let again = trace_csv_string(&parse_trace_csv(&text).unwrap());
        assert_eq!(text, again);
    }

    #[test]
    fn csv_file_write_rejects_empty_trace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        assert!(matches!(
            trace_to_csv(&SimulationTrace::default(), &path),
            Err(EvalError::EmptyTrace)
        ));
        trace_to_csv(&SimulationTrace { points: vec![point(0, 1.0)] }, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);
    }
}
