//! Positional error metrics and comparison reports.

use serde::Serialize;
use thiserror::Error;

use crate::sim::TruthTrack;
use crate::world::TimedPose;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("estimate at t={t} lies outside the truth span [{start}, {end}]")]
    OutsideTruthSpan { t: f64, start: f64, end: f64 },
    #[error("truth trajectory is empty or not strictly time-ordered")]
    BadTruth,
    #[error("error list is empty")]
    Empty,
    #[error("baseline RMSE must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("report needs at least one run and one estimator")]
    EmptyReport,
    #[error("run {run} has {got} summaries, expected {expected}")]
    RaggedRun { run: usize, got: usize, expected: usize },
}

/// Euclidean position error, in millimeters, of each estimate against the
/// truth interpolated to the estimate's timestamp.
pub fn position_errors(est: &[TimedPose], truth: &[TimedPose]) -> Result<Vec<f64>, EvalError> {
    let track = TruthTrack::new(truth).map_err(|_| EvalError::BadTruth)?;
    est.iter()
        .map(|e| {
            let tp = track.pose_at(e.t).ok_or(EvalError::OutsideTruthSpan {
                t: e.t,
                start: track.start(),
                end: track.end(),
            })?;
            Ok(1000.0 * e.pose.position().distance(&tp.position()))
        })
        .collect()
}

/// RMSE (mm) and population variance (mm^2) of an error list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub rmse: f64,
    pub variance: f64,
}

pub fn summarize(errors: &[f64]) -> Result<Summary, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let variance = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(Summary {
        rmse: mean_sq.sqrt(),
        variance,
    })
}

/// Relative RMSE reduction of `method` over `baseline`, in percent.
pub fn improvement(baseline_rmse: f64, method_rmse: f64) -> Result<f64, EvalError> {
    if !(baseline_rmse > 0.0) {
        return Err(EvalError::NonPositiveBaseline(baseline_rmse));
    }
    Ok(100.0 * (baseline_rmse - method_rmse) / baseline_rmse)
}

/// Per-run metrics for several estimators, the first being the baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub estimators: Vec<String>,
    pub runs: Vec<RunRow>,
    pub average: Vec<Summary>,
    /// Improvement of each estimator over the first, from averaged RMSE.
    /// The baseline's own entry is `None`.
    pub improvement_pct: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub run: usize,
    pub summaries: Vec<Summary>,
}

impl RunReport {
    pub fn new(estimators: Vec<String>, runs: Vec<RunRow>) -> Result<Self, EvalError> {
        if estimators.is_empty() || runs.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        for r in &runs {
            if r.summaries.len() != estimators.len() {
                return Err(EvalError::RaggedRun {
                    run: r.run,
                    got: r.summaries.len(),
                    expected: estimators.len(),
                });
            }
        }
        let n = runs.len() as f64;
        let average: Vec<Summary> = (0..estimators.len())
            .map(|k| Summary {
                rmse: runs.iter().map(|r| r.summaries[k].rmse).sum::<f64>() / n,
                variance: runs.iter().map(|r| r.summaries[k].variance).sum::<f64>() / n,
            })
            .collect();
        let improvement_pct = average
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if k == 0 {
                    None
                } else {
                    improvement(average[0].rmse, s.rmse).ok()
                }
            })
            .collect();
        Ok(Self {
            estimators,
            runs,
            average,
            improvement_pct,
        })
    }

    /// Table-shaped CSV: one row per run, an `average` row and an
    /// `improvement_pct` row (improvement under each RMSE column).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run");
        for name in &self.estimators {
            out.push_str(&format!(",{name}_rmse,{name}_var"));
        }
        out.push('\n');
        let row = |label: &str, sums: &[Summary]| {
            let mut line = label.to_string();
            for s in sums {
                line.push_str(&format!(",{:.4},{:.4}", s.rmse, s.variance));
            }
            line.push('\n');
            line
        };
        for r in &self.runs {
            out.push_str(&row(&r.run.to_string(), &r.summaries));
        }
        out.push_str(&row("average", &self.average));
        if self.estimators.len() > 1 {
            out.push_str("improvement_pct");
            for imp in &self.improvement_pct {
                match imp {
                    Some(v) => out.push_str(&format!(",{v:.4},")),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let runs: Vec<serde_json::Value> = self
            .runs
            .iter()
            .map(|r| {
                let mut obj = serde_json::Map::new();
                obj.insert("run".into(), r.run.into());
                for (name, s) in self.estimators.iter().zip(&r.summaries) {
                    obj.insert(name.clone(), serde_json::to_value(s).expect("summary serializes"));
                }
                obj.into()
            })
            .collect();
        let mut average = serde_json::Map::new();
        let mut improvement = serde_json::Map::new();
        for (k, name) in self.estimators.iter().enumerate() {
            average.insert(
                name.clone(),
                serde_json::to_value(self.average[k]).expect("summary serializes"),
            );
            if let Some(v) = self.improvement_pct[k] {
                improvement.insert(name.clone(), v.into());
            }
        }
        serde_json::json!({
            "estimators": self.estimators,
            "runs": runs,
            "average": average,
            "improvement_pct": improvement,
        })
    }
}

/// Per-timestamp error table: the union of all estimate times, with an
/// empty cell where an estimator has no output at that instant.
pub fn error_table(columns: &[Vec<(f64, f64)>]) -> Vec<(f64, Vec<Option<f64>>)> {
    let mut times: Vec<f64> = columns.iter().flatten().map(|(t, _)| *t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let mut cursors = vec![0usize; columns.len()];
    times
        .into_iter()
        .map(|t| {
            let cells = columns
                .iter()
                .zip(cursors.iter_mut())
                .map(|(col, cur)| {
                    while *cur < col.len() && col[*cur].0 < t - 1e-9 {
                        *cur += 1;
                    }
                    match col.get(*cur) {
                        Some(&(ct, e)) if (ct - t).abs() <= 1e-9 => Some(e),
                        _ => None,
                    }
                })
                .collect();
            (t, cells)
        })
        .collect()
}
