//! Pooled error metrics for horizon predictions, plus the evaluation
//! entry points that run a trained predictor over a held-out set of raw
//! windows.
//!
//! Accuracy is the range-normalized RMSE complement,
//! `100 · max(0, 1 − RMSE_axis / range_axis)`, with the range taken over
//! the true test values on that axis. The literature this toolkit
//! follows reports accuracy percentages without defining them; this
//! stand-in is printed in every report header so nobody mistakes it for
//! something else.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    hold_predict, linear_predict, predict_baseline, Baseline, BaselineKind,
};
use crate::channel::ChannelError;
use crate::data::{DataError, NormStats, SequenceWindow};
use crate::model::{predict, Model, ModelError};
use crate::tensor::Tensor;

/// The accuracy definition, verbatim, for report headers.
pub const ACCURACY_FORMULA: &str =
    "accuracy_axis(%) = 100 * max(0, 1 - RMSE_axis / range_axis), range over the true test values";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot compute metrics over an empty set")]
    Empty,
    #[error("prediction shape {got:?} does not match truth {want:?} at pair {index}")]
    Shape {
        index: usize,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Errors pooled over every window, step, and axis, in both spaces, plus
/// the per-axis accuracy percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub windows: usize,
    /// Pooled scalar residual count: windows × steps × 3 axes.
    pub samples: usize,
    pub meter: ErrorStats,
    pub normalized: ErrorStats,
    /// X, Y, Z accuracy percent per [`ACCURACY_FORMULA`].
    pub accuracy: [f64; 3],
}

/// Pool meter-space prediction/truth pairs (each `[L, 3]`). The
/// normalized-space variants divide residuals by the per-axis training
/// standard deviation from `stats`.
pub fn compute_metrics(
    predictions: &[Tensor],
    truths: &[Tensor],
    stats: &NormStats,
) -> Result<MetricsReport, EvalError> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(EvalError::Empty);
    }
    let mut sq_m = 0.0;
    let mut abs_m = 0.0;
    let mut sq_n = 0.0;
    let mut abs_n = 0.0;
    let mut axis_sq = [0.0f64; 3];
    let mut axis_min = [f64::INFINITY; 3];
    let mut axis_max = [f64::NEG_INFINITY; 3];
    let mut samples = 0usize;
    let mut axis_count = 0usize;

    for (index, (p, t)) in predictions.iter().zip(truths).enumerate() {
        let ok = p.shape() == t.shape() && p.rank() == 2 && p.shape()[1] == 3;
        if !ok {
            return Err(EvalError::Shape {
                index,
                got: p.shape().to_vec(),
                want: t.shape().to_vec(),
            });
        }
        let rows = p.shape()[0];
        for r in 0..rows {
            for a in 0..3 {
                let truth = t.at2(r, a);
                let d = p.at2(r, a) - truth;
                sq_m += d * d;
                abs_m += d.abs();
                let z = d / stats.pos_std[a];
                sq_n += z * z;
                abs_n += z.abs();
                axis_sq[a] += d * d;
                axis_min[a] = axis_min[a].min(truth);
                axis_max[a] = axis_max[a].max(truth);
                samples += 1;
            }
            axis_count += 1;
        }
    }
    if samples == 0 {
        return Err(EvalError::Empty);
    }

    let n = samples as f64;
    let meter = ErrorStats {
        mse: sq_m / n,
        mae: abs_m / n,
        rmse: (sq_m / n).sqrt(),
    };
    let normalized = ErrorStats {
        mse: sq_n / n,
        mae: abs_n / n,
        rmse: (sq_n / n).sqrt(),
    };
    let mut accuracy = [0.0f64; 3];
    for a in 0..3 {
        let rmse_axis = (axis_sq[a] / axis_count as f64).sqrt();
        let range = axis_max[a] - axis_min[a];
        accuracy[a] = if range > 0.0 {
            100.0 * (1.0 - rmse_axis / range).max(0.0)
        } else if rmse_axis == 0.0 {
            // Constant truth hit exactly: arbitrarily call that perfect.
            100.0
        } else {
            0.0
        };
    }
    Ok(MetricsReport {
        windows: predictions.len(),
        samples,
        meter,
        normalized,
        accuracy,
    })
}

/// Human-readable report; the first line is always the accuracy formula.
pub fn report_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str("# ");
    s.push_str(ACCURACY_FORMULA);
    s.push('\n');
    s.push_str(&format!("windows={} samples={}\n", r.windows, r.samples));
    s.push_str(&format!(
        "meter:      MSE={:.6e} MAE={:.6e} RMSE={:.6e}\n",
        r.meter.mse, r.meter.mae, r.meter.rmse
    ));
    s.push_str(&format!(
        "normalized: MSE={:.6e} MAE={:.6e} RMSE={:.6e}\n",
        r.normalized.mse, r.normalized.mae, r.normalized.rmse
    ));
    s.push_str(&format!(
        "accuracy%:  X={:.2} Y={:.2} Z={:.2}\n",
        r.accuracy[0], r.accuracy[1], r.accuracy[2]
    ));
    s
}

/// One-row CSV with a documented header; the formula rides in a comment
/// line so the file stands alone.
pub fn write_metrics_csv(r: &MetricsReport, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {ACCURACY_FORMULA}")?;
    writeln!(
        w,
        "windows,samples,mse,mae,rmse,mse_norm,mae_norm,rmse_norm,accuracy_x,accuracy_y,accuracy_z"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.windows,
        r.samples,
        r.meter.mse,
        r.meter.mae,
        r.meter.rmse,
        r.normalized.mse,
        r.normalized.mae,
        r.normalized.rmse,
        r.accuracy[0],
        r.accuracy[1],
        r.accuracy[2]
    )?;
    w.flush()
}

/// One timestep of a truth-vs-prediction trace, for external plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub time_s: f64,
    pub truth: [f64; 3],
    pub prediction: [f64; 3],
    /// Whether the underlying packet was lost at this step.
    pub lost: bool,
}

/// Tidy series CSV: time, truth, prediction, loss mask.
pub fn write_series_csv(rows: &[SeriesRow], path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "time_s,true_x,true_y,true_z,pred_x,pred_y,pred_z,lost")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.time_s,
            r.truth[0],
            r.truth[1],
            r.truth[2],
            r.prediction[0],
            r.prediction[1],
            r.prediction[2],
            u8::from(r.lost)
        )?;
    }
    w.flush()
}

/// Run the trained model over raw (meter-space) held-out windows and
/// pool the metrics.
pub fn evaluate_model_on(
    model: &Model,
    test: &[SequenceWindow],
) -> Result<MetricsReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let stats = model.stats.clone().ok_or(ModelError::MissingStats)?;
    let mut preds = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for w in test {
        preds.push(predict(model, w, None)?.positions);
        truths.push(w.target.clone());
    }
    compute_metrics(&preds, &truths, &stats)
}

/// Same for a trained baseline network.
pub fn evaluate_baseline_on(
    b: &Baseline,
    test: &[SequenceWindow],
) -> Result<MetricsReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let stats = b.stats.clone().ok_or(ModelError::MissingStats)?;
    let mut preds = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for w in test {
        preds.push(predict_baseline(b, w)?.positions);
        truths.push(w.target.clone());
    }
    compute_metrics(&preds, &truths, &stats)
}

/// Same for the closed-form extrapolators, which act on the raw windows
/// directly; `stats` only feeds the normalized-space report columns.
pub fn evaluate_closed_form_on(
    kind: BaselineKind,
    test: &[SequenceWindow],
    stats: &NormStats,
) -> Result<MetricsReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut preds = Vec::with_capacity(test.len());
    let mut truths = Vec::with_capacity(test.len());
    for w in test {
        let p = match kind {
            BaselineKind::ZeroOrderHold => hold_predict(w),
            BaselineKind::LinearExtrapolation => linear_predict(w, w.dt),
            other => {
                return Err(EvalError::Model(ModelError::Config {
                    reason: format!("{} is not closed-form", other.name()),
                }))
            }
        };
        preds.push(p.positions);
        truths.push(w.target.clone());
    }
    compute_metrics(&preds, &truths, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::random_tensor;
    use crate::rng;

    fn unit_stats() -> NormStats {
        NormStats {
            pos_mean: [0.0; 3],
            pos_std: [1.0; 3],
            net_mean: [0.0; 3],
            net_std: [1.0; 3],
        }
    }

    #[test]
    fn perfect_prediction_scores_zero_error_full_accuracy() {
        let t = random_tensor(&[6, 3], &mut rng::seeded(1));
        let r = compute_metrics(&[t.clone()], &[t], &unit_stats()).unwrap();
        assert_eq!(r.meter.mse, 0.0);
        assert_eq!(r.meter.mae, 0.0);
        assert_eq!(r.meter.rmse, 0.0);
        assert_eq!(r.accuracy, [100.0, 100.0, 100.0]);
        assert_eq!(r.windows, 1);
        assert_eq!(r.samples, 18);
    }

    #[test]
    fn constant_unit_error_gives_unit_mse_mae_rmse() {
        let truth = random_tensor(&[5, 3], &mut rng::seeded(2));
        let pred = truth.map(|v| v + 1.0);
        let r = compute_metrics(&[pred], &[truth], &unit_stats()).unwrap();
        assert!((r.meter.mse - 1.0).abs() < 1e-12);
        assert!((r.meter.mae - 1.0).abs() < 1e-12);
        assert!((r.meter.rmse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_equal_to_range_zeroes_that_axis() {
        // Truth spans exactly [0, 2] on x; constant error of 2 on x only.
        let truth = Tensor::new(
            vec![2, 3],
            vec![0.0, 5.0, 5.0, 2.0, 5.0 + 1.0, 5.0 + 1.0],
        )
        .unwrap();
        let pred = Tensor::new(
            vec![2, 3],
            vec![2.0, 5.0, 5.0, 4.0, 6.0, 6.0],
        )
        .unwrap();
        let r = compute_metrics(&[pred], &[truth], &unit_stats()).unwrap();
        assert!(r.accuracy[0].abs() < 1e-9, "x accuracy {}", r.accuracy[0]);
        assert_eq!(r.accuracy[1], 100.0);
        assert_eq!(r.accuracy[2], 100.0);
    }

    #[test]
    fn report_invariants_hold_on_random_instances() {
        let mut r = rng::seeded(3);
        for _ in 0..50 {
            let truth = random_tensor(&[7, 3], &mut r);
            let pred = random_tensor(&[7, 3], &mut r);
            let stats = NormStats {
                pos_std: [0.5, 2.0, 0.1],
                ..unit_stats()
            };
            let rep = compute_metrics(&[pred], &[truth], &stats).unwrap();
            for e in [rep.meter, rep.normalized] {
                assert!((e.rmse * e.rmse - e.mse).abs() < 1e-12);
                assert!(e.mae <= e.rmse + 1e-15);
            }
            for a in rep.accuracy {
                assert!((0.0..=100.0).contains(&a));
            }
        }
    }

    #[test]
    fn gross_errors_clamp_accuracy_at_zero() {
        let truth = random_tensor(&[4, 3], &mut rng::seeded(4)).map(|v| 0.01 * v);
        let pred = truth.map(|v| v + 100.0);
        let r = compute_metrics(&[pred], &[truth], &unit_stats()).unwrap();
        assert_eq!(r.accuracy, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_or_mismatched_sets_are_rejected() {
        assert!(matches!(
            compute_metrics(&[], &[], &unit_stats()),
            Err(EvalError::Empty)
        ));
        let a = random_tensor(&[4, 3], &mut rng::seeded(5));
        let b = random_tensor(&[5, 3], &mut rng::seeded(6));
        assert!(matches!(
            compute_metrics(&[a], &[b], &unit_stats()),
            Err(EvalError::Shape { index: 0, .. })
        ));
    }

    #[test]
    fn normalized_space_scales_by_axis_deviation() {
        let truth = Tensor::zeros(&[1, 3]);
        let pred = Tensor::new(vec![1, 3], vec![1.0, 2.0, 4.0]).unwrap();
        let stats = NormStats {
            pos_std: [1.0, 2.0, 4.0],
            ..unit_stats()
        };
        let r = compute_metrics(&[pred], &[truth], &stats).unwrap();
        // Every z-residual is exactly 1.
        assert!((r.normalized.mse - 1.0).abs() < 1e-12);
        assert!((r.normalized.mae - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_text_leads_with_the_formula() {
        let t = random_tensor(&[3, 3], &mut rng::seeded(7));
        let r = compute_metrics(&[t.clone()], &[t], &unit_stats()).unwrap();
        let text = report_text(&r);
        assert!(text.starts_with(&format!("# {ACCURACY_FORMULA}")));
        assert!(text.contains("accuracy%"));
    }

    #[test]
    fn csv_outputs_carry_documented_headers() {
        let t = random_tensor(&[3, 3], &mut rng::seeded(8));
        let r = compute_metrics(&[t.clone()], &[t], &unit_stats()).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let mpath = dir.path().join("metrics.csv");
        write_metrics_csv(&r, &mpath).unwrap();
        let text = std::fs::read_to_string(&mpath).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# accuracy_axis"));
        assert_eq!(
            lines.next().unwrap(),
            "windows,samples,mse,mae,rmse,mse_norm,mae_norm,rmse_norm,accuracy_x,accuracy_y,accuracy_z"
        );
        assert_eq!(lines.count(), 1);

        let spath = dir.path().join("series.csv");
        let rows = vec![SeriesRow {
            time_s: 0.5,
            truth: [1.0, 2.0, 3.0],
            prediction: [1.1, 2.1, 3.1],
            lost: true,
        }];
        write_series_csv(&rows, &spath).unwrap();
        let text = std::fs::read_to_string(&spath).unwrap();
        assert!(text.starts_with("time_s,true_x,true_y,true_z,pred_x,pred_y,pred_z,lost\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",1"));
    }
}
