//! Prediction-quality metrics: R², MAE, RMSE, and the mean / worst-case
//! relative errors (PredE / WorstE).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction and ground truth must have equal nonzero length ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("ground-truth values must be positive, got {0}")]
    NonPositiveGt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Coefficient of determination; `None` when the ground truth has zero
    /// variance and R² is undefined.
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
    /// Mean relative error.
    pub prede: f64,
    /// Maximum relative error.
    pub worste: f64,
}

pub fn evaluate_metrics(pred: &[f64], gt: &[f64]) -> Result<Metrics, MetricsError> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    for &g in gt {
        if !(g > 0.0) {
            return Err(MetricsError::NonPositiveGt(g));
        }
    }
    let n = gt.len() as f64;
    let mean_gt = gt.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut rel_sum = 0.0;
    let mut rel_max = 0.0f64;
    for (&p, &g) in pred.iter().zip(gt) {
        let d = p - g;
        ss_res += d * d;
        ss_tot += (g - mean_gt) * (g - mean_gt);
        abs_sum += d.abs();
        sq_sum += d * d;
        let rel = d.abs() / g;
        rel_sum += rel;
        rel_max = rel_max.max(rel);
    }
    let r2 = if ss_tot > 0.0 {
        Some(1.0 - ss_res / ss_tot)
    } else {
        None
    };
    Ok(Metrics {
        r2,
        mae: abs_sum / n,
        rmse: (sq_sum / n).sqrt(),
        prede: rel_sum / n,
        worste: rel_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let gt = [1.0, 2.0, 3.0];
        let m = evaluate_metrics(&gt, &gt).unwrap();
        assert_eq!(m.r2, Some(1.0));
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.prede, 0.0);
        assert_eq!(m.worste, 0.0);
    }

    #[test]
    fn hand_computed_example() {
        // gt=[1,2,3], pred=[1,2,4]: MAE=1/3, RMSE=1/sqrt(3), R2=0.5,
        // PredE=1/9, WorstE=1/3.
        let m = evaluate_metrics(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((m.mae - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - 1.0 / 3.0_f64.sqrt()).abs() < 1e-15);
        assert!((m.r2.unwrap() - 0.5).abs() < 1e-15);
        assert!((m.prede - 1.0 / 9.0).abs() < 1e-15);
        assert!((m.worste - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identities_hold_on_random_data() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let n = 3 + (next() * 20.0) as usize;
            let gt: Vec<f64> = (0..n).map(|_| 1.0 + next()).collect();
            let pred: Vec<f64> = gt.iter().map(|g| g + (next() - 0.5) * 0.2).collect();
            let m = evaluate_metrics(&pred, &gt).unwrap();
            assert!(m.mae <= m.rmse + 1e-15);
            assert!(m.prede <= m.worste + 1e-15);
            assert!(m.r2.unwrap() <= 1.0);
        }
    }

    #[test]
    fn zero_variance_gt_flags_r2() {
        let m = evaluate_metrics(&[1.0, 1.1], &[2.0, 2.0]).unwrap();
        assert_eq!(m.r2, None);
        assert!(m.mae > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(evaluate_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(evaluate_metrics(&[], &[]).is_err());
        assert!(evaluate_metrics(&[1.0], &[0.0]).is_err());
    }
}
