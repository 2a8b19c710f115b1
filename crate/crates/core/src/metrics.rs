//! Held-out evaluation metrics: MSE, concordance index and r²m.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {predictions} predictions vs {affinities} affinities")]
    LengthMismatch { predictions: usize, affinities: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("no comparable pairs: all affinities are equal")]
    NoComparablePairs,
    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

fn check(p: &[f64], y: &[f64], needed: usize) -> Result<(), MetricsError> {
    if p.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: p.len(),
            affinities: y.len(),
        });
    }
    if p.len() < needed {
        return Err(MetricsError::TooFew { needed, got: p.len() });
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite("predictions"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite("affinities"));
    }
    Ok(())
}

/// `(1/N) Σ (p_i − ϱ_i)²`, accumulated in the same order as the training loss.
pub fn mse_metric(predictions: &[f64], affinities: &[f64]) -> Result<f64, MetricsError> {
    check(predictions, affinities, 1)?;
    let total: f64 = predictions
        .iter()
        .zip(affinities)
        .map(|(p, y)| {
            let d = p - y;
            d * d
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Concordance index and the number of comparable pairs `T`.
///
/// Every ordered pair with `ϱ_i > ϱ_j` counts; a correctly ordered
/// prediction scores 1, a tie 0.5. Quadratic in `n`.
pub fn concordance_index(predictions: &[f64], affinities: &[f64]) -> Result<(f64, u64), MetricsError> {
    check(predictions, affinities, 2)?;
    // twice the score, so halves stay integral
    let mut doubled: u64 = 0;
    let mut pairs: u64 = 0;
    let n = predictions.len();
    for i in 0..n {
        for j in 0..n {
            if affinities[i] > affinities[j] {
                pairs += 1;
                let d = predictions[i] - predictions[j];
                doubled += if d > 0.0 {
                    2
                } else if d == 0.0 {
                    1
                } else {
                    0
                };
            }
        }
    }
    if pairs == 0 {
        return Err(MetricsError::NoComparablePairs);
    }
    Ok((doubled as f64 / (2 * pairs) as f64, pairs))
}

/// Components of the r²m computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2m {
    pub r2: f64,
    pub r2_0: f64,
    pub r2m: f64,
    /// `r² − r²₀` was negative and clamped to 0.
    pub clamped: bool,
}

/// `r² (1 − √(r² − r²₀))` with `r²₀` from the fit `ϱ ≈ k·p` through the origin.
pub fn r_squared_m(predictions: &[f64], affinities: &[f64]) -> Result<R2m, MetricsError> {
    check(predictions, affinities, 3)?;
    let n = predictions.len() as f64;
    let mean_p = predictions.iter().sum::<f64>() / n;
    let mean_y = affinities.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, y) in predictions.iter().zip(affinities) {
        let (dp, dy) = (p - mean_p, y - mean_y);
        sxy += dp * dy;
        sxx += dp * dp;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::ZeroVariance("predictions"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ZeroVariance("affinities"));
    }
    let r2 = sxy * sxy / (sxx * syy);

    let k = predictions.iter().zip(affinities).map(|(p, y)| p * y).sum::<f64>()
        / predictions.iter().map(|p| p * p).sum::<f64>();
    let residual: f64 = predictions
        .iter()
        .zip(affinities)
        .map(|(p, y)| {
            let e = y - k * p;
            e * e
        })
        .sum();
    let r2_0 = 1.0 - residual / syy;

    let gap = r2 - r2_0;
    let clamped = gap < 0.0;
    if clamped {
        log::debug!("r² − r²₀ = {gap:e} is negative; clamped to 0");
    }
    let r2m = r2 * (1.0 - gap.max(0.0).sqrt());
    Ok(R2m {
        r2,
        r2_0,
        r2m,
        clamped,
    })
}

/// One evaluation pass, serialized as a single JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// Absent when every affinity is equal.
    pub ci: Option<f64>,
    /// Absent when either vector has zero variance or `n < 3`.
    pub r2m: Option<f64>,
    pub n: usize,
    pub comparable_pairs: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_digest: Option<String>,
}

impl MetricsReport {
    pub fn compute(predictions: &[f64], affinities: &[f64]) -> Result<Self, MetricsError> {
        let mse = mse_metric(predictions, affinities)?;
        let (ci, comparable_pairs) = match concordance_index(predictions, affinities) {
            Ok((ci, t)) => (Some(ci), t),
            Err(MetricsError::NoComparablePairs | MetricsError::TooFew { .. }) => (None, 0),
            Err(e) => return Err(e),
        };
        let r2m = match r_squared_m(predictions, affinities) {
            Ok(r) => Some(r.r2m),
            Err(MetricsError::ZeroVariance(_) | MetricsError::TooFew { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            mse,
            ci,
            r2m,
            n: predictions.len(),
            comparable_pairs,
            config_digest: None,
        })
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.config_digest = Some(digest.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_ci_values() {
        assert_eq!(concordance_index(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), (1.0, 3));
        assert_eq!(concordance_index(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap().0, 0.0);
        assert_eq!(concordance_index(&[0.5, 0.5], &[1.0, 2.0]).unwrap().0, 0.5);
        assert_eq!(concordance_index(&[1.0, 3.0, 2.0], &[1.0, 2.0, 3.0]).unwrap().0, 2.0 / 3.0);
        assert_eq!(
            concordance_index(&[1.0, 2.0], &[4.0, 4.0]),
            Err(MetricsError::NoComparablePairs)
        );
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_metric(&[0.0], &[2.0]).unwrap(), 4.0);
        assert!(matches!(mse_metric(&[0.0], &[]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn perfect_prediction_r2m() {
        let y = [5.0, 6.5, 7.0, 8.2];
        let r = r_squared_m(&y, &y).unwrap();
        assert!((r.r2m - 1.0).abs() < 1e-12, "{r:?}");
        assert!(matches!(r_squared_m(&[1.0; 4], &y), Err(MetricsError::ZeroVariance(_))));
    }

    #[test]
    fn report_schema() {
        let report = MetricsReport::compute(&[1.0, 2.0, 3.5], &[1.0, 2.0, 3.0]).unwrap();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in ["mse", "ci", "r2m", "n", "comparable_pairs"] {
            assert!(json.get(key).is_some(), "{key} missing");
        }
        assert_eq!(json["n"], 3);
        assert_eq!(json["comparable_pairs"], 3);
    }
}
