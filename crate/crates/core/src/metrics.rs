//! Agreement and error metrics over paired prediction/label series.
//!
//! All statistics are population statistics (divide by N). The concordance
//! correlation coefficient is
//!
//! ```text
//! ccc = 2 cov(y, p) / (var(y) + var(p) + (mean(y) - mean(p))^2)
//! ```
//!
//! which equals `2 rho sigma_y sigma_p / (...)`. A constant series has no
//! defined correlation; [`DegeneratePolicy`] selects whether that yields `0`
//! (the convention used inside training losses) or an error.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series is constant, correlation undefined")]
    DegenerateVariance,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// What to do when either series has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// CCC and its gradient are defined as zero.
    #[default]
    Zero,
    /// Return [`MetricError::DegenerateVariance`].
    Error,
}

/// Moments of a paired series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub mean_y: f64,
    pub mean_p: f64,
    pub var_y: f64,
    pub var_p: f64,
    pub covariance: f64,
}

impl SeriesStats {
    pub fn paired(y: &[f64], p: &[f64]) -> Result<Self> {
        check_pair(y, p, 1)?;
        let n = y.len() as f64;
        let mean_y = y.iter().sum::<f64>() / n;
        let mean_p = p.iter().sum::<f64>() / n;
        let mut var_y = 0.0;
        let mut var_p = 0.0;
        let mut covariance = 0.0;
        for (&a, &b) in y.iter().zip(p) {
            let dy = a - mean_y;
            let dp = b - mean_p;
            var_y += dy * dy;
            var_p += dp * dp;
            covariance += dy * dp;
        }
        Ok(Self {
            mean_y,
            mean_p,
            var_y: var_y / n,
            var_p: var_p / n,
            covariance: covariance / n,
        })
    }

    /// Pearson correlation, `None` when either variance is zero.
    pub fn pearson(&self) -> Option<f64> {
        if self.var_y <= 0.0 || self.var_p <= 0.0 {
            return None;
        }
        let r = self.covariance / (self.var_y.sqrt() * self.var_p.sqrt());
        Some(r.clamp(-1.0, 1.0))
    }
}

fn check_pair(y: &[f64], p: &[f64], min_len: usize) -> Result<()> {
    if y.len() != p.len() {
        return Err(MetricError::LengthMismatch(y.len(), p.len()));
    }
    if y.len() < min_len {
        return Err(MetricError::TooShort {
            needed: min_len,
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().chain(p).position(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(i % y.len()));
    }
    Ok(())
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

pub fn pearson(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p, 2)?;
    if is_constant(y) || is_constant(p) {
        return Err(MetricError::DegenerateVariance);
    }
    SeriesStats::paired(y, p)?
        .pearson()
        .ok_or(MetricError::DegenerateVariance)
}

/// Concordance correlation coefficient with degenerate series mapped to 0.
pub fn ccc(y: &[f64], p: &[f64]) -> Result<f64> {
    ccc_with(y, p, DegeneratePolicy::Zero)
}

/// Concordance correlation coefficient that rejects constant series.
pub fn ccc_strict(y: &[f64], p: &[f64]) -> Result<f64> {
    ccc_with(y, p, DegeneratePolicy::Error)
}

pub fn ccc_with(y: &[f64], p: &[f64], policy: DegeneratePolicy) -> Result<f64> {
    check_pair(y, p, 2)?;
    if is_constant(y) || is_constant(p) {
        return match policy {
            DegeneratePolicy::Zero => Ok(0.0),
            DegeneratePolicy::Error => Err(MetricError::DegenerateVariance),
        };
    }
    let s = SeriesStats::paired(y, p)?;
    let gap = s.mean_y - s.mean_p;
    // var_y + var_p and gap^2 are symmetric in (y, p) bit for bit.
    let denom = s.var_y + s.var_p + gap * gap;
    Ok((2.0 * s.covariance / denom).clamp(-1.0, 1.0))
}

pub fn mse(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p, 1)?;
    let sum: f64 = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

/// Gradient of `ccc(y, p)` with respect to each prediction `p_i`.
///
/// Zero when either series is constant, matching [`DegeneratePolicy::Zero`].
pub fn ccc_gradient(y: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    check_pair(y, p, 2)?;
    let n = y.len();
    if is_constant(y) || is_constant(p) {
        return Ok(vec![0.0; n]);
    }
    let s = SeriesStats::paired(y, p)?;
    let gap = s.mean_y - s.mean_p;
    let num = 2.0 * s.covariance;
    let den = s.var_y + s.var_p + gap * gap;
    let nf = n as f64;
    Ok(y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let d_num = 2.0 * (yi - s.mean_y) / nf;
            let d_den = 2.0 * (pi - s.mean_p) / nf - 2.0 * gap / nf;
            (d_num * den - num * d_den) / (den * den)
        })
        .collect())
}

/// CCC and MSE for one target variable.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VariableReport {
    pub ccc: f64,
    pub mse: f64,
}

impl VariableReport {
    pub fn compute(y: &[f64], p: &[f64]) -> Result<Self> {
        Ok(Self {
            ccc: ccc(y, p)?,
            mse: mse(y, p)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_examples() {
        assert_abs_diff_eq!(pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            pearson(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap(),
            0.8,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1., 2.], &[1.]), Err(MetricError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&[1., 1.], &[1., 2.]), Err(MetricError::DegenerateVariance));
        assert!(matches!(pearson(&[1.], &[2.]), Err(MetricError::TooShort { .. })));
    }

    #[test]
    fn ccc_examples() {
        assert_abs_diff_eq!(ccc(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ccc(&[0., 1.], &[1., 0.]).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            ccc(&[1., 2., 3.], &[2., 3., 4.]).unwrap(),
            4.0 / 7.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ccc_degenerate_policies() {
        let y = [0.1, 0.5, 0.9];
        let p = [0.3, 0.3, 0.3];
        assert_eq!(ccc(&y, &p).unwrap(), 0.0);
        assert_eq!(ccc_strict(&y, &p), Err(MetricError::DegenerateVariance));
        assert_eq!(ccc_gradient(&y, &p).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1., 2.], &[1., 2.]).unwrap(), 0.0);
        assert_eq!(mse(&[0., 0.], &[1., 1.]).unwrap(), 1.0);
        assert_abs_diff_eq!(mse(&[0., 1.], &[0.5, 0.5]).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(mse(&[0.], &[1., 2.]), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn gradient_vanishes_at_perfect_concordance() {
        let y = [0.2, -0.4, 0.9, 0.1, 0.5];
        for g in ccc_gradient(&y, &y).unwrap() {
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(mse(&[0., f64::NAN], &[0., 0.]), Err(MetricError::NonFinite(1)));
    }
}
