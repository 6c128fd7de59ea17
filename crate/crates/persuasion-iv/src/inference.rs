//! Delta-method and weak-identification-robust inference for Wald-form
//! estimands.
//!
//! Both procedures consume the estimated coefficients and their joint
//! covariance from [`WaldComponents`]; the covariance already carries
//! the `1/n` factors, so no further scaling enters the test statistics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::moments::{wald_ratio, WaldComponents};

/// Point estimate with a delta-method standard error and symmetric
/// normal confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioInference {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
}

/// One interval of an inverted confidence set; `None` endpoints mark
/// sides that ran off the search grid (unbounded in practice).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArInterval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl ArInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }
}

/// Inverted weak-identification-robust confidence set.
///
/// `statistic` and `p_value` report the test of the zero-ratio null;
/// the set is the union of closed intervals of non-rejected values,
/// possibly disconnected or unbounded.
#[derive(Debug, Clone, Serialize)]
pub struct ArResult {
    pub statistic: f64,
    pub p_value: f64,
    pub ci: Vec<ArInterval>,
    pub alpha: f64,
}

impl ArResult {
    pub fn contains(&self, x: f64) -> bool {
        self.ci.iter().any(|i| i.contains(x))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "alpha must lie in (0,1), got {alpha}"
        )))
    }
}

/// Delta-method inference on the ratio `beta1 / beta2`.
pub fn delta_inference(c: &WaldComponents, alpha: f64) -> Result<RatioInference> {
    check_alpha(alpha)?;
    let estimate = wald_ratio(c)?;
    let b2 = c.beta2;
    let se2 = c.var_beta1() / (b2 * b2) - 2.0 * c.beta1 * c.cov_beta12() / (b2 * b2 * b2)
        + c.beta1 * c.beta1 * c.var_beta2() / (b2 * b2 * b2 * b2);
    let se = se2.max(0.0).sqrt();
    let z = Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    Ok(RatioInference {
        estimate,
        se,
        ci_lo: estimate - z * se,
        ci_hi: estimate + z * se,
        alpha,
    })
}

/// Variance of `beta1 - p0 * beta2` under the hypothesized ratio.
fn gamma_at(c: &WaldComponents, p0: f64) -> f64 {
    c.var_beta1() - 2.0 * p0 * c.cov_beta12() + p0 * p0 * c.var_beta2()
}

/// Test statistic of the robust test of `H0: beta1/beta2 = p0`.
pub fn ar_statistic(c: &WaldComponents, p0: f64) -> Result<f64> {
    let gamma = gamma_at(c, p0);
    if gamma <= 0.0 {
        return Err(Error::NonPositiveVariance(gamma));
    }
    let dev = c.beta1 - p0 * c.beta2;
    Ok(dev * dev / gamma)
}

/// Robust test of `H0: beta1/beta2 = p0`; rejects when the statistic
/// exceeds the chi-squared(1) quantile at `1 - alpha`.
pub fn ar_test(c: &WaldComponents, p0: f64, alpha: f64) -> Result<(f64, bool)> {
    check_alpha(alpha)?;
    let statistic = ar_statistic(c, p0)?;
    let crit = ChiSquared::new(1.0)
        .expect("chi squared with 1 dof")
        .inverse_cdf(1.0 - alpha);
    Ok((statistic, statistic > crit))
}

/// P-value of the robust test at `p0`.
pub fn ar_p_value(c: &WaldComponents, p0: f64) -> Result<f64> {
    let statistic = ar_statistic(c, p0)?;
    let chi = ChiSquared::new(1.0).expect("chi squared with 1 dof");
    Ok(1.0 - chi.cdf(statistic))
}

/// Search grid for the confidence-set inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    /// Default grid: the point estimate plus/minus ten delta-method
    /// standard errors, 2001 points.
    pub fn default_for(c: &WaldComponents, alpha: f64) -> Result<GridSpec> {
        let inference = delta_inference(c, alpha)?;
        let half = 10.0 * inference.se;
        if !(half.is_finite() && half > 0.0) {
            return Err(Error::DegenerateGrid(format!(
                "cannot derive a grid from a standard error of {}",
                inference.se
            )));
        }
        Ok(GridSpec {
            lo: inference.estimate - half,
            hi: inference.estimate + half,
            points: 2001,
        })
    }
}

const BISECTION_TOL: f64 = 1e-6;

/// Inverts the robust test over a grid of hypothesized ratios.
///
/// Contiguous runs of non-rejected points merge into intervals whose
/// endpoints are refined by bisection; runs touching the grid edge are
/// flagged as unbounded on that side. Points where the null variance
/// is non-positive cannot be rejected and stay in the set.
pub fn ar_confidence_set(
    c: &WaldComponents,
    alpha: f64,
    grid: Option<GridSpec>,
) -> Result<ArResult> {
    check_alpha(alpha)?;
    let grid = match grid {
        Some(g) => g,
        None => GridSpec::default_for(c, alpha)?,
    };
    if !grid.lo.is_finite() || !grid.hi.is_finite() || grid.lo >= grid.hi || grid.points < 2 {
        return Err(Error::DegenerateGrid(format!(
            "need finite lo < hi and at least two points, got [{}, {}] with {}",
            grid.lo, grid.hi, grid.points
        )));
    }
    let crit = ChiSquared::new(1.0)
        .expect("chi squared with 1 dof")
        .inverse_cdf(1.0 - alpha);
    let rejects = |p0: f64| -> bool {
        match ar_statistic(c, p0) {
            Ok(stat) => stat > crit,
            Err(_) => false,
        }
    };
    let step = (grid.hi - grid.lo) / (grid.points - 1) as f64;
    let point = |i: usize| grid.lo + step * i as f64;

    // refine a rejection boundary between a kept and a rejected point
    let refine = |kept: f64, rejected: f64| -> f64 {
        let mut a = kept;
        let mut b = rejected;
        while (a - b).abs() > BISECTION_TOL {
            let mid = 0.5 * (a + b);
            if rejects(mid) {
                b = mid;
            } else {
                a = mid;
            }
        }
        a
    };

    let mut intervals: Vec<ArInterval> = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..grid.points {
        let kept = !rejects(point(i));
        if kept && run_start.is_none() {
            run_start = Some(i);
        }
        let run_ends = !kept || i == grid.points - 1;
        if let Some(start) = run_start {
            if run_ends {
                let end = if kept { i } else { i - 1 };
                let lo = if start == 0 {
                    None
                } else {
                    Some(refine(point(start), point(start - 1)))
                };
                let hi = if end == grid.points - 1 {
                    None
                } else {
                    Some(refine(point(end), point(end + 1)))
                };
                intervals.push(ArInterval { lo, hi });
                run_start = None;
            }
        }
    }

    let statistic = ar_statistic(c, 0.0).unwrap_or(f64::INFINITY);
    let p_value = ar_p_value(c, 0.0).unwrap_or(0.0);
    Ok(ArResult {
        statistic,
        p_value,
        ci: intervals,
        alpha,
    })
}
