//! Instrument-arm means and the generic Wald estimand.
//!
//! Every estimand in this crate is a ratio of two instrument-arm mean
//! contrasts. A [`TransformSpec`] names the numerator transform `f` and
//! denominator transform `h`; [`wald_components`] estimates the two
//! contrast coefficients together with their heteroskedasticity-robust
//! joint covariance, which downstream inference consumes unchanged.
//!
//! Point values can be computed against any [`MomentSource`]: the
//! empirical sample, or a synthetic population with exact moments.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sample::ObservedSample;

/// Guard below which a Wald denominator is treated as degenerate.
pub const DENOM_GUARD: f64 = 1e-8;

/// Scalar transform of a row `(y, t, x)`.
pub type RowFn = Arc<dyn Fn(u8, u8, &[f64]) -> f64 + Send + Sync>;

/// Wraps a closure as a [`RowFn`].
pub fn row_fn<F>(f: F) -> RowFn
where
    F: Fn(u8, u8, &[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

/// Numerator and denominator transforms of one Wald estimand.
#[derive(Clone)]
pub struct TransformSpec {
    /// Numerator transform of `(y, t, x)`.
    pub f: RowFn,
    /// Denominator transform of `(y, t)` (covariates are ignored by
    /// every built-in denominator).
    pub h: RowFn,
}

impl std::fmt::Debug for TransformSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformSpec").finish_non_exhaustive()
    }
}

/// Anything that can produce exact or empirical arm-conditional means.
pub trait MomentSource {
    /// `E[g(Y, T, X) | Z = arm]`.
    fn arm_mean_of(&self, arm: u8, g: &dyn Fn(u8, u8, &[f64]) -> f64) -> Result<f64>;

    /// `P[Z = 1]`.
    fn pz_one(&self) -> f64;
}

impl MomentSource for ObservedSample {
    fn arm_mean_of(&self, arm: u8, g: &dyn Fn(u8, u8, &[f64]) -> f64) -> Result<f64> {
        self.require_binary()?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in self.rows() {
            if row.z == arm as i64 {
                sum += g(row.y, row.t, &row.x);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyArm(arm));
        }
        Ok(sum / count as f64)
    }

    fn pz_one(&self) -> f64 {
        let n1 = self.rows().iter().filter(|r| r.z == 1).count();
        n1 as f64 / self.n() as f64
    }
}

/// Arithmetic mean of `g` over the rows with `z = arm`.
pub fn arm_mean<S: MomentSource + ?Sized>(
    source: &S,
    g: &dyn Fn(u8, u8, &[f64]) -> f64,
    arm: u8,
) -> Result<f64> {
    source.arm_mean_of(arm, g)
}

/// Arm contrast `E[g | Z=1] - E[g | Z=0]`.
pub fn arm_contrast<S: MomentSource + ?Sized>(
    source: &S,
    g: &dyn Fn(u8, u8, &[f64]) -> f64,
) -> Result<f64> {
    Ok(source.arm_mean_of(1, g)? - source.arm_mean_of(0, g)?)
}

/// Estimated coefficients of a Wald estimand and their joint robust
/// covariance.
///
/// `beta1`/`beta2` are the numerator and denominator contrasts; `cov`
/// already includes the `1/n_z` factors, so it is the covariance of the
/// estimated coefficients themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldComponents {
    pub beta1: f64,
    pub beta2: f64,
    pub cov: [[f64; 2]; 2],
    pub n: usize,
    pub pz1: f64,
}

impl WaldComponents {
    pub fn var_beta1(&self) -> f64 {
        self.cov[0][0]
    }

    pub fn var_beta2(&self) -> f64 {
        self.cov[1][1]
    }

    pub fn cov_beta12(&self) -> f64 {
        self.cov[0][1]
    }
}

fn arm_stats(
    sample: &ObservedSample,
    spec: &TransformSpec,
    arm: u8,
) -> Result<(usize, f64, f64, [[f64; 2]; 2])> {
    let rows: Vec<_> = sample.rows().iter().filter(|r| r.z == arm as i64).collect();
    if rows.is_empty() {
        return Err(Error::EmptyArm(arm));
    }
    let n = rows.len();
    let mut mean_f = 0.0;
    let mut mean_h = 0.0;
    for r in &rows {
        mean_f += (spec.f)(r.y, r.t, &r.x);
        mean_h += (spec.h)(r.y, r.t, &r.x);
    }
    mean_f /= n as f64;
    mean_h /= n as f64;

    let mut s = [[0.0f64; 2]; 2];
    if n >= 2 {
        for r in &rows {
            let df = (spec.f)(r.y, r.t, &r.x) - mean_f;
            let dh = (spec.h)(r.y, r.t, &r.x) - mean_h;
            s[0][0] += df * df;
            s[0][1] += df * dh;
            s[1][1] += dh * dh;
        }
        let denom = (n - 1) as f64;
        s[0][0] /= denom;
        s[0][1] /= denom;
        s[1][1] /= denom;
        s[1][0] = s[0][1];
    }
    Ok((n, mean_f, mean_h, s))
}

/// Difference-in-means coefficients of the Wald estimand defined by
/// `spec`, with their robust covariance.
///
/// The contrast equals the coefficient on the instrument from a
/// regression of the transform on the instrument and a constant; the
/// covariance stacks the within-arm sample covariances of `(f, h)`
/// scaled by the arm sizes.
pub fn wald_components(sample: &ObservedSample, spec: &TransformSpec) -> Result<WaldComponents> {
    sample.require_binary()?;
    let (n1, f1, h1, s1) = arm_stats(sample, spec, 1)?;
    let (n0, f0, h0, s0) = arm_stats(sample, spec, 0)?;
    let mut cov = [[0.0f64; 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            cov[j][k] = s1[j][k] / n1 as f64 + s0[j][k] / n0 as f64;
        }
    }
    let n = n0 + n1;
    Ok(WaldComponents {
        beta1: f1 - f0,
        beta2: h1 - h0,
        cov,
        n,
        pz1: n1 as f64 / n as f64,
    })
}

/// The ratio `beta1 / beta2`, guarded against a degenerate denominator.
pub fn wald_ratio(c: &WaldComponents) -> Result<f64> {
    if c.beta2.abs() < DENOM_GUARD {
        return Err(Error::WeakFirstStage {
            value: c.beta2,
            guard: DENOM_GUARD,
        });
    }
    Ok(c.beta1 / c.beta2)
}

/// Point value of the Wald estimand defined by `spec` over any moment
/// source. Same guard as [`wald_ratio`].
pub fn wald_point<S: MomentSource + ?Sized>(source: &S, spec: &TransformSpec) -> Result<f64> {
    let beta1 = arm_contrast(source, spec.f.as_ref())?;
    let beta2 = arm_contrast(source, spec.h.as_ref())?;
    if beta2.abs() < DENOM_GUARD {
        return Err(Error::WeakFirstStage {
            value: beta2,
            guard: DENOM_GUARD,
        });
    }
    Ok(beta1 / beta2)
}
