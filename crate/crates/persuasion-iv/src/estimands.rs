//! Identification formulas for complier potential-outcome distributions
//! and persuasion-type profiling.
//!
//! Every estimand here reduces to a Wald ratio: a contrast of
//! instrument-arm means for a numerator transform over a contrast for a
//! denominator transform. Where a formula carries the
//! `sum over z of P[Z=z]` weighting, the weighting is folded into the
//! numerator transform using the plug-in assignment share, so the
//! generic machinery in [`crate::moments`] and [`crate::inference`]
//! applies uniformly.
//!
//! Point values are available against any [`MomentSource`] (empirical
//! sample or exact synthetic population); the `*_profile` and
//! `*_inference` variants additionally return the estimated
//! [`WaldComponents`] for standard errors and weak-IV-robust tests.

use crate::error::{Error, Result};
use crate::moments::{
    arm_mean, row_fn, wald_components, wald_point, MomentSource, RowFn, TransformSpec,
    WaldComponents, DENOM_GUARD,
};
use crate::sample::ObservedSample;

/// Joint distribution of `(Y(0), Y(1))` among compliers.
///
/// `p11` is the always-voter share, `p00` the never-voter share, `p01`
/// the mobilised share; the three sum to one as an in-sample algebraic
/// identity. Finite-sample values can fall outside `[0, 1]` and are
/// reported raw; [`ComplierJointPo::clamped`] is the opt-in truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplierJointPo {
    pub p11: f64,
    pub p00: f64,
    pub p01: f64,
    /// Estimated first stage (complier share).
    pub first_stage: f64,
}

impl ComplierJointPo {
    /// Whether every share already lies in `[0, 1]`.
    pub fn is_proper(&self) -> bool {
        [self.p11, self.p00, self.p01]
            .iter()
            .all(|p| (0.0..=1.0).contains(p))
    }

    /// Copy with each share truncated to `[0, 1]`. Truncation breaks
    /// the exact sum-to-one identity; the raw values are the estimates.
    pub fn clamped(&self) -> Self {
        Self {
            p11: self.p11.clamp(0.0, 1.0),
            p00: self.p00.clamp(0.0, 1.0),
            p01: self.p01.clamp(0.0, 1.0),
            first_stage: self.first_stage,
        }
    }
}

/// Marginal distributions of `Y(0)` and `Y(1)` among compliers,
/// indexed by outcome value.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPo {
    pub p_y0: [f64; 2],
    pub p_y1: [f64; 2],
}

impl MarginalPo {
    /// `P[Y(0) = 1 | complier]`.
    pub fn y0_one(&self) -> f64 {
        self.p_y0[1]
    }

    /// `P[Y(1) = 1 | complier]`.
    pub fn y1_one(&self) -> f64 {
        self.p_y1[1]
    }

    /// Copy with each probability truncated to `[0, 1]` (opt-in; raw
    /// values are the estimates).
    pub fn clamped(&self) -> Self {
        Self {
            p_y0: self.p_y0.map(|p| p.clamp(0.0, 1.0)),
            p_y1: self.p_y1.map(|p| p.clamp(0.0, 1.0)),
        }
    }
}

/// The three persuasion-rate estimands.
#[derive(Debug, Clone, PartialEq)]
pub struct PersuasionRates {
    /// `P[Y(1)=1 | Y(0)=0, complier]`.
    pub theta_local: f64,
    /// Arm contrast of the outcome over the first stage, rescaled by
    /// `1/(1 - E[Y | Z=0])`; not a conditional probability in general.
    pub theta_dk: f64,
    /// `P[Y(1)=1 | Y(0)=0, T=0, complier]`; identical to `theta_local`.
    pub theta_local_untreated: f64,
}

/// Which latent subpopulation a profile conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileTarget {
    /// All compliers (a moment of `(Y(t), T, X)`).
    Complier { t: u8 },
    /// `Y(0) = Y(1) = 1` among compliers.
    AlwaysVoter,
    /// `Y(0) = Y(1) = 0` among compliers.
    NeverVoter,
    /// `Y(0) = 0, Y(1) = 1` among compliers.
    Mobilised,
    /// `Y(t) = y` among compliers.
    Marginal { t: u8, y: u8 },
    /// `Y(1) = y` among always-takers.
    AlwaysTaker { y: u8 },
    /// `Y(0) = y` among never-takers.
    NeverTaker { y: u8 },
    /// One of the six joint-indicator expectations, in display order.
    JointIndicator { variant: u8 },
}

/// A profiled moment with the components backing its inference.
#[derive(Debug, Clone)]
pub struct TypeProfile {
    pub target: ProfileTarget,
    pub value: f64,
    pub components: WaldComponents,
}

/// The three persuasion subpopulations of the joint-outcome profiling
/// result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersuasionTarget {
    Always,
    Never,
    Mobilised,
}

/// Always-taker / never-taker conditioning for covariate profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TakerGroup {
    AlwaysTaker,
    NeverTaker,
}

/// Named Wald-form estimands exposed for confidence-set inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaldEstimand {
    ThetaLocal,
    P11,
    P00,
    P01,
    /// `P[Y(0) = 1 | complier]`.
    MarginalY0One,
    /// `P[Y(1) = 1 | complier]`.
    MarginalY1One,
}

impl WaldEstimand {
    pub fn label(&self) -> &'static str {
        match self {
            WaldEstimand::ThetaLocal => "theta_local",
            WaldEstimand::P11 => "p11",
            WaldEstimand::P00 => "p00",
            WaldEstimand::P01 => "p01",
            WaldEstimand::MarginalY0One => "marginal_y0_1",
            WaldEstimand::MarginalY1One => "marginal_y1_1",
        }
    }
}

fn first_stage_h() -> RowFn {
    row_fn(|_, t, _| t as f64)
}

/// Transform pair of a named estimand. Transforms are signed so the
/// denominator estimates a nonnegative mass and the ratio reproduces
/// the identification formula.
pub fn wald_spec(which: WaldEstimand) -> TransformSpec {
    match which {
        // numerator E[Y|Z=1]-E[Y|Z=0]; denominator flips the arm order
        WaldEstimand::ThetaLocal => TransformSpec {
            f: row_fn(|y, _, _| y as f64),
            h: row_fn(|y, t, _| -(((1 - y) * (1 - t)) as f64)),
        },
        WaldEstimand::P11 => TransformSpec {
            f: row_fn(|y, t, _| -((y * (1 - t)) as f64)),
            h: first_stage_h(),
        },
        WaldEstimand::P00 => TransformSpec {
            f: row_fn(|y, t, _| ((1 - y) * t) as f64),
            h: first_stage_h(),
        },
        WaldEstimand::P01 => TransformSpec {
            f: row_fn(|y, _, _| y as f64),
            h: first_stage_h(),
        },
        WaldEstimand::MarginalY0One => TransformSpec {
            f: row_fn(|y, t, _| -((y * (1 - t)) as f64)),
            h: first_stage_h(),
        },
        WaldEstimand::MarginalY1One => TransformSpec {
            f: row_fn(|y, t, _| (y * t) as f64),
            h: first_stage_h(),
        },
    }
}

/// Estimated components of a named estimand, for CI construction.
pub fn estimand_components(sample: &ObservedSample, which: WaldEstimand) -> Result<WaldComponents> {
    wald_components(sample, &wald_spec(which))
}

/// Marginal distributions of the potential outcomes among compliers.
pub fn marginal_po<S: MomentSource + ?Sized>(source: &S) -> Result<MarginalPo> {
    let dt = first_stage(source)?;
    let mut p_y0 = [0.0; 2];
    let mut p_y1 = [0.0; 2];
    for y in 0..2u8 {
        // untreated margin reverses the arm order
        let f0 = |yy: u8, t: u8, _: &[f64]| ((yy == y) as u8 * (1 - t)) as f64;
        p_y0[y as usize] = (source.arm_mean_of(0, &f0)? - source.arm_mean_of(1, &f0)?) / dt;
        let f1 = |yy: u8, t: u8, _: &[f64]| ((yy == y) as u8 * t) as f64;
        p_y1[y as usize] = (source.arm_mean_of(1, &f1)? - source.arm_mean_of(0, &f1)?) / dt;
    }
    Ok(MarginalPo { p_y0, p_y1 })
}

/// Joint distribution of the potential outcomes among compliers.
pub fn joint_po<S: MomentSource + ?Sized>(source: &S) -> Result<ComplierJointPo> {
    let first_stage = first_stage(source)?;
    Ok(ComplierJointPo {
        p11: wald_point(source, &wald_spec(WaldEstimand::P11))?,
        p00: wald_point(source, &wald_spec(WaldEstimand::P00))?,
        p01: wald_point(source, &wald_spec(WaldEstimand::P01))?,
        first_stage,
    })
}

fn first_stage<S: MomentSource + ?Sized>(source: &S) -> Result<f64> {
    let dt =
        source.arm_mean_of(1, &|_, t, _| t as f64)? - source.arm_mean_of(0, &|_, t, _| t as f64)?;
    if dt.abs() < DENOM_GUARD {
        return Err(Error::WeakFirstStage {
            value: dt,
            guard: DENOM_GUARD,
        });
    }
    Ok(dt)
}

/// The local, approximated, and local-on-the-untreated persuasion rates.
pub fn persuasion_rates<S: MomentSource + ?Sized>(source: &S) -> Result<PersuasionRates> {
    let theta_local = wald_point(source, &wald_spec(WaldEstimand::ThetaLocal))?;
    let late = wald_point(source, &wald_spec(WaldEstimand::P01))?;
    let ey_z0 = source.arm_mean_of(0, &|y, _, _| y as f64)?;
    if ey_z0 >= 1.0 - 1e-12 {
        return Err(Error::DegenerateBaseline(ey_z0));
    }
    Ok(PersuasionRates {
        theta_local,
        theta_dk: late / (1.0 - ey_z0),
        theta_local_untreated: theta_local,
    })
}

/// Diagnostic comparison of the approximated and local persuasion
/// rates, with the one-sided non-compliance pattern and the observable
/// contrasts under which the two coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct DkLocalDiagnostic {
    pub theta_dk: f64,
    pub theta_local: f64,
    /// `theta_dk - theta_local`.
    pub gap: f64,
    pub p_t1_z0: f64,
    pub p_t1_z1: f64,
    /// `P[T=1 | Z=1] = 1`: non-compliance can only occur in the control
    /// arm (no never-takers).
    pub one_sided_control: bool,
    /// `P[T=1 | Z=0] = 0`: non-compliance can only occur in the
    /// treatment arm (no always-takers).
    pub one_sided_treatment: bool,
    /// Difference of the two estimands' denominators,
    /// `dT * P[Y=0|Z=0] - (P[Y=0,T=0|Z=0] - P[Y=0,T=0|Z=1])`;
    /// zero exactly when the two rates coincide.
    pub denominator_contrast: f64,
    /// Sample analogue of `P[Y(0)=0|T(0)=0] - P[Y(1)=0|T(0)=1]`, the
    /// equivalence condition when non-compliance is one-sided in the
    /// control group.
    pub control_case_contrast: Option<f64>,
    /// Sample analogue of `P[Y=0,T=0|Z=1] - P[T=0|Z=1] P[Y=0,T=0|Z=0]`,
    /// zero when the untreated potential outcome is independent of the
    /// treated potential treatment under one-sided non-compliance in
    /// the treatment group.
    pub treatment_case_contrast: Option<f64>,
}

const ONE_SIDED_TOL: f64 = 1e-9;

/// Compares the approximated and local persuasion rates.
pub fn compare_dk_local<S: MomentSource + ?Sized>(source: &S) -> Result<DkLocalDiagnostic> {
    let rates = persuasion_rates(source)?;
    let p_t1_z0 = source.arm_mean_of(0, &|_, t, _| t as f64)?;
    let p_t1_z1 = source.arm_mean_of(1, &|_, t, _| t as f64)?;
    let dt = p_t1_z1 - p_t1_z0;
    let ny_z0 = source.arm_mean_of(0, &|y, _, _| (1 - y) as f64)?;
    let nynt = |y: u8, t: u8, _: &[f64]| ((1 - y) * (1 - t)) as f64;
    let nynt_z0 = source.arm_mean_of(0, &nynt)?;
    let nynt_z1 = source.arm_mean_of(1, &nynt)?;

    let one_sided_control = (1.0 - p_t1_z1).abs() <= ONE_SIDED_TOL;
    let one_sided_treatment = p_t1_z0.abs() <= ONE_SIDED_TOL;

    let control_case_contrast = if one_sided_control {
        let t0_z0 = source.arm_mean_of(0, &|_, t, _| (1 - t) as f64)?;
        let t1_z0 = source.arm_mean_of(0, &|_, t, _| t as f64)?;
        let ny_t0_z0 = source.arm_mean_of(0, &nynt)?;
        let ny_t1_z0 = source.arm_mean_of(0, &|y, t, _| ((1 - y) * t) as f64)?;
        if t0_z0 > 0.0 && t1_z0 > 0.0 {
            Some(ny_t0_z0 / t0_z0 - ny_t1_z0 / t1_z0)
        } else {
            None
        }
    } else {
        None
    };
    let treatment_case_contrast = if one_sided_treatment {
        let t0_z1 = source.arm_mean_of(1, &|_, t, _| (1 - t) as f64)?;
        Some(nynt_z1 - t0_z1 * nynt_z0)
    } else {
        None
    };

    Ok(DkLocalDiagnostic {
        theta_dk: rates.theta_dk,
        theta_local: rates.theta_local,
        gap: rates.theta_dk - rates.theta_local,
        p_t1_z0,
        p_t1_z1,
        one_sided_control,
        one_sided_treatment,
        denominator_contrast: dt * ny_z0 - (nynt_z0 - nynt_z1),
        control_case_contrast,
        treatment_case_contrast,
    })
}

/// Transform pair for a complier moment of `g(Y(t), T, X)`.
///
/// The two arm-specific substitutions of the treatment argument are
/// combined with the plug-in assignment shares, so the estimand stays a
/// single Wald ratio and the stacked coefficient covariance flows
/// through unchanged.
pub fn kappa_spec(
    g: impl Fn(u8, u8, &[f64]) -> f64 + Send + Sync + 'static,
    t: u8,
    pz1: f64,
) -> TransformSpec {
    let sign = if t == 1 { 1.0 } else { -1.0 };
    let w0 = 1.0 - pz1;
    TransformSpec {
        f: row_fn(move |y, tt, x| {
            if tt == t {
                sign * (w0 * g(y, 0, x) + pz1 * g(y, 1, x))
            } else {
                0.0
            }
        }),
        h: first_stage_h(),
    }
}

/// Complier moment `E[g(Y(t), T, X) | complier]`.
pub fn kappa_moment<S: MomentSource + ?Sized>(
    source: &S,
    g: impl Fn(u8, u8, &[f64]) -> f64 + Send + Sync + 'static,
    t: u8,
) -> Result<f64> {
    wald_point(source, &kappa_spec(g, t, source.pz_one()))
}

/// [`kappa_moment`] with the backing components for inference.
pub fn kappa_moment_inference(
    sample: &ObservedSample,
    g: impl Fn(u8, u8, &[f64]) -> f64 + Send + Sync + 'static,
    t: u8,
) -> Result<TypeProfile> {
    let components = wald_components(sample, &kappa_spec(g, t, sample.pz_one()))?;
    let value = crate::moments::wald_ratio(&components)?;
    Ok(TypeProfile {
        target: ProfileTarget::Complier { t },
        value,
        components,
    })
}

fn ratio_with_mass_guard(c: &WaldComponents) -> Result<f64> {
    if c.beta2 < DENOM_GUARD {
        return Err(Error::ZeroMass {
            value: c.beta2,
            guard: DENOM_GUARD,
        });
    }
    Ok(c.beta1 / c.beta2)
}

fn point_with_mass_guard<S: MomentSource + ?Sized>(
    source: &S,
    spec: &TransformSpec,
) -> Result<f64> {
    let beta1 = source.arm_mean_of(1, spec.f.as_ref())? - source.arm_mean_of(0, spec.f.as_ref())?;
    let beta2 = source.arm_mean_of(1, spec.h.as_ref())? - source.arm_mean_of(0, spec.h.as_ref())?;
    if beta2 < DENOM_GUARD {
        return Err(Error::ZeroMass {
            value: beta2,
            guard: DENOM_GUARD,
        });
    }
    Ok(beta1 / beta2)
}

/// Transform pair for `E[g(T, X) | Y(t) = y, complier]`.
pub fn marginal_profile_spec(
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    t: u8,
    y: u8,
    pz1: f64,
) -> TransformSpec {
    let sign = if t == 1 { 1.0 } else { -1.0 };
    let w0 = 1.0 - pz1;
    TransformSpec {
        f: row_fn(move |yy, tt, x| {
            if yy == y && tt == t {
                sign * (w0 * g(0, x) + pz1 * g(1, x))
            } else {
                0.0
            }
        }),
        h: row_fn(move |yy, tt, _| if yy == y && tt == t { sign } else { 0.0 }),
    }
}

/// `E[g(T, X) | Y(t) = y, complier]`, point value.
pub fn profile_marginal<S: MomentSource + ?Sized>(
    source: &S,
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    t: u8,
    y: u8,
) -> Result<f64> {
    point_with_mass_guard(source, &marginal_profile_spec(g, t, y, source.pz_one()))
}

/// [`profile_marginal`] with components.
pub fn profile_marginal_inference(
    sample: &ObservedSample,
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    t: u8,
    y: u8,
) -> Result<TypeProfile> {
    let components = wald_components(sample, &marginal_profile_spec(g, t, y, sample.pz_one()))?;
    let value = ratio_with_mass_guard(&components)?;
    Ok(TypeProfile {
        target: ProfileTarget::Marginal { t, y },
        value,
        components,
    })
}

/// Transform pair for `E[g(T, X) | persuasion type, complier]`.
pub fn persuasion_spec(
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    target: PersuasionTarget,
    pz1: f64,
) -> TransformSpec {
    let w0 = 1.0 - pz1;
    let gbar = move |x: &[f64]| w0 * g(0, x) + pz1 * g(1, x);
    match target {
        // denominators are the three joint-distribution numerators
        PersuasionTarget::Always => TransformSpec {
            f: row_fn(move |y, t, x| -((y * (1 - t)) as f64) * gbar(x)),
            h: row_fn(|y, t, _| -((y * (1 - t)) as f64)),
        },
        PersuasionTarget::Never => TransformSpec {
            f: row_fn(move |y, t, x| (((1 - y) * t) as f64) * gbar(x)),
            h: row_fn(|y, t, _| ((1 - y) * t) as f64),
        },
        PersuasionTarget::Mobilised => TransformSpec {
            f: row_fn(move |y, _, x| (y as f64) * gbar(x)),
            h: row_fn(|y, _, _| y as f64),
        },
    }
}

/// `E[g(T, X) | type, complier]` for the always-voter, never-voter, or
/// mobilised subpopulation.
pub fn profile_persuasion<S: MomentSource + ?Sized>(
    source: &S,
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    target: PersuasionTarget,
) -> Result<f64> {
    point_with_mass_guard(source, &persuasion_spec(g, target, source.pz_one()))
}

/// [`profile_persuasion`] with components.
pub fn profile_persuasion_inference(
    sample: &ObservedSample,
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    target: PersuasionTarget,
) -> Result<TypeProfile> {
    let components = wald_components(sample, &persuasion_spec(g, target, sample.pz_one()))?;
    let value = ratio_with_mass_guard(&components)?;
    let target = match target {
        PersuasionTarget::Always => ProfileTarget::AlwaysVoter,
        PersuasionTarget::Never => ProfileTarget::NeverVoter,
        PersuasionTarget::Mobilised => ProfileTarget::Mobilised,
    };
    Ok(TypeProfile {
        target,
        value,
        components,
    })
}

/// Transform pair for the six joint-indicator expectations, indexed in
/// display order:
///
/// 1. `E[g 1{Y(1)=0} | Y(0)=0, C]`
/// 2. `E[g 1{Y(1)=1} | Y(0)=0, C]`
/// 3. `E[g 1{Y(1)=1} | Y(0)=1, C]`
/// 4. `E[g 1{Y(0)=0} | Y(1)=0, C]`
/// 5. `E[g 1{Y(0)=1} | Y(1)=1, C]`
/// 6. `E[g 1{Y(0)=0} | Y(1)=1, C]`
pub fn joint_indicator_spec(
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    variant: u8,
    pz1: f64,
) -> Result<TransformSpec> {
    let w0 = 1.0 - pz1;
    let gbar = move |x: &[f64]| w0 * g(0, x) + pz1 * g(1, x);
    let spec = match variant {
        1 => TransformSpec {
            f: row_fn(move |y, t, x| (((1 - y) * t) as f64) * gbar(x)),
            h: row_fn(|y, t, _| -(((1 - y) * (1 - t)) as f64)),
        },
        2 => TransformSpec {
            f: row_fn(move |y, _, x| (y as f64) * gbar(x)),
            h: row_fn(|y, t, _| -(((1 - y) * (1 - t)) as f64)),
        },
        3 => TransformSpec {
            f: row_fn(move |y, t, x| -((y * (1 - t)) as f64) * gbar(x)),
            h: row_fn(|y, t, _| -((y * (1 - t)) as f64)),
        },
        4 => TransformSpec {
            f: row_fn(move |y, t, x| (((1 - y) * t) as f64) * gbar(x)),
            h: row_fn(|y, t, _| ((1 - y) * t) as f64),
        },
        5 => TransformSpec {
            f: row_fn(move |y, t, x| -((y * (1 - t)) as f64) * gbar(x)),
            h: row_fn(|y, t, _| (y * t) as f64),
        },
        6 => TransformSpec {
            f: row_fn(move |y, _, x| (y as f64) * gbar(x)),
            h: row_fn(|y, t, _| (y * t) as f64),
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "joint-indicator variant must be 1..=6, got {other}"
            )))
        }
    };
    Ok(spec)
}

/// Joint-indicator expectation, point value.
pub fn profile_joint_indicator<S: MomentSource + ?Sized>(
    source: &S,
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    variant: u8,
) -> Result<f64> {
    point_with_mass_guard(source, &joint_indicator_spec(g, variant, source.pz_one())?)
}

/// [`profile_joint_indicator`] with components.
pub fn profile_joint_indicator_inference(
    sample: &ObservedSample,
    g: impl Fn(u8, &[f64]) -> f64 + Send + Sync + 'static,
    variant: u8,
) -> Result<TypeProfile> {
    let spec = joint_indicator_spec(g, variant, sample.pz_one())?;
    let components = wald_components(sample, &spec)?;
    let value = ratio_with_mass_guard(&components)?;
    Ok(TypeProfile {
        target: ProfileTarget::JointIndicator { variant },
        value,
        components,
    })
}

/// Covariate profile of always-takers or never-takers.
///
/// Always-takers reveal `Y(1)` in the control arm and never-takers
/// reveal `Y(0)` in the encouraged arm, so the estimand is a plain
/// conditional mean on one arm. The returned components hold that
/// arm's numerator and denominator means with their single-arm
/// covariance, so the ratio machinery still applies.
pub fn profile_at_nt<S: MomentSource + ?Sized>(
    source: &S,
    g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    group: TakerGroup,
    y: u8,
) -> Result<f64> {
    let (arm, t_val) = match group {
        TakerGroup::AlwaysTaker => (0u8, 1u8),
        TakerGroup::NeverTaker => (1u8, 0u8),
    };
    let num = arm_mean(
        source,
        &|yy, tt, x| {
            if yy == y && tt == t_val {
                g(x)
            } else {
                0.0
            }
        },
        arm,
    )?;
    let den = arm_mean(
        source,
        &|yy, tt, _| ((yy == y && tt == t_val) as u8) as f64,
        arm,
    )?;
    if den < DENOM_GUARD {
        return Err(Error::ZeroMass {
            value: den,
            guard: DENOM_GUARD,
        });
    }
    Ok(num / den)
}

/// [`profile_at_nt`] with single-arm components.
pub fn profile_at_nt_inference(
    sample: &ObservedSample,
    g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    group: TakerGroup,
    y: u8,
) -> Result<TypeProfile> {
    sample.require_binary()?;
    let (arm, t_val) = match group {
        TakerGroup::AlwaysTaker => (0u8, 1u8),
        TakerGroup::NeverTaker => (1u8, 0u8),
    };
    let rows: Vec<_> = sample.rows().iter().filter(|r| r.z == arm as i64).collect();
    if rows.is_empty() {
        return Err(Error::EmptyArm(arm));
    }
    let m = rows.len() as f64;
    let fval = |yy: u8, tt: u8, x: &[f64]| {
        if yy == y && tt == t_val {
            g(x)
        } else {
            0.0
        }
    };
    let hval = |yy: u8, tt: u8| ((yy == y && tt == t_val) as u8) as f64;
    let mut mean_f = 0.0;
    let mut mean_h = 0.0;
    for r in &rows {
        mean_f += fval(r.y, r.t, &r.x);
        mean_h += hval(r.y, r.t);
    }
    mean_f /= m;
    mean_h /= m;
    let mut cov = [[0.0f64; 2]; 2];
    if rows.len() >= 2 {
        for r in &rows {
            let df = fval(r.y, r.t, &r.x) - mean_f;
            let dh = hval(r.y, r.t) - mean_h;
            cov[0][0] += df * df;
            cov[0][1] += df * dh;
            cov[1][1] += dh * dh;
        }
        let denom = m * (m - 1.0);
        cov[0][0] /= denom;
        cov[0][1] /= denom;
        cov[1][1] /= denom;
        cov[1][0] = cov[0][1];
    }
    let components = WaldComponents {
        beta1: mean_f,
        beta2: mean_h,
        cov,
        n: sample.n(),
        pz1: sample.pz_one(),
    };
    let value = ratio_with_mass_guard(&components)?;
    let target = match group {
        TakerGroup::AlwaysTaker => ProfileTarget::AlwaysTaker { y },
        TakerGroup::NeverTaker => ProfileTarget::NeverTaker { y },
    };
    Ok(TypeProfile {
        target,
        value,
        components,
    })
}

/// Conditional distribution function of covariate `j` given a
/// persuasion type among compliers, evaluated on a grid.
pub fn conditional_cdf<S: MomentSource + ?Sized>(
    source: &S,
    covariate: usize,
    target: PersuasionTarget,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(grid.len());
    for &point in grid {
        let value = profile_persuasion(
            source,
            move |_, x: &[f64]| (x[covariate] <= point) as u8 as f64,
            target,
        )?;
        out.push((point, value));
    }
    Ok(out)
}

/// Implied joint distribution at zero violation: `(p11, p00, p01)` from
/// the two marginals under monotone treatment response.
pub fn joint_from_marginals(m: &MarginalPo) -> (f64, f64, f64) {
    let p11 = m.y0_one();
    let p00 = 1.0 - m.y1_one();
    (p11, p00, 1.0 - p11 - p00)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::LatentDgp;
    use crate::sample::ObservedRow;
    use proptest::prelude::*;

    fn perfect_sample() -> ObservedSample {
        // y = t = z
        let rows = (0..40)
            .map(|i| {
                let b = (i % 2) as u8;
                ObservedRow {
                    y: b,
                    t: b,
                    z: b as i64,
                    x: vec![],
                }
            })
            .collect();
        ObservedSample::new(rows, vec![]).unwrap()
    }

    #[test]
    fn perfect_compliance_marginals() {
        let m = marginal_po(&perfect_sample()).unwrap();
        assert_eq!(m.y0_one(), 0.0);
        assert_eq!(m.y1_one(), 1.0);
        assert!((m.p_y0[0] + m.p_y0[1] - 1.0).abs() < 1e-15);
        assert!((m.p_y1[0] + m.p_y1[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_compliance_joint_is_all_mobilised() {
        let j = joint_po(&perfect_sample()).unwrap();
        assert_eq!((j.p11, j.p00, j.p01), (0.0, 0.0, 1.0));
    }

    #[test]
    fn perfect_compliance_rates_are_one() {
        let r = persuasion_rates(&perfect_sample()).unwrap();
        assert_eq!(r.theta_local, 1.0);
        assert_eq!(r.theta_dk, 1.0);
        assert_eq!(r.theta_local_untreated, 1.0);
        let d = compare_dk_local(&perfect_sample()).unwrap();
        assert_eq!(d.gap, 0.0);
    }

    #[test]
    fn dgp1_population_marginals() {
        let dgp = LatentDgp::dgp1();
        let m = marginal_po(&dgp).unwrap();
        assert!((m.y0_one() - 0.30).abs() < 1e-12);
        assert!((m.y1_one() - 0.40).abs() < 1e-12);
    }

    #[test]
    fn dgp1_population_joint() {
        let dgp = LatentDgp::dgp1();
        let j = joint_po(&dgp).unwrap();
        assert!((j.p11 - 0.30).abs() < 1e-12);
        assert!((j.p00 - 0.60).abs() < 1e-12);
        assert!((j.p01 - 0.10).abs() < 1e-12);
        assert!((j.first_stage - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dgp1_population_rates() {
        let dgp = LatentDgp::dgp1();
        let r = persuasion_rates(&dgp).unwrap();
        assert!((r.theta_local - 1.0 / 7.0).abs() < 1e-12);
        assert!((r.theta_dk - 0.16).abs() < 1e-12);
        assert_eq!(r.theta_local, r.theta_local_untreated);
        let d = compare_dk_local(&dgp).unwrap();
        assert!((d.gap - (0.16 - 1.0 / 7.0)).abs() < 1e-12);
        assert!(!d.one_sided_control);
        assert!(!d.one_sided_treatment);
    }

    #[test]
    fn dk_equals_local_under_treatment_one_sided_independence() {
        // no always-takers, Y(0) independent of T(1)
        let dgp = LatentDgp::one_sided_independent();
        let d = compare_dk_local(&dgp).unwrap();
        assert!(d.one_sided_treatment);
        assert!(d.gap.abs() < 1e-12, "gap = {}", d.gap);
        assert!(d.treatment_case_contrast.unwrap().abs() < 1e-12);
        assert!(d.denominator_contrast.abs() < 1e-12);
    }

    #[test]
    fn kappa_with_treatment_transform_returns_assignment_share() {
        let dgp = LatentDgp::dgp1();
        let v = kappa_moment(&dgp, |_, z, _| z as f64, 1).unwrap();
        assert!((v - 0.5).abs() < 1e-12);

        // sample version returns the sample share to machine precision
        let sample = dgp.draw_sample(500, 11).unwrap();
        let share = sample.pz_one();
        let v = kappa_moment(&sample, |_, z, _| z as f64, 1).unwrap();
        assert!((v - share).abs() < 1e-14);
    }

    #[test]
    fn kappa_complier_covariate_mean() {
        let dgp = LatentDgp::dgp1();
        // E[X | complier] = 0.3*0.9 + 0.6*0.5 + 0.1*0.8
        for t in [0u8, 1u8] {
            let v = kappa_moment(&dgp, |_, _, x| x[0], t).unwrap();
            assert!((v - 0.65).abs() < 1e-12, "t={t}, v={v}");
        }
    }

    #[test]
    fn kappa_trivial_in_t_matches_single_ratio_form() {
        let dgp = LatentDgp::dgp1();
        let sample = dgp.draw_sample(4000, 3).unwrap();
        let v = kappa_moment(&sample, |y, _, _| y as f64, 1).unwrap();
        // direct single-ratio: contrast of y*1{t=1} over first stage
        let spec = TransformSpec {
            f: row_fn(|y, t, _| (y * t) as f64),
            h: row_fn(|_, t, _| t as f64),
        };
        let direct = wald_point(&sample, &spec).unwrap();
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn profile_marginal_normalizes() {
        let dgp = LatentDgp::dgp1();
        let sample = dgp.draw_sample(2000, 5).unwrap();
        for (t, y) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let v = profile_marginal(&sample, |_, _| 1.0, t, y).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "t={t} y={y} v={v}");
        }
    }

    #[test]
    fn profile_marginal_dgp1_type11_covariate_mean() {
        let dgp = LatentDgp::dgp1();
        let v = profile_marginal(&dgp, |_, x| x[0], 0, 1).unwrap();
        assert!((v - 0.9).abs() < 1e-12);
    }

    #[test]
    fn profile_persuasion_dgp1_mobilised_covariate_mean() {
        let dgp = LatentDgp::dgp1();
        let v = profile_persuasion(&dgp, |_, x| x[0], PersuasionTarget::Mobilised).unwrap();
        assert!((v - 0.8).abs() < 1e-12);
    }

    #[test]
    fn profile_persuasion_normalizes() {
        let dgp = LatentDgp::dgp1();
        let sample = dgp.draw_sample(2000, 7).unwrap();
        for target in [
            PersuasionTarget::Always,
            PersuasionTarget::Never,
            PersuasionTarget::Mobilised,
        ] {
            let v = profile_persuasion(&sample, |_, _| 1.0, target).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "{target:?}: {v}");
        }
    }

    #[test]
    fn joint_indicator_variant2_with_unit_g_is_theta_local() {
        let dgp = LatentDgp::dgp1();
        let sample = dgp.draw_sample(3000, 13).unwrap();
        let v = profile_joint_indicator(&sample, |_, _| 1.0, 2).unwrap();
        let r = persuasion_rates(&sample).unwrap();
        assert!((v - r.theta_local).abs() < 1e-12);
    }

    #[test]
    fn joint_indicator_variant2_dgp1() {
        let dgp = LatentDgp::dgp1();
        let v = profile_joint_indicator(&dgp, |_, x| x[0], 2).unwrap();
        assert!((v - 0.08 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn joint_indicator_variant3_with_unit_g_is_one() {
        let dgp = LatentDgp::dgp1();
        let sample = dgp.draw_sample(3000, 17).unwrap();
        let v = profile_joint_indicator(&sample, |_, _| 1.0, 3).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_indicator_rejects_bad_variant() {
        let dgp = LatentDgp::dgp1();
        assert!(profile_joint_indicator(&dgp, |_, _| 1.0, 7).is_err());
        assert!(profile_joint_indicator(&dgp, |_, _| 1.0, 0).is_err());
    }

    #[test]
    fn at_profile_is_conditional_mean() {
        let rows = vec![
            ObservedRow {
                y: 1,
                t: 1,
                z: 0,
                x: vec![2.0],
            },
            ObservedRow {
                y: 1,
                t: 1,
                z: 0,
                x: vec![4.0],
            },
            ObservedRow {
                y: 0,
                t: 1,
                z: 0,
                x: vec![9.0],
            },
            ObservedRow {
                y: 1,
                t: 0,
                z: 0,
                x: vec![9.0],
            },
            ObservedRow {
                y: 1,
                t: 1,
                z: 1,
                x: vec![9.0],
            },
            ObservedRow {
                y: 0,
                t: 0,
                z: 1,
                x: vec![9.0],
            },
        ];
        let s = ObservedSample::new(rows, vec!["v".into()]).unwrap();
        let v = profile_at_nt(&s, |x| x[0], TakerGroup::AlwaysTaker, 1).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn at_profile_dgp1_covariate_mean() {
        let dgp = LatentDgp::dgp1();
        let v = profile_at_nt(&dgp, |x| x[0], TakerGroup::AlwaysTaker, 1).unwrap();
        assert!((v - 0.6).abs() < 1e-12);
        let v = profile_at_nt(&dgp, |x| x[0], TakerGroup::NeverTaker, 0).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn constant_g_profiles_to_the_constant() {
        let dgp = LatentDgp::dgp1();
        let v = profile_at_nt(&dgp, |_| 2.5, TakerGroup::NeverTaker, 1).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn conditional_cdf_dgp1_mobilised() {
        let dgp = LatentDgp::dgp1();
        let cdf = conditional_cdf(&dgp, 0, PersuasionTarget::Mobilised, &[0.0, 1.0]).unwrap();
        assert!((cdf[0].1 - 0.2).abs() < 1e-12);
        assert!((cdf[1].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_cdf_sample_endpoints() {
        let dgp = LatentDgp::dgp1();
        let sample = dgp.draw_sample(3000, 23).unwrap();
        let cdf = conditional_cdf(&sample, 0, PersuasionTarget::Mobilised, &[-1.0, 1.0]).unwrap();
        // grid point at the max of the support is exactly one in-sample
        assert!((cdf[1].1 - 1.0).abs() < 1e-12);
        // below the support the population value is zero; the sample
        // value is exactly zero because the indicator never fires
        assert_eq!(cdf[0].1, 0.0);
    }

    proptest! {
        // in-sample algebraic identities, arbitrary samples
        #[test]
        fn joint_sums_to_one_and_theta_identity(seed in 0u64..200, n in 20usize..200) {
            let dgp = LatentDgp::dgp1();
            let sample = match dgp.draw_sample(n, seed) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let j = match joint_po(&sample) {
                Ok(j) => j,
                Err(_) => return Ok(()), // guard tripped on a tiny sample
            };
            prop_assert!((j.p11 + j.p00 + j.p01 - 1.0).abs() < 1e-12);
            if let Ok(r) = persuasion_rates(&sample) {
                prop_assert!((r.theta_local * (j.p01 + j.p00) - j.p01).abs() < 1e-12);
            }
        }

        #[test]
        fn marginals_each_sum_to_one(seed in 0u64..100) {
            let dgp = LatentDgp::dgp1();
            let sample = dgp.draw_sample(300, seed).unwrap();
            if let Ok(m) = marginal_po(&sample) {
                prop_assert!((m.p_y0[0] + m.p_y0[1] - 1.0).abs() < 1e-12);
                prop_assert!((m.p_y1[0] + m.p_y1[1] - 1.0).abs() < 1e-12);
            }
        }
    }
}
