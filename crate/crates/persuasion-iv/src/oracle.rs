//! Synthetic data-generating processes over the nine latent types, with
//! exact population moments and directly computed ground-truth
//! estimands.
//!
//! A [`LatentDgp`] fixes the instrument assignment probability, the
//! compliance-type distribution, the outcome-type distribution within
//! each compliance type, and a discrete covariate distribution within
//! each latent cell. The instrument is independent of everything by
//! construction and the outcome responds to the instrument only through
//! the treatment, so the identifying assumptions hold whenever no
//! defier or demobilised mass is present.
//!
//! Every population quantity is an exact finite sum over latent atoms,
//! which makes the DGP usable in two independent ways: as a
//! [`MomentSource`] feeding the same estimand formulas that run on
//! data, and through the `truth_*` methods that read the answer
//! directly off the type probabilities. Agreement of the two routes is
//! the central correctness property of the crate.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::{PersuasionTarget, TakerGroup};
use crate::falsifier::{self, Restrictions};
use crate::moments::MomentSource;
use crate::sample::{CellPartition, ObservedRow, ObservedSample};

/// Compliance type: how potential treatment responds to the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compliance {
    #[serde(rename = "NT")]
    NeverTaker,
    #[serde(rename = "C")]
    Complier,
    #[serde(rename = "AT")]
    AlwaysTaker,
    /// `T(z) = 1 - z`; representable only to exercise the
    /// falsification test, never part of a model-consistent process.
    #[serde(rename = "DF")]
    Defier,
}

impl Compliance {
    /// Potential treatment `T(z)`.
    pub fn treatment(self, z: u8) -> u8 {
        match self {
            Compliance::NeverTaker => 0,
            Compliance::Complier => z,
            Compliance::AlwaysTaker => 1,
            Compliance::Defier => 1 - z,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Compliance::NeverTaker => "NT",
            Compliance::Complier => "C",
            Compliance::AlwaysTaker => "AT",
            Compliance::Defier => "DF",
        }
    }
}

/// Outcome type: the pair `(Y(0), Y(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeType {
    /// `(0, 0)` - never-voter.
    #[serde(rename = "00")]
    NeverVoter,
    /// `(0, 1)` - mobilised.
    #[serde(rename = "01")]
    Mobilised,
    /// `(1, 0)` - demobilised; rules out monotone treatment response.
    #[serde(rename = "10")]
    Demobilised,
    /// `(1, 1)` - always-voter.
    #[serde(rename = "11")]
    AlwaysVoter,
}

impl OutcomeType {
    /// Potential outcome `Y(t)`.
    pub fn outcome(self, t: u8) -> u8 {
        match self {
            OutcomeType::NeverVoter => 0,
            OutcomeType::Mobilised => t,
            OutcomeType::Demobilised => 1 - t,
            OutcomeType::AlwaysVoter => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            OutcomeType::NeverVoter => "00",
            OutcomeType::Mobilised => "01",
            OutcomeType::Demobilised => "10",
            OutcomeType::AlwaysVoter => "11",
        }
    }
}

pub const ALL_COMPLIANCE: [Compliance; 4] = [
    Compliance::NeverTaker,
    Compliance::Complier,
    Compliance::AlwaysTaker,
    Compliance::Defier,
];

pub const ALL_OUTCOMES: [OutcomeType; 4] = [
    OutcomeType::NeverVoter,
    OutcomeType::Mobilised,
    OutcomeType::Demobilised,
    OutcomeType::AlwaysVoter,
];

/// A population over the latent types, with a discrete covariate
/// distribution per type.
///
/// `pi` gives the compliance masses, `outcome_dist[c]` the conditional
/// outcome-type masses, and `x_dist[c][o]` the probabilities over
/// `x_support` within each latent cell. Missing map entries mean zero
/// mass. Serializes to/from JSON unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDgp {
    /// `P[Z = 1]`.
    pub q: f64,
    pub pi: BTreeMap<Compliance, f64>,
    pub outcome_dist: BTreeMap<Compliance, BTreeMap<OutcomeType, f64>>,
    /// Shared covariate support points; empty means no covariates.
    #[serde(default)]
    pub x_support: Vec<Vec<f64>>,
    /// Covariate distribution per (compliance, outcome) cell, indexed
    /// like `x_support`. Required wherever the cell has positive mass
    /// and covariates exist.
    #[serde(default)]
    pub x_dist: BTreeMap<Compliance, BTreeMap<OutcomeType, Vec<f64>>>,
}

const SUM_TOL: f64 = 1e-9;

impl LatentDgp {
    /// Checks all distributional invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidDgp(format!(
                "q must lie in (0,1), got {}",
                self.q
            )));
        }
        let total: f64 = self.pi.values().sum();
        if (total - 1.0).abs() > SUM_TOL || self.pi.values().any(|&v| v < 0.0) {
            return Err(Error::InvalidDgp(format!(
                "compliance masses must be nonnegative and sum to 1 (sum = {total})"
            )));
        }
        let arity = self.x_support.first().map(|p| p.len()).unwrap_or(0);
        for point in &self.x_support {
            if point.len() != arity {
                return Err(Error::InvalidDgp(
                    "covariate support points have mixed arity".into(),
                ));
            }
            if point.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDgp(
                    "non-finite covariate support point".into(),
                ));
            }
        }
        for (&c, &mass) in &self.pi {
            if mass == 0.0 {
                continue;
            }
            let dist = self.outcome_dist.get(&c).ok_or_else(|| {
                Error::InvalidDgp(format!("missing outcome distribution for {}", c.code()))
            })?;
            let sum: f64 = dist.values().sum();
            if (sum - 1.0).abs() > SUM_TOL || dist.values().any(|&v| v < 0.0) {
                return Err(Error::InvalidDgp(format!(
                    "outcome masses for {} must be nonnegative and sum to 1 (sum = {sum})",
                    c.code()
                )));
            }
            if !self.x_support.is_empty() {
                for (&o, &w) in dist {
                    if w == 0.0 {
                        continue;
                    }
                    let xs = self.x_dist.get(&c).and_then(|m| m.get(&o)).ok_or_else(|| {
                        Error::InvalidDgp(format!(
                            "missing covariate distribution for ({}, {})",
                            c.code(),
                            o.code()
                        ))
                    })?;
                    if xs.len() != self.x_support.len() {
                        return Err(Error::InvalidDgp(format!(
                            "covariate distribution for ({}, {}) has {} entries, support has {}",
                            c.code(),
                            o.code(),
                            xs.len(),
                            self.x_support.len()
                        )));
                    }
                    let s: f64 = xs.iter().sum();
                    if (s - 1.0).abs() > SUM_TOL || xs.iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidDgp(format!(
                            "covariate masses for ({}, {}) must be nonnegative and sum to 1 (sum = {s})",
                            c.code(),
                            o.code()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether the process satisfies the identifying assumptions: no
    /// defiers, no demobilised mass, and a non-trivial first stage.
    pub fn is_model_consistent(&self) -> bool {
        let defier = self.mass(Compliance::Defier);
        let demobilised: f64 = ALL_COMPLIANCE
            .iter()
            .map(|&c| self.type_mass(c, OutcomeType::Demobilised))
            .sum();
        defier == 0.0 && demobilised == 0.0 && self.mass(Compliance::Complier) > 0.0
    }

    pub fn mass(&self, c: Compliance) -> f64 {
        self.pi.get(&c).copied().unwrap_or(0.0)
    }

    pub fn outcome_mass(&self, c: Compliance, o: OutcomeType) -> f64 {
        self.outcome_dist
            .get(&c)
            .and_then(|m| m.get(&o))
            .copied()
            .unwrap_or(0.0)
    }

    /// Joint mass of a latent `(compliance, outcome)` cell.
    pub fn type_mass(&self, c: Compliance, o: OutcomeType) -> f64 {
        self.mass(c) * self.outcome_mass(c, o)
    }

    fn x_probs(&self, c: Compliance, o: OutcomeType) -> Option<&[f64]> {
        self.x_dist
            .get(&c)
            .and_then(|m| m.get(&o))
            .map(|v| v.as_slice())
    }

    /// Mean of `g` over the covariate distribution of one latent cell.
    fn x_mean(&self, c: Compliance, o: OutcomeType, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        if self.x_support.is_empty() {
            return g(&[]);
        }
        match self.x_probs(c, o) {
            Some(probs) => probs
                .iter()
                .zip(&self.x_support)
                .map(|(&w, point)| w * g(point))
                .sum(),
            None => 0.0,
        }
    }

    pub fn covariate_arity(&self) -> usize {
        self.x_support.first().map(|p| p.len()).unwrap_or(0)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.covariate_arity())
            .map(|i| format!("x{i}"))
            .collect()
    }

    /// The reference verification fixture.
    ///
    /// Balanced assignment, 50% compliers flanked by 25% always- and
    /// never-takers, and a binary covariate whose mean differs across
    /// latent cells. Population moments: `E[T|Z=1] = 0.75`,
    /// `E[T|Z=0] = 0.25`, `E[Y|Z=1] = 0.425`, `E[Y|Z=0] = 0.375`.
    pub fn dgp1() -> Self {
        let mut outcome_dist = BTreeMap::new();
        outcome_dist.insert(
            Compliance::Complier,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, 0.3),
                (OutcomeType::NeverVoter, 0.6),
                (OutcomeType::Mobilised, 0.1),
            ]),
        );
        outcome_dist.insert(
            Compliance::AlwaysTaker,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, 0.5),
                (OutcomeType::NeverVoter, 0.3),
                (OutcomeType::Mobilised, 0.2),
            ]),
        );
        outcome_dist.insert(
            Compliance::NeverTaker,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, 0.2),
                (OutcomeType::NeverVoter, 0.7),
                (OutcomeType::Mobilised, 0.1),
            ]),
        );
        let binary = |p1: f64| vec![1.0 - p1, p1];
        let mut x_dist = BTreeMap::new();
        x_dist.insert(
            Compliance::Complier,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, binary(0.9)),
                (OutcomeType::NeverVoter, binary(0.5)),
                (OutcomeType::Mobilised, binary(0.8)),
            ]),
        );
        x_dist.insert(
            Compliance::AlwaysTaker,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, binary(0.6)),
                (OutcomeType::NeverVoter, binary(0.6)),
                (OutcomeType::Mobilised, binary(0.6)),
            ]),
        );
        x_dist.insert(
            Compliance::NeverTaker,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, binary(0.4)),
                (OutcomeType::NeverVoter, binary(0.4)),
                (OutcomeType::Mobilised, binary(0.4)),
            ]),
        );
        LatentDgp {
            q: 0.5,
            pi: BTreeMap::from([
                (Compliance::AlwaysTaker, 0.25),
                (Compliance::Complier, 0.50),
                (Compliance::NeverTaker, 0.25),
            ]),
            outcome_dist,
            x_support: vec![vec![0.0], vec![1.0]],
            x_dist,
        }
    }

    /// The reference fixture with the mobilised compliers relabelled as
    /// demobilised: 10% of compliers have `Y(0)=1, Y(1)=0`, so the
    /// outcome contrast is negative and the observable distribution is
    /// incompatible with monotone treatment response.
    pub fn dgp1_mtr_violating() -> Self {
        let mut dgp = Self::dgp1();
        let complier = dgp.outcome_dist.get_mut(&Compliance::Complier).unwrap();
        complier.remove(&OutcomeType::Mobilised);
        complier.insert(OutcomeType::Demobilised, 0.1);
        let complier_x = dgp.x_dist.get_mut(&Compliance::Complier).unwrap();
        let probs = complier_x.remove(&OutcomeType::Mobilised).unwrap();
        complier_x.insert(OutcomeType::Demobilised, probs);
        dgp
    }

    /// One-sided non-compliance in the treatment group (no
    /// always-takers) with the untreated potential outcome independent
    /// of the treated potential treatment; under this process the
    /// approximated and local persuasion rates coincide.
    pub fn one_sided_independent() -> Self {
        let mut outcome_dist = BTreeMap::new();
        outcome_dist.insert(
            Compliance::Complier,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, 0.3),
                (OutcomeType::NeverVoter, 0.5),
                (OutcomeType::Mobilised, 0.2),
            ]),
        );
        // same P[Y(0)=1] as compliers keeps Y(0) independent of T(1)
        outcome_dist.insert(
            Compliance::NeverTaker,
            BTreeMap::from([
                (OutcomeType::AlwaysVoter, 0.3),
                (OutcomeType::NeverVoter, 0.55),
                (OutcomeType::Mobilised, 0.15),
            ]),
        );
        LatentDgp {
            q: 0.5,
            pi: BTreeMap::from([(Compliance::Complier, 0.6), (Compliance::NeverTaker, 0.4)]),
            outcome_dist,
            x_support: vec![],
            x_dist: BTreeMap::new(),
        }
    }

    /// A random model-consistent process with a binary covariate, all
    /// masses bounded away from zero so every estimand guard passes.
    pub fn random_valid(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let q = rng.random_range(0.25..0.75);
        let draw3 = |rng: &mut ChaCha12Rng| -> [f64; 3] {
            let a: f64 = rng.random_range(0.1..1.0);
            let b: f64 = rng.random_range(0.1..1.0);
            let c: f64 = rng.random_range(0.1..1.0);
            let s = a + b + c;
            [a / s, b / s, c / s]
        };
        let pi_draw = draw3(&mut rng);
        let pi = BTreeMap::from([
            (Compliance::NeverTaker, pi_draw[0]),
            (Compliance::Complier, pi_draw[1]),
            (Compliance::AlwaysTaker, pi_draw[2]),
        ]);
        let mut outcome_dist = BTreeMap::new();
        let mut x_dist = BTreeMap::new();
        for c in [
            Compliance::NeverTaker,
            Compliance::Complier,
            Compliance::AlwaysTaker,
        ] {
            let m = draw3(&mut rng);
            outcome_dist.insert(
                c,
                BTreeMap::from([
                    (OutcomeType::NeverVoter, m[0]),
                    (OutcomeType::Mobilised, m[1]),
                    (OutcomeType::AlwaysVoter, m[2]),
                ]),
            );
            let mut per_outcome = BTreeMap::new();
            for o in [
                OutcomeType::NeverVoter,
                OutcomeType::Mobilised,
                OutcomeType::AlwaysVoter,
            ] {
                let p1 = rng.random_range(0.1..0.9);
                per_outcome.insert(o, vec![1.0 - p1, p1]);
            }
            x_dist.insert(c, per_outcome);
        }
        LatentDgp {
            q,
            pi,
            outcome_dist,
            x_support: vec![vec![0.0], vec![1.0]],
            x_dist,
        }
    }

    /// Reads a process from its JSON representation and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let dgp: LatentDgp = serde_json::from_str(text)?;
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Draws an i.i.d. sample of size `n`, deterministically from the
    /// seed.
    ///
    /// Each row consumes three uniforms in a fixed order: latent type,
    /// covariate point, instrument. The treatment and outcome follow
    /// mechanically as `T = T(Z)` and `Y = Y(T)`.
    pub fn draw_sample(&self, n: usize, seed: u64) -> Result<ObservedSample> {
        self.validate()?;
        if n == 0 {
            return Err(Error::EmptySample);
        }
        // fixed type order: compliance then outcome, both in enum order
        let mut types = Vec::new();
        for &c in &ALL_COMPLIANCE {
            for &o in &ALL_OUTCOMES {
                let w = self.type_mass(c, o);
                if w > 0.0 {
                    types.push((c, o, w));
                }
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = types[types.len() - 1];
            for &(c, o, w) in &types {
                acc += w;
                if u < acc {
                    chosen = (c, o, w);
                    break;
                }
            }
            let (c, o, _) = chosen;
            let v: f64 = rng.random();
            let x = if self.x_support.is_empty() {
                Vec::new()
            } else {
                let probs = self.x_probs(c, o).expect("validated");
                let mut acc = 0.0;
                let mut idx = self.x_support.len() - 1;
                for (i, &w) in probs.iter().enumerate() {
                    acc += w;
                    if v < acc {
                        idx = i;
                        break;
                    }
                }
                self.x_support[idx].clone()
            };
            let w: f64 = rng.random();
            let z = u8::from(w < self.q);
            let t = c.treatment(z);
            let y = o.outcome(t);
            rows.push(ObservedRow {
                y,
                t,
                z: z as i64,
                x,
            });
        }
        ObservedSample::new(rows, self.covariate_names())
    }

    /// Partition of the covariate support into one cell per distinct
    /// support point (the population analogue of the discrete-product
    /// partition on data).
    pub fn support_partition(&self) -> Result<CellPartition> {
        // route through a tiny synthetic sample so the cell rules match
        // the data path exactly
        let rows: Vec<ObservedRow> = if self.x_support.is_empty() {
            vec![ObservedRow {
                y: 0,
                t: 0,
                z: 0,
                x: vec![],
            }]
        } else {
            self.x_support
                .iter()
                .map(|p| ObservedRow {
                    y: 0,
                    t: 0,
                    z: 0,
                    x: p.clone(),
                })
                .collect()
        };
        let pseudo = ObservedSample::new(rows, self.covariate_names())?;
        let covariates: Vec<usize> = (0..self.covariate_arity()).collect();
        let spec = if covariates.is_empty() {
            crate::sample::BinningSpec::None
        } else {
            crate::sample::BinningSpec::Discrete { covariates }
        };
        crate::sample::partition_cells(&pseudo, &spec)
    }

    // ---- ground truth, read directly off the type probabilities ----

    fn complier_outcome_share(&self, o: OutcomeType) -> f64 {
        self.outcome_mass(Compliance::Complier, o)
    }

    /// True joint distribution `(p11, p00, p01)` of the potential
    /// outcomes among compliers.
    pub fn truth_joint_po(&self) -> (f64, f64, f64) {
        (
            self.complier_outcome_share(OutcomeType::AlwaysVoter),
            self.complier_outcome_share(OutcomeType::NeverVoter),
            self.complier_outcome_share(OutcomeType::Mobilised),
        )
    }

    /// True `(P[Y(0)=1 | C], P[Y(1)=1 | C])`.
    pub fn truth_marginal_po(&self) -> (f64, f64) {
        let p11 = self.complier_outcome_share(OutcomeType::AlwaysVoter);
        let p01 = self.complier_outcome_share(OutcomeType::Mobilised);
        let p10 = self.complier_outcome_share(OutcomeType::Demobilised);
        (p11 + p10, p11 + p01)
    }

    /// True local persuasion rate, if defined.
    pub fn truth_theta_local(&self) -> Option<f64> {
        let p00 = self.complier_outcome_share(OutcomeType::NeverVoter);
        let p01 = self.complier_outcome_share(OutcomeType::Mobilised);
        let denom = p00 + p01;
        (denom > 0.0).then(|| p01 / denom)
    }

    /// True approximated persuasion rate (an observable functional).
    pub fn truth_theta_dk(&self) -> Option<f64> {
        let mut ey0 = 0.0;
        let mut late_num = 0.0;
        let mut dt = 0.0;
        for &c in &ALL_COMPLIANCE {
            let t0 = c.treatment(0);
            let t1 = c.treatment(1);
            dt += self.mass(c) * (t1 as f64 - t0 as f64);
            for &o in &ALL_OUTCOMES {
                let w = self.type_mass(c, o);
                ey0 += w * o.outcome(t0) as f64;
                late_num += w * (o.outcome(t1) as f64 - o.outcome(t0) as f64);
            }
        }
        if dt.abs() < 1e-12 || ey0 >= 1.0 - 1e-12 {
            return None;
        }
        Some(late_num / dt / (1.0 - ey0))
    }

    /// True complier moment of `g(Y(t), T, X)`.
    pub fn truth_kappa(&self, g: &dyn Fn(u8, u8, &[f64]) -> f64, t: u8) -> Option<f64> {
        if self.mass(Compliance::Complier) == 0.0 {
            return None;
        }
        let mut value = 0.0;
        for (z, qz) in [(0u8, 1.0 - self.q), (1u8, self.q)] {
            for &o in &ALL_OUTCOMES {
                let share = self.complier_outcome_share(o);
                if share == 0.0 {
                    continue;
                }
                let y_t = o.outcome(t);
                value += qz * share * self.x_mean(Compliance::Complier, o, &|x| g(y_t, z, x));
            }
        }
        Some(value)
    }

    /// True `E[g(T, X) | Y(t) = y, complier]`.
    pub fn truth_profile_marginal(
        &self,
        g: &dyn Fn(u8, &[f64]) -> f64,
        t: u8,
        y: u8,
    ) -> Option<f64> {
        let members: Vec<OutcomeType> = ALL_OUTCOMES
            .iter()
            .copied()
            .filter(|o| o.outcome(t) == y)
            .collect();
        let mass: f64 = members
            .iter()
            .map(|&o| self.complier_outcome_share(o))
            .sum();
        if mass == 0.0 || self.mass(Compliance::Complier) == 0.0 {
            return None;
        }
        let mut value = 0.0;
        for (z, qz) in [(0u8, 1.0 - self.q), (1u8, self.q)] {
            for &o in &members {
                let w = self.complier_outcome_share(o) / mass;
                value += qz * w * self.x_mean(Compliance::Complier, o, &|x| g(z, x));
            }
        }
        Some(value)
    }

    /// True `E[g(T, X) | persuasion type, complier]`.
    pub fn truth_profile_persuasion(
        &self,
        g: &dyn Fn(u8, &[f64]) -> f64,
        target: PersuasionTarget,
    ) -> Option<f64> {
        let o = match target {
            PersuasionTarget::Always => OutcomeType::AlwaysVoter,
            PersuasionTarget::Never => OutcomeType::NeverVoter,
            PersuasionTarget::Mobilised => OutcomeType::Mobilised,
        };
        if self.type_mass(Compliance::Complier, o) == 0.0 {
            return None;
        }
        let mut value = 0.0;
        for (z, qz) in [(0u8, 1.0 - self.q), (1u8, self.q)] {
            value += qz * self.x_mean(Compliance::Complier, o, &|x| g(z, x));
        }
        Some(value)
    }

    /// True joint-indicator expectation for the six display-order
    /// variants.
    pub fn truth_profile_joint_indicator(
        &self,
        g: &dyn Fn(u8, &[f64]) -> f64,
        variant: u8,
    ) -> Option<f64> {
        // (conditioning t, conditioning y, indicator t, indicator y)
        let (ct, cy, it, iy) = match variant {
            1 => (0u8, 0u8, 1u8, 0u8),
            2 => (0, 0, 1, 1),
            3 => (0, 1, 1, 1),
            4 => (1, 0, 0, 0),
            5 => (1, 1, 0, 1),
            6 => (1, 1, 0, 0),
            _ => return None,
        };
        let members: Vec<OutcomeType> = ALL_OUTCOMES
            .iter()
            .copied()
            .filter(|o| o.outcome(ct) == cy)
            .collect();
        let mass: f64 = members
            .iter()
            .map(|&o| self.complier_outcome_share(o))
            .sum();
        if mass == 0.0 || self.mass(Compliance::Complier) == 0.0 {
            return None;
        }
        let mut value = 0.0;
        for (z, qz) in [(0u8, 1.0 - self.q), (1u8, self.q)] {
            for &o in &members {
                if o.outcome(it) != iy {
                    continue;
                }
                let w = self.complier_outcome_share(o) / mass;
                value += qz * w * self.x_mean(Compliance::Complier, o, &|x| g(z, x));
            }
        }
        Some(value)
    }

    /// True covariate profile of always-takers / never-takers.
    pub fn truth_profile_at_nt(
        &self,
        g: &dyn Fn(&[f64]) -> f64,
        group: TakerGroup,
        y: u8,
    ) -> Option<f64> {
        let (c, t) = match group {
            TakerGroup::AlwaysTaker => (Compliance::AlwaysTaker, 1u8),
            TakerGroup::NeverTaker => (Compliance::NeverTaker, 0u8),
        };
        let members: Vec<OutcomeType> = ALL_OUTCOMES
            .iter()
            .copied()
            .filter(|o| o.outcome(t) == y)
            .collect();
        let mass: f64 = members.iter().map(|&o| self.type_mass(c, o)).sum();
        if mass == 0.0 {
            return None;
        }
        let mut value = 0.0;
        for &o in &members {
            let w = self.type_mass(c, o) / mass;
            value += w * self.x_mean(c, o, &g);
        }
        Some(value)
    }
}

impl MomentSource for LatentDgp {
    fn arm_mean_of(&self, arm: u8, g: &dyn Fn(u8, u8, &[f64]) -> f64) -> Result<f64> {
        let mut value = 0.0;
        for &c in &ALL_COMPLIANCE {
            let t = c.treatment(arm);
            for &o in &ALL_OUTCOMES {
                let w = self.type_mass(c, o);
                if w == 0.0 {
                    continue;
                }
                let y = o.outcome(t);
                value += w * self.x_mean(c, o, &|x| g(y, t, x));
            }
        }
        Ok(value)
    }

    fn pz_one(&self) -> f64 {
        self.q
    }
}

/// Arm-conditional population means of the transforms every estimand
/// uses, indexed by arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    pub e_t: [f64; 2],
    pub e_y: [f64; 2],
    /// `E[Y (1-T) | Z=z]`.
    pub e_y_untreated: [f64; 2],
    /// `E[(1-Y) T | Z=z]`.
    pub e_nony_treated: [f64; 2],
    /// `E[(1-Y)(1-T) | Z=z]`.
    pub e_nony_untreated: [f64; 2],
    /// `E[Y T | Z=z]`.
    pub e_y_treated: [f64; 2],
}

/// Exact population moments of a process.
pub fn population_moments(dgp: &LatentDgp) -> Result<PopulationMoments> {
    dgp.validate()?;
    let mean = |arm: u8, g: &dyn Fn(u8, u8, &[f64]) -> f64| dgp.arm_mean_of(arm, g);
    let pair =
        |g: &dyn Fn(u8, u8, &[f64]) -> f64| -> Result<[f64; 2]> { Ok([mean(0, g)?, mean(1, g)?]) };
    Ok(PopulationMoments {
        e_t: pair(&|_, t, _| t as f64)?,
        e_y: pair(&|y, _, _| y as f64)?,
        e_y_untreated: pair(&|y, t, _| (y * (1 - t)) as f64)?,
        e_nony_treated: pair(&|y, t, _| ((1 - y) * t) as f64)?,
        e_nony_untreated: pair(&|y, t, _| ((1 - y) * (1 - t)) as f64)?,
        e_y_treated: pair(&|y, t, _| (y * t) as f64)?,
    })
}

/// Ground-truth record for the scalar estimands plus the population
/// feasibility of the falsification system. Undefined targets
/// (zero-mass conditioning sets) are `None`.
#[derive(Debug, Clone)]
pub struct OracleEstimands {
    pub joint: (f64, f64, f64),
    pub marginal_y0_one: f64,
    pub marginal_y1_one: f64,
    pub theta_local: Option<f64>,
    pub theta_dk: Option<f64>,
    pub theta_local_untreated: Option<f64>,
    /// Population residual of the falsification system under the
    /// monotone-response restrictions.
    pub falsifier_population_residual: f64,
    pub falsifier_feasible: bool,
}

/// Evaluates the ground truth of every scalar estimand by direct
/// summation over the latent types.
pub fn oracle_estimands(dgp: &LatentDgp) -> Result<OracleEstimands> {
    dgp.validate()?;
    let joint = dgp.truth_joint_po();
    let (m0, m1) = dgp.truth_marginal_po();
    let theta_local = dgp.truth_theta_local();
    let partition = dgp.support_partition()?;
    let system = falsifier::build_system(dgp, &partition, Restrictions::IaIvPlusMtr)?;
    let (residual, _) = falsifier::solve_feasibility(&system)?;
    Ok(OracleEstimands {
        joint,
        marginal_y0_one: m0,
        marginal_y1_one: m1,
        theta_local,
        theta_dk: dgp.truth_theta_dk(),
        theta_local_untreated: theta_local,
        falsifier_population_residual: residual,
        falsifier_feasible: residual < 1e-8,
    })
}
