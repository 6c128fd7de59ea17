//! Sharp falsification test of the identifying assumptions.
//!
//! The observable distribution of `(Y, T, X-cell)` within each
//! instrument arm is a linear map of the latent-type probabilities, and
//! the excluded types (defiers, and demobilised voters under the
//! monotone-response restriction) never appear as columns. The
//! assumptions are therefore testable as feasibility of `A p = b` over
//! the probability simplex: the test statistic is the scaled Euclidean
//! distance from `b-hat` to the feasible cone, minimized by an
//! accelerated projected-gradient solve with exact simplex projection,
//! and critical values come from recomputing the statistic on random
//! subsamples.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::MomentSource;
use crate::oracle::{Compliance, OutcomeType};
use crate::sample::{CellPartition, ObservedSample};

/// Which restrictions the system encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Restrictions {
    /// Instrument validity only: defiers excluded, all four outcome
    /// types allowed.
    IaIvOnly,
    /// Instrument validity plus monotone treatment response: defiers
    /// and demobilised voters both excluded.
    IaIvPlusMtr,
}

impl Restrictions {
    fn outcome_types(self) -> &'static [OutcomeType] {
        match self {
            Restrictions::IaIvOnly => &[
                OutcomeType::NeverVoter,
                OutcomeType::Mobilised,
                OutcomeType::Demobilised,
                OutcomeType::AlwaysVoter,
            ],
            Restrictions::IaIvPlusMtr => &[
                OutcomeType::NeverVoter,
                OutcomeType::Mobilised,
                OutcomeType::AlwaysVoter,
            ],
        }
    }
}

const COMPLIANCE_TYPES: [Compliance; 3] = [
    Compliance::NeverTaker,
    Compliance::Complier,
    Compliance::AlwaysTaker,
];

/// One unknown: the probability of a latent type within a covariate
/// cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ColumnId {
    pub outcome: &'static str,
    pub compliance: &'static str,
    pub cell: usize,
}

/// One equation: an observed within-arm cell probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowId {
    pub z: u8,
    pub y: u8,
    pub t: u8,
    pub cell: usize,
}

/// The linear system `A p = b-hat` over latent-type probabilities.
///
/// `a` is stored row-major with shape `(8K) x (#types * K)`; entries
/// are exactly zero or one. `b_hat` holds the empirical conditional
/// probabilities `P[Y=y, T=t, X in cell k | Z=z]` in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct FalsifierSystem {
    pub a: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<RowId>,
    pub columns: Vec<ColumnId>,
    pub b_hat: Vec<f64>,
    pub restrictions: Restrictions,
}

impl FalsifierSystem {
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.a[row * self.n_cols + col]
    }

    fn matvec(&self, p: &[f64], out: &mut [f64]) {
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.a[r * self.n_cols..(r + 1) * self.n_cols];
            *slot = row.iter().zip(p).map(|(a, x)| a * x).sum();
        }
    }

    fn matvec_t(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            let row = &self.a[r * self.n_cols..(r + 1) * self.n_cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }

    /// `||A p - b||_2`.
    pub fn residual_norm(&self, p: &[f64]) -> f64 {
        let mut ap = vec![0.0; self.n_rows];
        self.matvec(p, &mut ap);
        ap.iter()
            .zip(&self.b_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn row_index(z: u8, y: u8, t: u8, cell: usize, k: usize) -> usize {
    (z as usize) * 4 * k + cell * 4 + (y as usize) * 2 + t as usize
}

/// Builds the system for any moment source: an observed sample or an
/// exact population.
///
/// Rows are ordered arm-major, then cell, then `(y, t)`; columns are
/// cell-major, then compliance type, then outcome type, so the system
/// is block-diagonal across cells apart from the global simplex
/// constraint.
pub fn build_system<S: MomentSource + ?Sized>(
    source: &S,
    cells: &CellPartition,
    restrictions: Restrictions,
) -> Result<FalsifierSystem> {
    let k = cells.k();
    let outcomes = restrictions.outcome_types();
    let types_per_cell = outcomes.len() * COMPLIANCE_TYPES.len();
    let n_rows = 8 * k;
    let n_cols = types_per_cell * k;

    let mut columns = Vec::with_capacity(n_cols);
    for cell in 0..k {
        for &c in &COMPLIANCE_TYPES {
            for &o in outcomes {
                columns.push(ColumnId {
                    outcome: o.code(),
                    compliance: c.code(),
                    cell,
                });
            }
        }
    }
    let mut rows = Vec::with_capacity(n_rows);
    for z in 0..2u8 {
        for cell in 0..k {
            for y in 0..2u8 {
                for t in 0..2u8 {
                    rows.push(RowId { z, y, t, cell });
                }
            }
        }
    }

    let mut a = vec![0.0; n_rows * n_cols];
    for (col, id) in columns.iter().enumerate() {
        let compliance = COMPLIANCE_TYPES
            .iter()
            .copied()
            .find(|c| c.code() == id.compliance)
            .expect("column built from this list");
        let outcome = outcomes
            .iter()
            .copied()
            .find(|o| o.code() == id.outcome)
            .expect("column built from this list");
        for z in 0..2u8 {
            let t = compliance.treatment(z);
            let y = outcome.outcome(t);
            let r = row_index(z, y, t, id.cell, k);
            a[r * n_cols + col] = 1.0;
        }
    }

    let mut b_hat = vec![0.0; n_rows];
    for (r, id) in rows.iter().enumerate() {
        let (y, t, cell) = (id.y, id.t, id.cell);
        let cells_ref = cells;
        b_hat[r] = source.arm_mean_of(id.z, &move |yy, tt, x| {
            let in_cell = cells_ref.cell_of(x) == Some(cell);
            ((yy == y && tt == t && in_cell) as u8) as f64
        })?;
    }

    Ok(FalsifierSystem {
        a,
        n_rows,
        n_cols,
        rows,
        columns,
        b_hat,
        restrictions,
    })
}

/// Euclidean projection onto the probability simplex (sort-based exact
/// algorithm), writing through `out` with `scratch` as sort space.
fn project_simplex_into(v: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(0.0);
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_into(v, &mut out, &mut scratch);
    out
}

/// Largest eigenvalue of `A^T A` by power iteration (deterministic
/// start).
fn lipschitz_constant(sys: &FalsifierSystem) -> f64 {
    let n = sys.n_cols;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; sys.n_rows];
    let mut atav = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..200 {
        sys.matvec(&v, &mut av);
        sys.matvec_t(&av, &mut atav);
        let norm = atav.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 1.0;
        }
        lambda = norm;
        for (vi, ai) in v.iter_mut().zip(&atav) {
            *vi = ai / norm;
        }
    }
    lambda
}

/// Solves a consistent symmetric PSD system `G q = c` by Gaussian
/// elimination with partial pivoting, zeroing free variables at
/// near-zero pivots. Any solution is a minimizer of the underlying
/// least-squares problem, so the caller only has to check feasibility.
fn solve_psd_system(g: &mut [f64], c: &mut [f64], dim: usize) -> Vec<f64> {
    let scale = (0..dim)
        .map(|i| g[i * dim + i].abs())
        .fold(0.0f64, f64::max)
        .max(1e-30);
    let mut pivot_row_of_col: Vec<Option<usize>> = vec![None; dim];
    let mut used_row = vec![false; dim];
    for col in 0..dim {
        let mut pivot = None;
        let mut best = 1e-12 * scale;
        for (r, &used) in used_row.iter().enumerate() {
            if !used && g[r * dim + col].abs() > best {
                best = g[r * dim + col].abs();
                pivot = Some(r);
            }
        }
        let Some(pr) = pivot else { continue };
        used_row[pr] = true;
        pivot_row_of_col[col] = Some(pr);
        let d = g[pr * dim + col];
        for r in 0..dim {
            if r == pr {
                continue;
            }
            let factor = g[r * dim + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in 0..dim {
                g[r * dim + j] -= factor * g[pr * dim + j];
            }
            c[r] -= factor * c[pr];
        }
    }
    let mut q = vec![0.0; dim];
    for col in 0..dim {
        if let Some(pr) = pivot_row_of_col[col] {
            // other columns in this row may be free (zeroed) variables
            let mut rhs = c[pr];
            for j in 0..dim {
                if j != col && pivot_row_of_col[j].is_none() {
                    rhs -= g[pr * dim + j] * q[j];
                }
            }
            q[col] = rhs / g[pr * dim + col];
        }
    }
    q
}

/// Exact equality-constrained least squares on a support set,
/// eliminating the simplex constraint by substitution; returns `None`
/// when the result leaves the nonnegative orthant.
fn polish_on_support(sys: &FalsifierSystem, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    if s == 0 {
        return None;
    }
    let mut p = vec![0.0; sys.n_cols];
    if s == 1 {
        p[support[0]] = 1.0;
        return Some(p);
    }
    // substitute p_last = 1 - sum(others): unconstrained LS in s-1 vars
    let last = support[s - 1];
    let dim = s - 1;
    let col = |r: usize, j: usize| sys.entry(r, support[j]) - sys.entry(r, last);
    let mut g = vec![0.0; dim * dim];
    let mut c = vec![0.0; dim];
    for r in 0..sys.n_rows {
        let b_tilde = sys.b_hat[r] - sys.entry(r, last);
        for i in 0..dim {
            let ai = col(r, i);
            if ai == 0.0 {
                continue;
            }
            c[i] += ai * b_tilde;
            for j in 0..dim {
                g[i * dim + j] += ai * col(r, j);
            }
        }
    }
    let q = solve_psd_system(&mut g, &mut c, dim);
    let mut total = 0.0;
    for (i, &ci) in support.iter().take(dim).enumerate() {
        p[ci] = q[i];
        total += q[i];
    }
    p[last] = 1.0 - total;
    if p.iter().any(|&v| v < -1e-9) {
        return None;
    }
    // clamp roundoff negatives and renormalize
    for v in &mut p {
        *v = v.max(0.0);
    }
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 {
        return None;
    }
    for v in &mut p {
        *v /= sum;
    }
    Some(p)
}

const MAX_ITERATIONS: usize = 10_000;
const OBJECTIVE_TOL: f64 = 1e-16;

/// Minimizes `||A p - b||_2` over the probability simplex.
///
/// Accelerated projected gradient (with function-value restarts) from
/// the uniform interior start, followed by an exact equality-
/// constrained solve on the detected support when that solve stays
/// feasible. Returns the minimal norm and a minimizer; the solution
/// set may be a face of the simplex, in which case the returned point
/// is one deterministic element of it.
pub fn solve_feasibility(sys: &FalsifierSystem) -> Result<(f64, Vec<f64>)> {
    let n = sys.n_cols;
    if n == 0 || sys.n_rows == 0 {
        return Err(Error::InvalidCells("empty system".into()));
    }
    let l = lipschitz_constant(sys).max(1e-12) * 1.01;
    let objective = |p: &[f64], scratch: &mut Vec<f64>| -> f64 {
        scratch.resize(sys.n_rows, 0.0);
        sys.matvec(p, scratch);
        scratch
            .iter()
            .zip(&sys.b_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * 0.5
    };

    let mut scratch = vec![0.0; sys.n_rows];
    let mut grad = vec![0.0; n];
    let gradient = |p: &[f64], scratch: &mut Vec<f64>, grad: &mut Vec<f64>| {
        scratch.resize(sys.n_rows, 0.0);
        sys.matvec(p, scratch);
        for (s, b) in scratch.iter_mut().zip(&sys.b_hat) {
            *s -= b;
        }
        sys.matvec_t(scratch, grad);
    };

    let mut x = vec![1.0 / n as f64; n];
    let mut x_next = vec![0.0; n];
    let mut y = x.clone();
    let mut candidate = vec![0.0; n];
    let mut sort_buf = Vec::with_capacity(n);
    let mut t = 1.0f64;
    let mut f_x = objective(&x, &mut scratch);
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        gradient(&y, &mut scratch, &mut grad);
        for ((c, yi), gi) in candidate.iter_mut().zip(&y).zip(&grad) {
            *c = yi - gi / l;
        }
        project_simplex_into(&candidate, &mut x_next, &mut sort_buf);
        let f_next = objective(&x_next, &mut scratch);

        if f_next > f_x {
            // restart the momentum at the last good iterate
            y.copy_from_slice(&x);
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for ((yi, &xn), &xo) in y.iter_mut().zip(x_next.iter()).zip(x.iter()) {
            *yi = xn + momentum * (xn - xo);
        }
        let delta = f_x - f_next;
        std::mem::swap(&mut x, &mut x_next);
        f_x = f_next;
        t = t_next;
        if delta < OBJECTIVE_TOL && iter > 1 {
            converged = true;
            break;
        }
    }

    // exact solve on the detected support, kept only if it is feasible
    // and at least as good; widen the threshold until one sticks
    for threshold in [1e-10, 1e-7, 1e-5, 1e-3] {
        let support: Vec<usize> = x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > threshold)
            .map(|(i, _)| i)
            .collect();
        if let Some(polished) = polish_on_support(sys, &support) {
            let f_polished = objective(&polished, &mut scratch);
            if f_polished <= f_x + 1e-18 {
                x = polished;
                f_x = f_polished;
                converged = true;
                break;
            }
        }
    }

    if !converged {
        gradient(&x, &mut scratch, &mut grad);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        return Err(Error::NonConvergence {
            residual: (2.0 * f_x).max(0.0).sqrt(),
            grad_norm,
            iterations,
        });
    }
    Ok(((2.0 * f_x).max(0.0).sqrt(), x))
}

/// Scaled test statistic `sqrt(n) * residual`.
pub fn test_statistic(sys: &FalsifierSystem, n: usize) -> Result<f64> {
    let (residual, _) = solve_feasibility(sys)?;
    Ok((n as f64).sqrt() * residual)
}

/// Default subsample size `ceil(n^(2/3))`.
pub fn default_subsample_size(n: usize) -> usize {
    (n as f64).powf(2.0 / 3.0).ceil() as usize
}

/// Outcome of the subsampling falsification test.
#[derive(Debug, Clone, Serialize)]
pub struct FalsifierResult {
    /// Full-sample statistic `sqrt(n) * residual`.
    pub statistic: f64,
    /// Minimal residual norm on the full sample.
    pub residual: f64,
    /// Feasible-closest probability vector (one minimizer; the
    /// solution set may be a face of the simplex).
    pub p_star: Vec<f64>,
    pub columns: Vec<ColumnId>,
    /// Empirical `(1 - alpha)` quantile of the subsample statistics.
    pub critical_value: f64,
    /// Fraction of subsample statistics at or above the full-sample
    /// statistic.
    pub p_value: f64,
    #[serde(skip)]
    pub subsample_stats: Vec<f64>,
    pub b: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub alpha: f64,
    pub rejected: bool,
}

/// Draws `b` distinct indices from `0..n` (partial Fisher-Yates).
fn draw_indices(rng: &mut ChaCha12Rng, n: usize, b: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..b {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(b);
    pool
}

/// Runs the sharp test with subsampling critical values.
///
/// `m` random subsamples of size `b` are drawn without replacement;
/// each subsample statistic is scaled by `sqrt(b)`. Subsample `j`
/// derives its generator from `(seed, j)`, so results are bit-identical
/// regardless of scheduling, and the whole procedure is deterministic
/// given the seed.
pub fn subsample_test(
    sample: &ObservedSample,
    cells: &CellPartition,
    restrictions: Restrictions,
    alpha: f64,
    b: usize,
    m: usize,
    seed: u64,
) -> Result<FalsifierResult> {
    let n = sample.n();
    if !(1 < b && b < n) {
        return Err(Error::InvalidSubsampleSize { b, n });
    }
    if m == 0 {
        return Err(Error::InvalidSubsampleCount);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }

    let system = build_system(sample, cells, restrictions)?;
    let (residual, p_star) = solve_feasibility(&system)?;
    let statistic = (n as f64).sqrt() * residual;

    let stats: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| -> Result<f64> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            let indices = draw_indices(&mut rng, n, b);
            let subsample = sample.subset(&indices)?;
            let sub_system = build_system(&subsample, cells, restrictions)?;
            let (sub_residual, _) = solve_feasibility(&sub_system)?;
            Ok((b as f64).sqrt() * sub_residual)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut sorted = stats.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    // empirical quantile: smallest t with ECDF(t) >= 1 - alpha
    let rank = ((m as f64) * (1.0 - alpha)).ceil() as usize;
    let critical_value = sorted[rank.clamp(1, m) - 1];
    let p_value = stats.iter().filter(|&&s| s >= statistic).count() as f64 / m as f64;

    Ok(FalsifierResult {
        statistic,
        residual,
        p_star,
        columns: system.columns,
        critical_value,
        p_value,
        subsample_stats: stats,
        b,
        m,
        seed,
        alpha,
        rejected: statistic > critical_value,
    })
}
