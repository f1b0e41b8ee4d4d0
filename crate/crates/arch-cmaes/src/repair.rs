//! Repair of infeasible candidates by projection in the Mahalanobis metric of
//! the sampling distribution. The primary route projects onto the intersection
//! of the boundaries of the violated constraints (staying inside everything
//! else); when that intersection is empty or unreachable, the fallback is the
//! nearest point of the whole feasible set. Both reduce to a small convex QP
//! solved by a dual active-set method. All right-hand sides are tightened by
//! an adaptive margin `epsilon` so returned points sit strictly inside.

use crate::constraints::{ConstraintError, LinearConstraintSet};
use crate::numerics::{self, NumericsError, SymEigen};
use nalgebra::{DMatrix, DVector};

/// Gram-matrix pseudo-inverse cutoff, relative to the largest eigenvalue.
pub const GRAM_PINV_CUTOFF: f64 = 1e-12;
/// Curvature below this fraction of `a^T Sigma a` counts as a degenerate
/// step direction inside the QP.
const QP_CURVATURE_TOL: f64 = 1e-11;

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error("metric is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    MetricNotPositive { min_eigenvalue: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("feasible region is empty under the current margin")]
    EmptyFeasibleRegion,
    #[error("QP iteration cap {cap} exceeded")]
    IterationCap { cap: usize },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A positive definite quadratic form `Sigma`, held with its
/// eigendecomposition so both `Sigma v` and `Sigma^-1 v` are cheap.
#[derive(Debug, Clone)]
pub struct Metric {
    matrix: DMatrix<f64>,
    eig: SymEigen,
}

impl Metric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, RepairError> {
        let eig = numerics::sym_eig(&matrix)?;
        Self::from_parts(matrix, eig)
    }

    /// The sampling metric `sigma^2 C` of a search distribution, reusing an
    /// existing factorization of `C`.
    pub fn from_cma(sigma: f64, cov: &DMatrix<f64>, factor: &SymEigen) -> Result<Self, RepairError> {
        let s2 = sigma * sigma;
        let eig = SymEigen { values: &factor.values * s2, vectors: factor.vectors.clone() };
        Self::from_parts(cov * s2, eig)
    }

    fn from_parts(matrix: DMatrix<f64>, eig: SymEigen) -> Result<Self, RepairError> {
        let min = eig.values.min();
        if min <= 0.0 {
            return Err(RepairError::MetricNotPositive { min_eigenvalue: min });
        }
        Ok(Metric { matrix, eig })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `Sigma v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// `Sigma^-1 v` through the eigendecomposition.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = self.eig.vectors.transpose() * v;
        for i in 0..w.len() {
            w[i] /= self.eig.values[i];
        }
        &self.eig.vectors * w
    }

    /// Squared distance `(x - y)^T Sigma^-1 (x - y)`.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, RepairError> {
        if x.len() != self.dim() {
            return Err(RepairError::DimensionMismatch { left: x.len(), right: self.dim() });
        }
        Ok(numerics::mahalanobis_sq(x, y, |d| self.solve(d))?)
    }
}

/// Margin bounds and solver limits for the repair operator.
#[derive(Debug, Clone)]
pub struct RepairConfig {
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// QP iteration cap per constraint row involved.
    pub qp_cap_per_row: usize,
    /// Feasibility acceptance factor, scaled by `1 + |b|_inf`.
    pub feasibility_tol_factor: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            epsilon_min: 1e-13,
            epsilon_max: 1e-4,
            qp_cap_per_row: 50,
            feasibility_tol_factor: 1e-11,
        }
    }
}

impl RepairConfig {
    pub fn feasibility_tol(&self, g: &LinearConstraintSet) -> f64 {
        let b_inf = g.rhs().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.feasibility_tol_factor * (1.0 + b_inf)
    }

    fn qp_cap(&self, rows: usize) -> usize {
        self.qp_cap_per_row * rows.max(1)
    }
}

/// The adaptive margin; starts at the configured floor.
#[derive(Debug, Clone, Copy)]
pub struct RepairState {
    pub epsilon: f64,
}

impl RepairState {
    pub fn new(cfg: &RepairConfig) -> Self {
        RepairState { epsilon: cfg.epsilon_min }
    }
}

/// Halve the margin when at most `ceil(0.1 lambda)` repairs failed this
/// generation, otherwise grow it tenfold; always clipped to the configured
/// band.
pub fn update_epsilon(
    state: &RepairState,
    unsuccessful_count: usize,
    lambda: usize,
    cfg: &RepairConfig,
) -> RepairState {
    let threshold = (0.1 * lambda as f64).ceil() as usize;
    let raw = if unsuccessful_count <= threshold {
        state.epsilon * 0.5
    } else {
        state.epsilon * 10.0
    };
    RepairState { epsilon: raw.clamp(cfg.epsilon_min, cfg.epsilon_max) }
}

/// Result of repairing one point.
#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub repaired: DVector<f64>,
    /// Whether the returned point satisfies every constraint (unshifted).
    pub success: bool,
    /// Squared metric distance between input and returned point.
    pub distance_sq: f64,
    /// Constraint rows active at the returned point.
    pub active: Vec<usize>,
}

/// Metric projection of `x` onto the affine set `{y : a_j . y = b_j, j in rows}`:
/// `y = x - Sigma A_J^T (A_J Sigma A_J^T)^+ (A_J x - b_J)`. Rank-deficient
/// Gram matrices go through the pseudo-inverse, giving the least-squares
/// projection.
pub fn project_to_intersection(
    x: &DVector<f64>,
    g: &LinearConstraintSet,
    rows: &[usize],
    metric: &Metric,
) -> Result<DVector<f64>, RepairError> {
    check_dims(x, g, metric)?;
    if rows.is_empty() {
        return Ok(x.clone());
    }
    let (a_j, b_j) = g.select_rows(rows)?;
    let sigma_at = &metric.matrix * a_j.transpose();
    let gram = &a_j * &sigma_at;
    let gram = (&gram + gram.transpose()) * 0.5;
    let gram_pinv = numerics::sym_eig(&gram)?.pseudo_inverse(GRAM_PINV_CUTOFF);
    let residual = &a_j * x - b_j;
    Ok(x - sigma_at * (gram_pinv * residual))
}

/// Outcome of the constrained projection QP.
#[derive(Debug, Clone)]
pub enum QpOutcome {
    Solved(QpSolution),
    /// The constraint system itself admits no point.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub y: DVector<f64>,
    /// One multiplier per constraint row of `g` (zero for rows not involved);
    /// inequality multipliers are nonnegative, equality ones sign-free.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

struct ActiveRow {
    row: usize,
    /// Working normal is `sign * a_row`; -1 only for equalities approached
    /// from below.
    sign: f64,
    is_eq: bool,
}

/// Minimize `(y - x)^T Sigma^-1 (y - x)` subject to
/// `a_j . y = b_j - shift` on `eq_rows` and `a_j . y <= b_j - shift` on
/// `ineq_rows`, by a dual active-set method started at the unconstrained
/// minimum `y = x`. Rows listed in both sets are treated as equalities.
pub fn solve_metric_qp(
    x: &DVector<f64>,
    g: &LinearConstraintSet,
    metric: &Metric,
    eq_rows: &[usize],
    ineq_rows: &[usize],
    shift: f64,
    cfg: &RepairConfig,
) -> Result<QpOutcome, RepairError> {
    check_dims(x, g, metric)?;
    for &r in eq_rows.iter().chain(ineq_rows) {
        if r >= g.len() {
            return Err(ConstraintError::RowOutOfRange { row: r, count: g.len() }.into());
        }
    }
    let ineq_rows: Vec<usize> =
        ineq_rows.iter().copied().filter(|r| !eq_rows.contains(r)).collect();
    let cap = cfg.qp_cap(eq_rows.len() + ineq_rows.len());

    let row_vec = |j: usize| g.matrix().row(j).transpose();
    let rhs = |j: usize| g.rhs()[j] - shift;
    let slack = |j: usize, y: &DVector<f64>| row_vec(j).dot(y) - rhs(j);
    // Scale-aware violation threshold per row.
    let viol_tol =
        |j: usize, y: &DVector<f64>| 1e-12 * (1.0 + rhs(j).abs() + row_vec(j).norm() * y.norm());

    let mut y = x.clone();
    let mut active: Vec<ActiveRow> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    'outer: loop {
        // Next violated constraint: unmet equalities first (any side), then
        // the worst inequality violation.
        let mut pick: Option<(usize, f64, bool, f64)> = None;
        for &j in eq_rows {
            if active.iter().any(|a| a.row == j) {
                continue;
            }
            let s = slack(j, &y);
            if s.abs() > viol_tol(j, &y) {
                pick = Some((j, if s > 0.0 { 1.0 } else { -1.0 }, true, s.abs()));
                break;
            } else {
                // Satisfied already: enter the working set with a zero step so
                // later moves preserve it.
                pick = Some((j, 1.0, true, 0.0));
                break;
            }
        }
        if pick.is_none() {
            let mut worst = 0.0;
            for &j in &ineq_rows {
                if active.iter().any(|a| a.row == j) {
                    continue;
                }
                let s = slack(j, &y);
                if s > viol_tol(j, &y) && s > worst {
                    worst = s;
                    pick = Some((j, 1.0, false, s));
                }
            }
        }
        let Some((p, sign, is_eq, _)) = pick else {
            break 'outer;
        };

        let a_p = row_vec(p) * sign;
        let c_p = rhs(p) * sign;
        let mut u_p = 0.0f64;

        // Inner loop: take (partial) steps toward constraint p, dropping
        // blocking inequality rows, until p can join the working set.
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(RepairError::IterationCap { cap });
            }

            let k = active.len();
            let d = metric.apply(&a_p);
            let (z, r) = if k == 0 {
                (d.clone(), DVector::zeros(0))
            } else {
                let n_mat = DMatrix::from_fn(k, x.len(), |i, j| {
                    g.matrix()[(active[i].row, j)] * active[i].sign
                });
                let gram = &n_mat * metric.apply_to_columns(&n_mat.transpose());
                let r = gram_solve(&gram, &(&n_mat * &d))?;
                let z = &d - metric.apply_to_columns(&n_mat.transpose()) * &r;
                (z, r)
            };

            let curv = a_p.dot(&z);
            let curv_scale = a_p.dot(&d).max(f64::MIN_POSITIVE);
            let current_violation = a_p.dot(&y) - c_p;
            let t_full = if curv > QP_CURVATURE_TOL * curv_scale {
                Some((current_violation / curv).max(0.0))
            } else {
                None
            };

            let mut blocking: Option<(usize, f64)> = None;
            for i in 0..k {
                if active[i].is_eq || r[i] <= 1e-14 * (1.0 + r.amax()) {
                    continue;
                }
                let t = mult[i] / r[i];
                if blocking.map_or(true, |(_, tb)| t < tb) {
                    blocking = Some((i, t));
                }
            }

            match (t_full, blocking) {
                (None, None) => return Ok(QpOutcome::Infeasible),
                (Some(tf), Some((i, tb))) if tb < tf => {
                    take_step(&mut y, &mut mult, &mut u_p, &z, &r, tb);
                    active.remove(i);
                    mult.remove(i);
                }
                (None, Some((i, tb))) => {
                    take_step(&mut y, &mut mult, &mut u_p, &z, &r, tb);
                    active.remove(i);
                    mult.remove(i);
                }
                (Some(tf), _) => {
                    take_step(&mut y, &mut mult, &mut u_p, &z, &r, tf);
                    active.push(ActiveRow { row: p, sign, is_eq });
                    mult.push(u_p);
                    continue 'outer;
                }
            }
        }
    }

    let mut multipliers = DVector::zeros(g.len());
    for (a, &u) in active.iter().zip(mult.iter()) {
        multipliers[a.row] = u * a.sign;
    }
    Ok(QpOutcome::Solved(QpSolution { y, multipliers, iterations }))
}

fn take_step(
    y: &mut DVector<f64>,
    mult: &mut [f64],
    u_p: &mut f64,
    z: &DVector<f64>,
    r: &DVector<f64>,
    t: f64,
) {
    *y -= z * t;
    for (m, ri) in mult.iter_mut().zip(r.iter()) {
        *m -= t * ri;
    }
    *u_p += t;
}

/// Solve against a small SPD Gram matrix, falling back to the pseudo-inverse
/// when rounding has made it semidefinite.
fn gram_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, RepairError> {
    let sym = (gram + gram.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    Ok(numerics::sym_eig(&sym)?.pseudo_inverse(GRAM_PINV_CUTOFF) * rhs)
}

impl Metric {
    /// `Sigma M` for a matrix of column vectors.
    fn apply_to_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * m
    }
}

/// Repair `x` against `g` under the supplied metric and current margin.
///
/// Feasible inputs return unchanged. Otherwise the violated rows are driven
/// to their (margin-shifted) boundaries when that intersection is reachable,
/// else the point is projected onto the whole shifted feasible set. `success`
/// reports exact feasibility of the returned point; the squared metric
/// distance is reported either way.
pub fn repair(
    x: &DVector<f64>,
    g: &LinearConstraintSet,
    metric: &Metric,
    state: &RepairState,
    cfg: &RepairConfig,
) -> Result<RepairOutcome, RepairError> {
    check_dims(x, g, metric)?;
    let active_tol = g.default_active_tol();
    let report = g.evaluate(x, active_tol)?;
    if report.feasible {
        return Ok(RepairOutcome {
            repaired: x.clone(),
            success: true,
            distance_sq: 0.0,
            active: report.active,
        });
    }

    let eps = state.epsilon;
    let tol_feas = cfg.feasibility_tol(g);
    let violated = report.violated;
    let mut repaired: Option<DVector<f64>> = None;

    if g.intersection_nonempty(&violated)? {
        let shifted = g.with_margin(eps);
        let projected = project_to_intersection(x, &shifted, &violated, metric)?;
        let ok = shifted
            .evaluate(&projected, active_tol)?
            .violations
            .iter()
            .all(|v| *v <= tol_feas);
        if ok {
            repaired = Some(projected);
        } else {
            let mut is_violated = vec![false; g.len()];
            for &j in &violated {
                is_violated[j] = true;
            }
            let rest: Vec<usize> = (0..g.len()).filter(|&j| !is_violated[j]).collect();
            if let QpOutcome::Solved(sol) =
                solve_metric_qp(x, g, metric, &violated, &rest, eps, cfg)?
            {
                repaired = Some(sol.y);
            }
        }
    }

    let y = match repaired {
        Some(y) => y,
        None => {
            let all: Vec<usize> = (0..g.len()).collect();
            match solve_metric_qp(x, g, metric, &[], &all, eps, cfg)? {
                QpOutcome::Solved(sol) => sol.y,
                QpOutcome::Infeasible => return Err(RepairError::EmptyFeasibleRegion),
            }
        }
    };

    let check = g.evaluate(&y, active_tol)?;
    let distance_sq = metric.mahalanobis_sq(x, &y)?;
    Ok(RepairOutcome { repaired: y, success: check.feasible, distance_sq, active: check.active })
}

fn check_dims(
    x: &DVector<f64>,
    g: &LinearConstraintSet,
    metric: &Metric,
) -> Result<(), RepairError> {
    if x.len() != g.dim() {
        return Err(RepairError::DimensionMismatch { left: x.len(), right: g.dim() });
    }
    if metric.dim() != g.dim() {
        return Err(RepairError::DimensionMismatch { left: metric.dim(), right: g.dim() });
    }
    Ok(())
}
