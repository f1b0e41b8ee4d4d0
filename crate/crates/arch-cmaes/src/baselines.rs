//! Comparison constraint handlers. `resampling` redraws infeasible candidates
//! until one lands inside (or gives up and marks the candidate worst), so the
//! objective only ever sees feasible points. `apbch` is an approximate
//! adaptive-penalty handler for box constraints: it evaluates at the clamped
//! point and adds a quadratic pull-back term with per-coordinate coefficients.

use crate::cmaes::{self, CmaError, CmaParameters, CmaState, standard_normal_vector};
use crate::constraints::{ConstraintError, LinearConstraintSet};
use crate::numerics::{self, NumericsError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct ResamplingConfig {
    /// Draw budget per candidate; values below 1 are treated as 1.
    pub max_resamples: usize,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        ResamplingConfig { max_resamples: 500 }
    }
}

/// One candidate produced by the resampling handler. When no feasible draw
/// appeared within the budget, `feasible` is false and the fields hold the
/// final (infeasible) draw; such a candidate ranks behind every evaluated one.
#[derive(Debug, Clone)]
pub struct ResampledCandidate {
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub x: DVector<f64>,
    pub feasible: bool,
    /// Draws consumed, including the returned one.
    pub draws: usize,
}

pub fn resample_candidate(
    cma: &CmaState,
    g: &LinearConstraintSet,
    cfg: &ResamplingConfig,
    rng: &mut impl Rng,
) -> Result<ResampledCandidate, BaselineError> {
    let sqrt_c = cma.factor()?.sqrt_matrix()?;
    resample_candidate_with_sqrt(cma, g, cfg, &sqrt_c, rng)
}

/// Resampling with a caller-held square root of the covariance, so one
/// factorization serves the whole generation.
pub fn resample_candidate_with_sqrt(
    cma: &CmaState,
    g: &LinearConstraintSet,
    cfg: &ResamplingConfig,
    sqrt_c: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<ResampledCandidate, BaselineError> {
    let n = cma.mean.len();
    let tol = g.default_active_tol();
    let budget = cfg.max_resamples.max(1);
    let mut last = None;
    for k in 1..=budget {
        let z = standard_normal_vector(n, rng);
        let y = sqrt_c * &z;
        let x = &cma.mean + &y * cma.sigma;
        if g.evaluate(&x, tol)?.feasible {
            return Ok(ResampledCandidate { z, y, x, feasible: true, draws: k });
        }
        last = Some((z, y, x));
    }
    let (z, y, x) = last.expect("budget >= 1 guarantees at least one draw");
    Ok(ResampledCandidate { z, y, x, feasible: false, draws: budget })
}

#[derive(Debug, Clone, Copy)]
pub struct ResamplingLog {
    /// Objective evaluations spent this generation (one per feasible candidate).
    pub evaluations: usize,
    /// Candidates that exhausted the draw budget.
    pub rejected: usize,
    /// Total draws over the whole population.
    pub draws: usize,
}

/// One generation under the resampling handler: every candidate is redrawn
/// until feasible (all draws consume the same stream), rejected candidates are
/// ranked worst, and the distribution update uses the kept draws.
pub fn resampling_generation<F, R>(
    cma: &CmaState,
    params: &CmaParameters,
    g: &LinearConstraintSet,
    cfg: &ResamplingConfig,
    f: &mut F,
    rng: &mut R,
) -> Result<(CmaState, ResamplingLog), BaselineError>
where
    F: FnMut(&DVector<f64>) -> f64,
    R: Rng,
{
    let factor = cma.factor()?;
    let sqrt_c = factor.sqrt_matrix()?;
    let mut z = Vec::with_capacity(params.lambda);
    let mut y = Vec::with_capacity(params.lambda);
    let mut x = Vec::with_capacity(params.lambda);
    let mut values = Vec::with_capacity(params.lambda);
    let mut log = ResamplingLog { evaluations: 0, rejected: 0, draws: 0 };
    for _ in 0..params.lambda {
        let cand = resample_candidate_with_sqrt(cma, g, cfg, &sqrt_c, rng)?;
        log.draws += cand.draws;
        if cand.feasible {
            values.push(Some(f(&cand.x)));
            log.evaluations += 1;
        } else {
            values.push(None);
            log.rejected += 1;
        }
        z.push(cand.z);
        y.push(cand.y);
        x.push(cand.x);
    }
    let order = cmaes::order_by_values(&values);
    let population = cmaes::Population { z, y, x };
    let next = cmaes::update_with_factor(cma, params, &factor, &population, &order)?;
    Ok((next, log))
}

/// Coordinate-wise clamp into `[lb, ub]`, the Euclidean-nearest feasible
/// point of a box.
pub fn clamp_to_box(x: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].clamp(lb[i], ub[i]))
}

/// Penalty state of the approximate adaptive-penalty handler. Output labels
/// use the name "apbch-approx": the penalized form is exact, the coefficient
/// adaptation is a reconstruction.
#[derive(Debug, Clone)]
pub struct ApBchState {
    /// Per-coordinate penalty coefficients, all positive.
    gamma: DVector<f64>,
    /// Recent population objective dispersions (interquartile ranges),
    /// newest last.
    dispersions: Vec<f64>,
    initialized: bool,
}

const DISPERSION_HISTORY: usize = 8;

impl ApBchState {
    pub fn new(n: usize) -> Self {
        ApBchState {
            gamma: DVector::from_element(n, 1.0),
            dispersions: Vec::new(),
            initialized: false,
        }
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn dispersions(&self) -> &[f64] {
        &self.dispersions
    }

    fn record_dispersion(&mut self, iqr: f64) {
        if self.dispersions.len() == DISPERSION_HISTORY {
            self.dispersions.remove(0);
        }
        self.dispersions.push(iqr);
    }
}

/// Penalized value `L(x) = f(clamp(x)) + (1/n) sum_i gamma_i (x_i - clamp_i)^2`;
/// equal to `f(x)` inside the box.
pub fn apbch_fitness<F>(
    x: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    state: &ApBchState,
    f: &mut F,
) -> f64
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let clamped = clamp_to_box(x, lb, ub);
    f(&clamped) + penalty(x, &clamped, &state.gamma)
}

fn penalty(x: &DVector<f64>, clamped: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
    let n = x.len() as f64;
    let mut p = 0.0;
    for i in 0..x.len() {
        let d = x[i] - clamped[i];
        p += gamma[i] * d * d;
    }
    p / n
}

/// Grow the coefficient of every coordinate whose bound the mean breaks, by
/// the factor `1.1^(1/n)`.
pub fn adapt_gamma(
    state: &mut ApBchState,
    mean: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) {
    let growth = 1.1f64.powf(1.0 / mean.len() as f64);
    for i in 0..mean.len() {
        if mean[i] < lb[i] || mean[i] > ub[i] {
            state.gamma[i] *= growth;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ApBchLog {
    /// Objective evaluations spent this generation (one per candidate).
    pub evaluations: usize,
}

/// One generation under the approximate adaptive-penalty handler: sample,
/// evaluate every candidate at its clamped position, rank by the penalized
/// value, update, then grow coefficients whose bounds the new mean violates.
/// The first population fixes the coefficient scale as its objective
/// interquartile range over the per-coordinate sampling variance.
pub fn apbch_generation<F, R>(
    cma: &CmaState,
    params: &CmaParameters,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    state: &ApBchState,
    f: &mut F,
    rng: &mut R,
) -> Result<(CmaState, ApBchState, ApBchLog), BaselineError>
where
    F: FnMut(&DVector<f64>) -> f64,
    R: Rng,
{
    if lb.len() != params.n || ub.len() != params.n {
        return Err(BaselineError::DimensionMismatch { left: lb.len(), right: params.n });
    }
    let factor = cma.factor()?;
    let population = cmaes::sample_with_factor(cma, params, &factor, rng)?;

    let mut raw = Vec::with_capacity(params.lambda);
    let mut clamped_pts = Vec::with_capacity(params.lambda);
    for x in &population.x {
        let c = clamp_to_box(x, lb, ub);
        raw.push(f(&c));
        clamped_pts.push(c);
    }

    let mut next_state = state.clone();
    let iqr = {
        let mut sorted = raw.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("objective values must be comparable"));
        numerics::quantile_lower(&sorted, 0.75).unwrap_or(0.0)
            - numerics::quantile_lower(&sorted, 0.25).unwrap_or(0.0)
    };
    next_state.record_dispersion(iqr);
    if !next_state.initialized {
        let s2 = cma.sigma * cma.sigma;
        next_state.gamma = DVector::from_fn(params.n, |i, _| {
            let var = s2 * cma.cov[(i, i)];
            let gi = iqr / var;
            if gi.is_finite() && gi > 0.0 { gi } else { 1.0 }
        });
        next_state.initialized = true;
    }

    let values: Vec<Option<f64>> = population
        .x
        .iter()
        .zip(raw.iter().zip(&clamped_pts))
        .map(|(x, (fv, c))| Some(fv + penalty(x, c, &next_state.gamma)))
        .collect();
    let order = cmaes::order_by_values(&values);
    let next_cma = cmaes::update_with_factor(cma, params, &factor, &population, &order)?;
    adapt_gamma(&mut next_state, &next_cma.mean, lb, ub);

    Ok((next_cma, next_state, ApBchLog { evaluations: params.lambda }))
}
