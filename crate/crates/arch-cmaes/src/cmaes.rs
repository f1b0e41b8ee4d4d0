//! The covariance matrix adaptation evolution strategy, selection-agnostic:
//! callers sample a population, decide the ranking however they like, and
//! feed the best-first order back into [`update`]. Cumulation uses explicit
//! path normalization factors so the very first iterations are unbiased
//! without warm-up heuristics.

use crate::numerics::{self, NumericsError, SymEigen};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, thiserror::Error)]
pub enum CmaError {
    #[error("dimension must be at least 2, got {n}")]
    BadDimension { n: usize },
    #[error("population size must be at least 2, got {lambda}")]
    BadPopulation { lambda: usize },
    #[error("initial step size must be positive and finite, got {sigma}")]
    BadStepSize { sigma: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("order must be a permutation of 0..{lambda}")]
    BadOrder { lambda: usize },
    #[error("updated covariance lost positive definiteness (smallest eigenvalue {min_eigenvalue:.3e})")]
    CovarianceNotPositive { min_eigenvalue: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Fixed strategy constants for one dimension / population size pair.
#[derive(Debug, Clone)]
pub struct CmaParameters {
    pub n: usize,
    pub lambda: usize,
    pub mu: usize,
    /// Positive recombination weights, length `mu`, decreasing, summing to 1.
    pub weights: DVector<f64>,
    /// Variance-effective selection mass `1 / sum(w_i^2)`.
    pub mu_w: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_one: f64,
    pub c_mu: f64,
    /// Expected norm of an n-dimensional standard normal vector.
    pub chi: f64,
}

/// Strategy constants at the default population size `4 + floor(3 ln n)`.
pub fn default_parameters(n: usize) -> Result<CmaParameters, CmaError> {
    if n < 2 {
        return Err(CmaError::BadDimension { n });
    }
    let lambda = 4 + (3.0 * (n as f64).ln()).floor() as usize;
    parameters_with_population(n, lambda)
}

pub fn parameters_with_population(n: usize, lambda: usize) -> Result<CmaParameters, CmaError> {
    if n < 2 {
        return Err(CmaError::BadDimension { n });
    }
    if lambda < 2 {
        return Err(CmaError::BadPopulation { lambda });
    }
    let mu = lambda / 2;
    let nf = n as f64;

    let raw: Vec<f64> =
        (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let weights = DVector::from_iterator(mu, raw.iter().map(|w| w / total));
    let mu_w = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_w + 2.0) / (nf + mu_w + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_w - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_w / nf) / (nf + 4.0 + 2.0 * mu_w / nf);
    let c_one = 2.0 / ((nf + 1.3).powi(2) + mu_w);
    let c_mu = (1.0 - c_one)
        .min(2.0 * (mu_w - 2.0 + 1.0 / mu_w) / ((nf + 2.0).powi(2) + mu_w));
    let chi = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    Ok(CmaParameters { n, lambda, mu, weights, mu_w, c_sigma, d_sigma, c_c, c_one, c_mu, chi })
}

/// Full distribution state: `x ~ m + sigma * sqrt(C) N(0, I)` plus the two
/// evolution paths and their normalization factors (both start at zero).
#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub gamma_sigma: f64,
    pub gamma_c: f64,
    pub iteration: u64,
}

impl CmaState {
    pub fn new(mean: DVector<f64>, sigma: f64, cov: DMatrix<f64>) -> Result<Self, CmaError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(CmaError::BadStepSize { sigma });
        }
        if cov.nrows() != mean.len() {
            return Err(CmaError::DimensionMismatch { left: cov.nrows(), right: mean.len() });
        }
        let eig = numerics::sym_eig(&cov)?;
        if eig.values.min() <= 0.0 {
            return Err(CmaError::CovarianceNotPositive { min_eigenvalue: eig.values.min() });
        }
        let n = mean.len();
        Ok(CmaState {
            mean,
            sigma,
            cov,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            gamma_sigma: 0.0,
            gamma_c: 0.0,
            iteration: 0,
        })
    }

    /// Eigendecomposition of the covariance; sampling, the update, and the
    /// repair metric all derive from this one factorization.
    pub fn factor(&self) -> Result<SymEigen, CmaError> {
        Ok(numerics::sym_eig(&self.cov)?)
    }
}

/// One sampled generation, index-aligned: `y_k = sqrt(C) z_k` and
/// `x_k = m + sigma * y_k`.
#[derive(Debug, Clone)]
pub struct Population {
    pub z: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn sample(
    state: &CmaState,
    params: &CmaParameters,
    rng: &mut impl Rng,
) -> Result<Population, CmaError> {
    let factor = state.factor()?;
    sample_with_factor(state, params, &factor, rng)
}

/// Sampling with a caller-held factorization of `state.cov`.
pub fn sample_with_factor(
    state: &CmaState,
    params: &CmaParameters,
    factor: &SymEigen,
    rng: &mut impl Rng,
) -> Result<Population, CmaError> {
    let draws = (0..params.lambda).map(|_| standard_normal_vector(params.n, rng)).collect();
    assemble(state, params, factor, draws)
}

/// Deterministic variant used by tests and by callers that pre-draw.
pub fn sample_with_draws(
    state: &CmaState,
    params: &CmaParameters,
    draws: Vec<DVector<f64>>,
) -> Result<Population, CmaError> {
    let factor = state.factor()?;
    assemble(state, params, &factor, draws)
}

pub fn standard_normal_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn assemble(
    state: &CmaState,
    params: &CmaParameters,
    factor: &SymEigen,
    draws: Vec<DVector<f64>>,
) -> Result<Population, CmaError> {
    if draws.len() != params.lambda {
        return Err(CmaError::DimensionMismatch { left: draws.len(), right: params.lambda });
    }
    for z in &draws {
        if z.len() != params.n {
            return Err(CmaError::DimensionMismatch { left: z.len(), right: params.n });
        }
    }
    let sqrt_c = factor.sqrt_matrix()?;
    let y: Vec<DVector<f64>> = draws.iter().map(|z| &sqrt_c * z).collect();
    let x: Vec<DVector<f64>> =
        y.iter().map(|yk| &state.mean + yk * state.sigma).collect();
    Ok(Population { z: draws, y, x })
}

pub fn update(
    state: &CmaState,
    params: &CmaParameters,
    population: &Population,
    order: &[usize],
) -> Result<CmaState, CmaError> {
    let factor = state.factor()?;
    update_with_factor(state, params, &factor, population, order)
}

/// One distribution update given the best-first candidate order. The caller
/// may pass the factorization already used for sampling this generation.
pub fn update_with_factor(
    state: &CmaState,
    params: &CmaParameters,
    factor: &SymEigen,
    population: &Population,
    order: &[usize],
) -> Result<CmaState, CmaError> {
    let n = params.n;
    let lambda = params.lambda;
    if population.len() != lambda {
        return Err(CmaError::DimensionMismatch { left: population.len(), right: lambda });
    }
    if order.len() != lambda || !is_permutation(order, lambda) {
        return Err(CmaError::BadOrder { lambda });
    }

    // Weighted recombination of the top-mu steps.
    let mut y_w = DVector::zeros(n);
    for (rank, &idx) in order.iter().take(params.mu).enumerate() {
        y_w += &population.y[idx] * params.weights[rank];
    }
    let mean = &state.mean + &y_w * state.sigma;

    let c_sigma = params.c_sigma;
    let c_c = params.c_c;
    let inv_sqrt_c = factor.inv_sqrt_matrix()?;
    let p_sigma = &state.p_sigma * (1.0 - c_sigma)
        + &inv_sqrt_c * &y_w * (c_sigma * (2.0 - c_sigma) * params.mu_w).sqrt();
    let gamma_sigma =
        (1.0 - c_sigma).powi(2) * state.gamma_sigma + c_sigma * (2.0 - c_sigma);

    let h_sigma = if p_sigma.norm()
        < (1.4 + 2.0 / (n as f64 + 1.0)) * gamma_sigma.sqrt() * params.chi
    {
        1.0
    } else {
        0.0
    };
    let p_c = &state.p_c * (1.0 - c_c)
        + &y_w * (h_sigma * (c_c * (2.0 - c_c) * params.mu_w).sqrt());
    let gamma_c = (1.0 - c_c).powi(2) * state.gamma_c + h_sigma * c_c * (2.0 - c_c);

    let sigma = state.sigma
        * ((c_sigma / params.d_sigma) * (p_sigma.norm() / params.chi - gamma_sigma.sqrt()))
            .exp();

    // Rank-one and rank-mu updates, each centered by its own baseline so the
    // stationary covariance is unbiased.
    let mut cov = state.cov.clone();
    cov += (&p_c * p_c.transpose() - &state.cov * gamma_c) * params.c_one;
    let mut rank_mu = DMatrix::zeros(n, n);
    for (rank, &idx) in order.iter().take(params.mu).enumerate() {
        let yk = &population.y[idx];
        rank_mu += (yk * yk.transpose() - &state.cov) * params.weights[rank];
    }
    cov += rank_mu * params.c_mu;
    let cov = (&cov + cov.transpose()) * 0.5;

    if cov.clone().cholesky().is_none() {
        let min = numerics::sym_eig(&cov).map(|e| e.values.min()).unwrap_or(f64::NAN);
        return Err(CmaError::CovarianceNotPositive { min_eigenvalue: min });
    }

    Ok(CmaState {
        mean,
        sigma,
        cov,
        p_sigma,
        p_c,
        gamma_sigma,
        gamma_c,
        iteration: state.iteration + 1,
    })
}

fn is_permutation(order: &[usize], lambda: usize) -> bool {
    let mut seen = vec![false; lambda];
    for &i in order {
        if i >= lambda || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// Best-first order by plain objective comparison, ties by index. `None`
/// entries (candidates without a usable value) sort after everything else.
pub fn order_by_values(values: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| match (values[i], values[j]) {
        (Some(a), Some(b)) => a.partial_cmp(&b).unwrap().then(i.cmp(&j)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => i.cmp(&j),
    });
    order
}
