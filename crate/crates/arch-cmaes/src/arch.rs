//! Adaptive ranking constraint handling. Candidates are ranked twice: once by
//! objective value at their repaired (feasible) position, once by the metric
//! distance the repair had to move them. Selection uses the combined rank
//! `RT = Rf + alpha * Rg`, and `alpha` is steered so the mean keeps a roughly
//! unit normalized distance to the feasible set.

use crate::cmaes::{self, CmaError, CmaParameters, CmaState};
use crate::constraints::LinearConstraintSet;
use crate::numerics::{self, NumericsError};
use crate::repair::{
    self, Metric, RepairConfig, RepairError, RepairState, update_epsilon,
};
use nalgebra::DVector;
use rand::Rng;
use std::cmp::Ordering;

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Per-run state of the handler.
#[derive(Debug, Clone)]
pub struct ArchState {
    /// Ranking coefficient, kept within `[1/lambda, lambda]`.
    pub alpha: f64,
    /// Distance statistic of the previous generation.
    pub d_m_prev: f64,
    /// Normalized-step constant; depends only on `(n, lambda, w)`.
    pub sigma_hat: f64,
    pub repair: RepairState,
}

impl ArchState {
    pub fn new(params: &CmaParameters, repair_cfg: &RepairConfig) -> Result<Self, ArchError> {
        Ok(ArchState {
            alpha: 1.0,
            d_m_prev: 0.0,
            sigma_hat: sigma_hat(params.n, params)?,
            repair: RepairState::new(repair_cfg),
        })
    }
}

/// Midranks of the objective values; `None` marks a candidate whose repair
/// failed, which ranks behind every valued candidate and ties every other
/// failed one.
pub fn f_ranking(values: &[Option<f64>]) -> Vec<f64> {
    let lam = values.len();
    let mut ranks = vec![0.0; lam];
    for k in 0..lam {
        let mut better = 0usize;
        let mut tied = 0usize;
        for l in 0..lam {
            match (values[k], values[l]) {
                (Some(a), Some(b)) => {
                    if b < a {
                        better += 1;
                    } else if b == a {
                        tied += 1;
                    }
                }
                (Some(_), None) => {}
                (None, Some(_)) => better += 1,
                (None, None) => tied += 1,
            }
        }
        // `tied` includes the candidate itself.
        ranks[k] = better as f64 + 0.5 * (tied as f64 - 1.0);
    }
    ranks
}

/// Midranks of the repair distances; feasible candidates (distance zero) tie
/// at the top.
pub fn g_ranking(distances: &[f64]) -> Vec<f64> {
    let lam = distances.len();
    let mut ranks = vec![0.0; lam];
    for k in 0..lam {
        let mut better = 0usize;
        let mut tied = 0usize;
        for l in 0..lam {
            if distances[l] < distances[k] {
                better += 1;
            } else if distances[l] == distances[k] {
                tied += 1;
            }
        }
        ranks[k] = better as f64 + 0.5 * (tied as f64 - 1.0);
    }
    ranks
}

/// Combined ranking and the selection order it induces.
#[derive(Debug, Clone)]
pub struct RankedPopulation {
    pub rf: Vec<f64>,
    pub rg: Vec<f64>,
    pub rt: Vec<f64>,
    /// Candidate indices, best first; `RT` ties broken by smaller `Rf`, then
    /// by index.
    pub order: Vec<usize>,
}

pub fn total_ranking(rf: &[f64], rg: &[f64], alpha: f64) -> RankedPopulation {
    assert_eq!(rf.len(), rg.len(), "rank vectors must align");
    let rt: Vec<f64> = rf.iter().zip(rg).map(|(f, g)| f + alpha * g).collect();
    let mut order: Vec<usize> = (0..rt.len()).collect();
    order.sort_by(|&a, &b| {
        rt[a]
            .partial_cmp(&rt[b])
            .unwrap_or(Ordering::Equal)
            .then(rf[a].partial_cmp(&rf[b]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    RankedPopulation { rf: rf.to_vec(), rg: rg.to_vec(), rt, order }
}

/// Expected normalized length of the recombined selected step on a linear
/// objective: `c = -sum_i w_i E[N_{i:lambda}]` over ascending normal order
/// statistics, then `sigma_hat = c n mu_w / (n - 1 + c^2 mu_w)`.
pub fn sigma_hat(n: usize, params: &CmaParameters) -> Result<f64, ArchError> {
    let mut c = 0.0;
    for (i, w) in params.weights.iter().enumerate() {
        c -= w * numerics::normal_order_statistic_mean(i + 1, params.lambda)?;
    }
    let nf = n as f64;
    Ok(c * nf * params.mu_w / (nf - 1.0 + c * c * params.mu_w))
}

/// Distance statistic of the mean and the boundary contact count backing it.
#[derive(Debug, Clone)]
pub struct DmReport {
    pub d_m: f64,
    pub active_count: usize,
    pub repaired_mean: DVector<f64>,
    /// Whether the mean repair landed exactly feasible.
    pub success: bool,
}

/// Repair the mean and normalize its metric displacement:
/// `d_m = |m - m_feas|^2_metric * sigma_hat^2 / (n (n/2 + c_act))`.
pub fn compute_dm(
    mean: &DVector<f64>,
    g: &LinearConstraintSet,
    metric: &Metric,
    sigma_hat: f64,
    state: &RepairState,
    cfg: &RepairConfig,
) -> Result<DmReport, ArchError> {
    let out = repair::repair(mean, g, metric, state, cfg)?;
    let n = mean.len() as f64;
    let c_act = out.active.len() as f64;
    let d_m = out.distance_sq * sigma_hat * sigma_hat / (n * (n / 2.0 + c_act));
    Ok(DmReport {
        d_m,
        active_count: out.active.len(),
        repaired_mean: out.repaired,
        success: out.success,
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Move `alpha` by `exp(sgn(d_m - 1)/n)`, but only when the level and the
/// trend of `d_m` agree (or the mean is feasible, `d_m = 0`); clip to
/// `[1/lambda, lambda]` and remember `d_m`.
pub fn update_alpha(state: &ArchState, d_m_new: f64, n: usize, lambda: usize) -> ArchState {
    let level = sgn(d_m_new - 1.0);
    let trend = sgn(d_m_new - state.d_m_prev);
    let mut alpha = state.alpha;
    if level == trend || d_m_new == 0.0 {
        alpha *= (level / n as f64).exp();
    }
    let lam = lambda as f64;
    ArchState {
        alpha: alpha.clamp(1.0 / lam, lam),
        d_m_prev: d_m_new,
        ..state.clone()
    }
}

/// Log record of one generation.
#[derive(Debug, Clone)]
pub struct ArchIterationLog {
    pub iteration: u64,
    /// Objective evaluations spent this generation (successful repairs).
    pub evaluations: usize,
    pub alpha: f64,
    pub d_m: f64,
    /// Margin in effect while repairing this generation.
    pub epsilon: f64,
    /// Constraints active at the repaired mean.
    pub active_count: usize,
    /// Failed repairs among the candidates and the mean.
    pub unsuccessful: usize,
}

/// One full generation: sample, repair everything under the current metric
/// and margin, evaluate the objective at successfully repaired candidates,
/// refresh `d_m`/`alpha`, rank with the new `alpha`, update the search
/// distribution with the induced order (the update consumes the sampled
/// steps, not the repaired ones), and adapt the margin.
pub fn arch_generation<F, R>(
    cma: &CmaState,
    params: &CmaParameters,
    g: &LinearConstraintSet,
    arch: &ArchState,
    repair_cfg: &RepairConfig,
    f: &mut F,
    rng: &mut R,
) -> Result<(CmaState, ArchState, ArchIterationLog), ArchError>
where
    F: FnMut(&DVector<f64>) -> f64,
    R: Rng,
{
    let factor = cma.factor()?;
    let population = cmaes::sample_with_factor(cma, params, &factor, rng)?;
    let metric = Metric::from_cma(cma.sigma, &cma.cov, &factor)?;
    let epsilon = arch.repair.epsilon;

    let mut values: Vec<Option<f64>> = Vec::with_capacity(params.lambda);
    let mut distances: Vec<f64> = Vec::with_capacity(params.lambda);
    let mut unsuccessful = 0usize;
    let mut evaluations = 0usize;
    for x in &population.x {
        let out = repair::repair(x, g, &metric, &arch.repair, repair_cfg)?;
        distances.push(out.distance_sq);
        if out.success {
            values.push(Some(f(&out.repaired)));
            evaluations += 1;
        } else {
            values.push(None);
            unsuccessful += 1;
        }
    }

    let dm = compute_dm(&cma.mean, g, &metric, arch.sigma_hat, &arch.repair, repair_cfg)?;
    if !dm.success {
        unsuccessful += 1;
    }
    let mut next_arch = update_alpha(arch, dm.d_m, params.n, params.lambda);

    let ranked = total_ranking(&f_ranking(&values), &g_ranking(&distances), next_arch.alpha);
    let next_cma = cmaes::update_with_factor(cma, params, &factor, &population, &ranked.order)?;
    next_arch.repair = update_epsilon(&arch.repair, unsuccessful, params.lambda, repair_cfg);

    let log = ArchIterationLog {
        iteration: next_cma.iteration,
        evaluations,
        alpha: next_arch.alpha,
        d_m: dm.d_m,
        epsilon,
        active_count: dm.active_count,
        unsuccessful,
    };
    Ok((next_cma, next_arch, log))
}
