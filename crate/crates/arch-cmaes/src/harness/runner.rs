//! Trial driver and aggregation. A trial is deterministic in its seed: the
//! seed fixes the problem's starting point and the optimizer's draw stream.
//! Trials of a batch are independent and run in parallel.

use super::problems::{CoordinateSystem, ProblemInstance, d_crit, make_problem};
use super::records::{self, AggregateRecord, RunLogRecord};
use super::{HarnessError, ObjectiveId};
use crate::arch::{ArchState, arch_generation};
use crate::baselines::{
    ApBchState, ResamplingConfig, apbch_generation, resampling_generation,
};
use crate::cmaes::{self, CmaParameters, CmaState, default_parameters};
use crate::numerics;
use crate::repair::RepairConfig;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintHandling {
    Arch,
    Resampling,
    ApBchApprox,
    None,
}

impl ConstraintHandling {
    /// Label used in filenames and reports. The penalty handler is marked as
    /// an approximation because its coefficient adaptation is reconstructed.
    pub fn label(self) -> &'static str {
        match self {
            ConstraintHandling::Arch => "arch",
            ConstraintHandling::Resampling => "resampling",
            ConstraintHandling::ApBchApprox => "apbch-approx",
            ConstraintHandling::None => "none",
        }
    }
}

fn validate(problem: &ProblemInstance, cht: ConstraintHandling) -> Result<(), HarnessError> {
    if cht == ConstraintHandling::ApBchApprox && problem.coords != CoordinateSystem::Box {
        return Err(HarnessError::InvalidConfiguration {
            message: format!(
                "the box penalty handler needs box coordinates, got {}",
                problem.coords.name()
            ),
        });
    }
    Ok(())
}

enum HandlerState {
    Arch { repair_cfg: RepairConfig, state: ArchState },
    Resampling { cfg: ResamplingConfig },
    ApBch { state: ApBchState },
    None,
}

/// Run one trial. The first `n` uniform draws of the seeded stream belong to
/// the problem's starting-point perturbation and are skipped here, so problem
/// and optimizer together behave like a single stream seeded once.
pub fn run_trial(
    problem: &ProblemInstance,
    cht: ConstraintHandling,
    max_iterations: usize,
    target_d_crit: f64,
    seed: u64,
) -> Result<Vec<RunLogRecord>, HarnessError> {
    validate(problem, cht)?;
    let n = problem.n;
    let params: CmaParameters = default_parameters(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let _: f64 = rng.random_range(-1.0..1.0);
    }

    let mut cma = CmaState::new(problem.m0.clone(), problem.sigma0, problem.c0.clone())?;
    let mut handler = match cht {
        ConstraintHandling::Arch => {
            let repair_cfg = RepairConfig::default();
            let state = ArchState::new(&params, &repair_cfg)?;
            HandlerState::Arch { repair_cfg, state }
        }
        ConstraintHandling::Resampling => {
            HandlerState::Resampling { cfg: ResamplingConfig::default() }
        }
        ConstraintHandling::ApBchApprox => HandlerState::ApBch { state: ApBchState::new(n) },
        ConstraintHandling::None => HandlerState::None,
    };
    // The unconstrained counterpart measures distance to the unconstrained
    // minimizer, which sits at the origin for all three objectives.
    let x_target = match cht {
        ConstraintHandling::None => DVector::zeros(n),
        _ => problem.x_star.clone(),
    };

    let mut f = |x: &DVector<f64>| problem.objective(x);
    let mut records = Vec::new();
    let mut evals_total: u64 = 0;

    for _ in 0..max_iterations {
        // (alpha, d_m, eps, c_act) stay zero for handlers without them.
        let (alpha, d_m, eps, c_act) = match &mut handler {
            HandlerState::Arch { repair_cfg, state } => {
                let (next, next_state, log) = arch_generation(
                    &cma, &params, &problem.g, state, repair_cfg, &mut f, &mut rng,
                )?;
                cma = next;
                *state = next_state;
                evals_total += log.evaluations as u64;
                (log.alpha, log.d_m, log.epsilon, log.active_count as u64)
            }
            HandlerState::Resampling { cfg } => {
                let (next, log) =
                    resampling_generation(&cma, &params, &problem.g, cfg, &mut f, &mut rng)?;
                cma = next;
                evals_total += log.evaluations as u64;
                (0.0, 0.0, 0.0, 0)
            }
            HandlerState::ApBch { state } => {
                let (next, next_state, log) = apbch_generation(
                    &cma, &params, &problem.lb, &problem.ub, state, &mut f, &mut rng,
                )?;
                cma = next;
                *state = next_state;
                evals_total += log.evaluations as u64;
                (0.0, 0.0, 0.0, 0)
            }
            HandlerState::None => {
                let factor = cma.factor()?;
                let population = cmaes::sample_with_factor(&cma, &params, &factor, &mut rng)?;
                let values: Vec<Option<f64>> =
                    population.x.iter().map(|x| Some(f(x))).collect();
                let order = cmaes::order_by_values(&values);
                cma = cmaes::update_with_factor(&cma, &params, &factor, &population, &order)?;
                evals_total += params.lambda as u64;
                (0.0, 0.0, 0.0, 0)
            }
        };

        let crit = d_crit(&cma.mean, &x_target, &problem.h);
        let eig = numerics::sym_eig(&cma.cov)?;
        records.push(RunLogRecord {
            t: cma.iteration,
            evals: evals_total,
            d_crit: crit,
            sigma: cma.sigma,
            eig_min: eig.values.min().max(0.0).sqrt(),
            eig_max: eig.values.max().max(0.0).sqrt(),
            alpha,
            d_m,
            eps,
            r_feas: problem.r_feas(&cma.mean),
            c_act,
        });
        if crit <= target_d_crit {
            break;
        }
    }
    Ok(records)
}

/// Trial batch settings; seeds run from `base_seed` to
/// `base_seed + trials - 1`.
#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub id: ObjectiveId,
    pub n: usize,
    pub coords: CoordinateSystem,
    pub cht: ConstraintHandling,
    pub base_seed: u64,
    pub trials: usize,
    pub max_iterations: usize,
    pub target_d_crit: f64,
}

pub fn trial_file_name(cfg: &BatchConfig, seed: u64) -> String {
    format!(
        "{}{}_{}_{}_seed{}.csv",
        cfg.id.name(),
        cfg.n,
        cfg.coords.name(),
        cfg.cht.label(),
        seed
    )
}

/// Run a batch in parallel and write one CSV per trial into `out_dir`.
/// Returns the written paths in seed order.
pub fn run_batch(cfg: &BatchConfig, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if cfg.trials == 0 {
        return Err(HarnessError::InvalidConfiguration {
            message: "need at least one trial".into(),
        });
    }
    std::fs::create_dir_all(out_dir)?;
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|k| cfg.base_seed + k).collect();
    seeds
        .into_par_iter()
        .map(|seed| {
            let problem = make_problem(cfg.id, cfg.n, cfg.coords, seed)?;
            let records =
                run_trial(&problem, cfg.cht, cfg.max_iterations, cfg.target_d_crit, seed)?;
            let path = out_dir.join(trial_file_name(cfg, seed));
            let mut out = BufWriter::new(File::create(&path)?);
            records::write_records(&mut out, &records)?;
            Ok(path)
        })
        .collect()
}

/// Quantile curves of the criterion distance across trials. Trials that
/// terminated early keep contributing their final value (a converged run
/// stays converged), so every iteration aggregates the same trial count.
pub fn aggregate(trial_logs: &[Vec<RunLogRecord>]) -> Vec<AggregateRecord> {
    let logs: Vec<&Vec<RunLogRecord>> =
        trial_logs.iter().filter(|l| !l.is_empty()).collect();
    if logs.is_empty() {
        return Vec::new();
    }
    let horizon = logs.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(horizon);
    for idx in 0..horizon {
        let mut values: Vec<f64> = logs
            .iter()
            .map(|l| l.get(idx).unwrap_or_else(|| l.last().expect("non-empty")).d_crit)
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("d_crit is finite"));
        out.push(AggregateRecord {
            t: idx as u64 + 1,
            trials: logs.len(),
            q25: numerics::quantile_lower(&values, 0.25).expect("non-empty"),
            median: numerics::quantile_lower(&values, 0.5).expect("non-empty"),
            q75: numerics::quantile_lower(&values, 0.75).expect("non-empty"),
        });
    }
    out
}

/// Read trial CSVs and aggregate them.
pub fn aggregate_files(paths: &[PathBuf]) -> Result<Vec<AggregateRecord>, HarnessError> {
    let mut logs = Vec::with_capacity(paths.len());
    for path in paths {
        let mut reader = BufReader::new(File::open(path)?);
        logs.push(records::read_records(&mut reader)?);
    }
    Ok(aggregate(&logs))
}
