//! Benchmark problems: quadratic objectives in a box, materialized in one of
//! three coordinate systems. The transformed instances carry everything the
//! optimizer needs (constraints, objective, initial distribution) expressed in
//! working coordinates, so a run cannot tell which system it is in; that is
//! what the invariance experiments measure.

use super::HarnessError;
use crate::constraints::LinearConstraintSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// In-block rotation of the rotated ellipsoid.
pub const OBJECTIVE_ROTATION: f64 = PI / 6.0;
/// Basis rotation of the transformed coordinate systems.
pub const SYSTEM_ROTATION: f64 = PI / 4.0;
/// Box half-width either side of the center.
const BOX_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveId {
    Sphere,
    Ellipsoid,
    RotEllipsoid,
}

impl ObjectiveId {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveId::Sphere => "sphere",
            ObjectiveId::Ellipsoid => "ellipsoid",
            ObjectiveId::RotEllipsoid => "rotellipsoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateSystem {
    Box,
    RotBox,
    IllRotBox,
}

impl CoordinateSystem {
    pub fn name(self) -> &'static str {
        match self {
            CoordinateSystem::Box => "box",
            CoordinateSystem::RotBox => "rotbox",
            CoordinateSystem::IllRotBox => "illrotbox",
        }
    }
}

/// Block-diagonal planar rotation: each 2x2 block is
/// `[[cos t, -sin t], [sin t, cos t]]`.
pub fn rotation_matrix(n: usize, theta: f64) -> Result<DMatrix<f64>, HarnessError> {
    if n == 0 || n % 2 != 0 {
        return Err(HarnessError::InvalidConfiguration {
            message: format!("rotation needs even dimension, got {n}"),
        });
    }
    let (s, c) = theta.sin_cos();
    let mut q = DMatrix::zeros(n, n);
    for k in 0..n / 2 {
        let i = 2 * k;
        q[(i, i)] = c;
        q[(i, i + 1)] = -s;
        q[(i + 1, i)] = s;
        q[(i + 1, i + 1)] = c;
    }
    Ok(q)
}

fn ellipsoid_coefficients(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| 10f64.powf(6.0 * i as f64 / (n as f64 - 1.0)))
}

/// Objective value in box coordinates. The rotated ellipsoid evaluates the
/// ellipsoid in the frame reached by rotating each coordinate pair clockwise,
/// i.e. `f_ell(Q^T x)` with the standard counterclockwise `Q`.
pub fn objective_eval(id: ObjectiveId, x: &DVector<f64>) -> Result<f64, HarnessError> {
    let n = x.len();
    match id {
        ObjectiveId::Sphere => Ok(x.norm_squared()),
        ObjectiveId::Ellipsoid => {
            if n < 2 {
                return Err(HarnessError::InvalidConfiguration {
                    message: format!("ellipsoid needs n >= 2, got {n}"),
                });
            }
            let c = ellipsoid_coefficients(n);
            Ok(x.iter().zip(c.iter()).map(|(xi, ci)| ci * xi * xi).sum())
        }
        ObjectiveId::RotEllipsoid => {
            let q = rotation_matrix(n, OBJECTIVE_ROTATION)?;
            objective_eval(ObjectiveId::Ellipsoid, &(q.transpose() * x))
        }
    }
}

/// Hessian of the box-coordinate objective.
fn hessian_box(id: ObjectiveId, n: usize) -> Result<DMatrix<f64>, HarnessError> {
    match id {
        ObjectiveId::Sphere => Ok(DMatrix::identity(n, n) * 2.0),
        ObjectiveId::Ellipsoid => {
            Ok(DMatrix::from_diagonal(&(ellipsoid_coefficients(n) * 2.0)))
        }
        ObjectiveId::RotEllipsoid => {
            let q = rotation_matrix(n, OBJECTIVE_ROTATION)?;
            let h_ell = hessian_box(ObjectiveId::Ellipsoid, n)?;
            let h = &q * h_ell * q.transpose();
            Ok((&h + h.transpose()) * 0.5)
        }
    }
}

/// Alternating box bounds: `lb = (-1, 1, -1, 1, ...)`, `ub = lb + 5`.
pub fn box_bounds(n: usize) -> (DVector<f64>, DVector<f64>) {
    let lb = DVector::from_fn(n, |i, _| if i % 2 == 0 { -1.0 } else { 1.0 });
    let ub = lb.add_scalar(BOX_WIDTH);
    (lb, ub)
}

/// Constrained minimizer of `x^T (H/2) x` over the box, assuming the
/// odd-indexed coordinates sit at their lower bounds (the structure this
/// problem family pins): solve the free block, then verify stationarity,
/// feasibility, and multiplier signs.
pub fn kkt_optimum(
    h: &DMatrix<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Result<DVector<f64>, HarnessError> {
    let n = h.nrows();
    let free: Vec<usize> = (0..n).step_by(2).collect();
    let pinned: Vec<usize> = (1..n).step_by(2).collect();
    let nf = free.len();

    let h_ff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
    let rhs = DVector::from_fn(nf, |a, _| {
        -pinned.iter().map(|&j| h[(free[a], j)] * lb[j]).sum::<f64>()
    });
    let x_free = h_ff
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| HarnessError::OptimumVerification {
            message: "free block of the Hessian is singular".into(),
        })?;

    let mut x = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        x[i] = x_free[a];
    }
    for &j in &pinned {
        x[j] = lb[j];
    }

    let grad = h * &x;
    let scale = 1.0 + grad.amax();
    for &i in &free {
        if grad[i].abs() > 1e-8 * scale {
            return Err(HarnessError::OptimumVerification {
                message: format!("stationarity residual {} on coordinate {i}", grad[i]),
            });
        }
        if x[i] < lb[i] - 1e-9 || x[i] > ub[i] + 1e-9 {
            return Err(HarnessError::OptimumVerification {
                message: format!("free coordinate {i} = {} leaves the box", x[i]),
            });
        }
    }
    for &j in &pinned {
        // Lower-bound row -x_j <= -lb_j has gradient -e_j, so its multiplier
        // equals the objective gradient component.
        if grad[j] < -1e-10 * scale {
            return Err(HarnessError::OptimumVerification {
                message: format!("negative multiplier {} on coordinate {j}", grad[j]),
            });
        }
    }
    Ok(x)
}

/// Mahalanobis-style criterion distance `(m - x*)^T H (m - x*)`.
pub fn d_crit(m: &DVector<f64>, x_star: &DVector<f64>, h: &DMatrix<f64>) -> f64 {
    let d = m - x_star;
    d.dot(&(h * &d)).max(0.0)
}

/// One benchmark instance, fully expressed in working coordinates
/// (`original = p * working`).
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub id: ObjectiveId,
    pub coords: CoordinateSystem,
    pub n: usize,
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    /// Constraints in working coordinates.
    pub g: LinearConstraintSet,
    /// Hessian of the working-coordinate objective.
    pub h: DMatrix<f64>,
    /// Constrained optimum in working coordinates.
    pub x_star: DVector<f64>,
    pub m0: DVector<f64>,
    pub sigma0: f64,
    pub c0: DMatrix<f64>,
    /// Box bounds in original coordinates (for the feasibility ratio).
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    /// Map into the diagonal frame of the objective and its coefficients:
    /// `f(z) = sum_i diag_i (w z)_i^2`.
    w: DMatrix<f64>,
    diag: DVector<f64>,
}

impl ProblemInstance {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        let t = &self.w * z;
        t.iter().zip(self.diag.iter()).map(|(ti, ci)| ci * ti * ti).sum()
    }

    pub fn d_crit(&self, m: &DVector<f64>) -> f64 {
        d_crit(m, &self.x_star, &self.h)
    }

    /// Fraction of coordinates of the original-coordinate image of `m` that
    /// lie inside the box.
    pub fn r_feas(&self, m: &DVector<f64>) -> f64 {
        let x = &self.p * m;
        let inside = (0..self.n)
            .filter(|&i| x[i] >= self.lb[i] && x[i] <= self.ub[i])
            .count();
        inside as f64 / self.n as f64
    }
}

/// Build an instance. The initial-mean perturbation is the first thing drawn
/// from the trial seed, so instances of the same trial in different coordinate
/// systems share one underlying starting point.
pub fn make_problem(
    id: ObjectiveId,
    n: usize,
    coords: CoordinateSystem,
    trial_seed: u64,
) -> Result<ProblemInstance, HarnessError> {
    if n < 2 {
        return Err(HarnessError::InvalidConfiguration {
            message: format!("problems need n >= 2, got {n}"),
        });
    }
    if id == ObjectiveId::RotEllipsoid && n % 2 != 0 {
        return Err(HarnessError::InvalidConfiguration {
            message: format!("rotellipsoid needs even n, got {n}"),
        });
    }
    if coords != CoordinateSystem::Box && n % 2 != 0 {
        return Err(HarnessError::InvalidConfiguration {
            message: format!("{} coordinates need even n, got {n}", coords.name()),
        });
    }

    let (lb, ub) = box_bounds(n);
    let g_box = LinearConstraintSet::from_box(&lb, &ub)?;
    let h_box = hessian_box(id, n)?;
    let x_star_box = match id {
        ObjectiveId::Sphere | ObjectiveId::Ellipsoid => {
            DVector::from_fn(n, |i, _| if i % 2 == 0 { 0.0 } else { 1.0 })
        }
        ObjectiveId::RotEllipsoid => kkt_optimum(&h_box, &lb, &ub)?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let center = (&lb + &ub) * 0.5;
    let m0_box = DVector::from_fn(n, |i, _| center[i] + rng.random_range(-1.0..1.0));

    let (p, p_inv) = match coords {
        CoordinateSystem::Box => (DMatrix::identity(n, n), DMatrix::identity(n, n)),
        CoordinateSystem::RotBox => {
            let q = rotation_matrix(n, SYSTEM_ROTATION)?;
            let qt = q.transpose();
            (q, qt)
        }
        CoordinateSystem::IllRotBox => {
            let q = rotation_matrix(n, SYSTEM_ROTATION)?;
            let d = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { 10.0 });
            let d_inv = d.map(|v| 1.0 / v);
            let p = q.transpose() * DMatrix::from_diagonal(&d) * &q;
            let p_inv = q.transpose() * DMatrix::from_diagonal(&d_inv) * &q;
            (p, p_inv)
        }
    };

    let g = g_box.transform(&p)?;
    let h = {
        let m = p.transpose() * &h_box * &p;
        (&m + m.transpose()) * 0.5
    };
    let c0 = {
        let m = &p_inv * p_inv.transpose();
        (&m + m.transpose()) * 0.5
    };
    let x_star = &p_inv * &x_star_box;
    let m0 = &p_inv * &m0_box;

    // Diagonal-frame factorization of the working objective f(z) = f_id(P z).
    let (w, diag) = match id {
        ObjectiveId::Sphere => (p.clone(), DVector::from_element(n, 1.0)),
        ObjectiveId::Ellipsoid => (p.clone(), ellipsoid_coefficients(n)),
        ObjectiveId::RotEllipsoid => {
            let q = rotation_matrix(n, OBJECTIVE_ROTATION)?;
            (q.transpose() * &p, ellipsoid_coefficients(n))
        }
    };

    Ok(ProblemInstance {
        id,
        coords,
        n,
        p,
        p_inv,
        g,
        h,
        x_star,
        m0,
        sigma0: 1.25,
        c0,
        lb,
        ub,
        w,
        diag,
    })
}
