//! Shared oracles for the integration suites. Everything here goes through
//! plain dense LU on explicitly built systems, deliberately avoiding the
//! library's own eigendecomposition and active-set machinery.

use nalgebra::{DMatrix, DVector};

/// Candidate stationary point of an equality-restricted projection.
pub struct SaddlePoint {
    pub y: DVector<f64>,
    /// One multiplier per row of the restriction, aligned with `rows`.
    pub multipliers: Vec<f64>,
}

/// Solve `min (y - x)^T Q (y - x) / 2  s.t.  a_j . y = c_j` for the given
/// rows by LU on the saddle system `[[Q, N^T], [N, 0]]`. `None` when the
/// system is singular (dependent rows).
pub fn equality_projection(
    x: &DVector<f64>,
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    rows: &[usize],
) -> Option<SaddlePoint> {
    let n = x.len();
    let k = rows.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(q);
    for (i, &j) in rows.iter().enumerate() {
        for col in 0..n {
            kkt[(n + i, col)] = a[(j, col)];
            kkt[(col, n + i)] = a[(j, col)];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(q * x));
    for (i, &j) in rows.iter().enumerate() {
        rhs[n + i] = c[j];
    }
    let sol = kkt.lu().solve(&rhs)?;
    let y = DVector::from_fn(n, |i, _| sol[i]);
    if !y.iter().all(|v| v.is_finite()) {
        return None;
    }
    // A nearly singular saddle system (dependent rows) can pass LU yet miss
    // the restriction; treat such solutions as unsolvable.
    for &j in rows {
        let residual = a.row(j).transpose().dot(&y) - c[j];
        if residual.abs() > 1e-7 * (1.0 + c[j].abs() + y.norm()) {
            return None;
        }
    }
    Some(SaddlePoint { y, multipliers: (0..k).map(|i| sol[n + i]).collect() })
}

/// Brute-force solution of the two-stage repair target by enumeration of
/// active subsets. `q` is the inverse metric, `a y <= c` the (already
/// shifted) constraints, `forced` the rows required to hold with equality.
/// Returns the minimizing point and its squared `q`-distance, or `None` when
/// no subset yields a feasible KKT point.
pub fn enumerate_projection(
    x: &DVector<f64>,
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    forced: &[usize],
) -> Option<(DVector<f64>, f64)> {
    let m = a.nrows();
    let optional: Vec<usize> = (0..m).filter(|j| !forced.contains(j)).collect();
    let feas_tol = 1e-8 * (1.0 + c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
    let mut best: Option<(DVector<f64>, f64)> = None;

    for mask in 0..(1u64 << optional.len()) {
        let mut rows: Vec<usize> = forced.to_vec();
        for (bit, &j) in optional.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                rows.push(j);
            }
        }
        let candidate = if rows.is_empty() {
            SaddlePoint { y: x.clone(), multipliers: Vec::new() }
        } else {
            match equality_projection(x, q, a, c, &rows) {
                Some(s) => s,
                None => continue,
            }
        };
        // Inequality multipliers must push inward; forced rows are sign-free.
        let sign_ok = rows
            .iter()
            .zip(candidate.multipliers.iter())
            .all(|(j, u)| forced.contains(j) || *u >= -1e-9);
        if !sign_ok {
            continue;
        }
        let feasible = (0..m).all(|j| {
            let slack = a.row(j).transpose().dot(&candidate.y) - c[j];
            slack <= feas_tol
        });
        if !feasible {
            continue;
        }
        let d = &candidate.y - x;
        let dist = d.dot(&(q * &d));
        if best.as_ref().map_or(true, |(_, bd)| dist < *bd) {
            best = Some((candidate.y, dist));
        }
    }
    best
}

/// Residuals of the projection KKT system at a returned point: least-squares
/// multipliers on the active rows, the stationarity defect, and the worst
/// multiplier of a row that is not forced to equality.
pub struct KktResiduals {
    pub stationarity: f64,
    pub worst_violation: f64,
    pub worst_optional_multiplier: f64,
}

pub fn projection_kkt_residuals(
    x: &DVector<f64>,
    y: &DVector<f64>,
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    forced: &[usize],
    active_tol: f64,
) -> KktResiduals {
    let m = a.nrows();
    let grad = q * (y - x);
    let scale = 1.0 + grad.amax();

    let mut worst_violation = f64::NEG_INFINITY;
    let mut active = Vec::new();
    for j in 0..m {
        let slack = a.row(j).transpose().dot(y) - c[j];
        worst_violation = worst_violation.max(slack);
        if slack.abs() <= active_tol || forced.contains(&j) {
            active.push(j);
        }
    }

    if active.is_empty() {
        return KktResiduals {
            stationarity: grad.amax() / scale,
            worst_violation,
            worst_optional_multiplier: 0.0,
        };
    }
    let n = x.len();
    let nt = DMatrix::from_fn(n, active.len(), |i, k| a[(active[k], i)]);
    // grad + N^T u = 0 in least squares.
    let u = nt
        .clone()
        .svd(true, true)
        .solve(&(-&grad), 1e-12)
        .unwrap_or_else(|_| DVector::zeros(active.len()));
    let stationarity = (&grad + &nt * &u).amax() / scale;
    let worst_optional_multiplier = active
        .iter()
        .zip(u.iter())
        .filter(|(j, _)| !forced.contains(j))
        .map(|(_, ui)| *ui)
        .fold(f64::INFINITY, f64::min);
    KktResiduals {
        stationarity,
        worst_violation,
        worst_optional_multiplier: if worst_optional_multiplier.is_finite() {
            worst_optional_multiplier
        } else {
            0.0
        },
    }
}

/// Global box-constrained minimizer of `x^T (H/2) x` by enumerating every
/// face assignment (each coordinate at its lower bound, upper bound, or
/// free); exponential, for small n only.
pub fn enumerate_box_optimum(
    h: &DMatrix<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = h.nrows();
    assert!(n <= 8, "face enumeration is exponential");
    let mut best: Option<(DVector<f64>, f64)> = None;

    // Ternary mask: 0 = free, 1 = lower, 2 = upper.
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut digits = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            digits.push(rest % 3);
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| digits[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match digits[i] {
                1 => x[i] = lb[i],
                2 => x[i] = ub[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let nf = free.len();
            let h_ff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(nf, |a, _| {
                -(0..n)
                    .filter(|i| digits[*i] != 0)
                    .map(|i| h[(free[a], i)] * x[i])
                    .sum::<f64>()
            });
            let x_free = match h_ff.lu().solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            for (a, &i) in free.iter().enumerate() {
                x[i] = x_free[a];
            }
        }

        // Feasibility of free coordinates and multiplier signs on the faces.
        let grad = h * &x;
        let scale = 1.0 + grad.amax();
        let mut ok = true;
        for i in 0..n {
            match digits[i] {
                0 => {
                    if x[i] < lb[i] - 1e-9 || x[i] > ub[i] + 1e-9 {
                        ok = false;
                    }
                }
                1 => {
                    if grad[i] < -1e-9 * scale {
                        ok = false;
                    }
                }
                _ => {
                    if grad[i] > 1e-9 * scale {
                        ok = false;
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let value = 0.5 * x.dot(&grad);
        if best.as_ref().map_or(true, |(_, bv)| value < *bv) {
            best = Some((x, value));
        }
    }
    best.map(|(x, _)| x)
}
