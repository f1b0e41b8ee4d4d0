//! Dense symmetric linear algebra and the scalar special functions the
//! optimizer needs. Everything here works on `nalgebra` heap types and is
//! sized for the few-hundred-dimensional problems the rest of the crate
//! targets, not for large-scale work.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Relative asymmetry allowed before a matrix is rejected as input.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues below `-PSD_TOL * ||M||` fail the square root; small negatives
/// inside the band are clamped to zero.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("asymmetry {error:.3e} exceeds tolerance {tol:.3e}")]
    Asymmetric { error: f64, tol: f64 },
    #[error("Jacobi sweeps exhausted, off-diagonal residual {residual:.3e}")]
    EigenNonConvergence { residual: f64 },
    #[error("eigenvalue {eigenvalue:.6e} is below the positive-semidefinite tolerance")]
    NegativeEigenvalue { eigenvalue: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("order-statistic rank {rank} out of range 1..={count}")]
    RankOutOfRange { rank: usize, count: usize },
    #[error("adaptive quadrature did not reach the requested tolerance")]
    QuadratureNonConvergence,
}

/// Controls for the cyclic Jacobi eigensolver.
#[derive(Debug, Clone, Copy)]
pub struct JacobiConfig {
    /// Convergence threshold on the largest off-diagonal entry, relative to
    /// the Frobenius norm of the input.
    pub threshold_factor: f64,
    pub max_sweeps: usize,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        JacobiConfig { threshold_factor: 1e-14, max_sweeps: 100 }
    }
}

/// Eigendecomposition of a symmetric matrix: `M = V diag(values) V^T` with
/// `values` ascending and the columns of `vectors` orthonormal.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V f(diag) V^T` for a scalar map of the eigenvalues.
    fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        &scaled * self.vectors.transpose()
    }

    /// Symmetric square root. Eigenvalues slightly negative from rounding are
    /// clamped to zero; anything below `-PSD_TOL * |max eigenvalue|` is an error.
    pub fn sqrt_matrix(&self) -> Result<DMatrix<f64>, NumericsError> {
        let floor = self.psd_floor()?;
        Ok(self.map_spectrum(|v| v.max(floor).max(0.0).sqrt()))
    }

    /// Symmetric inverse square root; requires strictly positive eigenvalues.
    pub fn inv_sqrt_matrix(&self) -> Result<DMatrix<f64>, NumericsError> {
        if self.values.min() <= 0.0 {
            return Err(NumericsError::NotPositiveDefinite);
        }
        Ok(self.map_spectrum(|v| 1.0 / v.sqrt()))
    }

    /// Moore-Penrose pseudo-inverse with eigenvalues below
    /// `cutoff_rel * |largest eigenvalue|` treated as zero.
    pub fn pseudo_inverse(&self, cutoff_rel: f64) -> DMatrix<f64> {
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cutoff = cutoff_rel * scale;
        self.map_spectrum(|v| if v.abs() <= cutoff { 0.0 } else { 1.0 / v })
    }

    fn psd_floor(&self) -> Result<f64, NumericsError> {
        let scale = self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min = self.values.min();
        if min < -PSD_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(NumericsError::NegativeEigenvalue { eigenvalue: min });
        }
        Ok(0.0)
    }
}

/// Largest absolute difference between a matrix and its transpose.
pub fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric_input(m: &DMatrix<f64>) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let err = symmetry_error(m);
    let tol = SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE);
    if err > tol {
        return Err(NumericsError::Asymmetric { error: err, tol });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SymEigen, NumericsError> {
    sym_eig_with(m, &JacobiConfig::default())
}

pub fn sym_eig_with(m: &DMatrix<f64>, cfg: &JacobiConfig) -> Result<SymEigen, NumericsError> {
    check_symmetric_input(m)?;
    let n = m.nrows();
    let mut b = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = cfg.threshold_factor * m.norm();

    let mut off = max_off_diagonal(&b);
    if off > threshold {
        let mut converged = false;
        for _ in 0..cfg.max_sweeps {
            for p in 0..n {
                for q in (p + 1)..n {
                    if b[(p, q)].abs() <= threshold {
                        continue;
                    }
                    rotate(&mut b, &mut v, p, q);
                }
            }
            off = max_off_diagonal(&b);
            if off <= threshold {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(NumericsError::EigenNonConvergence { residual: off });
        }
    }

    // Sort ascending, permuting eigenvector columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[(i, i)].partial_cmp(&b[(j, j)]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| b[(i, i)]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(SymEigen { values, vectors })
}

fn max_off_diagonal(b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in (p + 1)..n {
            worst = worst.max(b[(p, q)].abs());
        }
    }
    worst
}

/// One Jacobi rotation annihilating `b[(p, q)]`, accumulated into `v`.
fn rotate(b: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = b[(p, q)];
    let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = b.nrows();

    let bpp = b[(p, p)];
    let bqq = b[(q, q)];
    b[(p, p)] = bpp - t * apq;
    b[(q, q)] = bqq + t * apq;
    b[(p, q)] = 0.0;
    b[(q, p)] = 0.0;
    for k in 0..n {
        if k != p && k != q {
            let bkp = b[(k, p)];
            let bkq = b[(k, q)];
            b[(k, p)] = c * bkp - s * bkq;
            b[(p, k)] = b[(k, p)];
            b[(k, q)] = s * bkp + c * bkq;
            b[(q, k)] = b[(k, q)];
        }
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
    sym_eig(m)?.sqrt_matrix()
}

/// Solve `M x = v` for symmetric positive definite `M` via Cholesky.
pub fn solve_spd(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>, NumericsError> {
    check_symmetric_input(m)?;
    if m.nrows() != v.len() {
        return Err(NumericsError::DimensionMismatch { left: m.nrows(), right: v.len() });
    }
    let chol = m.clone().cholesky().ok_or(NumericsError::NotPositiveDefinite)?;
    Ok(chol.solve(v))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Log of the standard normal density.
fn log_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Expected value of the `rank`-th smallest of `count` independent standard
/// normal draws, by adaptive quadrature of the order-statistic density over
/// `[-10, 10]` (the omitted tails are below 1e-20). Absolute error is held
/// under 1e-6.
pub fn normal_order_statistic_mean(rank: usize, count: usize) -> Result<f64, NumericsError> {
    if rank < 1 || rank > count {
        return Err(NumericsError::RankOutOfRange { rank, count });
    }
    let i = rank as f64;
    let lam = count as f64;
    let log_coeff = ln_gamma(lam + 1.0) - ln_gamma(i) - ln_gamma(lam - i + 1.0);
    let integrand = move |x: f64| {
        let cdf = normal_cdf(x);
        let sf = normal_cdf(-x);
        // Endpoint CDF values on [-10, 10] stay well above underflow, so the
        // log-space density is finite everywhere we evaluate it.
        let log_density =
            log_coeff + (i - 1.0) * cdf.ln() + (lam - i) * sf.ln() + log_normal_pdf(x);
        x * log_density.exp()
    };
    adaptive_simpson(&integrand, -10.0, 10.0, 1e-9)
}

/// Adaptive Simpson quadrature with an absolute error target. The interval
/// is first cut into fixed panels so that a narrow peak between the coarse
/// sample points cannot fool the refinement test into stopping at zero; each
/// panel then refines adaptively.
pub(crate) fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, NumericsError> {
    const PANELS: usize = 40;
    let width = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let pa = a + k as f64 * width;
        let pb = if k + 1 == PANELS { b } else { pa + width };
        let fa = f(pa);
        let fb = f(pb);
        let mid = 0.5 * (pa + pb);
        let fm = f(mid);
        let whole = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_split(f, pa, pb, fa, fm, fb, whole, panel_tol, 60)
            .ok_or(NumericsError::QuadratureNonConvergence)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_split(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Option<f64> {
    let mid = 0.5 * (a + b);
    let lm = 0.5 * (a + mid);
    let rm = 0.5 * (mid + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = simpson_split(f, a, mid, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_split(f, mid, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

/// Squared Mahalanobis distance `(x - y)^T M^-1 (x - y)` where the caller
/// supplies the action of `M^-1`. Rounding noise is clamped at zero.
pub fn mahalanobis_sq(
    x: &DVector<f64>,
    y: &DVector<f64>,
    apply_metric_inverse: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<f64, NumericsError> {
    if x.len() != y.len() {
        return Err(NumericsError::DimensionMismatch { left: x.len(), right: y.len() });
    }
    let d = x - y;
    let md = apply_metric_inverse(&d);
    if md.len() != d.len() {
        return Err(NumericsError::DimensionMismatch { left: md.len(), right: d.len() });
    }
    Ok(d.dot(&md).max(0.0))
}

/// Lower-interpolation sample quantile: `sorted[floor(q * (N - 1))]`.
/// `None` on an empty sample; `q` is clamped to `[0, 1]`.
pub fn quantile_lower(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    let idx = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
    Some(sorted[idx.min(sorted.len() - 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut m = &a * a.transpose();
        for i in 0..n {
            m[(i, i)] += 0.1;
        }
        m
    }

    #[test]
    fn eig_identity() {
        let eig = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        for v in eig.values.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        let vtv = eig.vectors.transpose() * &eig.vectors;
        assert!((vtv - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn eig_diagonal_sorted_ascending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![9.0, 4.0]));
        let eig = sym_eig(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.vectors.column(0)[1].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.vectors.column(1)[0].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_two_by_two_exact() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let eig = sym_eig(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 5, 17, 40] {
            let m = random_spd(n, &mut rng);
            let eig = sym_eig(&m).unwrap();
            let lam = DMatrix::from_diagonal(&eig.values);
            let resid = (&m * &eig.vectors - &eig.vectors * lam).norm();
            assert!(
                resid <= 1e-10 * m.norm(),
                "n={n}: residual {resid} vs scale {}",
                m.norm()
            );
            let vtv = eig.vectors.transpose() * &eig.vectors;
            assert!((vtv - DMatrix::<f64>::identity(n, n)).norm() < 1e-10);
        }
    }

    #[test]
    fn eig_rejects_asymmetric_and_nonsquare() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(NumericsError::Asymmetric { .. })));
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(sym_eig(&m), Err(NumericsError::NotSquare { .. })));
    }

    #[test]
    fn eig_reports_nonconvergence_under_zero_sweep_cap() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let cfg = JacobiConfig { max_sweeps: 0, ..JacobiConfig::default() };
        match sym_eig_with(&m, &cfg) {
            Err(NumericsError::EigenNonConvergence { residual }) => {
                assert_abs_diff_eq!(residual, 1.0, epsilon = 1e-15)
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn sqrt_identity_and_diagonal() {
        let s = sym_sqrt(&DMatrix::identity(4, 4)).unwrap();
        assert!((s - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = sym_sqrt(&m).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[(1, 1)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_two_by_two_closed_form() {
        // sqrt([[2,1],[1,2]]) = [[(s3+1)/2, (s3-1)/2], [(s3-1)/2, (s3+1)/2]].
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = sym_sqrt(&m).unwrap();
        let s3 = 3.0f64.sqrt();
        assert_abs_diff_eq!(s[(0, 0)], (s3 + 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[(0, 1)], (s3 - 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[(1, 0)], (s3 - 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[(1, 1)], (s3 + 1.0) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back_with_conditioning_up_to_1e8() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 10, 25] {
            let q = sym_eig(&random_spd(n, &mut rng)).unwrap().vectors;
            // Log-uniform spectrum spanning eight decades.
            let vals =
                DVector::from_fn(n, |i, _| 10f64.powf(8.0 * i as f64 / (n - 1) as f64 - 4.0));
            let m = &q * DMatrix::from_diagonal(&vals) * q.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let s = sym_sqrt(&m).unwrap();
            let resid = (&s * &s - &m).norm();
            assert!(resid <= 1e-8 * m.norm(), "n={n}: residual {resid}");
        }
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        match sym_sqrt(&m) {
            Err(NumericsError::NegativeEigenvalue { eigenvalue }) => {
                assert_abs_diff_eq!(eigenvalue, -0.5, epsilon = 1e-12)
            }
            other => panic!("expected negative-eigenvalue error, got {other:?}"),
        }
    }

    #[test]
    fn solve_spd_examples() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_spd(&DMatrix::identity(2, 2), &v).unwrap();
        assert!((x - &v).norm() < 1e-14);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let x = solve_spd(&m, &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let x = solve_spd(&m, &DVector::from_vec(vec![3.0, 3.0])).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_spd_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let v = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_spd(&m, &v), Err(NumericsError::NotPositiveDefinite)));
    }

    #[test]
    fn order_statistic_closed_forms() {
        assert_abs_diff_eq!(normal_order_statistic_mean(1, 1).unwrap(), 0.0, epsilon = 1e-6);
        // E[min of 2] = -1/sqrt(pi), E[min of 3] = -3/(2 sqrt(pi)).
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            normal_order_statistic_mean(1, 2).unwrap(),
            -1.0 / pi.sqrt(),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            normal_order_statistic_mean(1, 3).unwrap(),
            -1.5 / pi.sqrt(),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(normal_order_statistic_mean(2, 3).unwrap(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn order_statistic_symmetry_and_monotonicity() {
        for count in [2usize, 5, 12, 33] {
            let means: Vec<f64> = (1..=count)
                .map(|r| normal_order_statistic_mean(r, count).unwrap())
                .collect();
            for r in 1..count {
                assert!(means[r] > means[r - 1], "count={count}: not increasing at {r}");
            }
            for r in 0..count {
                assert_abs_diff_eq!(means[r], -means[count - 1 - r], epsilon = 2e-6);
            }
        }
    }

    #[test]
    fn order_statistic_matches_reference_values() {
        // Five-digit published moments of normal order statistics, including
        // interior ranks whose densities are sharply peaked away from zero.
        let cases = [
            (1usize, 2usize, -0.56419),
            (1, 3, -0.84628),
            (2, 3, 0.0),
            (1, 4, -1.02938),
            (2, 4, -0.29701),
            (1, 5, -1.16296),
            (2, 5, -0.49502),
            (3, 5, 0.0),
            (1, 12, -1.62923),
            (2, 12, -1.11573),
            (3, 12, -0.79284),
            (4, 12, -0.53684),
            (5, 12, -0.31225),
            (6, 12, -0.10259),
            (9, 12, 0.53684),
            (1, 15, -1.73591),
            (8, 15, 0.0),
        ];
        for (rank, count, expected) in cases {
            let got = normal_order_statistic_mean(rank, count).unwrap();
            assert_abs_diff_eq!(got, expected, epsilon = 5e-5);
        }
    }

    #[test]
    fn order_statistic_rejects_bad_rank() {
        assert!(matches!(
            normal_order_statistic_mean(0, 4),
            Err(NumericsError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            normal_order_statistic_mean(5, 4),
            Err(NumericsError::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn simpson_integrates_polynomials() {
        let val = adaptive_simpson(&|x: f64| x * x, 0.0, 3.0, 1e-10).unwrap();
        assert_abs_diff_eq!(val, 9.0, epsilon = 1e-9);
        let val = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-10).unwrap();
        assert_abs_diff_eq!(val, 1.0f64.exp() - 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mahalanobis_examples() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 0.0]);
        let id = |d: &DVector<f64>| d.clone();
        assert_abs_diff_eq!(mahalanobis_sq(&x, &x, id).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mahalanobis_sq(&x, &y, id).unwrap(), 1.0, epsilon = 1e-15);

        // Sigma = diag(4, 1): distance of (2, 1) from origin is 4/4 + 1 = 2.
        let x = DVector::from_vec(vec![2.0, 1.0]);
        let sig_inv = |d: &DVector<f64>| DVector::from_vec(vec![d[0] / 4.0, d[1]]);
        assert_abs_diff_eq!(mahalanobis_sq(&x, &y, sig_inv).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn quantile_lower_examples() {
        assert_eq!(quantile_lower(&[], 0.5), None);
        assert_eq!(quantile_lower(&[3.0], 0.0), Some(3.0));
        assert_eq!(quantile_lower(&[3.0], 1.0), Some(3.0));
        let v = [1.0, 2.0, 3.0, 4.0];
        // floor(q * 3): 0.25 -> index 0, 0.5 -> 1, 0.75 -> 2, 1.0 -> 3.
        assert_eq!(quantile_lower(&v, 0.25), Some(1.0));
        assert_eq!(quantile_lower(&v, 0.5), Some(2.0));
        assert_eq!(quantile_lower(&v, 0.75), Some(3.0));
        assert_eq!(quantile_lower(&v, 1.0), Some(4.0));
        let v = [10.0, 20.0, 30.0, 40.0, 50.0];
        assert_eq!(quantile_lower(&v, 0.5), Some(30.0));
        assert_eq!(quantile_lower(&v, 0.9), Some(40.0));
    }

    #[test]
    fn mahalanobis_rejects_mismatched_dims() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![0.0]);
        assert!(matches!(
            mahalanobis_sq(&x, &y, |d| d.clone()),
            Err(NumericsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mahalanobis_invariant_under_basis_change() {
        // (x-y)^T S^-1 (x-y) with S = T T^T equals the plain squared norm of
        // T^-1 (x-y); check against an explicit inverse.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0))
                + DMatrix::<f64>::identity(4, 4) * 2.0;
            let s = &t * t.transpose();
            let s_inv = s.clone().try_inverse().unwrap();
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let d = mahalanobis_sq(&x, &y, |v| &s_inv * v).unwrap();
            let expect = (t.clone().try_inverse().unwrap() * (&x - &y)).norm_squared();
            assert_abs_diff_eq!(d, expect, epsilon = 1e-8 * (1.0 + expect));
        }
    }
}
