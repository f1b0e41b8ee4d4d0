//! Explicit linear inequality constraints `A x <= b` and the predicates the
//! optimizer asks of them. Rows are 0-indexed everywhere; a constraint `j` is
//! "violated" when `a_j . x - b_j > 0` strictly and "active" when that value
//! sits within a tolerance band around zero.

use nalgebra::{DMatrix, DVector};

/// Factor for the default active-constraint tolerance, scaled by `1 + |b|_inf`.
pub const ACTIVE_TOL_FACTOR: f64 = 1e-9;
/// Factor for the intersection residual test, scaled by `1 + |b_J|`.
pub const INTERSECTION_TOL_FACTOR: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum ConstraintError {
    #[error("constraint row {row} is all zeros")]
    ZeroRow { row: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("entries must be finite")]
    NonFinite,
    #[error("box bound {index} has lower {lower} above upper {upper}")]
    InvertedBound { index: usize, lower: f64, upper: f64 },
    #[error("transform matrix is singular")]
    SingularTransform,
    #[error("transform matrix is {rows}x{cols}, expected {dim}x{dim}")]
    BadTransformShape { rows: usize, cols: usize, dim: usize },
    #[error("row index {row} out of range for {count} constraints")]
    RowOutOfRange { row: usize, count: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Where a point stands relative to a constraint set.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// `A x - b`, one entry per row.
    pub violations: DVector<f64>,
    /// Rows with strictly positive violation.
    pub violated: Vec<usize>,
    pub feasible: bool,
    /// Rows with `|a_j . x - b_j|` within the supplied tolerance.
    pub active: Vec<usize>,
}

/// A system of linear inequalities `A x <= b` with no all-zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraintSet {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LinearConstraintSet {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ConstraintError> {
        if a.nrows() != b.len() {
            return Err(ConstraintError::DimensionMismatch { left: a.nrows(), right: b.len() });
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(ConstraintError::NonFinite);
        }
        for row in 0..a.nrows() {
            if a.row(row).iter().all(|v| *v == 0.0) {
                return Err(ConstraintError::ZeroRow { row });
            }
        }
        Ok(LinearConstraintSet { a, b })
    }

    /// The unconstrained system on `dim` variables.
    pub fn empty(dim: usize) -> Self {
        LinearConstraintSet { a: DMatrix::zeros(0, dim), b: DVector::zeros(0) }
    }

    /// Axis-aligned box `lb <= x <= ub` as `2n` half-spaces: the first `n`
    /// rows are the lower bounds (`-x_i <= -lb_i`), the next `n` the upper.
    pub fn from_box(lb: &DVector<f64>, ub: &DVector<f64>) -> Result<Self, ConstraintError> {
        if lb.len() != ub.len() {
            return Err(ConstraintError::DimensionMismatch { left: lb.len(), right: ub.len() });
        }
        for i in 0..lb.len() {
            if lb[i] > ub[i] {
                return Err(ConstraintError::InvertedBound {
                    index: i,
                    lower: lb[i],
                    upper: ub[i],
                });
            }
        }
        let n = lb.len();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = -1.0;
            b[i] = -lb[i];
            a[(n + i, i)] = 1.0;
            b[n + i] = ub[i];
        }
        Self::new(a, b)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    /// Number of constraint rows.
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    /// Dimension of the variable space.
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// `1e-9 * (1 + |b|_inf)`, the activity band used when none is supplied.
    pub fn default_active_tol(&self) -> f64 {
        ACTIVE_TOL_FACTOR * (1.0 + self.b.amax_or_zero())
    }

    /// Same geometry with every right-hand side tightened by `margin`.
    pub fn with_margin(&self, margin: f64) -> Self {
        LinearConstraintSet { a: self.a.clone(), b: self.b.add_scalar(-margin) }
    }

    pub fn evaluate(
        &self,
        x: &DVector<f64>,
        active_tol: f64,
    ) -> Result<FeasibilityReport, ConstraintError> {
        if x.len() != self.dim() {
            return Err(ConstraintError::DimensionMismatch { left: x.len(), right: self.dim() });
        }
        let violations = &self.a * x - &self.b;
        let violated: Vec<usize> =
            (0..violations.len()).filter(|&j| violations[j] > 0.0).collect();
        let active: Vec<usize> =
            (0..violations.len()).filter(|&j| violations[j].abs() <= active_tol).collect();
        Ok(FeasibilityReport { feasible: violated.is_empty(), violations, violated, active })
    }

    /// The same constraints expressed in coordinates `y` with `x = P y`:
    /// `(A P) y <= b`. `P` must be square and nonsingular.
    pub fn transform(&self, p: &DMatrix<f64>) -> Result<Self, ConstraintError> {
        let dim = self.dim();
        if p.nrows() != dim || p.ncols() != dim {
            return Err(ConstraintError::BadTransformShape {
                rows: p.nrows(),
                cols: p.ncols(),
                dim,
            });
        }
        if p.clone().try_inverse().is_none() {
            return Err(ConstraintError::SingularTransform);
        }
        Self::new(&self.a * p, self.b.clone())
    }

    /// Whether the affine intersection `{y : a_j . y = b_j for j in rows}` is
    /// nonempty, decided by the least-squares residual of the stacked system.
    pub fn intersection_nonempty(&self, rows: &[usize]) -> Result<bool, ConstraintError> {
        if rows.is_empty() {
            return Ok(true);
        }
        let (a_j, b_j) = self.select_rows(rows)?;
        let svd = a_j.svd(true, true);
        let cutoff = 1e-13 * svd.singular_values.max();
        let y = svd.solve(&b_j, cutoff).map_err(|m| ConstraintError::Parse {
            line: 0,
            message: m.to_string(),
        })?;
        let residual = (&self.select_rows(rows)?.0 * y - b_j).norm();
        Ok(residual <= INTERSECTION_TOL_FACTOR * (1.0 + self.b_norm(rows)))
    }

    /// Submatrix and right-hand side for the given rows, preserving order.
    pub fn select_rows(
        &self,
        rows: &[usize],
    ) -> Result<(DMatrix<f64>, DVector<f64>), ConstraintError> {
        for &r in rows {
            if r >= self.len() {
                return Err(ConstraintError::RowOutOfRange { row: r, count: self.len() });
            }
        }
        let a = DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.a[(rows[i], j)]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.b[r]));
        Ok((a, b))
    }

    fn b_norm(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&r| self.b[r] * self.b[r]).sum::<f64>().sqrt()
    }

    /// Plain-text form: a header line `m n`, then one line per row holding the
    /// `n` coefficients of `a_j` followed by `b_j`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for row in 0..self.len() {
            let mut fields: Vec<String> =
                self.a.row(row).iter().map(|v| format!("{v}")).collect();
            fields.push(format!("{}", self.b[row]));
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ConstraintError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (line_no, header) = lines.next().ok_or(ConstraintError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let parse_err = |line: usize, message: &str| ConstraintError::Parse {
            line: line + 1,
            message: message.into(),
        };
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(line_no, "header must be two integers"))?;
        if dims.len() != 2 {
            return Err(parse_err(line_no, "header must be two integers"));
        }
        let (m, n) = (dims[0], dims[1]);
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for row in 0..m {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| parse_err(row + 1, "fewer rows than the header promises"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| parse_err(line_no, "malformed number"))?;
            if vals.len() != n + 1 {
                return Err(parse_err(line_no, "wrong field count for row"));
            }
            for col in 0..n {
                a[(row, col)] = vals[col];
            }
            b[row] = vals[n];
        }
        if let Some((line_no, _)) = lines.next() {
            return Err(parse_err(line_no, "trailing content after last row"));
        }
        Self::new(a, b)
    }
}

trait AmaxOrZero {
    fn amax_or_zero(&self) -> f64;
}

// `DVector::amax` panics on empty vectors; the unconstrained system needs 0.
impl AmaxOrZero for DVector<f64> {
    fn amax_or_zero(&self) -> f64 {
        self.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}
