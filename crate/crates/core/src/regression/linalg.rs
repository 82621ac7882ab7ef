//! Dense least-squares helpers.
//!
//! `lstsq` returns the minimum-norm minimiser of `||Xb - y||` via a thin
//! QR factorisation followed by an SVD of the small triangular factor:
//! with `X = QR` and orthonormal `Q`, `pinv(X) = pinv(R) Qᵀ`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub coef: DVector<f64>,
    pub rank: usize,
}

impl LstsqSolution {
    pub fn rank_deficient(&self, ncols: usize) -> bool {
        self.rank < ncols
    }
}

/// Relative singular-value cutoff used for rank decisions.
fn rank_tolerance(n: usize, p: usize, sigma_max: f64) -> f64 {
    (n.max(p) as f64) * f64::EPSILON * sigma_max * 16.0
}

/// Minimum-norm least-squares solution.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> LstsqSolution {
    let (n, p) = x.shape();
    assert_eq!(y.len(), n, "lstsq: row mismatch");
    if n == 0 || p == 0 {
        return LstsqSolution {
            coef: DVector::zeros(p),
            rank: 0,
        };
    }
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * y;
    let svd = r.svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vt");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = rank_tolerance(n, p, sigma_max);
    let mut coef = DVector::zeros(p);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol && s > 0.0 {
            rank += 1;
            let proj = u.column(i).dot(&qty) / s;
            coef += v_t.row(i).transpose() * proj;
        }
    }
    LstsqSolution { coef, rank }
}

/// Weighted least squares with nonnegative weights, minimum-norm.
pub fn weighted_lstsq(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> LstsqSolution {
    let sw = w.map(f64::sqrt);
    let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * sw[i]);
    let yw = y.component_mul(&sw);
    lstsq(&xw, &yw)
}

/// Indices of a maximal linearly independent set of columns, chosen
/// greedily left to right (modified Gram-Schmidt with one
/// reorthogonalisation pass).
pub fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.ncols() {
        let col: DVector<f64> = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * norm0 * (n.max(1) as f64).sqrt() {
            basis.push(v / norm);
            keep.push(j);
        }
    }
    keep
}

/// Columns `cols` of `x`.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

/// Rows `rows` of `x`.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Scatter a reduced coefficient vector back to full width with zeros.
pub fn expand(reduced: &DVector<f64>, cols: &[usize], p: usize) -> DVector<f64> {
    let mut full = DVector::zeros(p);
    for (k, &j) in cols.iter().enumerate() {
        full[j] = reduced[k];
    }
    full
}
