use nalgebra::{DMatrix, DVector};

use super::linalg::lstsq;
use super::SolverFit;
use crate::error::{Error, Result};

/// Least squares; rank-deficient designs get the minimum-norm solution.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<SolverFit> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Fit("empty design matrix".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in design or outcome".into()));
    }
    let sol = lstsq(x, y);
    let resid = y - x * &sol.coef;
    Ok(SolverFit {
        objective: resid.norm_squared(),
        iterations: 1,
        rank_deficient: sol.rank_deficient(x.ncols()),
        converged: true,
        degenerate: false,
        coef: sol.coef,
    })
}
