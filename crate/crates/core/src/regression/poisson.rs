//! Poisson GLM with log link and a fixed offset, fit by IRLS.

use nalgebra::{DMatrix, DVector};

use super::linalg::{expand, independent_columns, select_columns, weighted_lstsq};
use super::SolverFit;
use crate::error::{Error, Result};

pub const MAX_ITER: usize = 50;
pub const DEVIANCE_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;
const MAX_ETA: f64 = 700.0;

/// Poisson deviance `2 Σ [y ln(y/μ) - (y - μ)]`.
pub fn deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    2.0 * y
        .iter()
        .zip(mu.iter())
        .map(|(&y, &m)| {
            let t = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
            t - (y - m)
        })
        .sum::<f64>()
}

fn means(x: &DMatrix<f64>, b: &DVector<f64>, offset: &DVector<f64>) -> Option<DVector<f64>> {
    let eta = x * b + offset;
    if eta.iter().any(|e| !e.is_finite() || *e > MAX_ETA) {
        return None;
    }
    Some(eta.map(f64::exp))
}

/// Index of a column that is identically 1, if any.
pub(crate) fn intercept_column(x: &DMatrix<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0))
}

/// Maximises the Poisson log-likelihood of `counts` given
/// `ln E[count] = offset + X b`.
pub fn fit_poisson(x: &DMatrix<f64>, counts: &DVector<f64>, offset: &DVector<f64>) -> Result<SolverFit> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::Fit("empty design matrix".into()));
    }
    if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Fit("counts must be finite and nonnegative".into()));
    }
    if x.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in design or offset".into()));
    }
    if counts.iter().all(|&c| c == 0.0) {
        return Ok(SolverFit {
            coef: DVector::zeros(p),
            objective: 0.0,
            iterations: 0,
            rank_deficient: false,
            converged: true,
            degenerate: true,
        });
    }

    let cols = independent_columns(x);
    let xr = select_columns(x, &cols);
    let mut b = DVector::zeros(cols.len());
    if let Some(j) = intercept_column(&xr) {
        let rate = counts.sum() / offset.map(f64::exp).sum();
        b[j] = rate.ln();
    }
    let mut mu = means(&xr, &b, offset).ok_or_else(|| Error::Fit("Poisson start overflows; check offsets".into()))?;
    let mut dev = deviance(counts, &mu);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITER {
        iterations += 1;
        let eta = xr.clone() * &b;
        let z = DVector::from_fn(n, |i, _| eta[i] + (counts[i] - mu[i]) / mu[i]);
        let target = weighted_lstsq(&xr, &z, &mu).coef;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &b + (&target - &b) * step;
            if let Some(m) = means(&xr, &cand, offset) {
                let d = deviance(counts, &m);
                if d.is_finite() && d <= dev * (1.0 + 1e-12) + 1e-12 {
                    accepted = Some((cand, m, d));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((nb, nm, nd)) = accepted else {
            return Err(Error::Fit(format!(
                "Poisson IRLS diverged at iteration {iterations} (deviance {dev})"
            )));
        };
        let change = (nd - dev).abs() / (nd.abs() + 0.1);
        b = nb;
        mu = nm;
        dev = nd;
        if change < DEVIANCE_TOL {
            converged = true;
            break;
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("Poisson IRLS produced non-finite coefficients".into()));
    }
    Ok(SolverFit {
        coef: expand(&b, &cols, p),
        objective: dev,
        iterations,
        rank_deficient: cols.len() < p,
        converged,
        degenerate: false,
    })
}
