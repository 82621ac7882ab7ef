//! Median (τ = 0.5) regression as a linear program, solved with a
//! primal-dual interior-point method (Mehrotra predictor-corrector) on the
//! bounded dual, followed by a vertex polish.
//!
//! Dual form: maximise `yᵀd` subject to `Xᵀd = (1-τ)Xᵀ1`, `0 <= d <= 1`.
//! The equality multipliers of that problem are the regression
//! coefficients (with a sign flip, since we minimise `-yᵀd`).

use nalgebra::{DMatrix, DVector};

use super::linalg::{expand, independent_columns, lstsq, select_columns, select_rows};
use super::SolverFit;
use crate::error::{Error, Result};

const TAU: f64 = 0.5;
const MAX_ITER: usize = 100;
const GAP_TOL: f64 = 1e-12;
const STEP_DAMP: f64 = 0.99995;

/// ½ Σ |y - Xb|.
pub fn lad_objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.5 * (y - x * b).iter().map(|r| r.abs()).sum::<f64>()
}

/// Minimises `Σ pinball_0.5(y - Xb) = ½ Σ |y - Xb|`.
pub fn fit_median(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<SolverFit> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::Fit("empty design matrix".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in design or outcome".into()));
    }
    let cols = independent_columns(x);
    if cols.is_empty() {
        // Every column is zero: the fit is b = 0.
        return Ok(SolverFit {
            objective: lad_objective(x, y, &DVector::zeros(p)),
            iterations: 0,
            rank_deficient: true,
            converged: true,
            degenerate: false,
            coef: DVector::zeros(p),
        });
    }
    let xr = select_columns(x, &cols);
    let (b, iterations) = interior_point(&xr, y)?;
    let b = polish(&xr, y, b);
    let coef = expand(&b, &cols, p);
    Ok(SolverFit {
        objective: lad_objective(x, y, &coef),
        iterations,
        rank_deficient: cols.len() < p,
        converged: true,
        degenerate: false,
        coef,
    })
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: DVector<f64>,
    dbeta: DVector<f64>,
    dz: DVector<f64>,
    dw: DVector<f64>,
}

/// Solves for the Newton direction given complementarity targets
/// `r_xz` (for x∘z) and `r_sw` (for s∘w).
#[allow(clippy::too_many_arguments)]
fn direction(
    x_mat: &DMatrix<f64>,
    theta: &DVector<f64>,
    xv: &DVector<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
    w: &DVector<f64>,
    r_p: &DVector<f64>,
    r_d: &DVector<f64>,
    r_xz: &DVector<f64>,
    r_sw: &DVector<f64>,
) -> Result<Direction> {
    let rho = r_d - r_xz.component_div(xv) + r_sw.component_div(s);
    let p = x_mat.ncols();
    // A Θ Aᵀ with A = Xᵀ.
    let mut normal = DMatrix::zeros(p, p);
    for (i, row) in x_mat.row_iter().enumerate() {
        let t = theta[i];
        for a in 0..p {
            let ta = t * row[a];
            for b in a..p {
                normal[(a, b)] += ta * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    let rhs = r_p + x_mat.transpose() * theta.component_mul(&rho);
    let dbeta = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            let sol = lstsq(&normal, &rhs);
            if sol.coef.iter().any(|v| !v.is_finite()) {
                return Err(Error::Fit("median regression: singular Newton system".into()));
            }
            sol.coef
        }
    };
    let dx = theta.component_mul(&(x_mat * &dbeta - &rho));
    let dz = (r_xz - z.component_mul(&dx)).component_div(xv);
    let dw = (r_sw + w.component_mul(&dx)).component_div(s);
    Ok(Direction { dx, dbeta, dz, dw })
}

fn interior_point(x_mat: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let n = x_mat.nrows();
    let c = -y;
    let ones = DVector::from_element(n, 1.0);
    let b = x_mat.transpose() * &ones * (1.0 - TAU);

    let mut xv = DVector::from_element(n, 1.0 - TAU);
    let mut s = DVector::from_element(n, TAU);
    let mut beta = lstsq(x_mat, &c).coef;
    let r0 = &c - x_mat * &beta;
    let scale = r0.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let delta = scale.max(1e-6 * (1.0 + y.amax()));
    let mut z = r0.map(|v| v.max(0.0) + delta);
    let mut w = r0.map(|v| (-v).max(0.0) + delta);

    for iter in 1..=MAX_ITER {
        let r_p = &b - x_mat.transpose() * &xv;
        let r_d = &c - x_mat * &beta - &z + &w;
        let gap = xv.dot(&z) + s.dot(&w);
        let primal_obj = c.dot(&xv).abs();
        if gap <= GAP_TOL * (1.0 + primal_obj)
            && r_p.amax() <= 1e-9 * (1.0 + b.amax())
            && r_d.amax() <= 1e-9 * (1.0 + c.amax())
        {
            return Ok((-beta, iter));
        }
        let theta = (z.component_div(&xv) + w.component_div(&s)).map(|v| 1.0 / v);

        // Predictor (affine scaling).
        let r_xz = -xv.component_mul(&z);
        let r_sw = -s.component_mul(&w);
        let aff = direction(x_mat, &theta, &xv, &s, &z, &w, &r_p, &r_d, &r_xz, &r_sw)?;
        let ds_aff = -&aff.dx;
        let ap = max_step(&xv, &aff.dx).min(max_step(&s, &ds_aff)).min(1.0);
        let ad = max_step(&z, &aff.dz).min(max_step(&w, &aff.dw)).min(1.0);
        let gap_aff = (&xv + &aff.dx * ap).dot(&(&z + &aff.dz * ad)) + (&s + &ds_aff * ap).dot(&(&w + &aff.dw * ad));
        let sigma = (gap_aff / gap).powi(3).clamp(0.0, 1.0);
        let mu = sigma * gap / (2 * n) as f64;

        // Corrector.
        let r_xz = xv.component_mul(&z).map(|v| mu - v) - aff.dx.component_mul(&aff.dz);
        let r_sw = s.component_mul(&w).map(|v| mu - v) - ds_aff.component_mul(&aff.dw);
        let d = direction(x_mat, &theta, &xv, &s, &z, &w, &r_p, &r_d, &r_xz, &r_sw)?;
        let ds = -&d.dx;
        let ap = (STEP_DAMP * max_step(&xv, &d.dx).min(max_step(&s, &ds))).min(1.0);
        let ad = (STEP_DAMP * max_step(&z, &d.dz).min(max_step(&w, &d.dw))).min(1.0);

        xv += &d.dx * ap;
        s += &ds * ap;
        beta += &d.dbeta * ad;
        z += &d.dz * ad;
        w += &d.dw * ad;

        if [&xv, &s, &z, &w, &beta]
            .iter()
            .any(|v| v.iter().any(|e| !e.is_finite()))
        {
            return Err(Error::Fit(format!("median regression diverged at iteration {iter}")));
        }
    }
    Err(Error::Fit(format!(
        "median regression did not converge in {MAX_ITER} iterations"
    )))
}

/// Replaces an interior-point solution with the basic solution through
/// the rows it (nearly) interpolates, when that is no worse.
fn polish(x: &DMatrix<f64>, y: &DVector<f64>, b: DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    let resid = y - x * &b;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&i, &j| resid[i].abs().total_cmp(&resid[j].abs()).then(i.cmp(&j)));
    // Greedily collect p rows with independent regressors.
    let xt = x.transpose();
    let mut rows = Vec::new();
    for &i in &order {
        let mut trial = rows.clone();
        trial.push(i);
        if independent_columns(&select_columns(&xt, &trial)).len() == trial.len() {
            rows = trial;
            if rows.len() == p {
                break;
            }
        }
    }
    if rows.len() < p {
        return b;
    }
    let xb = select_rows(x, &rows);
    let yb = DVector::from_iterator(p, rows.iter().map(|&i| y[i]));
    let Some(cand) = xb.lu().solve(&yb) else {
        return b;
    };
    if cand.iter().all(|v| v.is_finite()) && lad_objective(x, y, &cand) <= lad_objective(x, y, &b) {
        cand
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn median_of(v: &[f64]) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    }

    #[test]
    fn intercept_only() {
        let y = [3.0, 1.0, 7.0, 2.0, 100.0];
        let x = DMatrix::from_element(5, 1, 1.0);
        let f = fit_median(&x, &DVector::from_row_slice(&y)).unwrap();
        let m = median_of(&y);
        let expect = 0.5 * y.iter().map(|v| (v - m).abs()).sum::<f64>();
        assert!((f.coef[0] - 3.0).abs() < 1e-9);
        assert!((f.objective - expect).abs() < 1e-9);
    }

    #[test]
    fn even_count_any_median() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = DMatrix::from_element(4, 1, 1.0);
        let f = fit_median(&x, &DVector::from_row_slice(&y)).unwrap();
        assert!((2.0 - 1e-9..=3.0 + 1e-9).contains(&f.coef[0]));
        assert!((f.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn exact_fit_zero_objective() {
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(12, |i, _| 0.5 + 2.0 * i as f64);
        let f = fit_median(&x, &y).unwrap();
        assert!(f.objective < 1e-9);
        assert!((f.coef[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn outlier_on_same_side_does_not_move_fit() {
        let x = DMatrix::from_fn(9, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let base: Vec<f64> = (0..9)
            .map(|i| 1.0 + 0.5 * i as f64 + [0.3, -0.2, 0.1, -0.4, 0.0, 0.2, -0.1, 0.4, -0.3][i])
            .collect();
        let a = fit_median(&x, &DVector::from_vec(base.clone())).unwrap();
        let mut out = base.clone();
        // Row 7 sits above the fitted line; pushing it further up keeps the sign.
        let r7 = base[7] - (a.coef[0] + 7.0 * a.coef[1]);
        assert!(r7 > 0.0);
        out[7] += 1000.0;
        let b = fit_median(&x, &DVector::from_vec(out)).unwrap();
        assert!(
            (a.coef.clone() - b.coef.clone()).norm() < 1e-8,
            "{} vs {}",
            a.coef,
            b.coef
        );
        assert!((b.objective - (a.objective + 500.0)).abs() < 1e-7);
    }

    #[test]
    fn duplicated_column() {
        let x = DMatrix::from_fn(10, 3, |i, j| if j == 0 { 1.0 } else { (i % 4) as f64 });
        let y = DVector::from_fn(10, |i, _| (i as f64).sin());
        let f = fit_median(&x, &y).unwrap();
        assert!(f.rank_deficient);
        assert_eq!(f.coef[2], 0.0);
    }
}
