//! Fitting the three regression classes and the LVCF baseline.

pub mod linalg;
mod median;
mod ols;
mod poisson;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use median::{fit_median, lad_objective};
pub use ols::fit_ols;
pub use poisson::{deviance as poisson_deviance, fit_poisson};

use crate::epiweek::Epiweek;
use crate::error::{Error, Result};
use crate::features::{ColumnLayout, DesignMatrix, DesignRow, Unavailable, HORIZON};
use crate::ingest::ObservationTable;
use crate::model::{ModelClass, ModelSpec};

/// Raw solver output on a numeric design.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverFit {
    pub coef: DVector<f64>,
    /// Squared error, ½ Σ|r|, or Poisson deviance, by class.
    pub objective: f64,
    pub iterations: usize,
    pub rank_deficient: bool,
    pub converged: bool,
    /// Poisson fit to all-zero counts: predicted rate is 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub values: Vec<f64>,
    pub column_names: Vec<String>,
    pub class: ModelClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub rank_deficient: bool,
    pub converged: bool,
    pub degenerate: bool,
    pub n_rows: usize,
}

/// Target of a fit: one state, or all states for geo-pooled models.
pub const POOLED: &str = "pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub target: String,
    pub fit_time: Epiweek,
    pub coefficients: Coefficients,
    pub diagnostics: Diagnostics,
}

/// Fits `spec` on a training matrix. `target` is a state code or [`POOLED`].
pub fn fit(spec: ModelSpec, target: &str, fit_time: Epiweek, design: &DesignMatrix) -> Result<FittedModel> {
    if design.nrows() == 0 {
        return Err(Error::Fit(format!("{spec} {target} at {fit_time}: no training rows")));
    }
    let x = design.x();
    let y = design.y();
    let solved = match spec.class() {
        ModelClass::Linear => fit_ols(&x, &y)?,
        ModelClass::Quantile => fit_median(&x, &y)?,
        ModelClass::Poisson => fit_poisson(&x, &y, &design.offsets())?,
        ModelClass::Lvcf => return Err(Error::Contract("LVCF is not fitted".into())),
    };
    if design.nrows() < design.ncols() {
        log::debug!(
            "{spec} {target} at {fit_time}: {} rows for {} columns",
            design.nrows(),
            design.ncols()
        );
    }
    Ok(FittedModel {
        spec,
        target: target.to_string(),
        fit_time,
        coefficients: Coefficients {
            values: solved.coef.iter().copied().collect(),
            column_names: design.layout.names(),
            class: spec.class(),
        },
        diagnostics: Diagnostics {
            objective: solved.objective,
            iterations: solved.iterations,
            rank_deficient: solved.rank_deficient || design.nrows() < design.ncols(),
            converged: solved.converged,
            degenerate: solved.degenerate,
            n_rows: design.nrows(),
        },
    })
}

fn linear_predictor(model: &FittedModel, row: &DesignRow) -> f64 {
    model
        .coefficients
        .values
        .iter()
        .zip(&row.values)
        .map(|(b, x)| b * x)
        .sum()
}

/// Point prediction on the %ILI scale.
///
/// Poisson predictions are counts `exp(offset + x·b)` converted to
/// `100 · count / V[t+2]`.
pub fn predict(model: &FittedModel, layout: &ColumnLayout, row: &DesignRow) -> Result<f64> {
    if layout.names() != model.coefficients.column_names || row.values.len() != layout.len() {
        return Err(Error::Contract(format!(
            "row layout {:?} does not match model layout {:?}",
            layout.names(),
            model.coefficients.column_names
        )));
    }
    match model.spec.class() {
        ModelClass::Linear | ModelClass::Quantile => Ok(linear_predictor(model, row)),
        ModelClass::Poisson => {
            let (Some(offset), Some(visits)) = (row.offset, row.outcome_visits) else {
                return Err(Error::Contract("Poisson row lacks offset or visit count".into()));
            };
            if model.diagnostics.degenerate {
                return Ok(0.0);
            }
            let count = (offset + linear_predictor(model, row)).exp();
            Ok(100.0 * count / visits as f64)
        }
        ModelClass::Lvcf => Err(Error::Contract("LVCF has no fitted model".into())),
    }
}

/// Last value carried forward: the forecast for `t + 2` is `I[t]`.
pub fn lvcf_predict(table: &ObservationTable, state: &str, t: Epiweek) -> std::result::Result<f64, Unavailable> {
    table.ili(state, t).ok_or_else(|| Unavailable {
        reason: format!("missing %ILI for {state} at {t}"),
    })
}

/// In-sample absolute LVCF errors for outcomes in `outcome_weeks`.
pub fn lvcf_residuals(table: &ObservationTable, state: &str, outcome_weeks: &[Epiweek]) -> Vec<f64> {
    outcome_weeks
        .iter()
        .filter_map(|&o| {
            let truth = table.ili(state, o)?;
            let pred = table.ili(state, o.add_weeks(-HORIZON))?;
            Some((truth - pred).abs())
        })
        .collect()
}

/// In-sample absolute residuals on the %ILI scale, restricted to rows
/// whose target is `state`.
pub fn training_residuals(model: &FittedModel, design: &DesignMatrix, state: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for row in design.rows.iter().filter(|r| r.target == state) {
        let pred = predict(model, &design.layout, row)?;
        let truth = match model.spec.class() {
            ModelClass::Poisson => {
                let v = row.outcome_visits.expect("Poisson rows carry visits");
                100.0 * row.outcome.expect("training row") / v as f64
            }
            _ => row.outcome.expect("training row"),
        };
        out.push((truth - pred).abs());
    }
    Ok(out)
}

/// Coefficient dump: `column_name,value,spec,target,fit_time`.
pub fn write_coefficients<W: Write>(model: &FittedModel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["column_name", "value", "spec", "target", "fit_time"])?;
    for (name, v) in model.coefficients.column_names.iter().zip(&model.coefficients.values) {
        w.write_record([
            name.clone(),
            v.to_string(),
            model.spec.to_string(),
            model.target.clone(),
            model.fit_time.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<coefficient dump>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnLayout, DesignMatrix};
    use crate::ingest::{Observation, ObservationTable};

    fn ew(y: i32, w: u8) -> Epiweek {
        Epiweek::new(y, w).unwrap()
    }

    fn row(values: Vec<f64>, outcome: Option<f64>, offset: Option<f64>, visits: Option<u64>) -> DesignRow {
        DesignRow {
            target: "GA".into(),
            fit_time: ew(2015, 40),
            outcome_time: ew(2015, 42),
            outcome,
            values,
            offset,
            outcome_visits: visits,
        }
    }

    fn isolated() -> ColumnLayout {
        ColumnLayout::for_model("linear:isolated".parse().unwrap(), &[], false)
    }

    #[test]
    fn zero_coefficients_predict_zero() {
        let layout = isolated();
        let m = FittedModel {
            spec: "linear:isolated".parse().unwrap(),
            target: "GA".into(),
            fit_time: ew(2015, 40),
            coefficients: Coefficients {
                values: vec![0.0; 4],
                column_names: layout.names(),
                class: ModelClass::Linear,
            },
            diagnostics: Diagnostics {
                objective: 0.0,
                iterations: 1,
                rank_deficient: false,
                converged: true,
                degenerate: false,
                n_rows: 1,
            },
        };
        assert_eq!(
            predict(&m, &layout, &row(vec![1.0, 2.0, 3.0, 1.0], None, None, None)).unwrap(),
            0.0
        );
        let other = ColumnLayout::for_model("linear:isolated_us".parse().unwrap(), &[], false);
        let r = row(vec![0.0; 6], None, None, None);
        assert!(matches!(predict(&m, &other, &r), Err(Error::Contract(_))));
    }

    #[test]
    fn poisson_count_converts_to_percent() {
        let layout = ColumnLayout::for_model("poisson:isolated".parse().unwrap(), &[], false);
        let v = 4000u64;
        // exp(offset + 0) = V/2 → 50%.
        let offset = (v as f64 / 2.0).ln();
        let m = FittedModel {
            spec: "poisson:isolated".parse().unwrap(),
            target: "GA".into(),
            fit_time: ew(2015, 40),
            coefficients: Coefficients {
                values: vec![0.0; 5],
                column_names: layout.names(),
                class: ModelClass::Poisson,
            },
            diagnostics: Diagnostics {
                objective: 0.0,
                iterations: 1,
                rank_deficient: false,
                converged: true,
                degenerate: false,
                n_rows: 1,
            },
        };
        let p = predict(
            &m,
            &layout,
            &row(vec![0.1, 0.2, 0.3, 1.0, 1.0], None, Some(offset), Some(v)),
        )
        .unwrap();
        assert!((p - 50.0).abs() < 1e-9);
    }

    #[test]
    fn fit_through_design_matrix() {
        let layout = isolated();
        let rows = (0..20)
            .map(|i| {
                let a = i as f64;
                let vals = vec![a, (a * 0.7).cos(), (a * 0.3).sin(), 1.0];
                let y = 0.5 * vals[0] - vals[1] + 2.0 * vals[2] + 0.25;
                row(vals, Some(y), None, None)
            })
            .collect();
        let d = DesignMatrix {
            layout: layout.clone(),
            rows,
        };
        let spec: ModelSpec = "linear:isolated".parse().unwrap();
        let m = fit(spec, "GA", ew(2015, 40), &d).unwrap();
        let expected = [0.5, -1.0, 2.0, 0.25];
        for (a, b) in m.coefficients.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        let res = training_residuals(&m, &d, "GA").unwrap();
        assert!(res.iter().all(|r| *r < 1e-9));

        let empty = DesignMatrix { layout, rows: vec![] };
        assert!(matches!(fit(spec, "GA", ew(2015, 40), &empty), Err(Error::Fit(_))));
    }

    #[test]
    fn lvcf() {
        let obs = |w: u8, v: f64| Observation {
            location: "GA".into(),
            week: ew(2015, w),
            ili_pct: v,
            ili_count: 0,
            total_visits: 0,
            providers: None,
        };
        let t = ObservationTable::from_rows(vec![obs(40, 3.1), obs(41, 3.1), obs(42, 3.1), obs(43, 3.1)]).unwrap();
        assert_eq!(lvcf_predict(&t, "GA", ew(2015, 40)).unwrap(), 3.1);
        assert!(lvcf_predict(&t, "GA", ew(2015, 44)).is_err());
        let r = lvcf_residuals(&t, "GA", &[ew(2015, 42), ew(2015, 43)]);
        assert_eq!(r, vec![0.0, 0.0]);
    }
}
