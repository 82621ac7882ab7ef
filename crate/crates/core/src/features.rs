//! Lag vectors, trend indicators and design matrices.
//!
//! Column layout, in order:
//!
//! | block            | linear / quantile     | poisson                  |
//! |------------------|-----------------------|--------------------------|
//! | own lags k=0..2  | `I[self,t-k]`         | `logI[self,t-k]` = ln(I+c) |
//! | neighbor s, k=0,1| `D[s,k]`              | `M[s,k]`                 |
//! | national k=0,1   | `D[US,k]`             | `M[US,k]`                |
//! | providers        |                       | `logP[t+2]` = ln(c+P)    |
//! | intercept        | `(intercept)`         | `(intercept)`            |
//!
//! Geo-pooled models use `pool` in place of `self`. Neighbors are listed
//! alphabetically. Poisson rows also carry the fixed offset ln(c+V[t+2]).
//! The intercept is dropped only for the Isolated variant in strict mode.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::epiweek::{in_season, Epiweek, Season};
use crate::error::{Error, Result};
use crate::geography::AdjacencyGraph;
use crate::ingest::{in_seasons, NationalSeries, ObservationTable};
use crate::model::{ModelClass, ModelSpec, Variant};
use crate::states::NATIONAL;

/// Default flat-trend tolerance, shared by the %ILI and log-scale indicators.
pub const DEFAULT_EPS: f64 = 0.05;

/// Lag depths of the target's own %ILI.
pub const SELF_LAGS: i64 = 3;
/// Number of one-week changes summarised per covariate series.
pub const TREND_LAGS: i64 = 2;
/// Forecast horizon in weeks.
pub const HORIZON: i64 = 2;

/// Ternary week-over-week direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrendIndicator {
    Down,
    Flat,
    Up,
}

impl TrendIndicator {
    pub fn value(self) -> f64 {
        match self {
            TrendIndicator::Down => -1.0,
            TrendIndicator::Flat => 0.0,
            TrendIndicator::Up => 1.0,
        }
    }

    /// `scale` is the magnitude of the operands; differences within a few
    /// ulps of `eps` count as flat so that e.g. 1.05 - 1.00 is flat at 0.05.
    fn from_delta(delta: f64, eps: f64, scale: f64) -> Self {
        let slack = 8.0 * f64::EPSILON * scale.max(eps);
        if delta > eps + slack {
            TrendIndicator::Up
        } else if delta < -eps - slack {
            TrendIndicator::Down
        } else {
            TrendIndicator::Flat
        }
    }
}

/// Direction of `curr - prev` with changes of magnitude `<= eps` flat.
pub fn trend_indicator(prev: f64, curr: f64, eps: f64) -> TrendIndicator {
    TrendIndicator::from_delta(curr - prev, eps, prev.abs().max(curr.abs()))
}

/// The same rule on `ln(curr + c) - ln(prev + c)`.
pub fn log_trend_indicator(prev: f64, curr: f64, eps: f64, c: SmallConstant) -> TrendIndicator {
    let (a, b) = ((prev + c.0).ln(), (curr + c.0).ln());
    TrendIndicator::from_delta(b - a, eps, a.abs().max(b.abs()))
}

/// Half the smallest positive state %ILI on the training span.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SmallConstant(f64);

impl SmallConstant {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::Domain(format!("small constant must be positive, got {c}")))
        }
    }

    /// `½ · min I` over `states` and the in-season weeks of `seasons`,
    /// ignoring exact zeros.
    pub fn from_training(table: &ObservationTable, states: &[&str], seasons: &[Season]) -> Result<Self> {
        let min = table
            .rows()
            .iter()
            .filter(|r| states.contains(&r.location.as_str()) && in_seasons(r.week, seasons))
            .map(|r| r.ili_pct)
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::InsufficientData(
                "no positive %ILI in the training span to derive the small constant".into(),
            ));
        }
        Self::new(0.5 * min)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Named column layout of a design matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    pub log_scale: bool,
    pub pooled: bool,
    pub neighbors: Vec<String>,
    pub national: bool,
    pub providers: bool,
    pub intercept: bool,
}

pub const INTERCEPT: &str = "(intercept)";

impl ColumnLayout {
    pub fn for_model(spec: ModelSpec, neighbors: &[String], strict: bool) -> Self {
        let variant = spec.variant();
        let poisson = spec.class() == ModelClass::Poisson;
        Self {
            log_scale: poisson,
            pooled: variant == Variant::GeoPooled,
            neighbors: if variant.uses_neighbors() {
                neighbors.to_vec()
            } else {
                Vec::new()
            },
            national: variant.uses_national(),
            providers: poisson,
            intercept: !(strict && variant == Variant::Isolated),
        }
    }

    pub fn len(&self) -> usize {
        SELF_LAGS as usize
            + TREND_LAGS as usize * (self.neighbors.len() + usize::from(self.national))
            + usize::from(self.providers)
            + usize::from(self.intercept)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let lag = if self.log_scale { "logI" } else { "I" };
        let who = if self.pooled { "pool" } else { "self" };
        let ind = if self.log_scale { "M" } else { "D" };
        let mut out: Vec<String> = (0..SELF_LAGS)
            .map(|k| {
                if k == 0 {
                    format!("{lag}[{who},t]")
                } else {
                    format!("{lag}[{who},t-{k}]")
                }
            })
            .collect();
        let sources = self
            .neighbors
            .iter()
            .map(String::as_str)
            .chain(self.national.then_some(NATIONAL));
        for s in sources {
            for k in 0..TREND_LAGS {
                out.push(format!("{ind}[{s},{k}]"));
            }
        }
        if self.providers {
            out.push("logP[t+2]".into());
        }
        if self.intercept {
            out.push(INTERCEPT.into());
        }
        out
    }

    /// Inverse of [`ColumnLayout::names`].
    pub fn from_names(names: &[String]) -> Result<Self> {
        let bad = || Error::Parse(format!("unrecognised column layout {names:?}"));
        let first = names.first().ok_or_else(bad)?;
        let log_scale = first.starts_with("logI[");
        let pooled = first.contains("[pool,");
        let ind = if log_scale { "M[" } else { "D[" };
        let mut neighbors = Vec::new();
        let mut national = false;
        let mut trend_cols = names
            .iter()
            .skip(SELF_LAGS as usize)
            .filter(|n| n.starts_with(ind))
            .peekable();
        while let Some(n) = trend_cols.next() {
            let src = n[2..].split(',').next().ok_or_else(bad)?.to_string();
            let _pair = trend_cols.next().ok_or_else(bad)?;
            if src == NATIONAL {
                national = true;
            } else {
                neighbors.push(src);
            }
        }
        let layout = Self {
            log_scale,
            pooled,
            neighbors,
            national,
            providers: names.iter().any(|n| n == "logP[t+2]"),
            intercept: names.last().is_some_and(|n| n == INTERCEPT),
        };
        if layout.names() == names {
            Ok(layout)
        } else {
            Err(bad())
        }
    }
}

/// Why a row or forecast could not be built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unavailable {
    pub reason: String,
}

impl Unavailable {
    fn missing(what: &str, loc: &str, week: Epiweek) -> Self {
        Self {
            reason: format!("missing {what} for {loc} at {week}"),
        }
    }
}

/// One regression row for target state and forecast origin `fit_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub target: String,
    pub fit_time: Epiweek,
    pub outcome_time: Epiweek,
    /// %ILI (linear/quantile) or ILI count (Poisson); absent on prediction rows.
    pub outcome: Option<f64>,
    pub values: Vec<f64>,
    /// Poisson fixed offset ln(c + V[t+2]).
    pub offset: Option<f64>,
    /// V[t+2], used to convert Poisson counts back to %ILI.
    pub outcome_visits: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub layout: ColumnLayout,
    pub rows: Vec<DesignRow>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.layout.len()
    }

    pub fn x(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.layout.len(), |i, j| self.rows[i].values[j])
    }

    pub fn y(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|r| r.outcome.expect("training rows carry outcomes")),
        )
    }

    pub fn offsets(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.offset.unwrap_or(0.0)))
    }

    /// Debug dump: one CSV row per design row with named columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "target".to_string(),
            "fit_time".into(),
            "outcome_time".into(),
            "outcome".into(),
            "offset".into(),
        ];
        header.extend(self.layout.names());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.target.clone(),
                r.fit_time.to_string(),
                r.outcome_time.to_string(),
                r.outcome.map(|v| v.to_string()).unwrap_or_default(),
                r.offset.map(|v| v.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<design dump>", e))?;
        Ok(())
    }
}

/// Everything feature construction reads. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct FeatureContext<'a> {
    pub table: &'a ObservationTable,
    pub graph: &'a AdjacencyGraph,
    pub national: Option<&'a NationalSeries>,
    /// States stacked by geo-pooled fits, in order.
    pub states: Vec<String>,
    /// Seasons whose in-season weeks are admissible outcomes.
    pub seasons: Vec<Season>,
    pub eps: f64,
    pub c: SmallConstant,
    pub strict: bool,
}

impl FeatureContext<'_> {
    pub fn layout(&self, spec: ModelSpec, target: &str) -> Result<ColumnLayout> {
        if spec.class() == ModelClass::Lvcf {
            return Err(Error::Contract("LVCF has no design matrix".into()));
        }
        let neighbors: Vec<String> = if spec.variant().uses_neighbors() {
            self.graph.neighbors(target)?.iter().cloned().collect()
        } else {
            Vec::new()
        };
        Ok(ColumnLayout::for_model(spec, &neighbors, self.strict))
    }

    fn ili(&self, loc: &str, week: Epiweek) -> std::result::Result<f64, Unavailable> {
        self.table
            .ili(loc, week)
            .ok_or_else(|| Unavailable::missing("%ILI", loc, week))
    }

    fn national_ili(&self, week: Epiweek) -> std::result::Result<f64, Unavailable> {
        self.national
            .and_then(|n| n.get(week))
            .ok_or_else(|| Unavailable::missing("national %ILI", NATIONAL, week))
    }

    fn push_trends(
        &self,
        values: &mut Vec<f64>,
        log_scale: bool,
        t: Epiweek,
        series: impl Fn(Epiweek) -> std::result::Result<f64, Unavailable>,
    ) -> std::result::Result<(), Unavailable> {
        for k in 0..TREND_LAGS {
            let curr = series(t.add_weeks(-k))?;
            let prev = series(t.add_weeks(-k - 1))?;
            let ind = if log_scale {
                log_trend_indicator(prev, curr, self.eps, self.c)
            } else {
                trend_indicator(prev, curr, self.eps)
            };
            values.push(ind.value());
        }
        Ok(())
    }

    /// Covariates at origin `t` for `target`, plus the outcome when
    /// `with_outcome` is set.
    fn row(
        &self,
        layout: &ColumnLayout,
        target: &str,
        t: Epiweek,
        with_outcome: bool,
    ) -> std::result::Result<DesignRow, Unavailable> {
        let c = self.c.0;
        let outcome_time = t.add_weeks(HORIZON);
        let mut values = Vec::with_capacity(layout.len());
        for k in 0..SELF_LAGS {
            let v = self.ili(target, t.add_weeks(-k))?;
            values.push(if layout.log_scale { (v + c).ln() } else { v });
        }
        for s in &layout.neighbors {
            self.push_trends(&mut values, layout.log_scale, t, |w| self.ili(s, w))?;
        }
        if layout.national {
            self.push_trends(&mut values, layout.log_scale, t, |w| self.national_ili(w))?;
        }
        let mut offset = None;
        let mut outcome_visits = None;
        if layout.providers {
            let obs = self
                .table
                .get(target, outcome_time)
                .ok_or_else(|| Unavailable::missing("visits/providers", target, outcome_time))?;
            let p = obs
                .providers
                .ok_or_else(|| Unavailable::missing("provider count", target, outcome_time))?;
            if obs.total_visits == 0 {
                return Err(Unavailable {
                    reason: format!("zero total visits for {target} at {outcome_time}"),
                });
            }
            values.push((c + p as f64).ln());
            offset = Some((c + obs.total_visits as f64).ln());
            outcome_visits = Some(obs.total_visits);
        }
        if layout.intercept {
            values.push(1.0);
        }
        let outcome = if with_outcome {
            let obs = self
                .table
                .get(target, outcome_time)
                .ok_or_else(|| Unavailable::missing("outcome", target, outcome_time))?;
            Some(if layout.log_scale {
                obs.ili_count as f64
            } else {
                obs.ili_pct
            })
        } else {
            None
        };
        debug_assert_eq!(values.len(), layout.len());
        Ok(DesignRow {
            target: target.to_string(),
            fit_time: t,
            outcome_time,
            outcome,
            values,
            offset,
            outcome_visits,
        })
    }

    /// Covariate row for forecasting `target` at `t + 2` from origin `t`.
    pub fn build_prediction_row(
        &self,
        spec: ModelSpec,
        target: &str,
        t: Epiweek,
    ) -> Result<std::result::Result<DesignRow, Unavailable>> {
        let layout = self.layout(spec, target)?;
        Ok(self.row(&layout, target, t, false))
    }

    /// Every admissible training row with an in-season outcome in the
    /// configured seasons, ordered by (state, outcome week). Rows with any
    /// missing input are skipped.
    pub fn all_training_rows(&self, spec: ModelSpec, target: &str) -> Result<DesignMatrix> {
        let layout = self.layout(spec, target)?;
        let outcome_weeks: Vec<Epiweek> = self
            .seasons
            .iter()
            .flat_map(|s| s.weeks())
            .filter(|&w| in_season(w))
            .collect();
        let targets: Vec<&str> = if layout.pooled {
            self.states.iter().map(String::as_str).collect()
        } else {
            vec![target]
        };
        let mut rows = Vec::new();
        for loc in targets {
            for &o in &outcome_weeks {
                if let Ok(r) = self.row(&layout, loc, o.add_weeks(-HORIZON), true) {
                    rows.push(r);
                }
            }
        }
        Ok(DesignMatrix { layout, rows })
    }

    /// Training rows for a forecast made at origin `t`: outcomes at or
    /// before `t`.
    pub fn build_training_matrix(&self, spec: ModelSpec, target: &str, t: Epiweek) -> Result<DesignMatrix> {
        let mut m = self.all_training_rows(spec, target)?;
        m.rows.retain(|r| r.outcome_time <= t);
        Ok(m)
    }
}
