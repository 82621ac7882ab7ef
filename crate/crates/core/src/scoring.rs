//! Interval score, weighted interval score, rMSE and their aggregates.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::conformal::LEVELS;
use crate::epiweek::{Epiweek, Season};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// One interval of a forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// Nominal coverage, e.g. 0.8.
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub spec: ModelSpec,
    pub state: String,
    pub week: Epiweek,
    pub point: f64,
    pub median: f64,
    pub intervals: Vec<Interval>,
    pub truth: Option<f64>,
}

impl ForecastRecord {
    pub fn season(&self) -> Option<Season> {
        crate::epiweek::season_of(self.week).ok()
    }
}

/// Interval score of `[lower, upper]` at miscoverage `alpha`.
pub fn interval_score(lower: f64, upper: f64, truth: f64, alpha: f64) -> f64 {
    let width = upper - lower;
    let under = if truth < lower {
        (2.0 / alpha) * (lower - truth)
    } else {
        0.0
    };
    let over = if truth > upper {
        (2.0 / alpha) * (truth - upper)
    } else {
        0.0
    };
    width + under + over
}

/// Weighted interval score over the 50/80/95% intervals and the median:
/// `(½|y - m| + Σ_k (α_k/2) IS_{α_k}) / (K + ½)`.
pub fn wis(record: &ForecastRecord) -> Result<f64> {
    let truth = record
        .truth
        .ok_or_else(|| Error::Contract(format!("{} {} {}: no truth", record.spec, record.state, record.week)))?;
    if record.intervals.len() != LEVELS.len() {
        return Err(Error::Contract(format!(
            "expected {} intervals, found {}",
            LEVELS.len(),
            record.intervals.len()
        )));
    }
    let mut total = 0.5 * (truth - record.median).abs();
    for level in LEVELS {
        let iv = record
            .intervals
            .iter()
            .find(|iv| iv.level == level)
            .ok_or_else(|| Error::Contract(format!("missing {level} interval")))?;
        if iv.lower > iv.upper {
            return Err(Error::Contract(format!("interval {level}: lower > upper")));
        }
        let alpha = 1.0 - level;
        total += 0.5 * alpha * interval_score(iv.lower, iv.upper, truth, alpha);
    }
    Ok(total / (LEVELS.len() as f64 + 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record: ForecastRecord,
    pub sq_error: f64,
    pub wis: f64,
}

/// Mean value for a cell plus how many records contributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellValue {
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    /// Sorted by (spec, state, week).
    pub records: Vec<ScoredRecord>,
}

impl ScoreTable {
    /// Scores every record that has a truth value.
    pub fn from_forecasts(forecasts: &[ForecastRecord]) -> Result<Self> {
        let mut records = forecasts
            .iter()
            .filter(|f| f.truth.is_some())
            .map(|f| {
                let truth = f.truth.expect("filtered");
                Ok(ScoredRecord {
                    sq_error: (f.point - truth).powi(2),
                    wis: wis(f)?,
                    record: f.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.sort_by(|a, b| {
            (a.record.spec, &a.record.state, a.record.week).cmp(&(b.record.spec, &b.record.state, b.record.week))
        });
        Ok(Self { records })
    }

    fn cell<'a>(&'a self, keep: impl Fn(&ScoredRecord) -> bool + 'a) -> impl Iterator<Item = &'a ScoredRecord> + 'a {
        self.records.iter().filter(move |r| keep(r))
    }

    pub fn specs(&self) -> BTreeSet<ModelSpec> {
        self.records.iter().map(|r| r.record.spec).collect()
    }

    pub fn rmse_by_state(&self, spec: ModelSpec, state: &str) -> Option<CellValue> {
        rmse(self.cell(move |r| r.record.spec == spec && r.record.state == state))
    }

    pub fn rmse_by_week(&self, spec: ModelSpec, week: Epiweek) -> Option<CellValue> {
        rmse(self.cell(move |r| r.record.spec == spec && r.record.week == week))
    }

    pub fn wis_by_state(&self, spec: ModelSpec, state: &str) -> Option<CellValue> {
        mean(
            self.cell(move |r| r.record.spec == spec && r.record.state == state)
                .map(|r| r.wis),
        )
    }

    pub fn wis_by_week(&self, spec: ModelSpec, week: Epiweek) -> Option<CellValue> {
        mean(
            self.cell(move |r| r.record.spec == spec && r.record.week == week)
                .map(|r| r.wis),
        )
    }

    /// rMSE and mean WIS for every (spec, state) and (spec, week) cell.
    pub fn aggregates(&self) -> Aggregates {
        let mut by_state: BTreeMap<(ModelSpec, String), Acc> = BTreeMap::new();
        let mut by_week: BTreeMap<(ModelSpec, Epiweek), Acc> = BTreeMap::new();
        for r in &self.records {
            by_state
                .entry((r.record.spec, r.record.state.clone()))
                .or_default()
                .push(r);
            by_week.entry((r.record.spec, r.record.week)).or_default().push(r);
        }
        Aggregates {
            by_state: by_state.into_iter().map(|(k, a)| (k, a.finish())).collect(),
            by_week: by_week.into_iter().map(|(k, a)| (k, a.finish())).collect(),
        }
    }

    /// Tidy per-record CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["class", "variant", "state", "week", "season", "point", "median"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for l in LEVELS {
            header.push(format!("lower_{}", level_tag(l)));
            header.push(format!("upper_{}", level_tag(l)));
        }
        header.extend(["truth", "sq_error", "wis"].map(String::from));
        w.write_record(&header)?;
        for r in &self.records {
            let f = &r.record;
            let mut rec = vec![
                f.spec.class().name().to_string(),
                f.spec.variant().name().to_string(),
                f.state.clone(),
                f.week.to_string(),
                f.season().map(|s| s.to_string()).unwrap_or_default(),
                f.point.to_string(),
                f.median.to_string(),
            ];
            for l in LEVELS {
                let iv = f
                    .intervals
                    .iter()
                    .find(|iv| iv.level == l)
                    .expect("scored records are complete");
                rec.push(iv.lower.to_string());
                rec.push(iv.upper.to_string());
            }
            rec.push(f.truth.expect("scored").to_string());
            rec.push(r.sq_error.to_string());
            rec.push(r.wis.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<scores>", e))?;
        Ok(())
    }

    /// Reads the tidy CSV written by [`ScoreTable::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |what: &str| Error::Parse(format!("scores line {line}: bad {what}"));
            if rec.len() != 7 + 2 * LEVELS.len() + 3 {
                return Err(bad("field count"));
            }
            let num = |i: usize, what: &str| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(what))
            };
            let spec = ModelSpec::new(rec[0].parse()?, rec[1].parse()?)?;
            let intervals = LEVELS
                .iter()
                .enumerate()
                .map(|(k, &level)| {
                    Ok(Interval {
                        level,
                        lower: num(7 + 2 * k, "lower bound")?,
                        upper: num(8 + 2 * k, "upper bound")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let base = 7 + 2 * LEVELS.len();
            records.push(ScoredRecord {
                record: ForecastRecord {
                    spec,
                    state: rec[2].to_string(),
                    week: rec[3].parse()?,
                    point: num(5, "point")?,
                    median: num(6, "median")?,
                    intervals,
                    truth: Some(num(base, "truth")?),
                },
                sq_error: num(base + 1, "sq_error")?,
                wis: num(base + 2, "wis")?,
            });
        }
        Ok(Self { records })
    }
}

pub(crate) fn level_tag(level: f64) -> String {
    format!("{}", (level * 100.0).round() as u32)
}

fn rmse<'a>(it: impl Iterator<Item = &'a ScoredRecord>) -> Option<CellValue> {
    mean(it.map(|r| r.sq_error)).map(|c| CellValue {
        value: c.value.sqrt(),
        count: c.count,
    })
}

fn mean(it: impl Iterator<Item = f64>) -> Option<CellValue> {
    let (sum, count) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (count > 0).then(|| CellValue {
        value: sum / count as f64,
        count,
    })
}

#[derive(Default)]
struct Acc {
    sq: f64,
    wis: f64,
    n: usize,
}

impl Acc {
    fn push(&mut self, r: &ScoredRecord) {
        self.sq += r.sq_error;
        self.wis += r.wis;
        self.n += 1;
    }

    fn finish(self) -> CellScores {
        let n = self.n as f64;
        CellScores {
            rmse: (self.sq / n).sqrt(),
            wis: self.wis / n,
            count: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellScores {
    pub rmse: f64,
    pub wis: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregates {
    pub by_state: BTreeMap<(ModelSpec, String), CellScores>,
    pub by_week: BTreeMap<(ModelSpec, Epiweek), CellScores>,
}

impl Aggregates {
    pub fn write_by_state<W: Write>(&self, out: W) -> Result<()> {
        write_cells(
            out,
            "state",
            self.by_state.iter().map(|((s, k), v)| (*s, k.clone(), *v)),
        )
    }

    pub fn write_by_week<W: Write>(&self, out: W) -> Result<()> {
        write_cells(
            out,
            "week",
            self.by_week.iter().map(|((s, k), v)| (*s, k.to_string(), *v)),
        )
    }
}

fn write_cells<W: Write>(
    out: W,
    key: &str,
    cells: impl Iterator<Item = (ModelSpec, String, CellScores)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "variant", key, "rmse", "wis", "count"])?;
    for (spec, k, v) in cells {
        w.write_record([
            spec.class().name().to_string(),
            spec.variant().name().to_string(),
            k,
            v.rmse.to_string(),
            v.wis.to_string(),
            v.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<aggregates>", e))?;
    Ok(())
}

impl Aggregates {
    /// Mean over states of the per-state rMSE and mean WIS of `spec`.
    pub fn state_means(&self, spec: ModelSpec) -> Option<(f64, f64)> {
        let cells: Vec<&CellScores> = self
            .by_state
            .iter()
            .filter(|((s, _), _)| *s == spec)
            .map(|(_, v)| v)
            .collect();
        if cells.is_empty() {
            return None;
        }
        let n = cells.len() as f64;
        Some((
            cells.iter().map(|c| c.rmse).sum::<f64>() / n,
            cells.iter().map(|c| c.wis).sum::<f64>() / n,
        ))
    }
}

/// Spec-minus-baseline differences per cell; negative means the spec
/// improved on the baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffTables {
    pub by_state: BTreeMap<String, CellScores>,
    pub by_week: BTreeMap<Epiweek, CellScores>,
}

pub fn diff_vs_baseline(aggs: &Aggregates, spec: ModelSpec, baseline: ModelSpec) -> Result<DiffTables> {
    fn diff<K: Ord + Clone + std::fmt::Display>(
        cells: &BTreeMap<(ModelSpec, K), CellScores>,
        spec: ModelSpec,
        baseline: ModelSpec,
        missing: &mut Vec<String>,
    ) -> BTreeMap<K, CellScores> {
        let pick = |s: ModelSpec| -> BTreeMap<K, CellScores> {
            cells
                .iter()
                .filter(|((m, _), _)| *m == s)
                .map(|((_, k), v)| (k.clone(), *v))
                .collect()
        };
        let (a, b) = (pick(spec), pick(baseline));
        for k in a.keys().filter(|k| !b.contains_key(*k)) {
            missing.push(format!("{baseline} lacks {k}"));
        }
        for k in b.keys().filter(|k| !a.contains_key(*k)) {
            missing.push(format!("{spec} lacks {k}"));
        }
        a.iter()
            .filter_map(|(k, x)| {
                b.get(k).map(|y| {
                    (
                        k.clone(),
                        CellScores {
                            rmse: x.rmse - y.rmse,
                            wis: x.wis - y.wis,
                            count: x.count.min(y.count),
                        },
                    )
                })
            })
            .collect()
    }
    let mut missing = Vec::new();
    let by_state = diff(&aggs.by_state, spec, baseline, &mut missing);
    let by_week = diff(&aggs.by_week, spec, baseline, &mut missing);
    if !missing.is_empty() {
        return Err(Error::Contract(format!("cell mismatch: {}", missing.join("; "))));
    }
    Ok(DiffTables { by_state, by_week })
}
