//! On-disk layout of a run directory.
//!
//! ```text
//! manifest.jsonl          header line, then one line per completed week
//! forecasts/<week>.csv    every (model, state) cell for that target week
//! trackers/<week>.json    tracker states after the last completed week
//! scores.csv, scores_by_state.csv, scores_by_week.csv, unavailable.csv
//! run_metadata.json
//! debug/                  design matrices, coefficients, tracker traces
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, RunConfig};
use crate::conformal::{IntervalTrackers, LEVELS};
use crate::epiweek::Epiweek;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scoring::{level_tag, ForecastRecord, Interval};

pub const MANIFEST: &str = "manifest.jsonl";
pub const FORECAST_DIR: &str = "forecasts";
pub const TRACKER_DIR: &str = "trackers";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[allow(clippy::large_enum_variant)]
pub enum ManifestLine {
    Header {
        version: String,
        config_hash: String,
        data_hash: String,
        config: RunConfig,
        states: Vec<String>,
    },
    Week {
        week: Epiweek,
        cells: usize,
        sha256: String,
    },
}

impl ManifestLine {
    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Resume(format!("bad manifest line: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub data_hash: String,
    pub config: RunConfig,
    pub states: Vec<String>,
    /// Completed weeks with cell count and forecast file hash, in order.
    pub weeks: Vec<(Epiweek, usize, String)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, first)) = lines.next() else {
            return Err(Error::Resume("manifest is empty".into()));
        };
        let ManifestLine::Header {
            version,
            config_hash,
            data_hash,
            config,
            states,
        } = ManifestLine::parse(first)?
        else {
            return Err(Error::Resume("manifest does not start with a header".into()));
        };
        let mut weeks: Vec<(Epiweek, usize, String)> = Vec::new();
        for (i, line) in lines {
            match ManifestLine::parse(line).map_err(|e| Error::Resume(format!("line {}: {e}", i + 1)))? {
                ManifestLine::Week { week, cells, sha256 } => {
                    if weeks.last().is_some_and(|(w, _, _)| *w >= week) {
                        return Err(Error::Resume(format!("line {}: week {week} out of order", i + 1)));
                    }
                    weeks.push((week, cells, sha256));
                }
                ManifestLine::Header { .. } => {
                    return Err(Error::Resume(format!("line {}: second header", i + 1)));
                }
            }
        }
        Ok(Self {
            version,
            config_hash,
            data_hash,
            config,
            states,
            weeks,
        })
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST);
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&ManifestLine::Header {
            version: self.version.clone(),
            config_hash: self.config_hash.clone(),
            data_hash: self.data_hash.clone(),
            config: self.config.clone(),
            states: self.states.clone(),
        })
        .expect("serializable")
    }
}

pub fn append_line(dir: &Path, line: &ManifestLine) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let mut text = serde_json::to_string(line)?;
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
    f.sync_data().map_err(|e| Error::io(&path, e))
}

/// Writes via a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn forecast_path(dir: &Path, week: Epiweek) -> PathBuf {
    dir.join(FORECAST_DIR).join(format!("{week}.csv"))
}

pub fn tracker_path(dir: &Path, week: Epiweek) -> PathBuf {
    dir.join(TRACKER_DIR).join(format!("{week}.json"))
}

/// Fit facts attached to a cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitInfo {
    pub n_train: usize,
    pub rank_deficient: bool,
    pub converged: bool,
}

/// One (model, state, target week) cell of a forecast file.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCell {
    pub spec: ModelSpec,
    pub state: String,
    pub week: Epiweek,
    pub truth: Option<f64>,
    pub fit: Option<FitInfo>,
    pub outcome: std::result::Result<Forecast, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub point: f64,
    pub intervals: Vec<Interval>,
}

impl ForecastCell {
    pub fn record(&self) -> Option<ForecastRecord> {
        let f = self.outcome.as_ref().ok()?;
        Some(ForecastRecord {
            spec: self.spec,
            state: self.state.clone(),
            week: self.week,
            point: f.point,
            median: f.point,
            intervals: f.intervals.clone(),
            truth: self.truth,
        })
    }
}

fn header() -> Vec<String> {
    let mut h: Vec<String> = ["class", "variant", "state", "week", "origin", "status", "point"]
        .map(String::from)
        .to_vec();
    for l in LEVELS {
        h.push(format!("lower_{}", level_tag(l)));
        h.push(format!("upper_{}", level_tag(l)));
    }
    h.extend(["truth", "n_train", "rank_deficient", "converged", "reason"].map(String::from));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn forecast_csv(cells: &[ForecastCell]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header())?;
    for c in cells {
        let mut rec = vec![
            c.spec.class().name().to_string(),
            c.spec.variant().name().to_string(),
            c.state.clone(),
            c.week.to_string(),
            c.week.add_weeks(-crate::features::HORIZON).to_string(),
        ];
        match &c.outcome {
            Ok(f) => {
                rec.push("ok".into());
                rec.push(f.point.to_string());
                for iv in &f.intervals {
                    rec.push(iv.lower.to_string());
                    rec.push(iv.upper.to_string());
                }
            }
            Err(_) => {
                rec.push("unavailable".into());
                rec.extend(std::iter::repeat_n(String::new(), 1 + 2 * LEVELS.len()));
            }
        }
        rec.push(opt(c.truth));
        match c.fit {
            Some(f) => rec.extend([
                f.n_train.to_string(),
                f.rank_deficient.to_string(),
                f.converged.to_string(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        rec.push(c.outcome.as_ref().err().cloned().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Run(format!("forecast csv: {e}")))
}

/// Parses a forecast file written by [`forecast_csv`].
pub fn parse_forecast_csv(bytes: &[u8]) -> Result<Vec<ForecastCell>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let expected = header();
    if rdr.headers()?.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse("forecast file: unexpected header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse(format!("forecast file line {line}: bad {what}"));
        if rec.len() != expected.len() {
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
        let week: Epiweek = rec[3].parse()?;
        if rec[4].parse::<Epiweek>()? != week.add_weeks(-crate::features::HORIZON) {
            return Err(bad("origin"));
        }
        let base = 7 + 2 * LEVELS.len();
        let truth = if rec[base].is_empty() {
            None
        } else {
            Some(num(base, "truth")?)
        };
        let fit = if rec[base + 1].is_empty() {
            None
        } else {
            Some(FitInfo {
                n_train: rec[base + 1].parse().map_err(|_| bad("n_train"))?,
                rank_deficient: rec[base + 2].parse().map_err(|_| bad("rank_deficient"))?,
                converged: rec[base + 3].parse().map_err(|_| bad("converged"))?,
            })
        };
        let outcome = match &rec[5] {
            "ok" => {
                let intervals = LEVELS
                    .iter()
                    .enumerate()
                    .map(|(k, &level)| {
                        let iv = Interval {
                            level,
                            lower: num(7 + 2 * k, "lower bound")?,
                            upper: num(8 + 2 * k, "upper bound")?,
                        };
                        if iv.lower > iv.upper {
                            return Err(bad("interval order"));
                        }
                        Ok(iv)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Forecast {
                    point: num(6, "point")?,
                    intervals,
                })
            }
            "unavailable" => Err(rec[base + 4].to_string()),
            _ => return Err(bad("status")),
        };
        out.push(ForecastCell {
            spec,
            state: rec[2].to_string(),
            week,
            truth,
            fit,
            outcome,
        });
    }
    Ok(out)
}

/// Tracker states keyed by `"<spec>/<state>"`.
pub type TrackerMap = BTreeMap<String, IntervalTrackers>;

pub fn tracker_key(spec: ModelSpec, state: &str) -> String {
    format!("{spec}/{state}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub week: Epiweek,
    pub trackers: TrackerMap,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Resume(format!("{}: {e}", path.display())))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(ok: bool) -> ForecastCell {
        ForecastCell {
            spec: "linear:neighbors".parse().unwrap(),
            state: "GA".into(),
            week: "2016w02".parse().unwrap(),
            truth: Some(2.25),
            fit: ok.then_some(FitInfo {
                n_train: 40,
                rank_deficient: false,
                converged: true,
            }),
            outcome: if ok {
                Ok(Forecast {
                    point: 0.1 + 0.2,
                    intervals: LEVELS
                        .iter()
                        .map(|&level| Interval {
                            level,
                            lower: 0.0,
                            upper: 1.0 / 3.0 + level,
                        })
                        .collect(),
                })
            } else {
                Err("missing %ILI for GA at 2015w52, with a comma".into())
            },
        }
    }

    #[test]
    fn forecast_file_round_trip() {
        let cells = vec![cell(true), cell(false)];
        let bytes = forecast_csv(&cells).unwrap();
        assert_eq!(parse_forecast_csv(&bytes).unwrap(), cells);
        assert!(cells[1].record().is_none());
        assert_eq!(cells[0].record().unwrap().median, 0.1 + 0.2);
    }

    #[test]
    fn manifest_round_trip_and_corruption() {
        let config = RunConfig::new(
            "x.csv",
            vec!["2010-11".parse().unwrap()],
            vec!["2011-12".parse().unwrap()],
        );
        let m = Manifest {
            version: "0.1.0".into(),
            config_hash: "aa".into(),
            data_hash: "bb".into(),
            config,
            states: vec!["GA".into()],
            weeks: vec![],
        };
        let week = ManifestLine::Week {
            week: "2011w40".parse().unwrap(),
            cells: 3,
            sha256: "cc".into(),
        };
        let text = format!("{}\n{}\n", m.header_line(), serde_json::to_string(&week).unwrap());
        let back = Manifest::parse(&text).unwrap();
        assert_eq!(back.weeks.len(), 1);
        assert_eq!(back.config, m.config);
        assert!(Manifest::parse(&text[..text.len() - 5]).is_err());
        assert!(Manifest::parse("").is_err());
        let twice = format!(
            "{}\n{}\n{}\n",
            m.header_line(),
            serde_json::to_string(&week).unwrap(),
            serde_json::to_string(&week).unwrap()
        );
        assert!(Manifest::parse(&twice).is_err());
    }
}
