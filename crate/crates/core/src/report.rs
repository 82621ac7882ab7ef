//! Within-class comparison report for a finished run.
//!
//! Variants are compared against the Isolated variant of the same class;
//! classes are never compared with each other.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelClass, ModelSpec, Variant};
use crate::runner::persist::{tracker_key, write_atomic, ForecastCell, Manifest};
use crate::runner::{read_cells, VERSION};
use crate::scoring::{diff_vs_baseline, Aggregates, CellScores, DiffTables, ScoreTable};

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSection {
    pub class: ModelClass,
    /// (variant, mean over states of rMSE, mean over states of WIS).
    pub variants: Vec<(Variant, f64, f64)>,
    pub best_rmse: Variant,
    pub worst_rmse: Variant,
    pub best_wis: Variant,
    pub worst_wis: Variant,
    /// Diff tables skipped because cells did not line up.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub sections: Vec<ClassSection>,
    pub files: Vec<PathBuf>,
}

/// Checks that `cells` holds every (model, state, week) the run expects.
fn check_complete(m: &Manifest, cells: &[ForecastCell]) -> Result<()> {
    let targets = m.config.target_weeks();
    let present: BTreeSet<(String, String)> = cells
        .iter()
        .map(|c| (tracker_key(c.spec, &c.state), c.week.to_string()))
        .collect();
    let mut missing = Vec::new();
    for w in &targets {
        for spec in m.config.models() {
            for s in &m.states {
                let key = (tracker_key(spec, s), w.to_string());
                if !present.contains(&key) {
                    missing.push(format!("{}@{}", key.0, key.1));
                }
            }
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
    Err(Error::Run(format!(
        "incomplete run: {} missing cells, e.g. {}{}",
        missing.len(),
        shown.join(", "),
        if missing.len() > shown.len() { ", ..." } else { "" }
    )))
}

fn diff_csv(key: &str, rows: impl Iterator<Item = (String, CellScores)>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([key, "rmse_diff", "wis_diff", "count"])?;
    for (k, v) in rows {
        w.write_record([k, v.rmse.to_string(), v.wis.to_string(), v.count.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Run(format!("diff csv: {e}")))
}

fn pick(variants: &[(Variant, f64, f64)], by: impl Fn(&(Variant, f64, f64)) -> f64, best: bool) -> Variant {
    let mut v = variants.to_vec();
    v.sort_by(|a, b| by(a).total_cmp(&by(b)).then(a.0.cmp(&b.0)));
    if best {
        v[0].0
    } else {
        v[v.len() - 1].0
    }
}

/// Writes `report/` inside `run_dir` and returns its contents.
pub fn write_report(run_dir: &Path) -> Result<Report> {
    let m = Manifest::load(run_dir)?.ok_or_else(|| Error::Run(format!("no run in {}", run_dir.display())))?;
    let cells = read_cells(run_dir)?;
    check_complete(&m, &cells)?;
    let records: Vec<_> = cells.iter().filter_map(ForecastCell::record).collect();
    let aggs: Aggregates = ScoreTable::from_forecasts(&records)?.aggregates();

    let dir = run_dir.join(REPORT_DIR);
    let mut files = Vec::new();
    let mut sections = Vec::new();
    let mut text = String::new();
    let models = m.config.models();
    for class in [
        ModelClass::Linear,
        ModelClass::Quantile,
        ModelClass::Poisson,
        ModelClass::Lvcf,
    ] {
        let specs: Vec<ModelSpec> = models.iter().copied().filter(|s| s.class() == class).collect();
        if specs.is_empty() {
            continue;
        }
        let variants: Vec<(Variant, f64, f64)> = specs
            .iter()
            .filter_map(|s| aggs.state_means(*s).map(|(r, w)| (s.variant(), r, w)))
            .collect();
        let _ = writeln!(text, "== {} ==", class.name());
        if variants.is_empty() {
            let _ = writeln!(text, "no scored forecasts\n");
            continue;
        }
        let _ = writeln!(text, "{:<14}{:>12}{:>12}", "variant", "mean_rmse", "mean_wis");
        for (v, r, w) in &variants {
            let _ = writeln!(text, "{:<14}{r:>12.5}{w:>12.5}", v.name());
        }
        let section = ClassSection {
            class,
            best_rmse: pick(&variants, |v| v.1, true),
            worst_rmse: pick(&variants, |v| v.1, false),
            best_wis: pick(&variants, |v| v.2, true),
            worst_wis: pick(&variants, |v| v.2, false),
            variants: variants.clone(),
            skipped: Vec::new(),
        };
        let mut section = section;
        if variants.len() > 1 {
            let _ = writeln!(
                text,
                "best rMSE: {}, worst rMSE: {}; best WIS: {}, worst WIS: {}",
                section.best_rmse.name(),
                section.worst_rmse.name(),
                section.best_wis.name(),
                section.worst_wis.name()
            );
        }
        let isolated = ModelSpec::new(class, Variant::Isolated)
            .ok()
            .filter(|s| specs.contains(s));
        if let Some(base) = isolated {
            for &spec in specs.iter().filter(|s| **s != base) {
                let stem = format!("{}_{}_minus_isolated", class.name(), spec.variant().name());
                match diff_vs_baseline(&aggs, spec, base) {
                    Ok(DiffTables { by_state, by_week }) => {
                        let better = by_state.values().filter(|c| c.rmse < 0.0).count();
                        let _ = writeln!(
                            text,
                            "{} vs isolated: lower rMSE in {better} of {} states",
                            spec.variant().name(),
                            by_state.len()
                        );
                        let p = dir.join(format!("{stem}_by_state.csv"));
                        write_atomic(&p, &diff_csv("state", by_state.into_iter())?)?;
                        files.push(p);
                        let p = dir.join(format!("{stem}_by_week.csv"));
                        write_atomic(
                            &p,
                            &diff_csv("week", by_week.into_iter().map(|(k, v)| (k.to_string(), v)))?,
                        )?;
                        files.push(p);
                    }
                    Err(e) => {
                        let _ = writeln!(text, "{} vs isolated: skipped ({e})", spec.variant().name());
                        section.skipped.push(e.to_string());
                    }
                }
            }
        }
        text.push('\n');
        sections.push(section);
    }
    let p = dir.join("summary.txt");
    write_atomic(&p, text.as_bytes())?;
    files.push(p);
    let meta = serde_json::json!({
        "command": "report",
        "version": VERSION,
        "config_hash": m.config_hash,
        "data_hash": m.data_hash,
        "weeks": m.weeks.len(),
        "files": files.iter().map(|f| f.strip_prefix(run_dir).unwrap_or(f).display().to_string()).collect::<Vec<_>>(),
    });
    let p = dir.join("report_metadata.json");
    write_atomic(&p, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    files.push(p);
    Ok(Report { sections, files })
}
