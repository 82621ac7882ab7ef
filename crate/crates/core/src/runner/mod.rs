//! Rolling-origin backtest over the test seasons.
//!
//! Target weeks run in calendar order. At target week `w` every model is
//! refit on rows whose outcome is at or before the origin `w - 2`, the
//! forecast is wrapped in the current tracker intervals, and once the
//! week is written the realized value updates the trackers.

pub mod config;
pub mod persist;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{sha256_hex, RunConfig};
use persist::{
    append_line, file_hash, forecast_csv, forecast_path, parse_forecast_csv, read_checkpoint, tracker_key,
    tracker_path, write_atomic, Checkpoint, FitInfo, Forecast, ForecastCell, Manifest, ManifestLine, TrackerMap,
};

use crate::conformal::{scaled_learning_rate, IntervalTrackers, TraceStep, LEVELS};
use crate::epiweek::{in_season, Epiweek};
use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureContext, SmallConstant, HORIZON};
use crate::geography::{AdjacencyGraph, DEFAULT_ADJACENCY_CSV};
use crate::ingest::{parse_ili_reader, us_average_series, NationalSeries, ObservationTable, Schema};
use crate::model::{ModelClass, ModelSpec, Variant};
use crate::regression::{
    fit, lvcf_predict, lvcf_residuals, predict, training_residuals, write_coefficients, FittedModel, POOLED,
};
use crate::scoring::{Interval, ScoreTable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Test hooks for interrupting a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunControl {
    /// Stop after this many newly completed weeks, leaving a resumable
    /// directory.
    pub stop_after_weeks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub weeks_total: usize,
    pub weeks_completed: usize,
    pub weeks_run: usize,
    pub cells: usize,
    pub unavailable: usize,
    /// Model fits performed by this invocation.
    pub fits: usize,
    pub pooled_fits: usize,
    /// Training rows checked against the target week by this invocation.
    pub leakage_checked_rows: usize,
    pub complete: bool,
}

/// Everything read from disk before a run.
pub struct Inputs {
    pub table: ObservationTable,
    pub graph: AdjacencyGraph,
    pub national: Option<NationalSeries>,
    pub states: Vec<String>,
    pub c: SmallConstant,
    pub data_hash: String,
    pub rejects: usize,
}

impl Inputs {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let data = std::fs::read(&config.data).map_err(|e| Error::io(&config.data, e))?;
        let (schema, schema_text) = match &config.schema {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                (Schema::parse(&text)?, text)
            }
            None => (Schema::canonical(), String::from("canonical")),
        };
        let adjacency_text = match &config.adjacency {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => DEFAULT_ADJACENCY_CSV.to_string(),
        };
        let mut hashed = data.clone();
        for part in [schema_text.as_bytes(), adjacency_text.as_bytes()] {
            hashed.push(0);
            hashed.extend_from_slice(part);
        }
        let data_hash = sha256_hex(&hashed);

        let parsed = parse_ili_reader(data.as_slice(), &schema)?;
        for r in parsed.rejects.iter().take(5) {
            log::warn!("{}: line {} rejected: {}", config.data.display(), r.line, r.reason);
        }
        if parsed.rejects.len() > 5 {
            log::warn!("{} further rejected rows", parsed.rejects.len() - 5);
        }
        let table = parsed.table;

        let states: Vec<String> = match &config.states {
            Some(s) => {
                let mut s = s.clone();
                s.sort();
                if let Some(missing) = s.iter().find(|s| !table.has_location(s)) {
                    return Err(Error::InsufficientData(format!(
                        "state {missing} has no rows in the data"
                    )));
                }
                s
            }
            None => table.states().iter().map(|s| s.to_string()).collect(),
        };
        if states.is_empty() {
            return Err(Error::InsufficientData("no state rows in the data".into()));
        }
        let refs: Vec<&str> = states.iter().map(String::as_str).collect();

        let mut graph = AdjacencyGraph::parse(&adjacency_text)?;
        if config.symmetrize_adjacency {
            graph = graph.symmetrized();
        }
        let graph = graph.restricted(&refs);

        let national = if config.models().iter().any(|m| m.variant().uses_national()) {
            Some(us_average_series(&table)?)
        } else {
            None
        };
        let c = SmallConstant::from_training(&table, &refs, &config.train_seasons)
            .map_err(|e| Error::Run(format!("empty training set: {e}")))?;
        Ok(Self {
            table,
            graph,
            national,
            states,
            c,
            data_hash,
            rejects: parsed.rejects.len(),
        })
    }
}

type FitResult = std::result::Result<Arc<FittedModel>, String>;

struct FitOutput {
    model: FitResult,
    train: DesignMatrix,
}

struct CellResult {
    spec: ModelSpec,
    state: String,
    fit: Option<FitInfo>,
    point: std::result::Result<f64, String>,
    /// In-sample residuals, only for cells whose tracker is not yet warm.
    warm: Option<Vec<f64>>,
    fitted_here: bool,
    checked_rows: usize,
}

struct Engine<'a> {
    config: &'a RunConfig,
    ctx: FeatureContext<'a>,
    specs: Vec<ModelSpec>,
    states: Vec<String>,
    /// Every admissible training row per (model, target); pooled models
    /// use the target [`POOLED`].
    cache: HashMap<(ModelSpec, String), DesignMatrix>,
    out: PathBuf,
}

fn info(model: &FittedModel) -> FitInfo {
    FitInfo {
        n_train: model.diagnostics.n_rows,
        rank_deficient: model.diagnostics.rank_deficient,
        converged: model.diagnostics.converged,
    }
}

fn pooled(spec: ModelSpec) -> bool {
    spec.variant() == Variant::GeoPooled
}

impl<'a> Engine<'a> {
    fn new(config: &'a RunConfig, inputs: &'a Inputs) -> Result<Self> {
        let ctx = FeatureContext {
            table: &inputs.table,
            graph: &inputs.graph,
            national: inputs.national.as_ref(),
            states: inputs.states.clone(),
            seasons: config.all_seasons(),
            eps: config.eps,
            c: inputs.c,
            strict: config.strict_paper_mode,
        };
        let specs = config.models();
        let mut keys = Vec::new();
        for &spec in specs.iter().filter(|s| s.class() != ModelClass::Lvcf) {
            if pooled(spec) {
                keys.push((spec, POOLED.to_string()));
            } else {
                keys.extend(inputs.states.iter().map(|s| (spec, s.clone())));
            }
        }
        let built: Vec<DesignMatrix> = keys
            .par_iter()
            .map(|(spec, target)| {
                let probe = if target == POOLED { &inputs.states[0] } else { target };
                ctx.all_training_rows(*spec, probe)
            })
            .collect::<Result<_>>()?;
        let cache = keys.into_iter().zip(built).collect();
        Ok(Self {
            config,
            ctx,
            specs,
            states: inputs.states.clone(),
            cache,
            out: config.output_dir.clone(),
        })
    }

    /// Fits `spec` for `target` at origin `w - 2`, asserting that no
    /// training outcome reaches `w`.
    fn fit_at(&self, spec: ModelSpec, target: &str, w: Epiweek) -> Result<FitOutput> {
        let t = w.add_weeks(-HORIZON);
        let all = &self.cache[&(spec, target.to_string())];
        let train = DesignMatrix {
            layout: all.layout.clone(),
            rows: all.rows.iter().filter(|r| r.outcome_time <= t).cloned().collect(),
        };
        if let Some(r) = train.rows.iter().find(|r| r.outcome_time >= w) {
            return Err(Error::Contract(format!(
                "leakage: {spec} {target} for {w} trains on outcome {}",
                r.outcome_time
            )));
        }
        let model = match fit(spec, target, t, &train) {
            Ok(m) => Ok(Arc::new(m)),
            Err(e) => {
                log::warn!("{spec} {target} at {t}: {e}");
                Err(e.to_string())
            }
        };
        if self.config.debug_dumps {
            let stem = format!("{}_{}_{}_{}", spec.class().name(), spec.variant().name(), target, t);
            let dir = self.out.join("debug");
            let mut buf = Vec::new();
            train.write_csv(&mut buf)?;
            write_atomic(&dir.join("design").join(format!("{stem}.csv")), &buf)?;
            if let Ok(m) = &model {
                let mut buf = Vec::new();
                write_coefficients(m, &mut buf)?;
                write_atomic(&dir.join("coefficients").join(format!("{stem}.csv")), &buf)?;
            }
        }
        Ok(FitOutput { model, train })
    }

    fn cell(
        &self,
        spec: ModelSpec,
        state: &str,
        w: Epiweek,
        pooled_fits: &HashMap<ModelSpec, FitOutput>,
        need_warm: bool,
    ) -> Result<CellResult> {
        let t = w.add_weeks(-HORIZON);
        let mut res = CellResult {
            spec,
            state: state.to_string(),
            fit: None,
            point: Err(String::new()),
            warm: None,
            fitted_here: false,
            checked_rows: 0,
        };
        if spec.class() == ModelClass::Lvcf {
            res.point = lvcf_predict(self.ctx.table, state, t).map_err(|u| u.reason);
            if need_warm {
                let outcomes: Vec<Epiweek> = self
                    .ctx
                    .seasons
                    .iter()
                    .flat_map(|s| s.weeks())
                    .filter(|&o| o <= t && in_season(o))
                    .collect();
                res.warm = Some(lvcf_residuals(self.ctx.table, state, &outcomes));
            }
            return Ok(res);
        }
        let own;
        let output = if pooled(spec) {
            &pooled_fits[&spec]
        } else {
            own = self.fit_at(spec, state, w)?;
            res.fitted_here = true;
            res.checked_rows = own.train.nrows();
            &own
        };
        let model = match &output.model {
            Ok(m) => m,
            Err(e) => {
                res.point = Err(format!("fit failed: {e}"));
                return Ok(res);
            }
        };
        res.fit = Some(info(model));
        let layout = self.ctx.layout(spec, state)?;
        res.point = match self.ctx.build_prediction_row(spec, state, t)? {
            Err(u) => Err(u.reason),
            Ok(row) => {
                let p = predict(model, &layout, &row)?;
                if p.is_finite() {
                    Ok(p)
                } else {
                    Err(format!("non-finite prediction {p}"))
                }
            }
        };
        if need_warm && res.point.is_ok() {
            res.warm = Some(training_residuals(model, &output.train, state)?);
        }
        Ok(res)
    }

    /// Runs target week `w`; returns cells, traces and counters.
    fn week(&self, w: Epiweek, trackers: &mut TrackerMap, summary: &mut RunSummary) -> Result<Vec<ForecastCell>> {
        let pooled_specs: Vec<ModelSpec> = self.specs.iter().copied().filter(|s| pooled(*s)).collect();
        let fitted: Vec<FitOutput> = pooled_specs
            .par_iter()
            .map(|&s| self.fit_at(s, POOLED, w))
            .collect::<Result<_>>()?;
        for f in &fitted {
            summary.fits += 1;
            summary.pooled_fits += 1;
            summary.leakage_checked_rows += f.train.nrows();
        }
        let pooled_fits: HashMap<ModelSpec, FitOutput> = pooled_specs.into_iter().zip(fitted).collect();

        let warm: &TrackerMap = trackers;
        let keys: Vec<(ModelSpec, &str, bool)> = self
            .specs
            .iter()
            .flat_map(|&spec| {
                self.states
                    .iter()
                    .map(move |s| (spec, s.as_str(), !warm.contains_key(&tracker_key(spec, s))))
            })
            .collect();
        let results: Vec<CellResult> = keys
            .par_iter()
            .map(|&(spec, state, need_warm)| self.cell(spec, state, w, &pooled_fits, need_warm))
            .collect::<Result<_>>()?;

        let mut cells = Vec::with_capacity(results.len());
        for r in results {
            if r.fitted_here {
                summary.fits += 1;
                summary.leakage_checked_rows += r.checked_rows;
            }
            let key = tracker_key(r.spec, &r.state);
            let outcome = match r.point {
                Err(reason) => Err(reason),
                Ok(point) => {
                    if !trackers.contains_key(&key) {
                        let residuals = r.warm.unwrap_or_default();
                        if let Some(t) = self.warm_start(&residuals)? {
                            trackers.insert(key.clone(), t);
                        }
                    }
                    match trackers.get(&key) {
                        None => Err("no training residuals to start interval tracking".into()),
                        Some(t) => Ok(Forecast {
                            point,
                            intervals: LEVELS
                                .iter()
                                .zip(t.intervals(point))
                                .map(|(&level, (lower, upper))| Interval { level, lower, upper })
                                .collect(),
                        }),
                    }
                }
            };
            if let Err(reason) = &outcome {
                log::info!("{} {} {w}: unavailable ({reason})", r.spec, r.state);
            }
            cells.push(ForecastCell {
                spec: r.spec,
                state: r.state.clone(),
                week: w,
                truth: self.ctx.table.ili(&r.state, w),
                fit: r.fit,
                outcome,
            });
        }
        Ok(cells)
    }

    fn warm_start(&self, residuals: &[f64]) -> Result<Option<IntervalTrackers>> {
        if residuals.is_empty() {
            return Ok(None);
        }
        let eta = match self.config.eta {
            Some(eta) => eta,
            None => scaled_learning_rate(residuals, self.config.eta_fraction)?,
        };
        IntervalTrackers::warm_start(residuals, eta).map(Some)
    }
}

/// Applies realized values of week `w` to the trackers.
fn update_trackers(cells: &[ForecastCell], trackers: &mut TrackerMap) -> Vec<(ModelSpec, String, TraceStep)> {
    let mut trace = Vec::new();
    for c in cells {
        let (Ok(f), Some(truth)) = (&c.outcome, c.truth) else {
            continue;
        };
        let t = trackers
            .get_mut(&tracker_key(c.spec, &c.state))
            .expect("available cells have trackers");
        for step in t.observe(c.week, (truth - f.point).abs()) {
            trace.push((c.spec, c.state.clone(), step));
        }
    }
    trace
}

fn trace_csv(trace: &[(ModelSpec, String, TraceStep)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "class",
        "variant",
        "state",
        "week",
        "level",
        "score",
        "radius_before",
        "radius_after",
    ])?;
    for (spec, state, s) in trace {
        w.write_record([
            spec.class().name().to_string(),
            spec.variant().name().to_string(),
            state.clone(),
            s.week.to_string(),
            s.level.to_string(),
            s.score.to_string(),
            s.radius_before.to_string(),
            s.radius_after.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Run(format!("trace csv: {e}")))
}

/// Runs (or continues) the backtest described by `config`.
pub fn run_backtest(config: &RunConfig) -> Result<RunSummary> {
    run_with(config, RunControl::default())
}

/// Continues the run recorded in `dir`.
pub fn resume(dir: &Path) -> Result<RunSummary> {
    resume_with(dir, RunControl::default())
}

pub fn resume_with(dir: &Path, control: RunControl) -> Result<RunSummary> {
    let manifest = Manifest::load(dir)?.ok_or_else(|| Error::Resume(format!("no manifest in {}", dir.display())))?;
    let mut config = manifest.config;
    config.output_dir = dir.to_path_buf();
    run_with(&config, control)
}

pub fn run_with(config: &RunConfig, control: RunControl) -> Result<RunSummary> {
    config.validate()?;
    let inputs = Inputs::load(config)?;
    let out = &config.output_dir;
    let config_hash = config.semantic_hash(&inputs.states);
    let targets = config.target_weeks();

    let mut trackers = TrackerMap::new();
    let mut done = 0usize;
    match Manifest::load(out)? {
        Some(m) => {
            if m.config_hash != config_hash || m.data_hash != inputs.data_hash || m.version != VERSION {
                return Err(Error::Resume(format!(
                    "{} was produced by a different configuration, data set or version",
                    out.display()
                )));
            }
            for (i, (week, _, hash)) in m.weeks.iter().enumerate() {
                if targets.get(i) != Some(week) {
                    return Err(Error::Resume(format!(
                        "manifest week {week} is not target week {}",
                        i + 1
                    )));
                }
                if file_hash(&forecast_path(out, *week))? != *hash {
                    return Err(Error::Resume(format!(
                        "forecast file for {week} does not match the manifest"
                    )));
                }
            }
            if let Some((last, _, _)) = m.weeks.last() {
                let cp = read_checkpoint(&tracker_path(out, *last))?;
                if cp.week != *last {
                    return Err(Error::Resume(format!("checkpoint is for {}, expected {last}", cp.week)));
                }
                trackers = cp.trackers;
            }
            done = m.weeks.len();
        }
        None => {
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let header = Manifest {
                version: VERSION.to_string(),
                config_hash: config_hash.clone(),
                data_hash: inputs.data_hash.clone(),
                config: config.clone(),
                states: inputs.states.clone(),
                weeks: Vec::new(),
            }
            .header_line();
            write_atomic(&out.join(persist::MANIFEST), format!("{header}\n").as_bytes())?;
        }
    }

    let mut summary = RunSummary {
        output_dir: out.clone(),
        weeks_total: targets.len(),
        weeks_completed: done,
        weeks_run: 0,
        cells: 0,
        unavailable: 0,
        fits: 0,
        pooled_fits: 0,
        leakage_checked_rows: 0,
        complete: false,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Run(format!("thread pool: {e}")))?;

    pool.install(|| -> Result<()> {
        if done == targets.len() {
            return Ok(());
        }
        let engine = Engine::new(config, &inputs)?;
        for (i, &w) in targets.iter().enumerate().skip(done) {
            if control.stop_after_weeks.is_some_and(|n| summary.weeks_run >= n) {
                break;
            }
            let cells = engine.week(w, &mut trackers, &mut summary)?;
            let bytes = forecast_csv(&cells)?;
            let fpath = forecast_path(out, w);
            write_atomic(&fpath, &bytes)?;
            let trace = update_trackers(&cells, &mut trackers);
            if config.debug_dumps {
                write_atomic(
                    &out.join("debug").join("traces").join(format!("{w}.csv")),
                    &trace_csv(&trace)?,
                )?;
            }
            let checkpoint = Checkpoint {
                week: w,
                trackers: trackers.clone(),
            };
            write_atomic(&tracker_path(out, w), serde_json::to_string(&checkpoint)?.as_bytes())?;
            append_line(
                out,
                &ManifestLine::Week {
                    week: w,
                    cells: cells.len(),
                    sha256: sha256_hex(&bytes),
                },
            )?;
            if i > 0 {
                let prev = tracker_path(out, targets[i - 1]);
                if prev.exists() {
                    std::fs::remove_file(&prev).map_err(|e| Error::io(&prev, e))?;
                }
            }
            summary.weeks_run += 1;
            summary.weeks_completed = i + 1;
            log::info!("{w}: {} cells", cells.len());
        }
        Ok(())
    })?;

    summary.complete = summary.weeks_completed == targets.len();
    if summary.complete {
        let finals = [
            "scores.csv",
            "scores_by_state.csv",
            "scores_by_week.csv",
            "unavailable.csv",
            "run_metadata.json",
        ];
        if summary.weeks_run > 0 || finals.iter().any(|f| !out.join(f).exists()) {
            let (cells, unavailable) = finalize(out, &inputs, &config_hash)?;
            summary.cells = cells;
            summary.unavailable = unavailable;
        } else {
            let cells = read_cells(out)?;
            summary.cells = cells.len();
            summary.unavailable = cells.iter().filter(|c| c.outcome.is_err()).count();
        }
    }
    Ok(summary)
}

/// All forecast cells of the completed weeks, in manifest order.
pub fn read_cells(dir: &Path) -> Result<Vec<ForecastCell>> {
    let m = Manifest::load(dir)?.ok_or_else(|| Error::Run(format!("no manifest in {}", dir.display())))?;
    let mut out = Vec::new();
    for (week, n, hash) in &m.weeks {
        let path = forecast_path(dir, *week);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != *hash {
            return Err(Error::Run(format!("{} does not match the manifest", path.display())));
        }
        let cells = parse_forecast_csv(&bytes)?;
        if cells.len() != *n {
            return Err(Error::Run(format!(
                "{}: {} cells, manifest says {n}",
                path.display(),
                cells.len()
            )));
        }
        out.extend(cells);
    }
    Ok(out)
}

/// Recomputes the score files of a run directory from its forecasts.
pub fn score_run(dir: &Path) -> Result<ScoreTable> {
    let cells = read_cells(dir)?;
    let records: Vec<_> = cells.iter().filter_map(ForecastCell::record).collect();
    let scores = ScoreTable::from_forecasts(&records)?;
    let mut buf = Vec::new();
    scores.write_csv(&mut buf)?;
    write_atomic(&dir.join("scores.csv"), &buf)?;
    let aggs = scores.aggregates();
    let mut buf = Vec::new();
    aggs.write_by_state(&mut buf)?;
    write_atomic(&dir.join("scores_by_state.csv"), &buf)?;
    let mut buf = Vec::new();
    aggs.write_by_week(&mut buf)?;
    write_atomic(&dir.join("scores_by_week.csv"), &buf)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "variant", "state", "week", "reason"])?;
    for c in &cells {
        if let Err(reason) = &c.outcome {
            w.write_record([
                c.spec.class().name(),
                c.spec.variant().name(),
                c.state.as_str(),
                c.week.to_string().as_str(),
                reason.as_str(),
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Run(format!("unavailable csv: {e}")))?;
    write_atomic(&dir.join("unavailable.csv"), &bytes)?;
    Ok(scores)
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: &'a str,
    data_hash: &'a str,
    states: &'a [String],
    models: Vec<String>,
    weeks: usize,
    cells: usize,
    unavailable: usize,
    small_constant: f64,
    national_synthesized: Option<bool>,
    rejected_rows: usize,
}

fn finalize(out: &Path, inputs: &Inputs, config_hash: &str) -> Result<(usize, usize)> {
    score_run(out)?;
    let cells = read_cells(out)?;
    let unavailable = cells.iter().filter(|c| c.outcome.is_err()).count();
    let m = Manifest::load(out)?.expect("manifest written");
    let meta = RunMetadata {
        command: "backtest",
        version: VERSION,
        config_hash,
        data_hash: &inputs.data_hash,
        states: &inputs.states,
        models: m.config.models().iter().map(|s| s.to_string()).collect(),
        weeks: m.weeks.len(),
        cells: cells.len(),
        unavailable,
        small_constant: inputs.c.value(),
        national_synthesized: inputs.national.as_ref().map(|n| n.synthesized),
        rejected_rows: inputs.rejects,
    };
    write_atomic(
        &out.join("run_metadata.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    Ok((cells.len(), unavailable))
}
