//! Backtest configuration, read from TOML.
//!
//! ```toml
//! data = "ili.csv"                 # surveillance extract
//! schema = "fluview.schema"        # optional; canonical columns otherwise
//! adjacency = "adjacency.csv"      # optional; bundled graph otherwise
//! symmetrize_adjacency = false
//! train_seasons = ["2010-11", "2011-12", "2012-13", "2013-14", "2014-15"]
//! test_seasons = ["2015-16", "2016-17", "2017-18", "2018-19"]
//! states = ["WA", "OR"]            # optional; every state in the data otherwise
//! classes = ["linear", "quantile", "poisson", "lvcf"]
//! variants = ["isolated", "neighbors", "isolated_us", "neighbors_us", "geo_pooled"]
//! eps = 0.05
//! eta_fraction = 0.1               # η = fraction × p90 of warm-start residuals
//! # eta = 0.02                     # fixed η instead
//! levels = [0.5, 0.8, 0.95]
//! first_test_week = "2015w40"      # optional; checked against test_seasons
//! output_dir = "run"
//! jobs = 0                         # 0 = all cores
//! strict_paper_mode = false
//! debug_dumps = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::{DEFAULT_STEP_FRACTION, LEVELS};
use crate::epiweek::{Epiweek, Season};
use crate::error::{Error, Result};
use crate::features::DEFAULT_EPS;
use crate::model::{ModelClass, ModelSpec, Variant};
use crate::states::{is_state, normalize_location};

fn default_classes() -> Vec<ModelClass> {
    vec![
        ModelClass::Linear,
        ModelClass::Quantile,
        ModelClass::Poisson,
        ModelClass::Lvcf,
    ]
}

fn default_variants() -> Vec<Variant> {
    Variant::REGRESSION.to_vec()
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_eta_fraction() -> f64 {
    DEFAULT_STEP_FRACTION
}

fn default_levels() -> Vec<f64> {
    LEVELS.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub adjacency: Option<PathBuf>,
    #[serde(default)]
    pub symmetrize_adjacency: bool,
    pub train_seasons: Vec<Season>,
    pub test_seasons: Vec<Season>,
    #[serde(default)]
    pub states: Option<Vec<String>>,
    #[serde(default = "default_classes")]
    pub classes: Vec<ModelClass>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_eta_fraction")]
    pub eta_fraction: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub first_test_week: Option<Epiweek>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub strict_paper_mode: bool,
    #[serde(default)]
    pub debug_dumps: bool,
}

/// The part of a config that determines forecasts. Paths, output
/// location, thread count and dump switches are left out; file contents
/// are covered by the data hash.
#[derive(Serialize)]
struct Semantic<'a> {
    symmetrize_adjacency: bool,
    train_seasons: &'a [Season],
    test_seasons: &'a [Season],
    states: Vec<String>,
    models: Vec<ModelSpec>,
    eps: f64,
    eta_fraction: f64,
    eta: Option<f64>,
    levels: &'a [f64],
    strict_paper_mode: bool,
}

impl RunConfig {
    /// Minimal config with defaults for everything optional.
    pub fn new(data: impl Into<PathBuf>, train: Vec<Season>, test: Vec<Season>) -> Self {
        Self {
            data: data.into(),
            schema: None,
            adjacency: None,
            symmetrize_adjacency: false,
            train_seasons: train,
            test_seasons: test,
            states: None,
            classes: default_classes(),
            variants: default_variants(),
            eps: DEFAULT_EPS,
            eta_fraction: DEFAULT_STEP_FRACTION,
            eta: None,
            levels: default_levels(),
            first_test_week: None,
            output_dir: default_output(),
            jobs: 0,
            strict_paper_mode: false,
            debug_dumps: false,
        }
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(states) = &mut cfg.states {
            for s in states.iter_mut() {
                *s = normalize_location(s);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data);
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.schema {
            fix(p);
        }
        if let Some(p) = &mut self.adjacency {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.train_seasons.is_empty() || self.test_seasons.is_empty() {
            return bad("train_seasons and test_seasons must be non-empty".into());
        }
        let last_train = self.train_seasons.iter().max().expect("non-empty");
        let first_test = self.test_seasons.iter().min().expect("non-empty");
        if first_test <= last_train {
            return bad(format!(
                "test season {first_test} does not follow train season {last_train}"
            ));
        }
        for list in [&self.train_seasons, &self.test_seasons] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return bad("seasons must be listed in increasing order without repeats".into());
            }
        }
        if let Some(w) = self.first_test_week {
            if w != first_test.first_week() {
                return bad(format!(
                    "first_test_week {w} is not the first in-season week of {first_test} ({})",
                    first_test.first_week()
                ));
            }
        }
        if let Some(states) = &self.states {
            if states.is_empty() {
                return bad("states list is empty".into());
            }
            if let Some(s) = states.iter().find(|s| !is_state(s)) {
                return bad(format!("{s:?} is not a state code"));
            }
            let mut sorted = states.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != states.len() {
                return bad("states list has duplicates".into());
            }
        }
        if self.classes.is_empty() {
            return bad("no model classes selected".into());
        }
        if self.variants.contains(&Variant::Baseline) {
            return bad("variant \"baseline\" is implied by class \"lvcf\"".into());
        }
        if self.classes.iter().any(|c| *c != ModelClass::Lvcf) && self.variants.is_empty() {
            return bad("regression classes selected without variants".into());
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("eps {} must be finite and >= 0", self.eps));
        }
        if !(self.eta_fraction.is_finite() && self.eta_fraction >= 0.0) {
            return bad(format!("eta_fraction {} must be finite and >= 0", self.eta_fraction));
        }
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta >= 0.0) {
                return bad(format!("eta {eta} must be finite and >= 0"));
            }
        }
        if self.levels != LEVELS {
            return bad(format!(
                "levels must be {LEVELS:?}; the weighted interval score is defined on those"
            ));
        }
        Ok(())
    }

    /// Models to run, in a fixed order.
    pub fn models(&self) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for class in ModelClass::REGRESSION {
            if self.classes.contains(&class) {
                for v in Variant::REGRESSION {
                    if self.variants.contains(&v) {
                        out.push(ModelSpec::new(class, v).expect("regression pair"));
                    }
                }
            }
        }
        if self.classes.contains(&ModelClass::Lvcf) {
            out.push(ModelSpec::LVCF);
        }
        out
    }

    /// Hash of the settings that determine forecasts, given the states
    /// actually run.
    pub fn semantic_hash(&self, states: &[String]) -> String {
        let s = Semantic {
            symmetrize_adjacency: self.symmetrize_adjacency,
            train_seasons: &self.train_seasons,
            test_seasons: &self.test_seasons,
            states: states.to_vec(),
            models: self.models(),
            eps: self.eps,
            eta_fraction: self.eta_fraction,
            eta: self.eta,
            levels: &self.levels,
            strict_paper_mode: self.strict_paper_mode,
        };
        sha256_hex(serde_json::to_string(&s).expect("serializable").as_bytes())
    }

    /// In-season weeks of the test seasons, in order.
    pub fn target_weeks(&self) -> Vec<Epiweek> {
        self.test_seasons.iter().flat_map(|s| s.weeks()).collect()
    }

    pub fn all_seasons(&self) -> Vec<Season> {
        self.train_seasons.iter().chain(&self.test_seasons).copied().collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
data = "ili.csv"
train_seasons = ["2010-11"]
test_seasons = ["2011-12", "2012-13"]
"#;

    #[test]
    fn defaults() {
        let c = RunConfig::parse(MIN).unwrap();
        assert_eq!(c.models().len(), 16);
        assert_eq!(c.eps, 0.05);
        assert_eq!(c.target_weeks().len(), 31 + 31);
        assert_eq!(c.target_weeks()[0], "2011w40".parse().unwrap());
    }

    #[test]
    fn rejects() {
        for extra in [
            "eps = -1.0",
            "bogus = 1",
            "first_test_week = \"2011w41\"",
            "states = [\"XX\"]",
            "levels = [0.5, 0.9]",
            "classes = []",
            "variants = [\"baseline\"]",
        ] {
            assert!(RunConfig::parse(&format!("{MIN}{extra}\n")).is_err(), "{extra}");
        }
        let overlap = "data = \"x\"\ntrain_seasons = [\"2012-13\"]\ntest_seasons = [\"2012-13\"]\n";
        assert!(RunConfig::parse(overlap).is_err());
        assert!(RunConfig::parse(&format!("{MIN}first_test_week = \"2011w40\"\n")).is_ok());
    }

    #[test]
    fn model_selection() {
        let c = RunConfig::parse(&format!("{MIN}classes = [\"lvcf\"]\n")).unwrap();
        assert_eq!(c.models(), vec![ModelSpec::LVCF]);
        let c = RunConfig::parse(&format!(
            "{MIN}classes = [\"linear\"]\nvariants = [\"neighbors\", \"isolated\"]\n"
        ))
        .unwrap();
        let names: Vec<String> = c.models().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["linear:isolated", "linear:neighbors"]);
    }

    #[test]
    fn hash_ignores_plumbing() {
        let a = RunConfig::parse(MIN).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.jobs = 7;
        b.debug_dumps = true;
        b.data = "/abs/ili.csv".into();
        let states = vec!["GA".to_string()];
        assert_eq!(a.semantic_hash(&states), b.semantic_hash(&states));
        b.eps = 0.1;
        assert_ne!(a.semantic_hash(&states), b.semantic_hash(&states));
    }
}
