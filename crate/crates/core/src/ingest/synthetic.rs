//! Seeded synthetic surveillance data with seasonal curves and optional
//! neighbor-coupled dynamics.
//!
//! Each state's %ILI is a seasonal template (baseline plus a Gaussian
//! bump centred `peak_offset` weeks after week 40) plus noise. Noise is a
//! mixture of one shock shared by all states and one shock per state,
//! weighted by `correlation`. Under [`Dynamics::NeighborCoupled`] the
//! noise accumulates in an anomaly process that is pushed by the recent
//! change in neighboring states' anomalies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{weighted_mean_over, Observation, ObservationTable};
use crate::epiweek::{Epiweek, Season};
use crate::error::{Error, Result};
use crate::geography::AdjacencyGraph;
use crate::states::{is_state, NATIONAL};

/// Smallest visit count at which rounding counts keeps %ILI within the
/// 0.05 reporting tolerance.
pub const MIN_VISITS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCurve {
    pub code: String,
    pub baseline: f64,
    pub peak: f64,
    /// Weeks after week 40 at which the bump peaks.
    pub peak_offset: f64,
    pub width: f64,
    /// Noise standard deviation, %ILI units.
    pub noise: f64,
    pub visits: u64,
    pub providers: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// Template plus independent-in-time noise.
    #[default]
    Independent,
    /// Template plus an anomaly `x` with
    /// `x[t] = persistence*x[t-1] + coupling*mean_n(x_n[t-1] - x_n[t-2]) + noise`.
    NeighborCoupled { persistence: f64, coupling: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Start year of the first season.
    pub first_season: i32,
    pub n_seasons: usize,
    /// Off-season weeks generated before the first week 40.
    #[serde(default = "default_lead_in")]
    pub lead_in_weeks: usize,
    /// Weight of the shared shock, in [0, 1].
    #[serde(default)]
    pub correlation: f64,
    #[serde(default)]
    pub dynamics: Dynamics,
    #[serde(default = "default_true")]
    pub include_national: bool,
    pub states: Vec<StateCurve>,
}

fn default_lead_in() -> usize {
    8
}

fn default_true() -> bool {
    true
}

impl SyntheticConfig {
    /// A config where every state shares one curve shape, with small
    /// deterministic per-state variation in level, timing and size.
    pub fn uniform(states: &[&str], first_season: i32, n_seasons: usize) -> Self {
        let states = states
            .iter()
            .enumerate()
            .map(|(i, code)| {
                let k = i as f64;
                StateCurve {
                    code: code.to_string(),
                    baseline: 0.8 + 0.05 * (k % 5.0),
                    peak: 4.0 + 0.4 * (k % 7.0),
                    peak_offset: 16.0 + (k % 4.0),
                    width: 5.0,
                    noise: 0.15,
                    visits: 20_000 + 1_000 * i as u64,
                    providers: 40 + i as u64,
                }
            })
            .collect();
        Self {
            first_season,
            n_seasons,
            lead_in_weeks: default_lead_in(),
            correlation: 0.0,
            dynamics: Dynamics::Independent,
            include_national: true,
            states,
        }
    }

    pub fn parse_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_seasons == 0 {
            return bad("n_seasons must be positive".into());
        }
        if !(1800..=9000).contains(&self.first_season) {
            return bad(format!("first_season {} out of range", self.first_season));
        }
        if self.lead_in_weeks > 520 {
            return bad("lead_in_weeks too large".into());
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad("correlation must lie in [0, 1]".into());
        }
        if let Dynamics::NeighborCoupled { persistence, coupling } = self.dynamics {
            if !(persistence.is_finite() && coupling.is_finite() && persistence.abs() < 1.0) {
                return bad("coupled dynamics need finite coupling and |persistence| < 1".into());
            }
        }
        if self.states.is_empty() {
            return bad("no states configured".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.states {
            if !is_state(&s.code) {
                return bad(format!("unknown state code {:?}", s.code));
            }
            if !seen.insert(&s.code) {
                return bad(format!("state {} listed twice", s.code));
            }
            if s.visits == 0 {
                return bad(format!("{}: visits must be positive", s.code));
            }
            if s.visits < MIN_VISITS {
                return bad(format!(
                    "{}: visits must be at least {MIN_VISITS} so counts reproduce %ILI",
                    s.code
                ));
            }
            let finite = [s.baseline, s.peak, s.peak_offset, s.width, s.noise]
                .iter()
                .all(|v| v.is_finite());
            if !finite || s.baseline < 0.0 || s.peak < 0.0 || s.width <= 0.0 || s.noise < 0.0 {
                return bad(format!("{}: curve parameters must be finite and nonnegative", s.code));
            }
        }
        Ok(())
    }

    /// First and last generated week.
    pub fn span(&self) -> (Epiweek, Epiweek) {
        let first = Season::new(self.first_season)
            .first_week()
            .add_weeks(-(self.lead_in_weeks as i64));
        let last = Season::new(self.first_season + self.n_seasons as i32 - 1).last_week();
        (first, last)
    }
}

impl StateCurve {
    /// Noise-free %ILI at `week`.
    pub fn template(&self, week: Epiweek) -> f64 {
        let pos = weeks_since_week40(week) as f64;
        let z = (pos - self.peak_offset) / self.width;
        self.baseline + (self.peak - self.baseline) * (-0.5 * z * z).exp()
    }
}

fn weeks_since_week40(week: Epiweek) -> i64 {
    let year = if week.week() >= 40 {
        week.year()
    } else {
        week.year() - 1
    };
    Season::new(year).first_week().weeks_until(week)
}

/// Generates a table deterministically from `config` and `seed`.
///
/// Coupled dynamics use the bundled adjacency restricted to the configured
/// states.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<ObservationTable> {
    config.validate()?;
    let codes: Vec<&str> = config.states.iter().map(|s| s.code.as_str()).collect();
    let graph = AdjacencyGraph::default().restricted(&codes);
    let neighbor_idx: Vec<Vec<usize>> = codes
        .iter()
        .map(|c| {
            graph
                .neighbors(c)
                .map(|ns| ns.iter().filter_map(|n| codes.iter().position(|x| x == n)).collect())
                .unwrap_or_default()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (first, last) = config.span();
    let rho = config.correlation;
    let n = config.states.len();
    let mut x_prev = vec![0.0; n];
    let mut x_prev2 = vec![0.0; n];
    let mut rows = Vec::new();

    for week in first.range_inclusive(last) {
        let common: f64 = StandardNormal.sample(&mut rng);
        let shocks: Vec<f64> = (0..n)
            .map(|_| {
                let own: f64 = StandardNormal.sample(&mut rng);
                rho.sqrt() * common + (1.0 - rho).sqrt() * own
            })
            .collect();
        let anomaly: Vec<f64> = match config.dynamics {
            Dynamics::Independent => config.states.iter().zip(&shocks).map(|(s, z)| s.noise * z).collect(),
            Dynamics::NeighborCoupled { persistence, coupling } => (0..n)
                .map(|i| {
                    let push = if neighbor_idx[i].is_empty() {
                        0.0
                    } else {
                        neighbor_idx[i].iter().map(|&j| x_prev[j] - x_prev2[j]).sum::<f64>()
                            / neighbor_idx[i].len() as f64
                    };
                    persistence * x_prev[i] + coupling * push + config.states[i].noise * shocks[i]
                })
                .collect(),
        };
        for (i, s) in config.states.iter().enumerate() {
            let pct = (s.template(week) + anomaly[i]).clamp(0.0, 100.0);
            let count = (pct * s.visits as f64 / 100.0).round() as u64;
            rows.push(Observation {
                location: s.code.clone(),
                week,
                ili_pct: pct,
                ili_count: count.min(s.visits),
                total_visits: s.visits,
                providers: Some(s.providers),
            });
        }
        x_prev2 = std::mem::replace(&mut x_prev, anomaly);
    }

    let mut table = ObservationTable::from_rows(rows)?;
    if config.include_national {
        let national = weighted_mean_over(&table, &codes);
        let visits: u64 = config.states.iter().map(|s| s.visits).sum();
        let providers: u64 = config.states.iter().map(|s| s.providers).sum();
        let mut rows = table.rows().to_vec();
        for (week, pct) in national {
            let count: u64 = codes
                .iter()
                .filter_map(|c| table.get(c, week))
                .map(|o| o.ili_count)
                .sum();
            rows.push(Observation {
                location: NATIONAL.to_string(),
                week,
                ili_pct: pct,
                ili_count: count,
                total_visits: visits,
                providers: Some(providers),
            });
        }
        table = ObservationTable::from_rows(rows)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SyntheticConfig {
        SyntheticConfig::uniform(&["WA", "OR", "ID"], 2014, 2)
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&cfg(), 7).unwrap();
        let b = generate_synthetic(&cfg(), 7).unwrap();
        let c = generate_synthetic(&cfg(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_equals_template() {
        let mut c = cfg();
        for s in &mut c.states {
            s.noise = 0.0;
        }
        let t = generate_synthetic(&c, 1).unwrap();
        for s in &c.states {
            for w in t.rows().iter().filter(|r| r.location == s.code) {
                assert_eq!(w.ili_pct, s.template(w.week));
            }
        }
    }

    #[test]
    fn full_correlation_identical_templates() {
        let mut c = cfg();
        c.correlation = 1.0;
        let proto = c.states[0].clone();
        for s in &mut c.states {
            let code = s.code.clone();
            *s = StateCurve { code, ..proto.clone() };
        }
        let t = generate_synthetic(&c, 3).unwrap();
        let series = |code: &str| -> Vec<f64> {
            t.rows()
                .iter()
                .filter(|r| r.location == code)
                .map(|r| r.ili_pct)
                .collect()
        };
        assert_eq!(series("WA"), series("OR"));
        assert_eq!(series("WA"), series("ID"));
    }

    #[test]
    fn rows_satisfy_invariants() {
        let mut c = cfg();
        c.dynamics = Dynamics::NeighborCoupled {
            persistence: 0.8,
            coupling: 0.5,
        };
        let t = generate_synthetic(&c, 11).unwrap();
        for r in t.rows() {
            r.validate(Some(0.05)).unwrap();
        }
        let (first, last) = c.span();
        assert_eq!(t.week_span(), Some((first, last)));
        assert_eq!(t.locations(), vec!["ID", "OR", "US", "WA"]);
    }

    #[test]
    fn config_errors() {
        let mut c = cfg();
        c.states[1].visits = 0;
        assert!(matches!(generate_synthetic(&c, 1), Err(Error::Config(_))));
        let mut c = cfg();
        c.correlation = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_config() {
        let text = r#"
            first_season = 2015
            n_seasons = 1
            correlation = 0.3
            [dynamics]
            kind = "neighbor_coupled"
            persistence = 0.7
            coupling = 0.4
            [[states]]
            code = "GA"
            baseline = 1.0
            peak = 5.0
            peak_offset = 18.0
            width = 4.0
            noise = 0.2
            visits = 50000
            providers = 80
        "#;
        let c = SyntheticConfig::parse_toml(text).unwrap();
        assert_eq!(c.lead_in_weeks, 8);
        assert_eq!(
            c.dynamics,
            Dynamics::NeighborCoupled {
                persistence: 0.7,
                coupling: 0.4
            }
        );
        assert!(generate_synthetic(&c, 0).is_ok());
    }
}
