//! Column mapping between semantic fields and CSV headers.
//!
//! The mapping file is plain `key = value` lines; `#` starts a comment.
//! Column names may contain spaces and punctuation and are matched
//! case-insensitively.
//!
//! ```text
//! location     = region
//! year         = year
//! week         = week
//! ili_pct      = %UNWEIGHTED ILI
//! ili_count    = ILITOTAL
//! total_visits = TOTAL PATIENTS
//! providers    = NUM. OF PROVIDERS
//! pct_tolerance = 0.05
//! ```
//!
//! `epiweek` (a single `YYYYWW` column) may replace `year` + `week`.
//! `providers` is optional. `pct_tolerance = off` disables the
//! percentage/count consistency check (for weighted %ILI columns).

use std::collections::BTreeMap;
use std::path::Path;

use csv::StringRecord;

use super::Observation;
use crate::epiweek::Epiweek;
use crate::error::{Error, Result};
use crate::states::normalize_location;

pub(crate) const CANONICAL_COLUMNS: [&str; 7] = [
    "location",
    "year",
    "week",
    "ili_pct",
    "ili_count",
    "total_visits",
    "providers",
];

/// Semantic input fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Field {
    Location,
    Year,
    Week,
    Epiweek,
    IliPct,
    IliCount,
    TotalVisits,
    Providers,
}

impl Field {
    fn from_key(key: &str) -> Option<Field> {
        Some(match key {
            "location" | "region" => Field::Location,
            "year" => Field::Year,
            "week" => Field::Week,
            "epiweek" => Field::Epiweek,
            "ili_pct" => Field::IliPct,
            "ili_count" => Field::IliCount,
            "total_visits" => Field::TotalVisits,
            "providers" => Field::Providers,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: BTreeMap<Field, String>,
    /// Allowed |ili_pct - 100*count/visits|; `None` disables the check.
    pub pct_tolerance: Option<f64>,
}

impl Default for Schema {
    fn default() -> Self {
        Self::fluview()
    }
}

impl Schema {
    /// FluView ILINet export headers, unweighted %ILI.
    pub fn fluview() -> Self {
        Self::from_pairs(&[
            (Field::Location, "region"),
            (Field::Year, "year"),
            (Field::Week, "week"),
            (Field::IliPct, "%UNWEIGHTED ILI"),
            (Field::IliCount, "ILITOTAL"),
            (Field::TotalVisits, "TOTAL PATIENTS"),
            (Field::Providers, "NUM. OF PROVIDERS"),
        ])
    }

    /// The canonical serialization's own headers.
    pub fn canonical() -> Self {
        Self::from_pairs(&[
            (Field::Location, "location"),
            (Field::Year, "year"),
            (Field::Week, "week"),
            (Field::IliPct, "ili_pct"),
            (Field::IliCount, "ili_count"),
            (Field::TotalVisits, "total_visits"),
            (Field::Providers, "providers"),
        ])
    }

    fn from_pairs(pairs: &[(Field, &str)]) -> Self {
        Self {
            columns: pairs.iter().map(|(f, c)| (*f, c.to_string())).collect(),
            pct_tolerance: Some(0.05),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = BTreeMap::new();
        let mut pct_tolerance = Some(0.05);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected `key = column`", n + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().trim_matches('"').to_string();
            if value.is_empty() {
                return Err(Error::Schema(format!("line {}: empty value for {key}", n + 1)));
            }
            if key == "pct_tolerance" {
                pct_tolerance = match value.to_ascii_lowercase().as_str() {
                    "off" | "none" => None,
                    v => {
                        let t: f64 = v
                            .parse()
                            .map_err(|_| Error::Schema(format!("line {}: bad pct_tolerance {value:?}", n + 1)))?;
                        if !(t.is_finite() && t >= 0.0) {
                            return Err(Error::Schema(format!("line {}: pct_tolerance must be >= 0", n + 1)));
                        }
                        Some(t)
                    }
                };
                continue;
            }
            let field =
                Field::from_key(&key).ok_or_else(|| Error::Schema(format!("line {}: unknown field {key:?}", n + 1)))?;
            if columns.insert(field, value).is_some() {
                return Err(Error::Schema(format!("line {}: field {key} mapped twice", n + 1)));
            }
        }
        let schema = Self { columns, pct_tolerance };
        schema.check_complete()?;
        Ok(schema)
    }

    fn check_complete(&self) -> Result<()> {
        let has = |f| self.columns.contains_key(&f);
        let mut missing = Vec::new();
        for (f, name) in [
            (Field::Location, "location"),
            (Field::IliPct, "ili_pct"),
            (Field::IliCount, "ili_count"),
            (Field::TotalVisits, "total_visits"),
        ] {
            if !has(f) {
                missing.push(name);
            }
        }
        match (has(Field::Epiweek), has(Field::Year), has(Field::Week)) {
            (true, false, false) | (false, true, true) => {}
            (true, _, _) => return Err(Error::Schema("map either `epiweek` or `year`+`week`, not both".into())),
            _ => missing.push("year+week (or epiweek)"),
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "unmapped required fields: {}",
                missing.join(", ")
            )))
        }
    }

    /// Locates every mapped column in a header row.
    pub(crate) fn resolve(&self, headers: &StringRecord) -> Result<ResolvedColumns> {
        self.check_complete()?;
        let mut idx = BTreeMap::new();
        let mut missing = Vec::new();
        for (field, name) in &self.columns {
            match headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name)) {
                Some(i) => {
                    idx.insert(*field, i);
                }
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Schema(format!("missing column(s): {}", missing.join(", "))));
        }
        Ok(ResolvedColumns { idx })
    }
}

pub(crate) struct ResolvedColumns {
    idx: BTreeMap<Field, usize>,
}

impl ResolvedColumns {
    fn cell<'a>(&self, rec: &'a StringRecord, f: Field) -> Option<&'a str> {
        self.idx.get(&f).and_then(|&i| rec.get(i))
    }

    fn required<'a>(&self, rec: &'a StringRecord, f: Field, name: &str) -> std::result::Result<&'a str, String> {
        match self.cell(rec, f) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(format!("missing value for {name}")),
        }
    }

    pub(crate) fn observation(&self, rec: &StringRecord) -> std::result::Result<Observation, String> {
        let location = normalize_location(self.required(rec, Field::Location, "location")?);
        let week = if self.idx.contains_key(&Field::Epiweek) {
            self.required(rec, Field::Epiweek, "epiweek")?
                .parse::<Epiweek>()
                .map_err(|e| e.to_string())?
        } else {
            let year: i32 = self
                .required(rec, Field::Year, "year")?
                .parse()
                .map_err(|_| "unparseable year".to_string())?;
            let week: u8 = self
                .required(rec, Field::Week, "week")?
                .parse()
                .map_err(|_| "unparseable week".to_string())?;
            Epiweek::new(year, week).map_err(|e| e.to_string())?
        };
        let ili_pct: f64 = self
            .required(rec, Field::IliPct, "ili_pct")?
            .parse()
            .map_err(|_| "unparseable ili_pct".to_string())?;
        let ili_count = parse_count(self.required(rec, Field::IliCount, "ili_count")?, "ili_count")?;
        let total_visits = parse_count(self.required(rec, Field::TotalVisits, "total_visits")?, "total_visits")?;
        let providers = match self.cell(rec, Field::Providers) {
            Some(v) if !v.is_empty() => Some(parse_count(v, "providers")?),
            _ => None,
        };
        Ok(Observation {
            location,
            week,
            ili_pct,
            ili_count,
            total_visits,
            providers,
        })
    }
}

/// Nonnegative integer, tolerating an integral float like `12.0`.
fn parse_count(s: &str, name: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 => Ok(v as u64),
        _ => Err(format!("unparseable {name} {s:?}")),
    }
}
