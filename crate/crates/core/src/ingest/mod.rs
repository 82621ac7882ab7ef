//! Weekly ILI surveillance tables: parsing, validation, indexing and audit.

mod audit;
mod schema;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

pub use audit::{audit, AuditReport, SeasonAudit, StateCoverage};
pub use schema::{Field, Schema};
pub use synthetic::{generate_synthetic, Dynamics, StateCurve, SyntheticConfig};

use crate::epiweek::{in_season, season_of, Epiweek, Season};
use crate::error::{Error, Result};
use crate::states::{is_state, NATIONAL, STATES};

/// One location-week surveillance record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub location: String,
    pub week: Epiweek,
    /// Percentage of outpatient visits attributed to ILI.
    pub ili_pct: f64,
    pub ili_count: u64,
    pub total_visits: u64,
    pub providers: Option<u64>,
}

impl Observation {
    /// Checks the per-row invariants; `pct_tolerance` of `None` skips the
    /// percentage/count consistency check.
    pub fn validate(&self, pct_tolerance: Option<f64>) -> std::result::Result<(), String> {
        if !self.ili_pct.is_finite() || self.ili_pct < 0.0 {
            return Err(format!("ili_pct {} is not a nonnegative number", self.ili_pct));
        }
        if self.ili_count > self.total_visits {
            return Err(format!(
                "ili_count {} exceeds total_visits {}",
                self.ili_count, self.total_visits
            ));
        }
        if let (Some(tol), true) = (pct_tolerance, self.total_visits > 0) {
            let implied = 100.0 * self.ili_count as f64 / self.total_visits as f64;
            if (self.ili_pct - implied).abs() > tol {
                return Err(format!(
                    "ili_pct {} inconsistent with 100*ili_count/total_visits = {implied:.4}",
                    self.ili_pct
                ));
            }
        }
        Ok(())
    }
}

/// A row the parser could not accept, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Immutable, indexed collection of observations sorted by (location, week).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationTable {
    rows: Vec<Observation>,
    index: HashMap<String, HashMap<Epiweek, usize>>,
    season_labels: BTreeMap<Epiweek, Season>,
}

impl ObservationTable {
    /// Builds a table, failing on the first duplicated (location, week).
    pub fn from_rows(mut rows: Vec<Observation>) -> Result<Self> {
        rows.sort_by(|a, b| (&a.location, a.week).cmp(&(&b.location, b.week)));
        if let Some(pair) = rows
            .windows(2)
            .find(|p| p[0].location == p[1].location && p[0].week == p[1].week)
        {
            return Err(Error::Duplicate {
                location: pair[0].location.clone(),
                week: pair[0].week.to_string(),
            });
        }
        let mut index: HashMap<String, HashMap<Epiweek, usize>> = HashMap::new();
        for (i, r) in rows.iter().enumerate() {
            index.entry(r.location.clone()).or_default().insert(r.week, i);
        }
        let season_labels = rows
            .iter()
            .filter_map(|r| season_of(r.week).ok().map(|s| (r.week, s)))
            .collect();
        Ok(Self {
            rows,
            index,
            season_labels,
        })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, location: &str, week: Epiweek) -> Option<&Observation> {
        self.index
            .get(location)
            .and_then(|m| m.get(&week))
            .map(|&i| &self.rows[i])
    }

    /// %ILI at (location, week), if observed.
    pub fn ili(&self, location: &str, week: Epiweek) -> Option<f64> {
        self.get(location, week).map(|o| o.ili_pct)
    }

    pub fn season_label(&self, week: Epiweek) -> Option<Season> {
        self.season_labels.get(&week).copied()
    }

    /// Distinct locations, sorted.
    pub fn locations(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.rows.iter().map(|r| r.location.as_str()).collect();
        out.dedup();
        out
    }

    /// State locations present in the table, sorted.
    pub fn states(&self) -> Vec<&str> {
        self.locations().into_iter().filter(|l| is_state(l)).collect()
    }

    pub fn has_location(&self, location: &str) -> bool {
        self.index.contains_key(location)
    }

    /// Earliest and latest week across all rows.
    pub fn week_span(&self) -> Option<(Epiweek, Epiweek)> {
        let min = self.rows.iter().map(|r| r.week).min()?;
        let max = self.rows.iter().map(|r| r.week).max()?;
        Some((min, max))
    }

    /// Rows restricted to the given locations.
    pub fn filter_locations(&self, keep: &[&str]) -> Self {
        let rows = self
            .rows
            .iter()
            .filter(|r| keep.contains(&r.location.as_str()))
            .cloned()
            .collect();
        Self::from_rows(rows).expect("subset of a valid table")
    }

    /// Writes the canonical CSV serialization.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(schema::CANONICAL_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.location.clone(),
                r.week.year().to_string(),
                r.week.week().to_string(),
                r.ili_pct.to_string(),
                r.ili_count.to_string(),
                r.total_visits.to_string(),
                r.providers.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Result of parsing a surveillance file.
#[derive(Debug, Clone)]
pub struct ParsedTable {
    pub table: ObservationTable,
    pub rejects: Vec<RejectedRow>,
}

/// Parses a surveillance CSV file with the given column mapping.
pub fn parse_ili_csv(path: &Path, schema: &Schema) -> Result<ParsedTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ili_reader(std::io::BufReader::new(file), schema)
}

/// Parses surveillance CSV from any reader.
pub fn parse_ili_reader<R: Read>(reader: R, schema: &Schema) -> Result<ParsedTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = schema.resolve(&headers)?;

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(line);
                rejects.push(RejectedRow {
                    line,
                    reason: format!("unreadable record: {e}"),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(line);
        match cols.observation(&rec).and_then(|o| {
            o.validate(schema.pct_tolerance)?;
            Ok(o)
        }) {
            Ok(o) => rows.push(o),
            Err(reason) => rejects.push(RejectedRow { line, reason }),
        }
    }
    Ok(ParsedTable {
        table: ObservationTable::from_rows(rows)?,
        rejects,
    })
}

/// Parses the canonical serialization produced by [`ObservationTable::write_csv`].
pub fn parse_canonical(bytes: &[u8]) -> Result<ParsedTable> {
    parse_ili_reader(bytes, &Schema::canonical())
}

/// Per-week national %ILI.
#[derive(Debug, Clone, PartialEq)]
pub struct NationalSeries {
    pub values: BTreeMap<Epiweek, f64>,
    /// True when computed as a visits-weighted mean of state rows rather
    /// than read from national rows.
    pub synthesized: bool,
}

impl NationalSeries {
    pub fn get(&self, week: Epiweek) -> Option<f64> {
        self.values.get(&week).copied()
    }
}

/// The national series: national rows verbatim when present, otherwise
/// `100 * sum(C) / sum(V)` over all 50 states for weeks with complete
/// state coverage.
pub fn us_average_series(table: &ObservationTable) -> Result<NationalSeries> {
    let national: BTreeMap<Epiweek, f64> = table
        .rows()
        .iter()
        .filter(|r| r.location == NATIONAL)
        .map(|r| (r.week, r.ili_pct))
        .collect();
    if !national.is_empty() {
        return Ok(NationalSeries {
            values: national,
            synthesized: false,
        });
    }
    let codes: Vec<&str> = STATES.iter().map(|(c, _)| *c).collect();
    let values = weighted_mean_over(table, &codes);
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "no national rows and no week with all 50 states reporting".into(),
        ));
    }
    Ok(NationalSeries {
        values,
        synthesized: true,
    })
}

/// Visits-weighted mean %ILI over `locations`, for weeks where every one
/// of them has a row with positive total visits.
pub fn weighted_mean_over(table: &ObservationTable, locations: &[&str]) -> BTreeMap<Epiweek, f64> {
    let mut acc: BTreeMap<Epiweek, (u64, u64, usize)> = BTreeMap::new();
    for r in table.rows() {
        if locations.contains(&r.location.as_str()) {
            let e = acc.entry(r.week).or_default();
            e.0 += r.ili_count;
            e.1 += r.total_visits;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .filter(|(_, (_, v, n))| *n == locations.len() && *v > 0)
        .map(|(w, (c, v, _))| (w, 100.0 * c as f64 / v as f64))
        .collect()
}

/// Whether `week` is an in-season week of one of `seasons`.
pub fn in_seasons(week: Epiweek, seasons: &[Season]) -> bool {
    in_season(week) && season_of(week).is_ok_and(|s| seasons.contains(&s))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "region,year,week,%UNWEIGHTED ILI,ILITOTAL,TOTAL PATIENTS,NUM. OF PROVIDERS\n";

    fn parse(body: &str) -> Result<ParsedTable> {
        let text = format!("{HEADER}{body}");
        parse_ili_reader(text.as_bytes(), &Schema::fluview())
    }

    fn ew(y: i32, w: u8) -> Epiweek {
        Epiweek::new(y, w).unwrap()
    }

    #[test]
    fn three_row_file() {
        let p = parse(
            "Georgia,2015,41,2.0,20,1000,30\n\
             Georgia,2015,40,1.5,15,1000,30\n\
             Alabama,2015,40,1.0,10,1000,12\n",
        )
        .unwrap();
        assert_eq!(p.table.len(), 3);
        assert!(p.rejects.is_empty());
        let locs: Vec<_> = p
            .table
            .rows()
            .iter()
            .map(|r| (r.location.as_str(), r.week.week()))
            .collect();
        assert_eq!(locs, vec![("AL", 40), ("GA", 40), ("GA", 41)]);
        assert_eq!(p.table.ili("GA", ew(2015, 41)), Some(2.0));
        assert_eq!(p.table.season_label(ew(2015, 41)).unwrap().to_string(), "2015-16");
    }

    #[test]
    fn duplicate_key_is_integrity_error() {
        let err = parse(
            "GA,2015,40,1.5,15,1000,30\n\
             Georgia,2015,40,1.5,15,1000,30\n",
        )
        .unwrap_err();
        match err {
            Error::Duplicate { location, week } => {
                assert_eq!(location, "GA");
                assert_eq!(week, "2015w40");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn count_above_visits_is_rejected() {
        let p = parse(
            "GA,2015,40,1.5,15,1000,30\n\
             GA,2015,41,100.0,2000,1000,30\n",
        )
        .unwrap();
        assert_eq!(p.table.len(), 1);
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].line, 3);
        assert!(p.rejects[0].reason.contains("exceeds"));
    }

    #[test]
    fn unparseable_and_inconsistent_rows_are_reported() {
        let p = parse(
            "GA,2015,40,abc,15,1000,30\n\
             GA,2015,41,9.9,15,1000,30\n\
             GA,2015,53,1.5,15,1000,30\n\
             GA,2015,42,1.5,15,1000,\n",
        )
        .unwrap();
        assert_eq!(p.rejects.len(), 3);
        assert_eq!(p.table.len(), 1);
        assert_eq!(p.table.rows()[0].providers, None);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "region,year,week,ILITOTAL\nGA,2015,40,3\n";
        assert!(matches!(
            parse_ili_reader(text.as_bytes(), &Schema::fluview()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let p = parse(
            "Georgia,2015,41,2.0,20,1000,30\n\
             US National,2015,40,1.234,1234,100000,\n",
        )
        .unwrap();
        let text = p.table.to_csv_string();
        assert!(text.starts_with("location,year,week,ili_pct,ili_count,total_visits,providers\n"));
        let again = parse_canonical(text.as_bytes()).unwrap();
        assert_eq!(again.table, p.table);
        assert_eq!(again.table.to_csv_string(), text);
    }

    #[test]
    fn us_average_passthrough() {
        let p = parse(
            "US,2015,40,1.2,12,1000,\n\
             GA,2015,40,3.0,30,1000,1\n",
        )
        .unwrap();
        let us = us_average_series(&p.table).unwrap();
        assert!(!us.synthesized);
        assert_eq!(us.get(ew(2015, 40)), Some(1.2));
    }

    #[test]
    fn weighted_mean_two_states() {
        let p = parse(
            "GA,2015,40,10.0,10,100,1\n\
             AL,2015,40,30.0,30,100,1\n",
        )
        .unwrap();
        let m = weighted_mean_over(&p.table, &["AL", "GA"]);
        assert_eq!(m[&ew(2015, 40)], 20.0);
    }

    #[test]
    fn us_average_fallback_needs_all_states() {
        let mut body = String::new();
        for (code, _) in STATES.iter().skip(5) {
            body.push_str(&format!("{code},2015,40,1.0,10,1000,1\n"));
        }
        let p = parse(&body).unwrap();
        assert!(matches!(us_average_series(&p.table), Err(Error::InsufficientData(_))));

        let mut body = String::new();
        for (i, (code, _)) in STATES.iter().enumerate() {
            let c = if i == 0 { 30 } else { 10 };
            body.push_str(&format!("{code},2015,40,{}.0,{c},1000,1\n", c / 10));
        }
        let p = parse(&body).unwrap();
        let us = us_average_series(&p.table).unwrap();
        assert!(us.synthesized);
        assert_eq!(us.get(ew(2015, 40)), Some(100.0 * 520.0 / 50_000.0));
    }
}
