//! Data validation report: ingest invariants plus season week counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::epiweek::{in_season, season_of, Season};
use crate::error::Error;
use crate::ingest::{audit, parse_ili_reader, AuditReport, Schema};
use crate::states::{is_state, state_codes};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<(String, String)>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonCount {
    pub season: Season,
    /// In-season weeks with at least one state row.
    pub in_season_weeks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub rows: usize,
    pub locations: Vec<String>,
    pub errors: Vec<Issue>,
    pub seasons_observed: Vec<SeasonCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
}

/// 2010-11..2014-15 training, 2015-16..2018-19 test.
pub fn default_seasons() -> (Vec<Season>, Vec<Season>) {
    (
        (2010..2015).map(Season::new).collect(),
        (2015..2019).map(Season::new).collect(),
    )
}

/// Validates CSV bytes. `ok` is true iff every row parses and passes the
/// row invariants and no (location, week) key repeats.
pub fn validate_bytes(bytes: &[u8], schema: &Schema, train: &[Season], test: &[Season]) -> ValidationReport {
    let parsed = match parse_ili_reader(bytes, schema) {
        Ok(p) => p,
        Err(e) => {
            let issue = match &e {
                Error::Duplicate { location, week } => Issue {
                    kind: "duplicate",
                    line: None,
                    key: Some((location.clone(), week.clone())),
                    message: e.to_string(),
                },
                Error::Schema(_) => Issue {
                    kind: "schema",
                    line: None,
                    key: None,
                    message: e.to_string(),
                },
                _ => Issue {
                    kind: "unreadable",
                    line: None,
                    key: None,
                    message: e.to_string(),
                },
            };
            return ValidationReport {
                ok: false,
                rows: 0,
                locations: Vec::new(),
                errors: vec![issue],
                seasons_observed: Vec::new(),
                audit: None,
            };
        }
    };
    let table = parsed.table;
    let errors: Vec<Issue> = parsed
        .rejects
        .iter()
        .map(|r| Issue {
            kind: "row",
            line: Some(r.line),
            key: None,
            message: r.reason.clone(),
        })
        .collect();

    let mut weeks: BTreeMap<Season, BTreeSet<_>> = BTreeMap::new();
    for r in table
        .rows()
        .iter()
        .filter(|r| is_state(&r.location) && in_season(r.week))
    {
        if let Ok(s) = season_of(r.week) {
            weeks.entry(s).or_default().insert(r.week);
        }
    }
    let present: Vec<&str> = table.states();
    let expected: Vec<&str> = if present.len() == 50 {
        state_codes().collect()
    } else {
        present.clone()
    };
    let audit = (!present.is_empty()).then(|| audit(&table, train, test, &expected));
    ValidationReport {
        ok: errors.is_empty(),
        rows: table.len(),
        locations: table.locations().iter().map(|s| s.to_string()).collect(),
        errors,
        seasons_observed: weeks
            .into_iter()
            .map(|(season, w)| SeasonCount {
                season,
                in_season_weeks: w.len(),
            })
            .collect(),
        audit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticConfig};

    #[test]
    fn clean_and_duplicate() {
        let t = generate_synthetic(&SyntheticConfig::uniform(&["GA", "AL"], 2012, 2), 1).unwrap();
        let csv = t.to_csv_string();
        let seasons = [Season::new(2012)];
        let r = validate_bytes(csv.as_bytes(), &Schema::canonical(), &seasons, &[Season::new(2013)]);
        assert!(r.ok);
        let counts: Vec<usize> = r.seasons_observed.iter().map(|s| s.in_season_weeks).collect();
        assert_eq!(counts, [31, 31]);
        let a = r.audit.unwrap();
        assert_eq!((a.train_calendar_weeks, a.test_calendar_weeks), (31, 31));

        let first_row = csv.lines().nth(1).unwrap();
        let dup = format!("{csv}{first_row}\n");
        let r = validate_bytes(dup.as_bytes(), &Schema::canonical(), &seasons, &[]);
        assert!(!r.ok);
        assert_eq!(r.errors[0].kind, "duplicate");
        assert!(r.errors[0].key.is_some());

        let bad = format!("{csv}GA,2015,3,1.0,5,4,1\n");
        let r = validate_bytes(bad.as_bytes(), &Schema::canonical(), &seasons, &[]);
        assert!(!r.ok);
        assert_eq!(r.errors[0].kind, "row");
    }
}
