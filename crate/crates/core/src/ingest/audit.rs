//! In-season week accounting for configured train/test seasons.

use serde::Serialize;

use super::ObservationTable;
use crate::epiweek::{Epiweek, Season};
use crate::states::{state_codes, NATIONAL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonAudit {
    pub season: Season,
    pub role: &'static str,
    /// In-season weeks on the calendar.
    pub calendar_weeks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateCoverage {
    pub location: String,
    pub train_weeks: usize,
    pub test_weeks: usize,
    pub missing: Vec<Epiweek>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub seasons: Vec<SeasonAudit>,
    pub train_calendar_weeks: usize,
    pub test_calendar_weeks: usize,
    pub coverage: Vec<StateCoverage>,
    /// In-season weeks where at least one expected location has no row.
    pub incomplete_weeks: Vec<Epiweek>,
    /// Of the 50 states, those with no rows at all.
    pub absent_states: Vec<String>,
    pub national_present: bool,
}

impl AuditReport {
    /// True when every expected location has every in-season week.
    pub fn complete(&self) -> bool {
        self.incomplete_weeks.is_empty()
    }
}

/// Counts in-season weeks per season and per expected location.
pub fn audit(table: &ObservationTable, train: &[Season], test: &[Season], expected: &[&str]) -> AuditReport {
    let mut seasons = Vec::new();
    let mut train_weeks = Vec::new();
    let mut test_weeks = Vec::new();
    for (role, list, acc) in [("train", train, &mut train_weeks), ("test", test, &mut test_weeks)] {
        for s in list {
            let weeks = s.weeks();
            seasons.push(SeasonAudit {
                season: *s,
                role,
                calendar_weeks: weeks.len(),
            });
            acc.extend(weeks);
        }
    }

    let mut incomplete = Vec::new();
    for &w in train_weeks.iter().chain(&test_weeks) {
        if expected.iter().any(|l| table.get(l, w).is_none()) {
            incomplete.push(w);
        }
    }
    incomplete.sort();
    incomplete.dedup();

    let coverage = expected
        .iter()
        .map(|&loc| {
            let count = |weeks: &[Epiweek]| weeks.iter().filter(|&&w| table.get(loc, w).is_some()).count();
            let missing = train_weeks
                .iter()
                .chain(&test_weeks)
                .copied()
                .filter(|&w| table.get(loc, w).is_none())
                .collect();
            StateCoverage {
                location: loc.to_string(),
                train_weeks: count(&train_weeks),
                test_weeks: count(&test_weeks),
                missing,
            }
        })
        .collect();

    AuditReport {
        seasons,
        train_calendar_weeks: train_weeks.len(),
        test_calendar_weeks: test_weeks.len(),
        coverage,
        incomplete_weeks: incomplete,
        absent_states: state_codes()
            .filter(|c| !table.has_location(c))
            .map(str::to_string)
            .collect(),
        national_present: table.has_location(NATIONAL),
    }
}
