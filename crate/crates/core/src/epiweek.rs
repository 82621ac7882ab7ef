//! MMWR epidemiological week calendar.
//!
//! MMWR weeks run Sunday through Saturday. Week 1 of a year is the first
//! week with at least four days in that calendar year, which is the week
//! containing January 4th. A year therefore has 52 or 53 weeks.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A (year, week) pair on the MMWR calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Epiweek {
    year: i32,
    week: u8,
}

/// First day (a Sunday) of MMWR week 1 of `year`.
pub fn year_start(year: i32) -> NaiveDate {
    let jan4 = NaiveDate::from_ymd_opt(year, 1, 4).expect("valid year");
    let back = jan4.weekday().num_days_from_sunday() as i64;
    jan4 - Duration::days(back)
}

/// Number of MMWR weeks in `year` (52 or 53).
pub fn weeks_in_year(year: i32) -> u8 {
    ((year_start(year + 1) - year_start(year)).num_days() / 7) as u8
}

impl Epiweek {
    pub fn new(year: i32, week: u8) -> Result<Self> {
        if !(1..=9998).contains(&year) {
            return Err(Error::Domain(format!("epiweek year {year} out of range")));
        }
        if week == 0 || week > weeks_in_year(year) {
            return Err(Error::Domain(format!(
                "week {week} does not exist in MMWR year {year} ({} weeks)",
                weeks_in_year(year)
            )));
        }
        Ok(Self { year, week })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn week(self) -> u8 {
        self.week
    }

    /// Sunday that starts this week.
    pub fn start_date(self) -> NaiveDate {
        year_start(self.year) + Duration::weeks(self.week as i64 - 1)
    }

    /// The epiweek containing `date`.
    pub fn from_date(date: NaiveDate) -> Self {
        let sunday = date - Duration::days(date.weekday().num_days_from_sunday() as i64);
        debug_assert_eq!(sunday.weekday(), Weekday::Sun);
        // The week's Wednesday always lies in the MMWR year the week belongs to.
        let year = (sunday + Duration::days(3)).year();
        let week = (sunday - year_start(year)).num_days() / 7 + 1;
        Self { year, week: week as u8 }
    }

    /// Move forward (or backward, for negative `n`) by `n` weeks.
    pub fn add_weeks(self, n: i64) -> Self {
        Self::from_date(self.start_date() + Duration::weeks(n))
    }

    pub fn succ(self) -> Self {
        self.add_weeks(1)
    }

    pub fn pred(self) -> Self {
        self.add_weeks(-1)
    }

    /// Signed number of weeks from `self` to `other`.
    pub fn weeks_until(self, other: Epiweek) -> i64 {
        (other.start_date() - self.start_date()).num_days() / 7
    }

    /// Inclusive iterator from `self` through `end`.
    pub fn range_inclusive(self, end: Epiweek) -> impl Iterator<Item = Epiweek> {
        let n = self.weeks_until(end);
        (0..=n.max(-1)).map(move |k| self.add_weeks(k))
    }

    /// Compact `YYYYWW` integer form used by FluView and Epidata.
    pub fn as_yyyyww(self) -> u32 {
        self.year as u32 * 100 + self.week as u32
    }
}

impl fmt::Display for Epiweek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}w{:02}", self.year, self.week)
    }
}

impl FromStr for Epiweek {
    type Err = Error;

    /// Accepts `2015w40`, `2015-W40`, `2015W40` and `201540`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("malformed epiweek {s:?}"));
        let (y, w) = if let Some(pos) = s.find(['w', 'W']) {
            let y = s[..pos].trim_end_matches('-');
            (y, &s[pos + 1..])
        } else if s.len() == 6 && s.bytes().all(|b| b.is_ascii_digit()) {
            (&s[..4], &s[4..])
        } else {
            return Err(bad());
        };
        if y.is_empty() || w.is_empty() || !y.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !w.bytes().all(|b| b.is_ascii_digit()) || w.len() > 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let week: u8 = w.parse().map_err(|_| bad())?;
        Epiweek::new(year, week)
    }
}

impl TryFrom<String> for Epiweek {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Epiweek> for String {
    fn from(w: Epiweek) -> String {
        w.to_string()
    }
}

/// Whether `week` is an in-season surveillance week (weeks 40..=53 and 1..=18).
pub fn in_season(week: Epiweek) -> bool {
    week.week >= 40 || week.week <= 18
}

/// An influenza season, identified by the calendar year in which it starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Season {
    pub start_year: i32,
}

impl Season {
    pub fn new(start_year: i32) -> Self {
        Self { start_year }
    }

    /// First in-season week (week 40 of the start year).
    pub fn first_week(self) -> Epiweek {
        Epiweek {
            year: self.start_year,
            week: 40,
        }
    }

    /// Last in-season week (week 18 of the following year).
    pub fn last_week(self) -> Epiweek {
        Epiweek {
            year: self.start_year + 1,
            week: 18,
        }
    }

    /// All in-season weeks of this season, in order.
    pub fn weeks(self) -> Vec<Epiweek> {
        self.first_week().range_inclusive(self.last_week()).collect()
    }

    pub fn contains(self, week: Epiweek) -> bool {
        season_of(week).ok() == Some(self)
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.start_year, (self.start_year + 1).rem_euclid(100))
    }
}

impl FromStr for Season {
    type Err = Error;

    /// Parses `2014-15` (or `2014-2015`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed season {s:?}"));
        let (a, b) = s.trim().split_once('-').ok_or_else(bad)?;
        if a.len() != 4 || !a.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let start: i32 = a.parse().map_err(|_| bad())?;
        let end: i32 = b.parse().map_err(|_| bad())?;
        let expected = match b.len() {
            2 => (start + 1).rem_euclid(100),
            4 => start + 1,
            _ => return Err(bad()),
        };
        if end != expected {
            return Err(bad());
        }
        Ok(Season::new(start))
    }
}

impl TryFrom<String> for Season {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Season> for String {
    fn from(s: Season) -> String {
        s.to_string()
    }
}

/// Season containing an in-season week.
pub fn season_of(week: Epiweek) -> Result<Season> {
    if week.week >= 40 {
        Ok(Season::new(week.year))
    } else if week.week <= 18 {
        Ok(Season::new(week.year - 1))
    } else {
        Err(Error::Domain(format!("{week} is outside the influenza season")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ew(y: i32, w: u8) -> Epiweek {
        Epiweek::new(y, w).unwrap()
    }

    #[test]
    fn known_53_week_years() {
        let long: Vec<i32> = (2000..=2025).filter(|&y| weeks_in_year(y) == 53).collect();
        assert_eq!(long, vec![2003, 2008, 2014, 2020, 2025]);
    }

    #[test]
    fn known_start_dates() {
        // 2015w01 starts Sunday 2015-01-04; 2014w01 starts 2013-12-29.
        assert_eq!(year_start(2015), NaiveDate::from_ymd_opt(2015, 1, 4).unwrap());
        assert_eq!(year_start(2014), NaiveDate::from_ymd_opt(2013, 12, 29).unwrap());
        assert_eq!(ew(2015, 40).start_date(), NaiveDate::from_ymd_opt(2015, 10, 4).unwrap());
    }

    #[test]
    fn week_53_only_in_long_years() {
        assert!(Epiweek::new(2014, 53).is_ok());
        assert!(Epiweek::new(2015, 53).is_err());
        assert!(Epiweek::new(2015, 0).is_err());
    }

    #[test]
    fn successor_rolls_over() {
        assert_eq!(ew(2015, 52).succ(), ew(2016, 1));
        assert_eq!(ew(2014, 52).succ(), ew(2014, 53));
        assert_eq!(ew(2014, 53).succ(), ew(2015, 1));
        assert_eq!(ew(2015, 1).pred(), ew(2014, 53));
        assert_eq!(ew(2015, 40).add_weeks(-2), ew(2015, 38));
        assert_eq!(ew(2014, 1).weeks_until(ew(2015, 1)), 53);
    }

    #[test]
    fn in_season_examples() {
        assert!(in_season(ew(2014, 53)));
        assert!(!in_season(ew(2015, 19)));
        assert!(in_season(ew(2012, 40)));
        assert!(!in_season(ew(2012, 39)));
        assert!(in_season(ew(2013, 18)));
    }

    #[test]
    fn season_of_examples() {
        assert_eq!(season_of(ew(2014, 40)).unwrap().to_string(), "2014-15");
        assert_eq!(season_of(ew(2015, 18)).unwrap().to_string(), "2014-15");
        assert_eq!(season_of(ew(2014, 53)).unwrap().to_string(), "2014-15");
        assert!(matches!(season_of(ew(2015, 25)), Err(Error::Domain(_))));
        assert_eq!(Season::new(1999).to_string(), "1999-00");
    }

    #[test]
    fn season_week_counts() {
        let train: usize = (2010..2015).map(|y| Season::new(y).weeks().len()).sum();
        let test: usize = (2015..2019).map(|y| Season::new(y).weeks().len()).sum();
        assert_eq!(train, 156);
        assert_eq!(test, 124);
    }

    #[test]
    fn in_season_is_two_arcs_per_year() {
        for year in 2000..2030 {
            let flags: Vec<bool> = (1..=weeks_in_year(year)).map(|w| in_season(ew(year, w))).collect();
            let transitions = flags.windows(2).filter(|p| p[0] != p[1]).count();
            assert_eq!(transitions, 2, "year {year}");
            assert!(flags[0] && *flags.last().unwrap());
        }
    }

    #[test]
    fn parse_forms() {
        assert_eq!("2015w40".parse::<Epiweek>().unwrap(), ew(2015, 40));
        assert_eq!("2015-W07".parse::<Epiweek>().unwrap(), ew(2015, 7));
        assert_eq!("201453".parse::<Epiweek>().unwrap(), ew(2014, 53));
        assert!("2015w53".parse::<Epiweek>().is_err());
        assert!("w40".parse::<Epiweek>().is_err());
        assert!("2015w+4".parse::<Epiweek>().is_err());
        assert_eq!("2014-15".parse::<Season>().unwrap(), Season::new(2014));
        assert_eq!("1999-2000".parse::<Season>().unwrap(), Season::new(1999));
        assert!("2014-16".parse::<Season>().is_err());
    }

    #[test]
    fn date_round_trip() {
        let mut w = ew(2000, 1);
        for _ in 0..1500 {
            assert_eq!(Epiweek::from_date(w.start_date()), w);
            assert_eq!(Epiweek::from_date(w.start_date() + Duration::days(6)), w);
            let n = w.succ();
            assert!(n > w);
            w = n;
        }
    }
}
