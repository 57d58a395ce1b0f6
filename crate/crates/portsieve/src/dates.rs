//! Month-granularity calendar arithmetic.
//!
//! All panel data is keyed by calendar month. A [`Month`] is stored as a
//! count of months since year 0 so ordering, differencing and window
//! arithmetic are plain integer operations. Canonical text form is
//! `YYYY-MM`; day-level timestamps (news articles, analyst revisions) use
//! [`chrono::NaiveDate`] and are mapped onto their containing month.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// A calendar month, first-of-month canonical.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month(i32);

/// Error from parsing a `YYYY-MM` month literal.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid month `{0}`: expected YYYY-MM with month in 01..=12")]
pub struct MonthParseError(pub String);

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Month> {
        if (1..=12).contains(&month) {
            Some(Month(year * 12 + month as i32 - 1))
        } else {
            None
        }
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// 1-based month of year.
    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn add_months(self, delta: i32) -> Month {
        Month(self.0 + delta)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: Month) -> i32 {
        self.0 - other.0
    }

    pub fn next(self) -> Month {
        self.add_months(1)
    }

    pub fn prev(self) -> Month {
        self.add_months(-1)
    }

    /// First calendar day of the month.
    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year(), self.month(), 1).expect("valid first-of-month")
    }

    /// Last calendar day of the month.
    pub fn last_day(self) -> NaiveDate {
        self.next().first_day().pred_opt().expect("valid month end")
    }

    pub fn containing(date: NaiveDate) -> Month {
        Month::new(date.year(), date.month()).expect("chrono months are 1..=12")
    }

    /// Inclusive range of months `[start, end]`.
    pub fn range_inclusive(start: Month, end: Month) -> impl Iterator<Item = Month> {
        (start.0..=end.0).map(Month)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl fmt::Debug for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Month({self})")
    }
}

impl FromStr for Month {
    type Err = MonthParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MonthParseError(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(err());
        }
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        Month::new(year, month).ok_or_else(err)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_crosses_year_boundaries() {
        let m = Month::new(2019, 12).unwrap();
        assert_eq!(m.next(), Month::new(2020, 1).unwrap());
        assert_eq!(m.next().prev(), m);
        assert_eq!(Month::new(2020, 3).unwrap().months_since(m), 3);
        assert_eq!(m.add_months(-12), Month::new(2018, 12).unwrap());
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["2020-01", "1999-12", "0007-06"] {
            let m: Month = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("2020-13".parse::<Month>().is_err());
        assert!("2020-1".parse::<Month>().is_err());
        assert!("garbage".parse::<Month>().is_err());
    }

    #[test]
    fn month_end_days() {
        assert_eq!(
            Month::new(2020, 2).unwrap().last_day(),
            NaiveDate::from_ymd_opt(2020, 2, 29).unwrap()
        );
        assert_eq!(
            Month::new(2021, 2).unwrap().last_day(),
            NaiveDate::from_ymd_opt(2021, 2, 28).unwrap()
        );
    }
}
