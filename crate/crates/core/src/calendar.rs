//! Calendar dates used wherever regulations count days and months.
//!
//! [`SimDate`] is a proleptic Gregorian date with a total order and
//! calendar-wise month arithmetic. Adding months clamps the day to the length
//! of the target month, so `2019-01-31 + 1 month = 2019-02-28`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DateError {
    #[error("invalid date {year:04}-{month:02}-{day:02}")]
    OutOfRange { year: i32, month: u32, day: u32 },
    #[error("malformed ISO-8601 date `{0}`")]
    Malformed(String),
}

/// A calendar day. Field order gives the derived `Ord` chronological meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimDate {
    year: i32,
    month: u8,
    day: u8,
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl SimDate {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self, DateError> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(DateError::OutOfRange { year, month, day });
        }
        Ok(Self {
            year,
            month: month as u8,
            day: day as u8,
        })
    }

    /// Convenience constructor for literals known to be valid.
    ///
    /// Panics on an invalid date.
    pub fn ymd(year: i32, month: u32, day: u32) -> Self {
        Self::new(year, month, day).expect("valid calendar date")
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month as u32
    }

    pub fn day(self) -> u32 {
        self.day as u32
    }

    /// Adds (or subtracts, for negative `months`) calendar months, clamping
    /// the day to the target month's length.
    pub fn add_months(self, months: i32) -> Self {
        let zero_based = self.year as i64 * 12 + (self.month as i64 - 1) + months as i64;
        let year = zero_based.div_euclid(12) as i32;
        let month = zero_based.rem_euclid(12) as u32 + 1;
        let day = (self.day as u32).min(days_in_month(year, month));
        Self {
            year,
            month: month as u8,
            day: day as u8,
        }
    }

    pub fn add_years(self, years: i32) -> Self {
        self.add_months(years * 12)
    }

    pub fn add_days(self, days: i64) -> Self {
        Self::from_day_number(self.day_number() + days)
    }

    /// Days since 1970-01-01 (negative before).
    pub fn day_number(self) -> i64 {
        // Civil-from-days inverse, era based (400-year cycles).
        let y = self.year as i64 - if self.month <= 2 { 1 } else { 0 };
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let m = self.month as i64;
        let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + self.day as i64 - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    pub fn from_day_number(days: i64) -> Self {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
        let year = (yoe + era * 400 + if month <= 2 { 1 } else { 0 }) as i32;
        Self { year, month, day }
    }

    /// Signed number of days from `self` to `other`.
    pub fn days_until(self, other: SimDate) -> i64 {
        other.day_number() - self.day_number()
    }
}

impl fmt::Display for SimDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for SimDate {
    type Err = DateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || DateError::Malformed(s.to_string());
        let mut parts = s.trim().splitn(3, '-');
        let (y, m, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(y), Some(m), Some(d)) => (y, m, d),
            _ => return Err(malformed()),
        };
        if y.len() != 4 || m.len() != 2 || d.len() != 2 {
            return Err(malformed());
        }
        let year = y.parse().map_err(|_| malformed())?;
        let month = m.parse().map_err(|_| malformed())?;
        let day = d.parse().map_err(|_| malformed())?;
        SimDate::new(year, month, day)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_addition_clamps_day() {
        assert_eq!(SimDate::ymd(2019, 1, 31).add_months(1), SimDate::ymd(2019, 2, 28));
        assert_eq!(SimDate::ymd(2020, 1, 31).add_months(1), SimDate::ymd(2020, 2, 29));
        assert_eq!(SimDate::ymd(2017, 9, 26).add_months(12), SimDate::ymd(2018, 9, 26));
        assert_eq!(SimDate::ymd(2019, 2, 28).add_months(-6), SimDate::ymd(2018, 8, 28));
        assert_eq!(SimDate::ymd(2019, 3, 31).add_months(-1), SimDate::ymd(2019, 2, 28));
    }

    #[test]
    fn rejects_invalid_dates() {
        assert!(SimDate::new(2019, 2, 29).is_err());
        assert!(SimDate::new(2019, 13, 1).is_err());
        assert!(SimDate::new(2019, 4, 31).is_err());
        assert!("2019-6-1".parse::<SimDate>().is_err());
        assert!("not a date".parse::<SimDate>().is_err());
    }

    #[test]
    fn iso_round_trip() {
        let d: SimDate = "2017-09-26".parse().unwrap();
        assert_eq!(d, SimDate::ymd(2017, 9, 26));
        assert_eq!(d.to_string(), "2017-09-26");
    }

    #[test]
    fn epoch_day_number() {
        assert_eq!(SimDate::ymd(1970, 1, 1).day_number(), 0);
        assert_eq!(SimDate::ymd(1969, 12, 31).day_number(), -1);
        assert_eq!(SimDate::ymd(2000, 3, 1).day_number(), 11_017);
    }
}
