//! Calendar binning for the seasonal background.
//!
//! Model time is measured in hours since the start of the observation window.
//! Each instant falls into a local calendar cell (hour-of-day 1..=24,
//! weekday 1..=7 with Monday = 1, month 1..=12). The window is cut into
//! maximal segments of constant cell, from which the 24×7×12 exposure tensor
//! follows exactly.
//!
//! Local clock hours start on UTC quarter-hours for every zone whose offset
//! is a whole number of quarter hours, which covers all zones in current use.

use std::fmt;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Offset, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use thiserror::Error;

pub const HOURS: usize = 24;
pub const WEEKDAYS: usize = 7;
pub const MONTHS: usize = 12;
pub const NUM_CELLS: usize = HOURS * WEEKDAYS * MONTHS;

const MICROS_PER_HOUR: f64 = 3.6e9;
const QUARTER_SECONDS: i64 = 900;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalendarError {
    #[error("observation window is empty: start {start} is not before end {end}")]
    EmptyWindow { start: String, end: String },
    #[error("unknown time zone {0:?}")]
    UnknownTimeZone(String),
    #[error("time {time} h outside the observation window of {horizon} h")]
    OutsideWindow { time: f64, horizon: f64 },
}

/// Local calendar cell; all fields are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CalendarCell {
    pub hour: u8,
    pub wday: u8,
    pub month: u8,
}

impl CalendarCell {
    /// Flat 0-based index into a 24×7×12 tensor (hour major, month minor).
    pub fn index(&self) -> usize {
        ((self.hour as usize - 1) * WEEKDAYS + (self.wday as usize - 1)) * MONTHS + (self.month as usize - 1)
    }

    pub fn from_index(idx: usize) -> Self {
        let month = idx % MONTHS;
        let wday = (idx / MONTHS) % WEEKDAYS;
        let hour = idx / (MONTHS * WEEKDAYS);
        Self { hour: hour as u8 + 1, wday: wday as u8 + 1, month: month as u8 + 1 }
    }

    fn of_instant(instant: DateTime<Utc>, tz: Tz) -> Self {
        let local = instant.with_timezone(&tz);
        Self {
            hour: local.hour() as u8 + 1,
            wday: local.weekday().number_from_monday() as u8,
            month: local.month() as u8,
        }
    }
}

impl fmt::Display for CalendarCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(h={}, wday={}, month={})", self.hour, self.wday, self.month)
    }
}

pub fn parse_tz(name: &str) -> Result<Tz, CalendarError> {
    name.parse::<Tz>().map_err(|_| CalendarError::UnknownTimeZone(name.to_string()))
}

/// Converts a local wall-clock time to an instant. Times skipped by a
/// daylight-saving jump keep the pre-transition offset, which lands them in
/// the hour after the jump; repeated times resolve to their first occurrence.
pub fn resolve_local(naive: NaiveDateTime, tz: Tz) -> DateTime<Utc> {
    match tz.from_local_datetime(&naive) {
        chrono::LocalResult::Single(dt) => dt.with_timezone(&Utc),
        chrono::LocalResult::Ambiguous(a, b) => a.with_timezone(&Utc).min(b.with_timezone(&Utc)),
        chrono::LocalResult::None => {
            let before = tz
                .from_local_datetime(&(naive - Duration::hours(6)))
                .earliest()
                .map(|dt| dt.offset().fix())
                .unwrap_or_else(|| tz.offset_from_utc_datetime(&naive).fix());
            Utc.from_utc_datetime(&(naive - Duration::seconds(before.local_minus_utc() as i64)))
        }
    }
}

fn hours_between(start: DateTime<Utc>, instant: DateTime<Utc>) -> f64 {
    micros_between(start, instant) as f64 / MICROS_PER_HOUR
}

fn micros_between(start: DateTime<Utc>, instant: DateTime<Utc>) -> i64 {
    (instant - start).num_microseconds().expect("window shorter than 290k years")
}

fn instant_after(start: DateTime<Utc>, hours: f64) -> DateTime<Utc> {
    start + Duration::microseconds((hours * MICROS_PER_HOUR).round() as i64)
}

/// Calendar cell of the instant `t` hours after `start`.
pub fn calendar_bins(t: f64, start: DateTime<Utc>, tz: Tz) -> CalendarCell {
    CalendarCell::of_instant(instant_after(start, t), tz)
}

/// Observed hours per calendar cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTensor {
    hours: Vec<f64>,
}

impl ExposureTensor {
    pub fn from_hours(hours: Vec<f64>) -> Self {
        assert_eq!(hours.len(), NUM_CELLS);
        Self { hours }
    }

    /// Exposure of a cell given 1-based hour, weekday and month.
    pub fn get(&self, hour: usize, wday: usize, month: usize) -> f64 {
        self.hours[CalendarCell { hour: hour as u8, wday: wday as u8, month: month as u8 }.index()]
    }

    pub fn by_index(&self, idx: usize) -> f64 {
        self.hours[idx]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.hours
    }

    pub fn total(&self) -> f64 {
        self.hours.iter().sum()
    }

    fn marginal(&self, len: usize, key: impl Fn(&CalendarCell) -> usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (idx, &e) in self.hours.iter().enumerate() {
            out[key(&CalendarCell::from_index(idx))] += e;
        }
        out
    }

    pub fn hour_totals(&self) -> Vec<f64> {
        self.marginal(HOURS, |c| c.hour as usize - 1)
    }

    pub fn wday_totals(&self) -> Vec<f64> {
        self.marginal(WEEKDAYS, |c| c.wday as usize - 1)
    }

    pub fn month_totals(&self) -> Vec<f64> {
        self.marginal(MONTHS, |c| c.month as usize - 1)
    }

    fn normalized(v: Vec<f64>) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    /// `w^{(hour)}`, summing to one.
    pub fn hour_weights(&self) -> Vec<f64> {
        Self::normalized(self.hour_totals())
    }

    pub fn wday_weights(&self) -> Vec<f64> {
        Self::normalized(self.wday_totals())
    }

    pub fn month_weights(&self) -> Vec<f64> {
        Self::normalized(self.month_totals())
    }
}

/// The observation window cut into segments of constant calendar cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarGrid {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    tz: Tz,
    horizon: f64,
    seg_start: Vec<f64>,
    seg_cell: Vec<u16>,
    exposure: ExposureTensor,
}

impl CalendarGrid {
    /// Window given as local wall-clock times in `tz`.
    pub fn from_local(start: NaiveDateTime, end: NaiveDateTime, tz: Tz) -> Result<Self, CalendarError> {
        Self::new(resolve_local(start, tz), resolve_local(end, tz), tz)
    }

    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>, tz: Tz) -> Result<Self, CalendarError> {
        if start >= end {
            return Err(CalendarError::EmptyWindow { start: start.to_rfc3339(), end: end.to_rfc3339() });
        }
        let mut seg_start = Vec::new();
        let mut seg_cell: Vec<u16> = Vec::new();
        let mut micros = vec![0i64; NUM_CELLS];

        let mut cursor = start;
        while cursor < end {
            let ts = cursor.timestamp();
            let next_quarter = ts - ts.rem_euclid(QUARTER_SECONDS) + QUARTER_SECONDS;
            let next = DateTime::<Utc>::from_timestamp(next_quarter, 0).expect("timestamp in range").min(end);
            let cell = CalendarCell::of_instant(cursor, tz).index() as u16;
            micros[cell as usize] += micros_between(cursor, next);
            if seg_cell.last() != Some(&cell) {
                seg_start.push(hours_between(start, cursor));
                seg_cell.push(cell);
            }
            cursor = next;
        }
        let exposure = ExposureTensor::from_hours(micros.iter().map(|&u| u as f64 / MICROS_PER_HOUR).collect());
        Ok(Self { start, end, tz, horizon: hours_between(start, end), seg_start, seg_cell, exposure })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn tz(&self) -> Tz {
        self.tz
    }

    /// Window length in hours.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exposure(&self) -> &ExposureTensor {
        &self.exposure
    }

    pub fn num_segments(&self) -> usize {
        self.seg_start.len()
    }

    /// Segment index containing `t` (clamped to the window).
    #[inline]
    pub fn segment_at(&self, t: f64) -> usize {
        self.seg_start.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Flat cell index at time `t` hours.
    #[inline]
    pub fn cell_index_at(&self, t: f64) -> usize {
        self.seg_cell[self.segment_at(t)] as usize
    }

    pub fn cell_at(&self, t: f64) -> Result<CalendarCell, CalendarError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(CalendarError::OutsideWindow { time: t, horizon: self.horizon });
        }
        Ok(CalendarCell::from_index(self.cell_index_at(t)))
    }

    /// `(start, end, cell index)` for each segment, in time order.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.seg_start.len()).map(move |i| {
            let end = self.seg_start.get(i + 1).copied().unwrap_or(self.horizon);
            (self.seg_start[i], end, self.seg_cell[i] as usize)
        })
    }

    /// Wall-clock instant `t` hours into the window.
    pub fn instant(&self, t: f64) -> DateTime<Utc> {
        instant_after(self.start, t)
    }

    pub fn hours_since_start(&self, instant: DateTime<Utc>) -> f64 {
        hours_between(self.start, instant)
    }
}

/// 24×7×12 exposure tensor of a window, in hours.
pub fn exposure_tensor(start: DateTime<Utc>, end: DateTime<Utc>, tz: Tz) -> Result<ExposureTensor, CalendarError> {
    Ok(CalendarGrid::new(start, end, tz)?.exposure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn naive(y: i32, mo: u32, d: u32, h: u32, mi: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, mo, d).unwrap().and_hms_opt(h, mi, 0).unwrap()
    }

    /// Minute-by-minute accumulation, independent of the segment sweep.
    fn brute_force_exposure(start: DateTime<Utc>, end: DateTime<Utc>, tz: Tz) -> Vec<f64> {
        let mut out = vec![0.0; NUM_CELLS];
        let mut t = start;
        while t < end {
            let next = (t + Duration::minutes(1)).min(end);
            out[CalendarCell::of_instant(t, tz).index()] += (next - t).num_seconds() as f64 / 3600.0;
            t = next;
        }
        out
    }

    #[test]
    fn bin_examples() {
        let tz: Tz = "UTC".parse().unwrap();
        let start = resolve_local(naive(2021, 1, 1, 0, 0), tz);
        assert_eq!(calendar_bins(0.0, start, tz), CalendarCell { hour: 1, wday: 5, month: 1 });
        let t = hours_between(start, resolve_local(naive(2021, 3, 15, 14, 30), tz));
        assert_eq!(calendar_bins(t, start, tz), CalendarCell { hour: 15, wday: 1, month: 3 });
    }

    #[test]
    fn local_binning_follows_zone() {
        let tz: Tz = "Europe/Berlin".parse().unwrap();
        let start = resolve_local(naive(2021, 3, 15, 14, 30), tz);
        assert_eq!(calendar_bins(0.0, start, tz), CalendarCell { hour: 15, wday: 1, month: 3 });
    }

    #[test]
    fn full_year_exposure() {
        let tz: Tz = "UTC".parse().unwrap();
        let grid = CalendarGrid::from_local(naive(2021, 1, 1, 0, 0), naive(2022, 1, 1, 0, 0), tz).unwrap();
        assert_eq!(grid.horizon(), 8760.0);
        assert_eq!(grid.exposure().total(), 8760.0);
        for h in grid.exposure().hour_totals() {
            assert_eq!(h, 365.0);
        }
        let w: f64 = grid.exposure().hour_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert_eq!(grid.num_segments(), 8760);
    }

    #[test]
    fn one_day_window() {
        let tz: Tz = "Asia/Kolkata".parse().unwrap();
        let grid = CalendarGrid::from_local(naive(2021, 6, 2, 0, 0), naive(2021, 6, 3, 0, 0), tz).unwrap();
        let nonzero: Vec<f64> = grid.exposure().as_slice().iter().copied().filter(|&e| e > 0.0).collect();
        assert_eq!(nonzero.len(), 24);
        assert!(nonzero.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn spring_forward_loses_an_hour() {
        let tz: Tz = "Europe/London".parse().unwrap();
        let grid = CalendarGrid::from_local(naive(2021, 3, 27, 0, 0), naive(2021, 3, 29, 0, 0), tz).unwrap();
        assert_eq!(grid.horizon(), 47.0);
        assert_eq!(grid.exposure().total(), 47.0);
        let brute = brute_force_exposure(grid.start(), grid.end(), tz);
        for (a, b) in grid.exposure().as_slice().iter().zip(&brute) {
            assert!((a - b).abs() < 1.0 / 60.0);
        }
        // 01:xx local (bin 2) is skipped on the Sunday.
        assert_eq!(grid.exposure().get(2, 7, 3), 0.0);
        assert_eq!(grid.exposure().get(3, 7, 3), 1.0);
    }

    #[test]
    fn gap_and_repeat_resolution() {
        let tz: Tz = "Europe/London".parse().unwrap();
        // 01:30 does not exist on 2021-03-28; it lands in the 02:xx hour.
        let gap = resolve_local(naive(2021, 3, 28, 1, 30), tz);
        assert_eq!(gap.with_timezone(&tz).hour(), 2);
        // 01:30 happens twice on 2021-10-31; the first is in BST (00:30 UTC).
        let rep = resolve_local(naive(2021, 10, 31, 1, 30), tz);
        assert_eq!(rep, Utc.from_utc_datetime(&naive(2021, 10, 31, 0, 30)));
    }

    #[test]
    fn cell_index_round_trip() {
        for idx in 0..NUM_CELLS {
            assert_eq!(CalendarCell::from_index(idx).index(), idx);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exposure_matches_minute_oracle(
            day in 0i64..330,
            len_h in 1i64..400,
            offset_min in 0i64..60,
            zone in 0usize..4,
        ) {
            let zones = ["Europe/London", "America/New_York", "Asia/Kolkata", "Australia/Adelaide"];
            let tz: Tz = zones[zone].parse().unwrap();
            let start = Utc.from_utc_datetime(&naive(2021, 1, 1, 0, 0)) + Duration::days(day) + Duration::minutes(offset_min);
            let end = start + Duration::hours(len_h) + Duration::minutes(offset_min / 2);
            let grid = CalendarGrid::new(start, end, tz).unwrap();
            let brute = brute_force_exposure(start, end, tz);
            for (a, b) in grid.exposure().as_slice().iter().zip(&brute) {
                prop_assert!((a - b).abs() <= 1.0 / 60.0 + 1e-12);
            }
            prop_assert!((grid.exposure().total() - grid.horizon()).abs() < 1e-9);
        }

        #[test]
        fn bins_constant_within_clock_hour(day in 0i64..364, hour in 0i64..24, m1 in 0i64..60, m2 in 0i64..60) {
            let tz: Tz = "UTC".parse().unwrap();
            let start = Utc.from_utc_datetime(&naive(2021, 1, 1, 0, 0));
            let base = (day * 24 + hour) as f64;
            prop_assert_eq!(
                calendar_bins(base + m1 as f64 / 60.0, start, tz),
                calendar_bins(base + m2 as f64 / 60.0, start, tz)
            );
        }
    }
}
