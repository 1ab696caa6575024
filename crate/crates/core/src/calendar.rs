//! Calendar conventions shared by every stage: holiday categories, the
//! week-of-year index and the Jan 1 – Mar 3 pre-outbreak window.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

/// Number of week-of-year effects. ISO week 53 is folded into week 52.
pub const WEEKS_PER_YEAR: u32 = 52;

/// Holiday category of a single date. Exactly one value per date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolidayType {
    None,
    Generic,
    GapToSunday,
    GapToSaturday,
    Christmas,
    NewYear,
    Dec31,
}

impl HolidayType {
    /// The six non-trivial categories, in design-matrix column order.
    pub const EFFECTS: [HolidayType; 6] = [
        HolidayType::Generic,
        HolidayType::GapToSunday,
        HolidayType::GapToSaturday,
        HolidayType::Christmas,
        HolidayType::NewYear,
        HolidayType::Dec31,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HolidayType::None => "none",
            HolidayType::Generic => "generic",
            HolidayType::GapToSunday => "gap_to_sunday",
            HolidayType::GapToSaturday => "gap_to_saturday",
            HolidayType::Christmas => "christmas",
            HolidayType::NewYear => "new_year",
            HolidayType::Dec31 => "dec31",
        }
    }

    /// Category implied by the date alone (Dec 25, Jan 1, Dec 31).
    pub fn fixed_date(date: NaiveDate) -> Option<HolidayType> {
        match (date.month(), date.day()) {
            (12, 25) => Some(HolidayType::Christmas),
            (1, 1) => Some(HolidayType::NewYear),
            (12, 31) => Some(HolidayType::Dec31),
            _ => None,
        }
    }
}

impl fmt::Display for HolidayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HolidayType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => HolidayType::None,
            "generic" => HolidayType::Generic,
            "gap_to_sunday" => HolidayType::GapToSunday,
            "gap_to_saturday" => HolidayType::GapToSaturday,
            "christmas" => HolidayType::Christmas,
            "new_year" => HolidayType::NewYear,
            "dec31" => HolidayType::Dec31,
            other => return Err(format!("unknown holiday type `{other}`")),
        })
    }
}

/// Explicit per-country holiday lists keyed by category.
///
/// Christmas, New Year's Day and Dec 31 are also recognised by date, so a
/// calendar only has to list generic holidays and gap days.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    #[serde(default)]
    pub generic: Vec<NaiveDate>,
    #[serde(default)]
    pub gap_to_sunday: Vec<NaiveDate>,
    #[serde(default)]
    pub gap_to_saturday: Vec<NaiveDate>,
    #[serde(default)]
    pub christmas: Vec<NaiveDate>,
    #[serde(default)]
    pub new_year: Vec<NaiveDate>,
    #[serde(default)]
    pub dec31: Vec<NaiveDate>,
}

impl HolidayCalendar {
    /// Resolve the category of `date`.
    ///
    /// Fixed-date categories win over list membership; among the lists the
    /// order is christmas, new_year, dec31, generic, gap_to_sunday,
    /// gap_to_saturday.
    pub fn classify(&self, date: NaiveDate) -> HolidayType {
        if let Some(fixed) = HolidayType::fixed_date(date) {
            return fixed;
        }
        let lists = [
            (&self.christmas, HolidayType::Christmas),
            (&self.new_year, HolidayType::NewYear),
            (&self.dec31, HolidayType::Dec31),
            (&self.generic, HolidayType::Generic),
            (&self.gap_to_sunday, HolidayType::GapToSunday),
            (&self.gap_to_saturday, HolidayType::GapToSaturday),
        ];
        lists.iter().find(|(list, _)| list.contains(&date)).map(|(_, kind)| *kind).unwrap_or(HolidayType::None)
    }

    /// Gap days implied by the generic list: a working Monday followed by a
    /// Tuesday holiday, and a working Friday preceded by a Thursday holiday.
    pub fn derive_gap_days(&mut self) {
        let holidays: Vec<NaiveDate> = self.generic.clone();
        let is_holiday = |d: NaiveDate| holidays.contains(&d) || HolidayType::fixed_date(d).is_some();
        for &h in &holidays {
            match h.weekday() {
                Weekday::Tue => {
                    let monday = h.pred_opt().expect("date in range");
                    if !is_holiday(monday) && !self.gap_to_sunday.contains(&monday) {
                        self.gap_to_sunday.push(monday);
                    }
                }
                Weekday::Thu => {
                    let friday = h.succ_opt().expect("date in range");
                    if !is_holiday(friday) && !self.gap_to_saturday.contains(&friday) {
                        self.gap_to_saturday.push(friday);
                    }
                }
                _ => {}
            }
        }
        self.gap_to_sunday.sort();
        self.gap_to_saturday.sort();
    }

    /// Number of listed dates per category.
    pub fn counts(&self) -> BTreeMap<HolidayType, usize> {
        BTreeMap::from([
            (HolidayType::Generic, self.generic.len()),
            (HolidayType::GapToSunday, self.gap_to_sunday.len()),
            (HolidayType::GapToSaturday, self.gap_to_saturday.len()),
            (HolidayType::Christmas, self.christmas.len()),
            (HolidayType::NewYear, self.new_year.len()),
            (HolidayType::Dec31, self.dec31.len()),
        ])
    }
}

/// ISO-8601 week number with week 53 merged into week 52.
pub fn week_of_year(date: NaiveDate) -> u32 {
    date.iso_week().week().min(WEEKS_PER_YEAR)
}

/// (calendar year, folded week) key used for the shock-year interactions and
/// weekly aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearWeek {
    pub year: i32,
    pub week: u32,
}

impl YearWeek {
    pub fn of(date: NaiveDate) -> Self {
        YearWeek { year: date.year(), week: week_of_year(date) }
    }
}

impl fmt::Display for YearWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// True when `date` falls in Jan 1 ..= Mar 3 of its own year.
pub fn in_pre_outbreak_window(date: NaiveDate) -> bool {
    let end = NaiveDate::from_ymd_opt(date.year(), 3, 3).expect("valid date");
    date <= end
}

/// Weekday as a short lowercase tag (`mon`..`sun`).
pub fn weekday_tag(day: Weekday) -> &'static str {
    match day {
        Weekday::Mon => "mon",
        Weekday::Tue => "tue",
        Weekday::Wed => "wed",
        Weekday::Thu => "thu",
        Weekday::Fri => "fri",
        Weekday::Sat => "sat",
        Weekday::Sun => "sun",
    }
}
