//! December daily weather per city, parsed from open-meteo archive payloads.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elicitation::WeatherVariable;

pub const TEMPERATURE_FIELD: &str = "temperature_2m_mean";
pub const PRECIPITATION_FIELD: &str = "precipitation_sum";
pub const DECEMBER_DAYS: usize = 31;
/// Decembers in the default history window.
pub const DEFAULT_YEARS: i32 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeatherError {
    #[error("city `{0}` has invalid coordinates")]
    InvalidCoordinates(String),
    #[error("year window {first}..={last} is empty")]
    EmptyWindow { first: i32, last: i32 },
    #[error("malformed archive payload: {0}")]
    Malformed(String),
    #[error("{date}: temperature is missing or not finite")]
    NonFiniteTemperature { date: String },
    #[error("{date}: precipitation {value} is missing or negative")]
    InvalidPrecipitation { date: String, value: f64 },
    #[error("date `{0}` is outside the requested Decembers")]
    OutOfRange(String),
    #[error("December {year} has {count} daily rows, expected 31")]
    IncompleteMonth { year: i32, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationClass {
    Small,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityConfig {
    pub name: String,
    pub country: String,
    pub latitude: f64,
    pub longitude: f64,
    pub population: PopulationClass,
}

impl CityConfig {
    /// Lowercase ASCII identifier used in file names and task references.
    pub fn slug(&self) -> String {
        let mut out = String::new();
        for c in self.name.chars() {
            if c.is_ascii_alphanumeric() {
                out.push(c.to_ascii_lowercase());
            } else if !out.ends_with('_') && !out.is_empty() {
                out.push('_');
            }
        }
        out.trim_end_matches('_').to_string()
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        let ok = (-90.0..=90.0).contains(&self.latitude)
            && (-180.0..=180.0).contains(&self.longitude)
            && !self.slug().is_empty();
        if ok {
            Ok(())
        } else {
            Err(WeatherError::InvalidCoordinates(self.name.clone()))
        }
    }
}

/// Decembers `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub first: i32,
    pub last: i32,
}

impl YearWindow {
    pub fn new(first: i32, last: i32) -> Result<Self, WeatherError> {
        if first > last {
            return Err(WeatherError::EmptyWindow { first, last });
        }
        Ok(Self { first, last })
    }

    /// The ten Decembers before `run_year`.
    pub fn preceding(run_year: i32) -> Self {
        Self {
            first: run_year - DEFAULT_YEARS,
            last: run_year - 1,
        }
    }

    pub fn years(&self) -> usize {
        (self.last - self.first + 1).max(0) as usize
    }

    pub fn start_date(&self) -> String {
        format!("{:04}-12-01", self.first)
    }

    pub fn end_date(&self) -> String {
        format!("{:04}-12-31", self.last)
    }
}

/// Query parameters of the single archive request covering `window`.
pub fn archive_query(city: &CityConfig, window: &YearWindow) -> Vec<(&'static str, String)> {
    alloc::vec![
        ("latitude", format!("{}", city.latitude)),
        ("longitude", format!("{}", city.longitude)),
        ("start_date", window.start_date()),
        ("end_date", window.end_date()),
        ("daily", format!("{TEMPERATURE_FIELD},{PRECIPITATION_FIELD}")),
        ("timezone", "UTC".into()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyWeather {
    pub date: String,
    /// Mean temperature at 2 m, degrees Celsius.
    pub temperature: f64,
    /// Daily precipitation sum, millimetres.
    pub precipitation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySeries {
    pub city: CityConfig,
    pub window: YearWindow,
    pub days: Vec<DailyWeather>,
}

#[derive(Deserialize)]
struct ArchivePayload {
    daily: ArchiveDaily,
}

#[derive(Deserialize)]
struct ArchiveDaily {
    time: Vec<String>,
    temperature_2m_mean: Vec<Option<f64>>,
    precipitation_sum: Vec<Option<f64>>,
}

/// (year, month, day) of an ISO date.
fn ymd(date: &str) -> Option<(i32, u32, u32)> {
    let mut parts = date.splitn(3, '-');
    let y = parts.next()?.parse().ok()?;
    let m = parts.next()?.parse().ok()?;
    let d = parts.next()?.parse().ok()?;
    (date.len() == 10).then_some((y, m, d))
}

/// Parses an archive response, keeping the December days of `window`.
/// Days outside December are dropped since one request spans whole years.
pub fn parse_archive(
    city: &CityConfig,
    window: YearWindow,
    payload: &[u8],
) -> Result<CitySeries, WeatherError> {
    let p: ArchivePayload =
        serde_json::from_slice(payload).map_err(|e| WeatherError::Malformed(e.to_string()))?;
    let d = p.daily;
    if d.temperature_2m_mean.len() != d.time.len() || d.precipitation_sum.len() != d.time.len() {
        return Err(WeatherError::Malformed("daily arrays differ in length".into()));
    }
    let mut days = Vec::new();
    for ((date, t), p) in d.time.into_iter().zip(d.temperature_2m_mean).zip(d.precipitation_sum) {
        let (y, m, _) = ymd(&date).ok_or_else(|| WeatherError::Malformed(format!("bad date `{date}`")))?;
        if m != 12 {
            continue;
        }
        if y < window.first || y > window.last {
            return Err(WeatherError::OutOfRange(date));
        }
        days.push(DailyWeather {
            temperature: t.unwrap_or(f64::NAN),
            precipitation: p.unwrap_or(f64::NAN),
            date,
        });
    }
    let series = CitySeries {
        city: city.clone(),
        window,
        days,
    };
    series.validate()?;
    Ok(series)
}

impl CitySeries {
    pub fn validate(&self) -> Result<(), WeatherError> {
        self.city.validate()?;
        YearWindow::new(self.window.first, self.window.last)?;
        let mut counts = alloc::vec![0usize; self.window.years()];
        for day in &self.days {
            let in_range = ymd(&day.date).filter(|&(y, m, d)| {
                m == 12 && (1..=31).contains(&d) && y >= self.window.first && y <= self.window.last
            });
            let Some((y, _, _)) = in_range else {
                return Err(WeatherError::OutOfRange(day.date.clone()));
            };
            if !day.temperature.is_finite() {
                return Err(WeatherError::NonFiniteTemperature { date: day.date.clone() });
            }
            if !(day.precipitation >= 0.0 && day.precipitation.is_finite()) {
                return Err(WeatherError::InvalidPrecipitation {
                    date: day.date.clone(),
                    value: day.precipitation,
                });
            }
            counts[(y - self.window.first) as usize] += 1;
        }
        for (i, &count) in counts.iter().enumerate() {
            if count != DECEMBER_DAYS {
                return Err(WeatherError::IncompleteMonth {
                    year: self.window.first + i as i32,
                    count,
                });
            }
        }
        Ok(())
    }

    /// All December days of the window pooled.
    pub fn values(&self, variable: WeatherVariable) -> Vec<f64> {
        self.days
            .iter()
            .map(|d| match variable {
                WeatherVariable::Temperature => d.temperature,
                WeatherVariable::Precipitation => d.precipitation,
            })
            .collect()
    }
}

/// File name of the cached payload for a city and window.
pub fn fixture_name(city: &CityConfig, window: &YearWindow) -> String {
    format!("{}_{}_{}.json", city.slug(), window.start_date(), window.end_date())
}
