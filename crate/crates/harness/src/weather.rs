//! City list, archive fetching and fixture replay.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use chrono::Datelike;
use llmexpert_core::weather::{archive_query, fixture_name, parse_archive, CityConfig, CitySeries, WeatherError, YearWindow};
use llmexpert_core::GatewayError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::gateway::{agent, classify, Attempt, RetryPolicy};

pub const DEFAULT_ARCHIVE: &str = "https://archive-api.open-meteo.com/v1/archive";
const CONCURRENT_FETCHES: usize = 4;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{city}: {source}")]
    Invalid { city: String, source: WeatherError },
    #[error("{city}: {source}")]
    Http { city: String, source: GatewayError },
    #[error("offline and no fixture at {0}")]
    NotCached(PathBuf),
    #[error("unknown city `{0}`")]
    UnknownCity(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitiesFile {
    /// Absent means the ten Decembers before the current year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<YearWindow>,
    pub cities: Vec<CityConfig>,
}

impl CitiesFile {
    pub fn load(path: &Path) -> Result<Self, FetchError> {
        let bytes = std::fs::read(path).map_err(|source| FetchError::Io {
            path: path.into(),
            source,
        })?;
        let file: CitiesFile = serde_json::from_slice(&bytes).map_err(|source| FetchError::Config {
            path: path.into(),
            source,
        })?;
        for c in &file.cities {
            c.validate().map_err(|source| FetchError::Invalid {
                city: c.name.clone(),
                source,
            })?;
        }
        Ok(file)
    }

    pub fn window(&self) -> YearWindow {
        self.window
            .unwrap_or_else(|| YearWindow::preceding(chrono::Utc::now().year()))
    }

    pub fn find(&self, slug: &str) -> Result<&CityConfig, FetchError> {
        self.cities
            .iter()
            .find(|c| c.slug() == slug)
            .ok_or_else(|| FetchError::UnknownCity(slug.into()))
    }
}

/// Archive access with one fixture file per (city, window).
pub struct WeatherArchive {
    fixtures: PathBuf,
    endpoint: String,
    offline: bool,
    retry: RetryPolicy,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

impl WeatherArchive {
    pub fn new(fixtures: impl Into<PathBuf>, endpoint: Option<String>, offline: bool) -> Self {
        Self {
            fixtures: fixtures.into(),
            endpoint: endpoint.unwrap_or_else(|| DEFAULT_ARCHIVE.into()),
            offline,
            retry: RetryPolicy::default(),
            agent: agent(Duration::from_secs(60)),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn fixture_path(&self, city: &CityConfig, window: &YearWindow) -> PathBuf {
        self.fixtures.join(fixture_name(city, window))
    }

    pub fn fetch_city(&self, city: &CityConfig, window: YearWindow) -> Result<CitySeries, FetchError> {
        let invalid = |source| FetchError::Invalid {
            city: city.name.clone(),
            source,
        };
        city.validate().map_err(invalid)?;
        let path = self.fixture_path(city, &window);
        match std::fs::read(&path) {
            Ok(bytes) => return parse_archive(city, window, &bytes).map_err(invalid),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(FetchError::Io { path, source }),
        }
        if self.offline {
            return Err(FetchError::NotCached(path));
        }
        let query = archive_query(city, &window);
        let bytes = self
            .retry
            .run(|| {
                self.requests.fetch_add(1, Ordering::SeqCst);
                let mut req = self.agent.get(&self.endpoint);
                for (k, v) in &query {
                    req = req.query(*k, v);
                }
                match classify(req.call()) {
                    Attempt::Done(mut resp) => match resp.body_mut().with_config().limit(64 << 20).read_to_vec() {
                        Ok(b) => Attempt::Done(b),
                        Err(e) => Attempt::Retry {
                            rate_limited: false,
                            message: e.to_string(),
                        },
                    },
                    Attempt::Retry { rate_limited, message } => Attempt::Retry { rate_limited, message },
                    Attempt::Fatal(e) => Attempt::Fatal(e),
                }
            })
            .map_err(|source| FetchError::Http {
                city: city.name.clone(),
                source,
            })?;
        let series = parse_archive(city, window, &bytes).map_err(invalid)?;
        write_atomic(&path, &bytes).map_err(|source| FetchError::Io { path, source })?;
        Ok(series)
    }

    /// Fetches every city, a few at a time, preserving input order.
    pub fn fetch_all(&self, cities: &[CityConfig], window: YearWindow) -> Vec<Result<CitySeries, FetchError>> {
        let mut out = Vec::with_capacity(cities.len());
        for chunk in cities.chunks(CONCURRENT_FETCHES) {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|c| s.spawn(move || self.fetch_city(c, window)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("fetch thread panicked"))
                    .collect()
            });
            out.extend(results);
        }
        out
    }
}
