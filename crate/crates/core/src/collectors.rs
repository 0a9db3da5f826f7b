//! Raw activity collection from toolchain sources.
//!
//! Three kinds of source feed a release window:
//!
//! | kind      | resource                      | item fields                              |
//! |-----------|-------------------------------|------------------------------------------|
//! | `vcs`     | `commits` (paged), `issues`   | `date`, `additions`, `deletions`; `opened_date` |
//! | `ci`      | `runs` (paged)                | `date`, `status`, `failed_stage`         |
//! | `quality` | `issues`                      | `reported_date`                          |
//!
//! HTTP sources are queried as `{base_url}/{resource}?since=&until=[&page=]`
//! and must answer with a JSON array; paging starts at 1 and stops at the
//! first empty page. A `file://` base reads `{resource}.json` from that
//! directory instead. Either way, items are filtered locally to the window
//! `(start, end]` by calendar date in the window's UTC offset.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, FixedOffset, NaiveDate};
use log::{debug, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RawActivityCounts;

/// Upper bound on pages fetched from one paged resource.
const MAX_PAGES: u32 = 10_000;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("{source_name} unavailable: {message}")]
    Unavailable { source_name: String, message: String },
    #[error("{source_name} returned malformed data: {message}")]
    Parse { source_name: String, message: String },
    #[error("invalid source configuration: {0}")]
    InvalidConfig(String),
    #[error("collection failed at {source_name}: {inner}")]
    Aggregate {
        source_name: String,
        #[source]
        inner: Box<CollectError>,
    },
}

impl CollectError {
    /// Name of the source that failed.
    pub fn source_name(&self) -> Option<&str> {
        match self {
            CollectError::Unavailable { source_name, .. }
            | CollectError::Parse { source_name, .. }
            | CollectError::Aggregate { source_name, .. } => Some(source_name),
            CollectError::InvalidConfig(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Vcs,
    Ci,
    Quality,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Vcs, SourceKind::Ci, SourceKind::Quality];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Vcs => "vcs",
            SourceKind::Ci => "ci",
            SourceKind::Quality => "quality",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// `http(s)://...` endpoint prefix or `file://<dir>`.
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    /// Repository or job name; used to label errors.
    #[serde(default)]
    pub repo_or_job: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on every further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl SourceConfig {
    pub fn new(kind: SourceKind, base_url: impl Into<String>) -> Self {
        Self {
            kind,
            base_url: base_url.into(),
            auth_token: None,
            repo_or_job: String::new(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), CollectError> {
        if self.base_url.trim().is_empty() {
            return Err(CollectError::InvalidConfig(format!("{} source has an empty base_url", self.kind)));
        }
        if self.timeout_secs == 0 {
            return Err(CollectError::InvalidConfig(format!("{} source timeout must be positive", self.kind)));
        }
        Ok(())
    }

    /// Label used in error messages, e.g. `ci source "nightly"`.
    pub fn label(&self) -> String {
        if self.repo_or_job.is_empty() {
            format!("{} source {}", self.kind, self.base_url)
        } else {
            format!("{} source \"{}\"", self.kind, self.repo_or_job)
        }
    }
}

/// Release window `(start, end]`; event timestamps are reduced to calendar
/// dates in `offset` before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub offset: FixedOffset,
}

impl MetricsWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, CollectError> {
        if start >= end {
            return Err(CollectError::InvalidConfig(format!(
                "window start {start} must be before end {end}"
            )));
        }
        Ok(Self {
            start,
            end,
            offset: FixedOffset::east_opt(0).expect("zero offset"),
        })
    }

    pub fn with_offset(mut self, offset: FixedOffset) -> Self {
        self.offset = offset;
        self
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start < date && date <= self.end
    }

    /// Calendar date of an ISO 8601 date or RFC 3339 timestamp.
    pub fn event_date(&self, text: &str) -> Option<NaiveDate> {
        let text = text.trim();
        if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
            return Some(ts.with_timezone(&self.offset).date_naive());
        }
        NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()
    }
}

#[derive(Debug, Deserialize)]
struct CommitItem {
    date: String,
    additions: u64,
    deletions: u64,
}

#[derive(Debug, Deserialize)]
struct VcsIssueItem {
    opened_date: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RunStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Stage {
    Build,
    Test,
    Delivery,
}

#[derive(Debug, Deserialize)]
struct RunItem {
    date: String,
    status: RunStatus,
    #[serde(default)]
    failed_stage: Option<Stage>,
}

#[derive(Debug, Deserialize)]
struct QualityIssueItem {
    reported_date: String,
}

enum Transport {
    Http { base: String, agent: ureq::Agent },
    Dir(PathBuf),
}

struct Source<'a> {
    config: &'a SourceConfig,
    transport: Transport,
}

enum Attempt {
    Retry(String),
    Fail(String),
}

impl<'a> Source<'a> {
    fn open(config: &'a SourceConfig, expected: SourceKind) -> Result<Self, CollectError> {
        config.validate()?;
        if config.kind != expected {
            return Err(CollectError::InvalidConfig(format!(
                "expected a {expected} source, got {}",
                config.kind
            )));
        }
        let transport = match config.base_url.strip_prefix("file://") {
            Some(dir) => Transport::Dir(PathBuf::from(dir)),
            None => {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
                    .http_status_as_error(false)
                    .build()
                    .into();
                Transport::Http {
                    base: config.base_url.trim_end_matches('/').to_string(),
                    agent,
                }
            }
        };
        Ok(Self { config, transport })
    }

    fn unavailable(&self, message: impl Into<String>) -> CollectError {
        CollectError::Unavailable {
            source_name: self.config.label(),
            message: message.into(),
        }
    }

    fn malformed(&self, message: impl Into<String>) -> CollectError {
        CollectError::Parse {
            source_name: self.config.label(),
            message: message.into(),
        }
    }

    /// All items of `resource`, following pages when `paged`.
    fn items<T: DeserializeOwned>(
        &self,
        resource: &str,
        window: &MetricsWindow,
        paged: bool,
    ) -> Result<Vec<T>, CollectError> {
        match &self.transport {
            Transport::Dir(dir) => {
                let path = dir.join(format!("{resource}.json"));
                let text = fs::read_to_string(&path)
                    .map_err(|e| self.unavailable(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| self.malformed(format!("{}: {e}", path.display())))
            }
            Transport::Http { base, agent } => {
                let url = format!("{base}/{resource}");
                if !paged {
                    return self.get_page(agent, &url, window, None);
                }
                let mut all = Vec::new();
                for page in 1..=MAX_PAGES {
                    let items: Vec<T> = self.get_page(agent, &url, window, Some(page))?;
                    if items.is_empty() {
                        return Ok(all);
                    }
                    all.extend(items);
                }
                Err(self.malformed(format!("{url}: more than {MAX_PAGES} pages")))
            }
        }
    }

    fn get_page<T: DeserializeOwned>(
        &self,
        agent: &ureq::Agent,
        url: &str,
        window: &MetricsWindow,
        page: Option<u32>,
    ) -> Result<Vec<T>, CollectError> {
        let mut delay = Duration::from_millis(self.config.backoff_base_ms);
        let mut attempt = 0;
        loop {
            let message = match self.try_get(agent, url, window, page) {
                Ok(body) => {
                    return serde_json::from_str(&body).map_err(|e| self.malformed(format!("{url}: {e}")))
                }
                Err(Attempt::Fail(message)) => return Err(self.unavailable(message)),
                Err(Attempt::Retry(message)) => message,
            };
            if attempt >= self.config.retries {
                return Err(self.unavailable(format!("{message} (after {} attempts)", attempt + 1)));
            }
            warn!("{}: {message}; retrying in {delay:?}", self.config.label());
            thread::sleep(delay);
            delay *= 2;
            attempt += 1;
        }
    }

    fn try_get(
        &self,
        agent: &ureq::Agent,
        url: &str,
        window: &MetricsWindow,
        page: Option<u32>,
    ) -> Result<String, Attempt> {
        let mut request = agent
            .get(url)
            .query("since", window.start.to_string())
            .query("until", window.end.to_string());
        if let Some(page) = page {
            request = request.query("page", page.to_string());
        }
        if let Some(token) = &self.config.auth_token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        debug!("GET {url} page={page:?}");
        match request.call() {
            Ok(mut response) => {
                let status = response.status().as_u16();
                if status >= 500 {
                    Err(Attempt::Retry(format!("{url}: HTTP {status}")))
                } else if status >= 400 {
                    Err(Attempt::Fail(format!("{url}: HTTP {status}")))
                } else {
                    response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Attempt::Fail(format!("{url}: {e}")))
                }
            }
            Err(ureq::Error::Timeout(t)) => Err(Attempt::Retry(format!("{url}: timed out ({t})"))),
            Err(e) => Err(Attempt::Fail(format!("{url}: {e}"))),
        }
    }

    fn in_window(&self, window: &MetricsWindow, text: &str) -> Result<bool, CollectError> {
        window
            .event_date(text)
            .map(|d| window.contains(d))
            .ok_or_else(|| self.malformed(format!("`{text}` is not a date")))
    }
}

/// Lines changed and commit count in the window, plus repository issues
/// opened in it. Lines changed is additions + deletions.
pub fn collect_vcs(config: &SourceConfig, window: &MetricsWindow) -> Result<(u64, u64, u64), CollectError> {
    let source = Source::open(config, SourceKind::Vcs)?;
    let mut lines = 0;
    let mut commits = 0;
    for c in source.items::<CommitItem>("commits", window, true)? {
        if source.in_window(window, &c.date)? {
            lines += c.additions + c.deletions;
            commits += 1;
        }
    }
    let mut issues = 0;
    for i in source.items::<VcsIssueItem>("issues", window, false)? {
        if source.in_window(window, &i.opened_date)? {
            issues += 1;
        }
    }
    Ok((lines, commits, issues))
}

/// Failed runs in the window split by the stage that failed:
/// `(build, test, delivery)`.
pub fn collect_ci(config: &SourceConfig, window: &MetricsWindow) -> Result<(u64, u64, u64), CollectError> {
    let source = Source::open(config, SourceKind::Ci)?;
    let mut counts = (0, 0, 0);
    for run in source.items::<RunItem>("runs", window, true)? {
        if run.status != RunStatus::Failed || !source.in_window(window, &run.date)? {
            continue;
        }
        match run.failed_stage {
            Some(Stage::Build) => counts.0 += 1,
            Some(Stage::Test) => counts.1 += 1,
            Some(Stage::Delivery) => counts.2 += 1,
            None => {
                warn!("{}: failed run on {} has no failed_stage; counted as build", config.label(), run.date);
                counts.0 += 1;
            }
        }
    }
    Ok(counts)
}

pub fn collect_quality(config: &SourceConfig, window: &MetricsWindow) -> Result<u64, CollectError> {
    let source = Source::open(config, SourceKind::Quality)?;
    let mut issues = 0;
    for i in source.items::<QualityIssueItem>("issues", window, false)? {
        if source.in_window(window, &i.reported_date)? {
            issues += 1;
        }
    }
    Ok(issues)
}

/// Runs one collector per source kind concurrently and merges the counts.
/// Any failure aborts the whole collection.
pub fn collect_all(configs: &[SourceConfig], window: &MetricsWindow) -> Result<RawActivityCounts, CollectError> {
    let pick = |kind: SourceKind| -> Result<&SourceConfig, CollectError> {
        let mut matching = configs.iter().filter(|c| c.kind == kind);
        match (matching.next(), matching.next()) {
            (Some(c), None) => Ok(c),
            (None, _) => Err(CollectError::InvalidConfig(format!("no {kind} source configured"))),
            (Some(_), Some(_)) => Err(CollectError::InvalidConfig(format!("more than one {kind} source configured"))),
        }
    };
    let (vcs, ci, quality) = (pick(SourceKind::Vcs)?, pick(SourceKind::Ci)?, pick(SourceKind::Quality)?);

    let (vcs_result, ci_result, quality_result) = thread::scope(|s| {
        let v = s.spawn(|| collect_vcs(vcs, window));
        let c = s.spawn(|| collect_ci(ci, window));
        let q = s.spawn(|| collect_quality(quality, window));
        (
            v.join().expect("vcs collector panicked"),
            c.join().expect("ci collector panicked"),
            q.join().expect("quality collector panicked"),
        )
    });
    let wrap = |config: &SourceConfig| {
        let source_name = config.label();
        move |inner| CollectError::Aggregate {
            source_name,
            inner: Box::new(inner),
        }
    };
    let (lines_changed, commits, repo_issues) = vcs_result.map_err(wrap(vcs))?;
    let (failed_builds, failed_tests, failed_deliveries) = ci_result.map_err(wrap(ci))?;
    let quality_issues = quality_result.map_err(wrap(quality))?;
    Ok(RawActivityCounts {
        lines_changed,
        commits,
        failed_builds,
        failed_tests,
        failed_deliveries,
        quality_issues,
        repo_issues,
        window_start: window.start,
        window_end: window.end,
    })
}
