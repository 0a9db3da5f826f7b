//! Release records, metric normalization and the CSV release history.
//!
//! The history file has the header `P1,P2,P3,P4,P5,P6,ID,DATE,FLAG`. The
//! reader also accepts the eight-column variant without `FLAG` and dates in
//! either `M/D/YYYY` or ISO 8601 form; the writer always emits all nine
//! columns with ISO dates.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Names of the six release metrics, in column order.
pub const METRIC_NAMES: [&str; 6] = ["P1", "P2", "P3", "P4", "P5", "P6"];

const HEADER: [&str; 9] = ["P1", "P2", "P3", "P4", "P5", "P6", "ID", "DATE", "FLAG"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid interval: {from} is not before {to}")]
    InvalidInterval { from: NaiveDate, to: NaiveDate },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("bad header: expected `P1,P2,P3,P4,P5,P6,ID,DATE[,FLAG]`, found `{0}`")]
    Header(String),
    #[error("release {id} dated {date} cannot follow release {last_id} dated {last_date}")]
    Ordering {
        id: u64,
        date: NaiveDate,
        last_id: u64,
        last_date: NaiveDate,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Anomaly flag stored alongside each release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    #[default]
    Unset,
    Ok,
    Review,
    Anomaly,
}

impl Flag {
    /// CSV cell for this flag: `0` ok, `1` anomaly, `2` review, empty when unset.
    pub fn as_csv(self) -> &'static str {
        match self {
            Flag::Unset => "",
            Flag::Ok => "0",
            Flag::Anomaly => "1",
            Flag::Review => "2",
        }
    }

    pub fn from_csv(cell: &str) -> Option<Self> {
        match cell.trim() {
            "" => Some(Flag::Unset),
            "0" => Some(Flag::Ok),
            "1" => Some(Flag::Anomaly),
            "2" => Some(Flag::Review),
            _ => None,
        }
    }
}

/// Un-normalized event counts for one release window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawActivityCounts {
    pub lines_changed: u64,
    pub commits: u64,
    pub failed_builds: u64,
    pub failed_tests: u64,
    pub failed_deliveries: u64,
    pub quality_issues: u64,
    pub repo_issues: u64,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
}

impl RawActivityCounts {
    /// All-zero counts over the given window.
    pub fn empty(window_start: NaiveDate, window_end: NaiveDate) -> Self {
        Self {
            lines_changed: 0,
            commits: 0,
            failed_builds: 0,
            failed_tests: 0,
            failed_deliveries: 0,
            quality_issues: 0,
            repo_issues: 0,
            window_start,
            window_end,
        }
    }
}

/// One release: metrics P1..P6 normalized per working day, plus id, date and flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub id: u64,
    pub date: NaiveDate,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
    #[serde(default)]
    pub flag: Flag,
}

impl ReleaseRecord {
    pub fn new(id: u64, date: NaiveDate, metrics: [f64; 6]) -> Result<Self, DatasetError> {
        let [p1, p2, p3, p4, p5, p6] = metrics;
        let record = Self {
            id,
            date,
            p1,
            p2,
            p3,
            p4,
            p5,
            p6,
            flag: Flag::Unset,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn metrics(&self) -> [f64; 6] {
        [self.p1, self.p2, self.p3, self.p4, self.p5, self.p6]
    }

    pub fn with_flag(mut self, flag: Flag) -> Self {
        self.flag = flag;
        self
    }

    /// True when every metric is exactly zero.
    pub fn is_inactive(&self) -> bool {
        self.metrics().iter().all(|&v| v == 0.0)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.id == 0 {
            return Err(DatasetError::InvalidRecord("id must be at least 1".into()));
        }
        for (name, value) in METRIC_NAMES.iter().zip(self.metrics()) {
            if !value.is_finite() || value < 0.0 {
                return Err(DatasetError::InvalidRecord(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Weekdays (Mon-Fri) in the half-open interval `(from, to]`.
pub fn working_days(from: NaiveDate, to: NaiveDate) -> Result<u32, DatasetError> {
    if from >= to {
        return Err(DatasetError::InvalidInterval { from, to });
    }
    let count = from
        .iter_days()
        .skip(1)
        .take_while(|d| *d <= to)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .count();
    Ok(count as u32)
}

/// Turns raw window counts into a release record.
///
/// Every metric is divided by the number of working days in
/// `(prev_release_date, release_date]`, clamped to at least one. P1 is lines
/// changed per commit and is zero when there were no commits.
pub fn normalize(
    raw: &RawActivityCounts,
    prev_release_date: NaiveDate,
    release_date: NaiveDate,
    id: u64,
) -> Result<ReleaseRecord, DatasetError> {
    let days = working_days(prev_release_date, release_date)?.max(1) as f64;
    let per_commit = if raw.commits > 0 {
        raw.lines_changed as f64 / raw.commits as f64
    } else {
        0.0
    };
    ReleaseRecord::new(
        id,
        release_date,
        [
            per_commit / days,
            raw.failed_builds as f64 / days,
            raw.failed_tests as f64 / days,
            raw.failed_deliveries as f64 / days,
            raw.quality_issues as f64 / days,
            raw.repo_issues as f64 / days,
        ],
    )
}

/// Ordered release history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReleaseDataset {
    records: Vec<ReleaseRecord>,
}

impl ReleaseDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dataset, checking ordering and uniqueness of ids and dates.
    pub fn from_records(records: Vec<ReleaseRecord>) -> Result<Self, DatasetError> {
        let mut dataset = Self::new();
        for record in records {
            dataset.push(record)?;
        }
        Ok(dataset)
    }

    pub fn records(&self) -> &[ReleaseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&ReleaseRecord> {
        self.records.last()
    }

    /// The first `n` releases as a new dataset.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }

    /// Checks that `record` may follow the current last release.
    pub fn check_next(&self, record: &ReleaseRecord) -> Result<(), DatasetError> {
        record.validate()?;
        if let Some(last) = self.records.last() {
            if record.id <= last.id || record.date < last.date {
                return Err(DatasetError::Ordering {
                    id: record.id,
                    date: record.date,
                    last_id: last.id,
                    last_date: last.date,
                });
            }
        }
        Ok(())
    }

    pub fn push(&mut self, record: ReleaseRecord) -> Result<(), DatasetError> {
        self.check_next(&record)?;
        self.records.push(record);
        Ok(())
    }

    /// Serializes the dataset in the nine-column CSV layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        out.write_record(HEADER)?;
        for r in &self.records {
            let mut row: Vec<String> = r.metrics().iter().map(|&v| format_metric(v)).collect();
            row.push(r.id.to_string());
            row.push(r.date.format("%Y-%m-%d").to_string());
            row.push(r.flag.as_csv().to_string());
            out.write_record(&row)?;
        }
        out.flush().map_err(|source| DatasetError::Io {
            path: PathBuf::from("<writer>"),
            source,
        })?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, DatasetError> {
        let mut input = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header = input.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        let with_flag = if names == HEADER {
            true
        } else if names == HEADER[..8] {
            false
        } else {
            return Err(DatasetError::Header(names.join(",")));
        };
        let width = if with_flag { 9 } else { 8 };

        let mut dataset = Self::new();
        for (index, row) in input.records().enumerate() {
            // Header is line 1, so data row i sits on line i + 2.
            let line = index + 2;
            let row = row.map_err(|e| DatasetError::Parse {
                row: line,
                message: e.to_string(),
            })?;
            let fail = |message: String| DatasetError::Parse { row: line, message };
            if row.len() != width {
                return Err(fail(format!("expected {width} fields, found {}", row.len())));
            }
            let mut metrics = [0.0; 6];
            for (slot, (name, cell)) in metrics.iter_mut().zip(METRIC_NAMES.iter().zip(row.iter())) {
                let value: f64 = cell
                    .parse()
                    .map_err(|_| fail(format!("{name}: `{cell}` is not a number")))?;
                if !value.is_finite() || value < 0.0 {
                    return Err(fail(format!("{name}: `{cell}` must be finite and non-negative")));
                }
                *slot = value;
            }
            let id: u64 = row[6]
                .parse()
                .map_err(|_| fail(format!("ID: `{}` is not a positive integer", &row[6])))?;
            let date = parse_date(&row[7]).ok_or_else(|| fail(format!("DATE: `{}` is not a date", &row[7])))?;
            let flag = if with_flag {
                Flag::from_csv(&row[8]).ok_or_else(|| fail(format!("FLAG: `{}` is not 0, 1, 2 or empty", &row[8])))?
            } else {
                Flag::Unset
            };
            let record = ReleaseRecord::new(id, date, metrics)
                .map_err(|e| fail(e.to_string()))?
                .with_flag(flag);
            dataset.push(record).map_err(|e| fail(e.to_string()))?;
        }
        Ok(dataset)
    }
}

impl fmt::Display for ReleaseRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "release {} ({}): P1={} P2={} P3={} P4={} P5={} P6={}",
            self.id,
            self.date,
            format_metric(self.p1),
            format_metric(self.p2),
            format_metric(self.p3),
            format_metric(self.p4),
            format_metric(self.p5),
            format_metric(self.p6),
        )
    }
}

/// At most two decimals, trailing zeros trimmed: `22.57`, `0.04`, `59`.
pub fn format_metric(value: f64) -> String {
    let text = format!("{value:.2}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text == "-0" {
        "0".to_string()
    } else {
        text.to_string()
    }
}

/// Accepts `YYYY-MM-DD` or `M/D/YYYY`.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(text, "%m/%d/%Y"))
        .ok()
}

pub fn load_dataset(path: &Path) -> Result<ReleaseDataset, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ReleaseDataset::read_csv(io::BufReader::new(file))
}

/// Writes the dataset to `path` via a temporary file in the same directory
/// and an atomic rename.
pub fn save_dataset(dataset: &ReleaseDataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    dataset.write_csv(io::BufWriter::new(tmp.as_file_mut()))?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Appends `record` and persists the result. On an ordering violation the
/// file on disk is left untouched.
pub fn append_release(
    dataset: &ReleaseDataset,
    record: ReleaseRecord,
    path: &Path,
) -> Result<ReleaseDataset, DatasetError> {
    let mut next = dataset.clone();
    next.push(record)?;
    save_dataset(&next, path)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn brute_weekdays(from: NaiveDate, to: NaiveDate) -> u32 {
        let mut n = 0;
        let mut d = from.succ_opt().unwrap();
        while d <= to {
            if d.weekday().num_days_from_monday() < 5 {
                n += 1;
            }
            d = d.succ_opt().unwrap();
        }
        n
    }

    #[test]
    fn working_days_examples() {
        assert_eq!(working_days(date(2019, 7, 19), date(2019, 7, 22)).unwrap(), 1);
        assert_eq!(working_days(date(2019, 7, 4), date(2019, 7, 5)).unwrap(), 1);
        assert_eq!(brute_weekdays(date(2019, 8, 1), date(2019, 8, 8)), 5);
        assert_eq!(working_days(date(2019, 8, 1), date(2019, 8, 8)).unwrap(), 5);
        // Saturday to Sunday contains no weekday.
        assert_eq!(working_days(date(2019, 7, 6), date(2019, 7, 7)).unwrap(), 0);
    }

    #[test]
    fn working_days_rejects_empty_interval() {
        let d = date(2019, 7, 4);
        assert!(matches!(
            working_days(d, d),
            Err(DatasetError::InvalidInterval { .. })
        ));
        assert!(working_days(date(2019, 7, 5), d).is_err());
    }

    #[test]
    fn normalize_examples() {
        let mut raw = RawActivityCounts::empty(date(2019, 7, 4), date(2019, 7, 5));
        raw.lines_changed = 100;
        raw.commits = 4;
        let r = normalize(&raw, date(2019, 7, 4), date(2019, 7, 5), 1).unwrap();
        assert_eq!(r.p1, 25.0);
        assert_eq!(r.flag, Flag::Unset);

        let zero = RawActivityCounts::empty(date(2019, 7, 4), date(2019, 7, 5));
        let r = normalize(&zero, date(2019, 7, 4), date(2019, 7, 5), 2).unwrap();
        assert_eq!(r.metrics(), [0.0; 6]);
        assert!(r.is_inactive());
    }

    #[test]
    fn normalize_reproduces_first_table_row() {
        // 50 weekdays in (2019-04-25, 2019-07-04]; 2257 lines over 2 commits.
        let start = date(2019, 4, 25);
        let end = date(2019, 7, 4);
        assert_eq!(brute_weekdays(start, end), 50);
        let mut raw = RawActivityCounts::empty(start, end);
        raw.lines_changed = 2257;
        raw.commits = 2;
        raw.failed_builds = 2;
        raw.failed_tests = 3;
        raw.failed_deliveries = 4;
        let r = normalize(&raw, start, end, 1).unwrap();
        let row: Vec<String> = r.metrics().iter().map(|&v| format_metric(v)).collect();
        assert_eq!(row, ["22.57", "0.04", "0.06", "0.08", "0", "0"]);
    }

    #[test]
    fn normalize_scales_inversely_with_working_days() {
        let mut raw = RawActivityCounts::empty(date(2019, 7, 4), date(2019, 7, 5));
        raw.lines_changed = 90;
        raw.commits = 3;
        raw.failed_builds = 7;
        raw.repo_issues = 1;
        let one = normalize(&raw, date(2019, 7, 4), date(2019, 7, 5), 1).unwrap();
        let two = normalize(&raw, date(2019, 7, 4), date(2019, 7, 8), 1).unwrap();
        for (a, b) in one.metrics().iter().zip(two.metrics()) {
            assert_eq!(b, a / 2.0);
        }
    }

    #[test]
    fn normalize_clamps_weekend_window() {
        let mut raw = RawActivityCounts::empty(date(2019, 7, 6), date(2019, 7, 7));
        raw.failed_builds = 3;
        let r = normalize(&raw, date(2019, 7, 6), date(2019, 7, 7), 1).unwrap();
        assert_eq!(r.p2, 3.0);
    }

    #[test]
    fn metric_formatting() {
        assert_eq!(format_metric(22.57), "22.57");
        assert_eq!(format_metric(59.0), "59");
        assert_eq!(format_metric(0.04), "0.04");
        assert_eq!(format_metric(0.5), "0.5");
        assert_eq!(format_metric(1.0 / 3.0), "0.33");
        assert_eq!(format_metric(0.0), "0");
        assert_eq!(format_metric(0.001), "0");
    }

    #[test]
    fn dates_in_both_layouts() {
        assert_eq!(parse_date("7/4/2019"), Some(date(2019, 7, 4)));
        assert_eq!(parse_date("2019-07-04"), Some(date(2019, 7, 4)));
        assert_eq!(parse_date("07/04/2019"), Some(date(2019, 7, 4)));
        assert_eq!(parse_date("4.7.2019"), None);
    }

    #[test]
    fn header_only_is_empty() {
        let d = ReleaseDataset::read_csv("P1,P2,P3,P4,P5,P6,ID,DATE\n".as_bytes()).unwrap();
        assert!(d.is_empty());
        let d = ReleaseDataset::read_csv("P1,P2,P3,P4,P5,P6,ID,DATE,FLAG\n".as_bytes()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn rejects_out_of_order_ids() {
        let text = "P1,P2,P3,P4,P5,P6,ID,DATE\n1,1,1,1,1,0,2,7/4/2019\n1,1,1,1,1,0,1,7/5/2019\n";
        match ReleaseDataset::read_csv(text.as_bytes()) {
            Err(DatasetError::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let cases = [
            ("P1,P2,P3,P4,P5,P6,ID,DATE\n-1,1,1,1,1,0,1,7/4/2019\n", 2),
            ("P1,P2,P3,P4,P5,P6,ID,DATE\n1,1,1,1,1,0,1,7/4/2019\n1,1,1,1,1,0,1,7/5/2019\n", 3),
            ("P1,P2,P3,P4,P5,P6,ID,DATE\n1,1,1,1,1,0,1,7/5/2019\n1,1,1,1,1,0,2,7/4/2019\n", 3),
            ("P1,P2,P3,P4,P5,P6,ID,DATE\n1,x,1,1,1,0,1,7/4/2019\n", 2),
            ("P1,P2,P3,P4,P5,P6,ID,DATE\n1,1,1,1,1,0,1\n", 2),
            ("P1,P2,P3,P4,P5,P6,ID,DATE,FLAG\n1,1,1,1,1,0,1,2019-07-04,7\n", 2),
            ("P1,P2,P3,P4,P5,P6,ID,DATE\n1,1,1,1,1,0,0,7/4/2019\n", 2),
        ];
        for (text, line) in cases {
            match ReleaseDataset::read_csv(text.as_bytes()) {
                Err(DatasetError::Parse { row, .. }) => assert_eq!(row, line, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
        assert!(matches!(
            ReleaseDataset::read_csv("ID,DATE\n".as_bytes()),
            Err(DatasetError::Header(_))
        ));
    }

    #[test]
    fn flags_round_trip_through_csv() {
        let records = vec![
            ReleaseRecord::new(1, date(2019, 7, 4), [1.0; 6]).unwrap(),
            ReleaseRecord::new(2, date(2019, 7, 5), [2.0; 6]).unwrap().with_flag(Flag::Ok),
            ReleaseRecord::new(3, date(2019, 7, 5), [0.5; 6]).unwrap().with_flag(Flag::Anomaly),
            ReleaseRecord::new(4, date(2019, 7, 8), [0.25; 6]).unwrap().with_flag(Flag::Review),
        ];
        let d = ReleaseDataset::from_records(records).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("P1,P2,P3,P4,P5,P6,ID,DATE,FLAG\n1,1,1,1,1,1,1,2019-07-04,\n"));
        assert!(text.contains("0.25,0.25,0.25,0.25,0.25,0.25,4,2019-07-08,2\n"));
        assert_eq!(ReleaseDataset::read_csv(text.as_bytes()).unwrap(), d);
    }

    #[test]
    fn append_keeps_file_on_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("releases.csv");
        let empty = ReleaseDataset::new();
        let one = append_release(
            &empty,
            ReleaseRecord::new(1, date(2019, 7, 4), [1.0; 6]).unwrap(),
            &path,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(load_dataset(&path).unwrap(), one);

        let before = fs::read(&path).unwrap();
        let dup = ReleaseRecord::new(1, date(2019, 7, 5), [1.0; 6]).unwrap();
        assert!(append_release(&one, dup, &path).is_err());
        let earlier = ReleaseRecord::new(2, date(2019, 7, 3), [1.0; 6]).unwrap();
        assert!(append_release(&one, earlier, &path).is_err());
        assert_eq!(fs::read(&path).unwrap(), before);
    }
}
