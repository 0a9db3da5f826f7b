use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use release_gate_core::collectors::{collect_all, MetricsWindow};
use release_gate_core::dataset::{
    append_release, load_dataset, normalize, Flag, RawActivityCounts, ReleaseDataset, ReleaseRecord,
    METRIC_NAMES,
};
use release_gate_core::detectors::{
    decision_boundary_grid, standardize, DetectorKind, FeatureMatrix,
};
use release_gate_core::gate::{gate_check, GateDecision, Verdict};

use crate::config::ToolConfig;
use crate::exit;
use crate::notify::{notify, Delivery, NotificationPayload};

/// Dataset at `path`, or an empty one if the file does not exist yet.
pub fn load_or_empty(path: &Path) -> Result<ReleaseDataset> {
    if path.exists() {
        Ok(load_dataset(path)?)
    } else {
        Ok(ReleaseDataset::new())
    }
}

pub fn read_candidate(path: &Path) -> Result<ReleaseRecord> {
    let text = fs::read_to_string(path).with_context(|| {
        format!("no candidate at {}; run `collect` first", path.display())
    })?;
    let record: ReleaseRecord = serde_json::from_str(&text)
        .with_context(|| format!("malformed candidate file {}", path.display()))?;
    record.validate()?;
    Ok(record)
}

pub fn write_candidate(path: &Path, record: &ReleaseRecord) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, record)?;
    tmp.write_all(b"\n")?;
    tmp.persist(path)
        .map_err(|e| anyhow!("cannot write {}: {}", path.display(), e.error))?;
    Ok(())
}

/// Collects the window ending at `release_date` and stages the normalized
/// candidate next to the dataset.
pub fn collect(config: &ToolConfig, release_date: NaiveDate) -> Result<ReleaseRecord> {
    let dataset = load_or_empty(&config.dataset_path)?;
    let (prev, id) = match dataset.last() {
        Some(last) => (last.date, last.id + 1),
        None => (config.project_start_date, 1),
    };
    if release_date <= prev {
        bail!("release date {release_date} must be after {prev}");
    }
    let window = MetricsWindow::new(prev, release_date)?.with_offset(config.utc_offset()?);
    let raw = if config.sources.is_empty() {
        warn!("no sources configured; candidate metrics are all zero");
        RawActivityCounts::empty(prev, release_date)
    } else {
        collect_all(&config.sources, &window)?
    };
    info!("raw counts for ({prev}, {release_date}]: {raw:?}");
    let record = normalize(&raw, prev, release_date, id)?;
    write_candidate(&config.candidate_path(), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub decision: GateDecision,
    /// Present only when a notification was attempted.
    pub notification: Option<Delivery>,
}

/// Gates the staged candidate. Rewrites the candidate with its flag; the
/// dataset is only read.
pub fn check(config: &ToolConfig) -> Result<CheckReport> {
    let candidate_path = config.candidate_path();
    let candidate = read_candidate(&candidate_path)?;
    let history = load_or_empty(&config.dataset_path)?;
    let decision = gate_check(&history, &candidate, &config.gate)?;
    write_candidate(&candidate_path, &decision.candidate)?;

    let notification = match (&config.webhook_url, decision.verdict) {
        (Some(url), Verdict::Anomaly | Verdict::Review) => {
            let payload = NotificationPayload::from_decision(&decision);
            Some(notify(url, &payload, Duration::from_secs(config.webhook_timeout_secs)))
        }
        _ => None,
    };
    Ok(CheckReport {
        decision,
        notification,
    })
}

pub fn verdict_exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Pass | Verdict::InsufficientHistory => exit::PROCEED,
        Verdict::Anomaly => exit::ANOMALY,
        Verdict::Review => exit::REVIEW,
    }
}

/// Moves the staged candidate into the dataset under an exclusive lock.
pub fn append(config: &ToolConfig) -> Result<ReleaseDataset> {
    let lock_path = config.lock_path();
    if let Some(dir) = lock_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .with_context(|| format!("cannot open lock file {}", lock_path.display()))?;
    lock.lock()?;

    let candidate_path = config.candidate_path();
    let candidate = read_candidate(&candidate_path)?;
    let dataset = load_or_empty(&config.dataset_path)?;
    if candidate.flag == Flag::Unset && dataset.len() >= config.gate.warmup_releases {
        bail!(
            "candidate {} has no flag; run `check` before `append` once warm-up is over",
            candidate.id
        );
    }
    let updated = append_release(&dataset, candidate, &config.dataset_path)?;
    fs::remove_file(&candidate_path)?;
    lock.unlock()?;
    Ok(updated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportMode {
    Scores,
    Boundaries,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub mode: ReportMode,
    /// 0-based feature indices.
    pub feature_x: usize,
    pub feature_y: usize,
    pub resolution: usize,
    pub out_dir: Option<PathBuf>,
}

/// A report file: its name and CSV content.
pub type ReportFile = (String, String);

pub fn scores_csv(dataset: &ReleaseDataset, config: &ToolConfig) -> Result<String> {
    let matrix = FeatureMatrix::from_records(dataset.records())?;
    let (z, _) = standardize(&matrix)?;
    let columns = DetectorKind::ALL
        .into_iter()
        .map(|kind| Ok(kind.fit(&z, &config.gate.detector_config)?.training_scores()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::from("ID");
    for kind in DetectorKind::ALL {
        out.push(',');
        out.push_str(kind.name());
    }
    out.push('\n');
    for (i, id) in matrix.row_ids().iter().enumerate() {
        out.push_str(&id.to_string());
        for c in &columns {
            out.push_str(&format!(",{}", c.scores[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn report(config: &ToolConfig, options: &ReportOptions) -> Result<Vec<ReportFile>> {
    let dataset = load_or_empty(&config.dataset_path)?;
    let needed = config.gate.warmup_releases;
    if dataset.len() < needed {
        bail!("dataset has {} releases; reports need at least {needed}", dataset.len());
    }
    let files = match options.mode {
        ReportMode::Scores => vec![("scores.csv".to_string(), scores_csv(&dataset, config)?)],
        ReportMode::Boundaries => {
            let matrix = FeatureMatrix::from_records(dataset.records())?;
            DetectorKind::ALL
                .into_iter()
                .map(|kind| {
                    let grid = decision_boundary_grid(
                        kind,
                        &matrix,
                        options.feature_x,
                        options.feature_y,
                        options.resolution,
                        &config.gate.detector_config,
                    )?;
                    let name = format!(
                        "boundary_{}_{}_{}.csv",
                        kind.name(),
                        METRIC_NAMES[options.feature_x],
                        METRIC_NAMES[options.feature_y]
                    );
                    Ok((name, grid.to_csv()))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    if let Some(dir) = &options.out_dir {
        fs::create_dir_all(dir)?;
        for (name, body) in &files {
            let path = dir.join(name);
            let mut f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
            f.write_all(body.as_bytes())?;
        }
    }
    Ok(files)
}
