//! Webhook alerts for gate decisions that need attention.

use std::collections::BTreeMap;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use release_gate_core::gate::{GateDecision, Verdict};

const MAX_TOP_FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub name: String,
    pub z_value: f64,
}

/// JSON body posted to the webhook. The top-level `text` field makes it
/// acceptable to chat incoming-webhook endpoints as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationPayload {
    pub text: String,
    pub verdict: String,
    pub candidate_id: u64,
    pub top_features: Vec<TopFeature>,
    pub scores: BTreeMap<String, f64>,
}

impl NotificationPayload {
    pub fn from_decision(decision: &GateDecision) -> Self {
        let top_features: Vec<TopFeature> = decision
            .explanation
            .iter()
            .take(MAX_TOP_FEATURES)
            .map(|c| TopFeature {
                name: c.feature.clone(),
                z_value: c.z_value,
            })
            .collect();
        let mut text = format!(
            "Release {} ({}) {}",
            decision.candidate_id,
            decision.candidate.date,
            match decision.verdict {
                Verdict::Anomaly => "flagged as anomalous, production deployment suspended",
                Verdict::Review => "needs review before production deployment",
                Verdict::Pass => "passed the release gate",
                Verdict::InsufficientHistory => "recorded without a check (warm-up)",
            }
        );
        if let Some(lof) = decision.lof_score {
            text.push_str(&format!("; LOF {lof:.3}"));
        }
        if let Some(reason) = &decision.reason {
            text.push_str(&format!("; {reason}"));
        }
        if !top_features.is_empty() {
            let list: Vec<String> = top_features
                .iter()
                .map(|f| format!("{} z={:+.2}", f.name, f.z_value))
                .collect();
            text.push_str(&format!("; top features: {}", list.join(", ")));
        }
        Self {
            text,
            verdict: decision.verdict.as_str().to_string(),
            candidate_id: decision.candidate_id,
            top_features,
            scores: decision.per_detector_scores.clone(),
        }
    }
}

/// What happened to a notification; reported next to the decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub delivered: bool,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Outcome {
    Done(u16),
    Retry(Option<u16>, String),
    Fail(Option<u16>, String),
}

/// Posts `payload` as JSON. Succeeds on any 2xx; a 5xx or a timeout is
/// retried once. Never panics or returns an error: failures are logged and
/// described in the returned [`Delivery`].
pub fn notify(webhook_url: &str, payload: &NotificationPayload, timeout: Duration) -> Delivery {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let outcome = match agent.post(webhook_url).send_json(payload) {
            Ok(response) => {
                let status = response.status().as_u16();
                match status {
                    200..=299 => Outcome::Done(status),
                    500..=599 => Outcome::Retry(Some(status), format!("HTTP {status}")),
                    _ => Outcome::Fail(Some(status), format!("HTTP {status}")),
                }
            }
            Err(ureq::Error::Timeout(t)) => Outcome::Retry(None, format!("timed out ({t})")),
            Err(e) => Outcome::Fail(None, e.to_string()),
        };
        match outcome {
            Outcome::Done(status) => {
                info!("notification delivered to webhook (HTTP {status})");
                return Delivery {
                    delivered: true,
                    attempts,
                    status: Some(status),
                    error: None,
                };
            }
            Outcome::Retry(_, message) if attempts < 2 => {
                warn!("webhook attempt {attempts} failed: {message}; retrying");
            }
            Outcome::Retry(status, message) | Outcome::Fail(status, message) => {
                warn!("notification not delivered after {attempts} attempt(s): {message}");
                return Delivery {
                    delivered: false,
                    attempts,
                    status,
                    error: Some(message),
                };
            }
        }
    }
}
