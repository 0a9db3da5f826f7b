//! Release-gate core: per-release DevOps metrics, unsupervised outlier
//! detectors, and the gate that decides whether a candidate release may
//! proceed to production.

pub mod dataset;
pub mod detectors;
pub mod collectors;
pub mod gate;

pub use dataset::{
    append_release, load_dataset, normalize, save_dataset, working_days, DatasetError, Flag,
    RawActivityCounts, ReleaseDataset, ReleaseRecord,
};
pub use gate::{gate_check, GateConfig, GateDecision, Verdict};
