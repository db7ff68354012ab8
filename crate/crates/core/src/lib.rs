//! Behavioral simulator for hierarchical defect tolerance in nanoscale RAM.
//!
//! Dense defect clusters are located with a sliding mask and relocated
//! through a range-matching CAM (RM-CAM); the remaining random defects are
//! masked by triple modular redundancy over column triples read through an
//! inherent majority voter. The [`experiment`] module wires the phases
//! together and measures the recovery rate.

pub mod address_mapper;
pub mod cluster_finder;
pub mod config;
pub mod defect_model;
pub mod error;
pub mod experiment;
pub mod rmcam_model;
pub mod rng;
pub mod tmr_selector;

pub use address_mapper::{Census, MappingPipeline, PhysicalMemory, ResolvedAccess};
pub use cluster_finder::{ClusterParams, ClusterWindow, Extraction};
pub use defect_model::{Cell, ClusterSpec, DefectMap, Rect};
pub use error::{Error, Result};
pub use experiment::{RecoveryReport, RepairPlan, SweepTable, TrialConfig, TrialOutcome};
pub use rmcam_model::{BitWord, CompareMode, CompareOutcome, RmCamEntry, RmCamTable};
pub use tmr_selector::{TmrParams, TmrPlan, TripleColumns, TripleSearch};
