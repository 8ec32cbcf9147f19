//! Gait-cycle metrics and report generation for gaitlab traces.

pub mod metrics;
pub mod report;

pub use metrics::{extract_torque_profiles, r_squared, rmse, symmetry_rmse, tracking_metrics};
pub use report::{build_report, report, GaitReport, ReportError};
