//! Post-processing of estimated gate sets.

pub mod cptp;
pub mod gauge;
pub mod lbfgs;
pub mod report;
pub mod taxonomy;

pub use cptp::{cptp_project, cptp_project_with, CptpOptions, CptpProjection};
pub use gauge::{apply_gauge, gauge_objective, gauge_optimize, GaugeOptions, GaugeResult, GaugeTransform};
pub use taxonomy::{
    decompose_generator, error_generator, infidelity_report, ErrorGeneratorDecomposition, GeneratorClass,
    InfidelityReport,
};
pub use report::{postprocess, ChannelReport, PostprocessOptions, Snapshot};
