//! Translating solitons of mean curvature flow in pseudo-Euclidean space:
//! reduced slope equation, phase-plane classification, explicit geometry and
//! residual verification.

pub mod classify;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod hybrid;
pub mod ode;
pub mod params;
pub mod rk;
pub mod series;
pub mod verify;

pub use error::{Result, SolitonError};
pub use ode::{
    detect_blowup, integrate, integrate_both, BlowUp, Direction, EventKind, EventRecord,
    IntegratorConfig, Termination, Trajectory,
};
pub use params::{
    critical_concavity, critical_line, region_of, rhs, rhs_wing, CausalSign, FlowParams,
    PhaseState, Region, Sign,
};
pub use series::{bowl_series_coeffs, bowl_start, OddSeries};
pub use classify::{
    classify, compute_bowl, compute_separatrix, compute_separatrix_at, limits_report, ClassTag, Classifier, EndLimit,
    Evidence, LimitsReport, SeparatrixResult, SolutionClass,
};
pub use geometry::{
    build_graph, build_spindle, build_wing, residual_key_ode, tangency_comparison,
    timelike_family_from_strip, CurveKind, CurveSample, ProfileCurve, Wing, WingConfig, WingEnd,
};
pub use hybrid::{
    boost, build_hybrid, cone_distance, quadrant, EvenProfile, HybridConfig, HybridField,
    HybridGrid, QuadrantMask,
};
pub use verify::{
    convergence_order, residual_fund_eq, smoothness_scan, Axis, ConvergenceReport, GridField,
    jump_decay, JumpDecay, ResidualReport, ScanLine, SmoothnessReport,
};
