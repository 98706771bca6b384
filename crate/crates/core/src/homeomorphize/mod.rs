//! Cell covers of the target, discrete pre-cells, boundary-trace repair and
//! the replacement chain that turns a monotone map into a homeomorphism.

pub mod chain;
pub mod chart;
pub mod cover;
pub mod precell;
pub mod repair;

pub use chain::{
    approximation_sequence, homeomorphize_chain, replace_on_precell, ChainConfig, ChainReport, SequenceReport,
    SequenceRun, StepObserver, StepRecord,
};
pub use chart::{convex_hull, RadialChart};
pub use cover::{
    build_cell_cover, exact_multiplicity, target_sample_grid, verify_cover, Cell, CellCover, CellKind, CoverConfig,
    CoverVerification, Square,
};
pub use precell::{compute_precell, image_in_cell, PreCell};
pub use repair::{repair_boundary_trace, repair_trace_on, ClosedPolyline, LiftProfile, TraceRepair};
