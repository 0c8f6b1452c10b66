//! Reconstruction of quasi-open-circuit-voltage (qOCV) curves from raw
//! battery field telemetry, with incremental-capacity (IC) and
//! differential-voltage (DV) analysis on top.
//!
//! The pipeline runs in stages, each a module of this crate:
//!
//! 1. [`ingest`] — stream 1 Hz telemetry from CSV, validate it, mark gaps,
//!    and derive a coulomb-counting SOC signal anchored at full-charge events.
//! 2. [`dcr`] — detect current pulses, estimate DC resistance, and maintain
//!    SOC×temperature lookup tables plus long-term aging trends.
//! 3. [`phases`] — slice the stream into low-dynamic constant-sign phases and
//!    produce overvoltage-corrected partial voltage traces.
//! 4. [`qocv`] — align and fuse partial curves into one high-resolution qOCV
//!    curve per period and direction, and quantify capacity fade.
//! 5. [`diff`] — Gaussian smoothing and numerical IC (dQ/dV) / DV (dV/dQ)
//!    differentiation.
//! 6. [`foi`] — per-chemistry features of interest: windowed extrema,
//!    normalization, lifetime drift fits, degradation-mode attribution.
//! 7. [`stats`] — Pearson correlation of FOI drift against a state-of-health
//!    series, with two-tailed t-test p-values.
//! 8. [`sim`] — a synthetic battery + household-load generator whose ground
//!    truth (OCV, DCR surface, degradation schedule) validates every stage.
//!
//! Numeric kernels in [`math`] are generic over the scalar type; the
//! pipeline itself runs on [`Scalar`] (`f64`).

pub mod dcr;
pub mod diff;
pub mod foi;
pub mod ingest;
pub mod math;
pub mod phases;
pub mod qocv;
pub mod sim;
pub mod stats;
pub mod types;

/// Scalar type the concrete pipeline runs on.
///
/// The kernels in [`math`] stay generic over [`math::Real`]; everything that
/// touches file formats, timestamps or serde is pinned to this alias.
pub type Scalar = f64;

pub use types::{
    AnchorKind, Chemistry, Direction, GapMarker, PeriodTag, StreamItem, SystemConfig,
    TelemetryRecord,
};
