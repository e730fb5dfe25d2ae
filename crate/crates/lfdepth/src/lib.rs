//! Depth from 4D light fields with explicit handling of partially occluded
//! border regions.
//!
//! The pipeline estimates per-pixel disparity from a grid of sub-aperture
//! views in stages:
//!
//! 1. [`cost`]: angular-variance matching cost per disparity label,
//!    aggregated over a bilateral window; initial depth as the per-pixel
//!    cost minimum and initial confidence from the mean/min cost ratio.
//! 2. [`superpixel`]: SLIC segmentation of the central view, a
//!    per-superpixel depth consensus solved as weighted least squares over
//!    the superpixel graph, and the epsilon map (pixelwise minus
//!    superpixel-wise depth) whose negative values localize partially
//!    occluded border regions, where the initial estimate systematically
//!    snaps to the occluder's label.
//! 3. [`refine`]: confidence shrinkage over detected occlusions and noisy
//!    regions, plus edge-strength weights that sharpen depth boundaries.
//! 4. [`pipeline`]: the final edge-aware weighted-least-squares solve over
//!    the pixel grid, and orchestration of all stages.
//!
//! Supporting modules: [`solver`] (sparse SPD conjugate gradient shared by
//! both solves), [`synth`] (analytic multi-plane renderer with ground-truth
//! disparity, occlusion boundaries, and partial-occlusion masks),
//! [`metrics`] (bad-pixel rate and boundary precision/recall), [`io`] (PFM
//! and PNG output, cost-volume dumps), and [`lightfield`] (sub-aperture
//! image handling and manifest loading).

pub mod cost;
pub mod error;
pub mod field;
pub mod io;
pub mod lightfield;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod solver;
pub mod superpixel;
pub mod synth;

pub use error::{Error, Result};
pub use field::{ConfidenceKind, ConfidenceMap, DepthKind, DepthMap, Field, Mask};
pub use lightfield::{Image, LabelGrid, LightField};
pub use pipeline::{run_pipeline, PipelineBundle, PipelineConfig, PipelineError, Stage};
