//! Cube hierarchies, radial-weight doubling measures and fat/thin experiments
//! on the unit interval and the unit square.
//!
//! ```
//! use std::sync::Arc;
//! use fml_core::{build_adic_system, build_measure, survivor_mass, N0Policy, SpaceModel};
//!
//! let s = build_adic_system(SpaceModel::new(1)?, "7".parse()?, 10, true)?;
//! let tree = build_measure(Arc::new(s), 1.0, N0Policy::Auto, 10)?;
//! let kept = survivor_mass(&tree, 10)?;
//! assert!((kept - (20.0f64 / 21.0).powi(10)).abs() < 1e-12);
//! # Ok::<(), fml_core::Error>(())
//! ```

pub mod cube;
pub mod error;
pub mod fatthin;
pub mod geometry;
pub mod measure;
pub mod quadrature;
pub mod report;
pub mod scan;
pub mod sequence;
pub mod space;
pub mod validate;

pub use cube::{
    build_adic_system, build_distorted_carpet, build_subsampled_dyadic, designate_center_child, pushforward_power,
    Cube, CubeId, CubeSystem, Edit, Layout, SystemSpec,
};
pub use error::{Error, Result};
pub use fatthin::{fat_thin_experiment, survivor_mass, FatThinReport, RhoRule, Verdict};
pub use geometry::{Aabb, Point, Region};
pub use measure::{build_measure, MeasureTree, N0Policy};
pub use sequence::{classify_family, make_sequence, partial_lp_sum, AlphaSequence, BaseRule, SequenceSpec};
pub use space::SpaceModel;
pub use validate::{validate, ValidationReport};
