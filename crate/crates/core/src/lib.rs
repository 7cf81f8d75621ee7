//! Sparsity-constrained tomographic reconstruction for parallel-beam geometry.
//!
//! The crate covers the whole pipeline used by the sampling-limit studies:
//! image grids and tilt schedules ([`geometry`]), an exact-intersection
//! system matrix ([`projector`]), test objects ([`phantom`]), Poisson dose
//! simulation ([`noise`]), basis pursuit ([`l1`]) and ASD-POCS total
//! variation ([`tv`]) solvers, quality metrics ([`metrics`]), the study
//! drivers ([`study`]) and file/config handling ([`config`], [`io`]).

pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod l1;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod projector;
pub mod recon;
pub mod seed;
pub mod study;
pub mod tv;

pub use error::{Error, Result};
pub use geometry::{ImageGrid, ProjectionGeometry, TiltSchedule};
pub use projector::{Sinogram, SystemMatrix};
pub use recon::ReconResult;
