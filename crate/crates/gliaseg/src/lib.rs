//! Volumetric segmentation of cells with thin tubular processes and a
//! blob-like body, by two mutually repelling level sets driven by
//! Hessian-derived tubularity and blobness fields.
//!
//! Pipeline: multiscale enhancement ([`features`]) -> automatic Otsu
//! seeding ([`init`]) -> coupled evolution ([`levelset`]) -> quantitative
//! evaluation ([`metrics`]). Synthetic test volumes with analytic ground
//! truth come from [`phantom`]; [`io`] persists volumes, masks and run
//! reports.
//!
//! Conventions shared by every module: voxel data is laid out x-fastest
//! (`data[x + nx * (y + ny * z)]`), spacing is physical units per voxel,
//! Hessian components are ordered `[xx, yy, zz, xy, xz, yz]`, level sets
//! are positive inside, and eigenvalues are ordered by increasing
//! magnitude.

pub mod error;
pub mod volume;
pub mod features;
pub mod init;
mod attraction;
mod redistance;
pub mod levelset;
pub mod metrics;
pub mod phantom;
pub mod io;

pub use error::{Error, Result};
pub use init::BinaryMask;
pub use volume::ScalarVolume;
