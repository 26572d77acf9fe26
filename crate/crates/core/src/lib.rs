//! Surface reconstruction from un-oriented point clouds by learning a
//! modified indicator function.
//!
//! The crate is organized along the reconstruction pipeline:
//!
//! * [`geometry`]: meshes, point sets, k-d tree, exact solid-angle indicator.
//! * [`gauss`]: the Gauss-lemma kernel, its discrete point-sum and the
//!   modified (ramped) indicator used as the learning target.
//! * [`datagen`]: noise, holes, query generation and network samples.
//! * [`network`]: the dual-branch point-contribution network with exact
//!   reverse-mode gradients, Adam training and checkpoints.
//! * [`reconstruct`]: grid evaluation and marching cubes.
//! * [`metrics`]: chamfer distance, normal consistency error and best
//!   consistency rate.
//!
//! The indicator is 1 inside and 0 outside; signed distances are positive
//! inside.

pub mod error;
pub mod datagen;
pub mod gauss;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod network;
pub mod reconstruct;
mod seed;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    pub mod conventions {}
    #[doc = include_str!("../../../book/src/indicator.md")]
    pub mod indicator {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/network.md")]
    pub mod network {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    pub mod reconstruction {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
