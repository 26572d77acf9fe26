//! Indicator grids, iso-surface extraction and the two reconstruction
//! pipelines (learned and discrete Gauss).

mod grid;
mod mc;
mod pipeline;

pub use grid::{evaluate_grid, read_grid_dump, write_grid_dump, GridSpec, IndicatorGrid};
pub use mc::{case_table, marching_cubes, CubeCase};
pub use pipeline::{
    estimate_point_areas, gauss_reconstruct, learned_indicator_grid, reconstruct_shape, GaussReconstruction,
    ReconstructOptions,
};
