//! Training-data generation: noise, holes, query points with ground-truth
//! targets, and the patch/subsample inputs of the network.

mod dataset;
mod holes;
mod noise;
mod prepare;
mod queries;
mod sample;

pub(crate) use dataset::tmp_path;
pub use dataset::{
    read_dataset, write_dataset, Dataset, DatasetReader, ManifestEntry, ShapeRecord, ShapeSamples, DATASET_MAGIC,
    DATASET_VERSION,
};
pub use holes::{punch_hole_at, punch_holes, PunchedCloud};
pub use noise::{apply_noise, NoiseConfig, NoisePolicy};
pub use prepare::{prepare_dataset, prepare_shape, prepare_shape_with_cloud, PrepareConfig};
pub use queries::{generate_queries, GroundTruth, Query};
pub use sample::{build_sample, QuerySample, SampleBuilder};
