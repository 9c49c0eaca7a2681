//! Orchestration: source video and depth, progressive warping and
//! inpainting over every (view, timestamp) cell, dataset I/O and the
//! oracle quality report.

mod config;
mod dataset;
mod run;
mod verify;

pub use config::{PipelineConfig, SourceConfig};
pub use dataset::{
    cell_path, decode_depth_file, depth_path, encode_depth_file, export_dataset, export_partial, frame_path,
    import_dataset, provenance_path, read_manifest, Manifest, DEPTH_HEADER_BYTES, DEPTH_MAGIC, FORMAT_VERSION,
};
pub use run::{cell_seed, in_pool, run, CellMeta, Pipeline, ViewTimeMatrix};
pub use verify::{masked_psnr, verify, CellReport, Psnr, Summary, VerifyReport};
