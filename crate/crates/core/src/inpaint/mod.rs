//! Hole filling: component partition, fast-marching inpainting for small
//! holes and adapter-backed best-of-N inpainting for large ones.

mod external;
mod partition;
mod telea;

pub use external::{external_inpaint, ExternalOutcome, InpaintRequestSpec, ScoreCrop, DEFAULT_INPAINT_CANDIDATES};
pub use partition::{
    connected_components, partition_holes, scaled_hole_threshold, Component, HolePartition, DEFAULT_HOLE_THRESHOLD,
};
pub use telea::{telea_inpaint, telea_inpaint_with_known, DEFAULT_TELEA_RADIUS};
