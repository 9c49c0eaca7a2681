//! Turns a single fixed-camera RGB-D video into a multi-view,
//! multi-timestamp frame matrix by progressive depth warping and
//! inpainting, with a synthetic oracle scene standing in for the neural
//! models.
//!
//! Geometry and depth processing are generic over the scalar type (`f32`
//! or `f64`); the aliases below name the common instantiations. Frame
//! depth is stored as `f32`, matching the dataset format.

pub mod adapters;
pub mod camera;
pub mod cim;
pub mod depthproc;
pub mod error;
pub mod frame;
pub mod geom;
pub mod inpaint;
pub mod num;
pub mod oracle;
pub mod pipeline;
pub mod pwm;
pub mod raster;

pub use error::{Error, Result};
pub use frame::{Frame, Provenance, WarpedFrame};
pub use num::Real;
pub use raster::{ColorImage, Mask, Rgb8};

pub type Vec3f = geom::Vec3<f32>;
pub type Vec3d = geom::Vec3<f64>;
pub type Mat3f = geom::Mat3<f32>;
pub type Mat3d = geom::Mat3<f64>;
pub type Intrinsics32 = camera::Intrinsics<f32>;
pub type Intrinsics64 = camera::Intrinsics<f64>;
pub type Pose32 = camera::Pose<f32>;
pub type Pose64 = camera::Pose<f64>;
pub type CameraNetwork32 = camera::CameraNetwork<f32>;
pub type CameraNetwork64 = camera::CameraNetwork<f64>;
pub type TrajectorySpec64 = camera::TrajectorySpec<f64>;
pub type DepthMap32 = depthproc::DepthMap<f32>;
pub type DepthMap64 = depthproc::DepthMap<f64>;
pub type AlignmentResult32 = depthproc::AlignmentResult<f32>;
pub type AlignmentResult64 = depthproc::AlignmentResult<f64>;
