//! Differentiable Gaussian-splat scene reconstruction for desk-scale
//! captures: sparse-reconstruction ingestion, a tile-based rasterizer
//! with analytic gradients, attention-weighted losses, scale-constrained
//! densification, and block subdivision with merged export for larger
//! scenes.

pub mod attention;
pub mod camera;
pub mod config;
pub mod constraints;
pub mod error;
pub mod image;
pub mod image_io;
pub mod losses;
pub mod optimizer;
pub mod partitioner;
pub mod ply;
pub mod projection;
pub mod rasterizer;
pub mod scene;
pub mod sfm;
pub mod ssim;
pub mod synth;
pub mod trainer;

pub use camera::Camera;
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use image::Image;
pub use scene::GaussianCloud;
