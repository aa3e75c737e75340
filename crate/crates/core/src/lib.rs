pub mod config;
pub mod deformable;
pub mod error;
pub mod eval;
pub mod features;
pub mod field;
pub mod geometry;
pub mod image;
pub mod io;
pub mod landmarks;
pub mod pipeline;
pub mod preprocess;
pub mod search;
pub mod synth;

pub use config::{LevelConfig, RegistrationConfig, SelectionPolicy};
pub use error::{Error, Result};
pub use field::DisplacementField;
pub use geometry::{AffineTransform2D, Point};
pub use image::RasterImage;
pub use landmarks::{Landmark, LandmarkSet};
