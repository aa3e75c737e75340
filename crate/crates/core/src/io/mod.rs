//! File formats: images, displacement fields, landmarks, affine matrices and
//! pipeline configuration.

mod affine;
mod config;
mod field;
mod landmarks;
mod raster;

pub use affine::{format_affine, load_affine, parse_affine, save_affine};
pub use config::{load_pipeline_config, Direction, MatcherChoice, PipelineConfig, DEFAULT_MATCHER_TIMEOUT_SECS};
pub use field::{decode_field, encode_field, load_displacement_field, save_displacement_field};
pub use landmarks::{load_landmarks, read_landmarks, save_landmarks, write_landmarks};
pub use raster::{load_image, save_image, BitDepth};
