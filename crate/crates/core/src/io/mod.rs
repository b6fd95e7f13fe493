//! On-disk formats: GBIN arrays, 8/16-bit PGM and PNG images, replay bundles.

pub mod bundle;
pub mod gbin;
pub mod image_io;

pub use bundle::{load_bundle, save_bundle, BundleMeta, ReplayBundle};
pub use gbin::{read_gbin, write_gbin, Dtype, GbinArray};
pub use image_io::{load_image, save_image, BitDepth};
