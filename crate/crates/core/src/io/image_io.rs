//! Grayscale image import/export as PGM (P5) or PNG, 8 or 16 bit.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        other => Err(Error::Format(format!("unsupported image extension {other:?}"))),
    }
}

/// Loads any supported grayscale (or color, converted to luma) image into [0,1].
pub fn load_image(path: impl AsRef<Path>) -> Result<Image2D> {
    let path = path.as_ref();
    let fmt = format_for(path)?;
    let img = image::ImageReader::with_format(std::io::BufReader::new(std::fs::File::open(path)?), fmt).decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => other.into_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    };
    Image2D::new(w, h, data)
}

/// Writes `img` (clamped to [0,1]) as PNG or binary PGM, chosen by extension.
pub fn save_image(img: &Image2D, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let fmt = format_for(path)?;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynimg = match depth {
        BitDepth::Eight => {
            let raw = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, raw).expect("buffer size"))
        }
        BitDepth::Sixteen => {
            let raw = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, raw).expect("buffer size"))
        }
    };
    dynimg.save_with_format(path, fmt)?;
    Ok(())
}
