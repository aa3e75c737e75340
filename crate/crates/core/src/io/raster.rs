use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::RasterImage;

/// Sample depth used when writing an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => u8::MAX as f64,
            BitDepth::Sixteen => u16::MAX as f64,
        }
    }
}

/// Decodes an 8- or 16-bit grayscale or RGB PNG/TIFF into [0, 1]. Alpha is
/// dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::file(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::file(path, e))?
        .decode()
        .map_err(|e| Error::file(path, e))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match decoded {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => (1, scale8(decoded.to_luma8().into_raw())),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => (3, scale8(decoded.to_rgb8().into_raw())),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => (1, scale16(decoded.to_luma16().into_raw())),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => (3, scale16(decoded.to_rgb16().into_raw())),
        other => {
            return Err(Error::file(
                path,
                format!("unsupported pixel format {:?}", other.color()),
            ))
        }
    };
    RasterImage::new(w, h, channels, data).map_err(|e| Error::file(path, e))
}

fn scale8(raw: Vec<u8>) -> Vec<f64> {
    raw.into_iter().map(|v| v as f64 / u8::MAX as f64).collect()
}

fn scale16(raw: Vec<u16>) -> Vec<f64> {
    raw.into_iter().map(|v| v as f64 / u16::MAX as f64).collect()
}

/// Writes a PNG or TIFF, chosen by extension, rounding to the nearest level.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path).map_err(|e| Error::file(path, e))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Tiff) {
        return Err(Error::file(path, format!("unsupported output format {format:?}")));
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let max = depth.max_value();
    let quantized = img.data().iter().map(|v| (v * max).round());
    let result = match (depth, img.channels()) {
        (BitDepth::Eight, 1) => {
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantized.map(|v| v as u8).collect()).map(DynamicImage::from)
        }
        (BitDepth::Eight, _) => {
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantized.map(|v| v as u8).collect()).map(DynamicImage::from)
        }
        (BitDepth::Sixteen, 1) => {
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quantized.map(|v| v as u16).collect()).map(DynamicImage::from)
        }
        (BitDepth::Sixteen, _) => {
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quantized.map(|v| v as u16).collect()).map(DynamicImage::from)
        }
    };
    result
        .expect("buffer length matches dimensions")
        .save_with_format(path, format)
        .map_err(|e| Error::file(path, e))
}
