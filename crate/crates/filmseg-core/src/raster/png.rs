//! PNG encode/decode for [`RgbImage`], backed by the `image` crate.
//!
//! PNG is lossless, so a write/read cycle reproduces the pixel buffer
//! byte-for-byte — the dataset checksum machinery depends on that.

use std::path::Path;

use thiserror::Error;

use super::RgbImage;

#[derive(Debug, Error)]
pub enum PngError {
    #[error("i/o error on image file: {0}")]
    Io(#[from] std::io::Error),
    #[error("png codec error: {0}")]
    Codec(#[from] image::ImageError),
    #[error("expected an 8-bit RGB image")]
    NotRgb8,
}

/// Writes the image as an RGB8 PNG.
pub fn write_file(path: &Path, img: &RgbImage) -> Result<(), PngError> {
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.w as u32, img.h as u32, img.data.clone())
            .expect("buffer length matches dimensions by construction");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads an RGB8 PNG written by [`write_file`].
pub fn read_file(path: &Path) -> Result<RgbImage, PngError> {
    let dynamic = image::ImageReader::open(path)?.decode()?;
    let rgb = match dynamic {
        image::DynamicImage::ImageRgb8(b) => b,
        _ => return Err(PngError::NotRgb8),
    };
    Ok(RgbImage {
        h: rgb.height() as usize,
        w: rgb.width() as usize,
        data: rgb.into_raw(),
    })
}
