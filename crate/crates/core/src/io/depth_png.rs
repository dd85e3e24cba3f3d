//! Depth images as 16-bit grayscale PNG. Pixel values are raw sensor
//! units (millimeters at the default depth scale); zero marks an invalid
//! pixel. Anything other than single-channel 16-bit is rejected so a depth
//! map can never be silently misread as an 8-bit thumbnail.

use super::IoError;
use image::{DynamicImage, ImageBuffer, Luma};
use std::path::Path;

/// Writes raw depth values (row-major, `width * height` of them).
pub fn write_depth_png(path: &Path, width: u32, height: u32, values: &[u16]) -> Result<(), IoError> {
    if values.len() != (width as usize) * (height as usize) {
        return Err(IoError::format(
            path,
            format!("buffer holds {} values, expected {}x{}", values.len(), width, height),
        ));
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, values.to_vec())
            .expect("buffer length checked above");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| IoError::format(path, format!("png encode failed: {e}")))
}

/// Reads a 16-bit grayscale PNG back as `(width, height, values)`.
pub fn read_depth_png(path: &Path) -> Result<(u32, u32, Vec<u16>), IoError> {
    let img = image::open(path).map_err(|e| IoError::format(path, format!("png decode failed: {e}")))?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok((w, h, buf.into_raw()))
        }
        other => Err(IoError::format(
            path,
            format!(
                "expected 16-bit grayscale depth, got {:?}; refusing to guess a conversion",
                other.color()
            ),
        )),
    }
}
