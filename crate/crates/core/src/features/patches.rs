use crate::error::{Error, Result};
use crate::image::Image;

/// Row-major grid of `size × size` crops taken every `stride` pixels.
/// Windows that would run past the right or bottom edge are dropped.
pub fn crop_patches(image: &Image, size: usize, stride: usize) -> Result<Vec<Image>> {
    if stride == 0 || size == 0 {
        return Err(Error::invalid("patch size and stride must be positive"));
    }
    if size > image.width().min(image.height()) {
        return Err(Error::invalid(format!(
            "patch size {size} exceeds {}x{} image",
            image.width(),
            image.height()
        )));
    }
    let c = image.channels();
    let mut patches = Vec::new();
    for top in (0..=image.height() - size).step_by(stride) {
        for left in (0..=image.width() - size).step_by(stride) {
            let mut data = Vec::with_capacity(size * size * c);
            for y in top..top + size {
                let start = image.index(left, y, 0);
                data.extend_from_slice(&image.data()[start..start + size * c]);
            }
            patches.push(Image::new(size, size, c, data)?);
        }
    }
    Ok(patches)
}
