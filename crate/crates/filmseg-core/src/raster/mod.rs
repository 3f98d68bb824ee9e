//! Pixel-level data types: RGB images and binary masks, with their on-disk
//! codecs (PNG for images, run-length encoding for masks).

pub mod png;
pub mod rle;

/// Row-major interleaved RGB image (`data[(y * w + x) * 3 + c]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    /// Solid-color image.
    pub fn filled(h: usize, w: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            data.extend_from_slice(&rgb);
        }
        RgbImage { h, w, data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Binary mask with one byte per pixel (0 = background, 1 = foreground).
///
/// Row-major like [`RgbImage`]; kept as bytes rather than a bitset because
/// every consumer walks whole rows and the images are small.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl BitMask {
    pub fn zeros(h: usize, w: usize) -> Self {
        BitMask {
            h,
            w,
            data: vec![0; h * w],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.w + x] = v as u8;
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Foreground centroid `(y, x)`, or `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sy, mut sx) = (0f64, 0f64);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.get(y, x) {
                    n += 1;
                    sy += y as f64;
                    sx += x as f64;
                }
            }
        }
        (n > 0).then(|| (sy / n as f64, sx / n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_area_and_centroid() {
        let mut m = BitMask::zeros(4, 4);
        m.set(1, 1, true);
        m.set(1, 3, true);
        assert_eq!(m.area(), 2);
        assert_eq!(m.centroid(), Some((1.0, 2.0)));
        assert_eq!(BitMask::zeros(2, 2).centroid(), None);
    }
}
