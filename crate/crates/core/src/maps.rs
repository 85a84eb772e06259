//! Dense per-pixel containers: score maps, feature maps, point maps and
//! binary masks. All buffers are row-major with the channel index innermost.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("dimensions must be positive, got {height}x{width}x{channels}")]
    Empty {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("buffer holds {actual} values, expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("mask pixel {index} has value {value}, only 0 and 255 are allowed")]
    MaskValue { index: usize, value: u8 },
    #[error("spatial size mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    Spatial {
        left_h: usize,
        left_w: usize,
        right_h: usize,
        right_w: usize,
    },
}

pub(crate) fn check_same_size(
    left: (usize, usize),
    right: (usize, usize),
) -> Result<(), ShapeError> {
    if left != right {
        return Err(ShapeError::Spatial {
            left_h: left.0,
            left_w: left.1,
            right_h: right.0,
            right_w: right.1,
        });
    }
    Ok(())
}

/// Per-pixel anomaly scores, `height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 {
            return Err(ShapeError::Empty {
                height,
                width,
                channels: 1,
            });
        }
        if data.len() != height * width {
            return Err(ShapeError::Length {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self, ShapeError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self, ShapeError> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f32> {
        self.data
    }

    /// Applies `f` to every score, keeping the geometry.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Views the scores as a one-channel feature map.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }
}

/// `height x width x channels` feature vectors, one per spatial location.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ShapeError::Empty {
                height,
                width,
                channels,
            });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ShapeError::Length {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Feature vector at `(row, col)`.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Feature vector at flat pixel index `row * width + col`.
    #[inline]
    pub fn pixel_flat(&self, index: usize) -> &[f32] {
        let start = index * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f32> {
        self.data
    }
}

/// Binary mask; 0 marks nominal pixels and 255 anomalous (or, for
/// background masks, excluded) pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

pub const MASK_OFF: u8 = 0;
pub const MASK_ON: u8 = 255;

impl MaskImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 {
            return Err(ShapeError::Empty {
                height,
                width,
                channels: 1,
            });
        }
        if pixels.len() != height * width {
            return Err(ShapeError::Length {
                expected: height * width,
                actual: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, &v)| v != MASK_OFF && v != MASK_ON)
        {
            return Err(ShapeError::MaskValue { index, value });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![MASK_OFF; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![MASK_ON; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut on: impl FnMut(usize, usize) -> bool) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(if on(r, c) { MASK_ON } else { MASK_OFF });
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub(crate) fn from_bools(height: usize, width: usize, bits: &[bool]) -> Self {
        debug_assert_eq!(bits.len(), height * width);
        Self {
            width,
            height,
            pixels: bits
                .iter()
                .map(|&b| if b { MASK_ON } else { MASK_OFF })
                .collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn is_on(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col] != MASK_OFF
    }

    #[inline]
    pub fn is_on_flat(&self, index: usize) -> bool {
        self.pixels[index] != MASK_OFF
    }

    pub fn count_on(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != MASK_OFF).count()
    }

    pub fn any_on(&self) -> bool {
        self.pixels.iter().any(|&p| p != MASK_OFF)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.pixels[row * self.width + col] = if on { MASK_ON } else { MASK_OFF };
    }
}

/// Pixel-registered 3D coordinates, `height x width x 3`. A point whose three
/// coordinates are all zero is a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl PointMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 {
            return Err(ShapeError::Empty {
                height,
                width,
                channels: 3,
            });
        }
        if data.len() != height * width * 3 {
            return Err(ShapeError::Length {
                expected: height * width * 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn point(&self, index: usize) -> [f32; 3] {
        let p = &self.data[index * 3..index * 3 + 3];
        [p[0], p[1], p[2]]
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        let [x, y, z] = self.point(index);
        !(x == 0.0 && y == 0.0 && z == 0.0)
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_masks() {
        let err = MaskImage::new(1, 2, vec![0, 7]).unwrap_err();
        assert_eq!(err, ShapeError::MaskValue { index: 1, value: 7 });
    }

    #[test]
    fn feature_pixel_indexing() {
        let f = FeatureMap::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(f.pixel(1, 0), &[6.0, 7.0, 8.0]);
        assert_eq!(f.pixel_flat(3), &[9.0, 10.0, 11.0]);
    }

    #[test]
    fn length_checked() {
        assert!(matches!(
            ScoreMap::new(2, 2, vec![0.0; 3]),
            Err(ShapeError::Length {
                expected: 4,
                actual: 3
            })
        ));
        assert!(FeatureMap::new(0, 2, 1, vec![]).is_err());
    }
}
