//! Binary segmentation masks.

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// A row-major `{0, 1}` mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Any nonzero input becomes 1.
    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "{} values do not fill a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: data.into_iter().map(|v| u8::from(v != 0)).collect(),
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u8::from(f(x, y)))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = u8::from(on);
    }

    /// Foreground pixel count.
    pub fn area(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixelwise union of equally sized masks.
    pub fn union(masks: &[BinaryMask]) -> Result<BinaryMask> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Data("union of zero masks".into()))?;
        let mut out = first.clone();
        for m in &masks[1..] {
            if !m.same_size(first) {
                return Err(Error::shape(format!(
                    "mask sizes differ: {}x{} vs {}x{}",
                    m.width, m.height, first.width, first.height
                )));
            }
            for (o, v) in out.data.iter_mut().zip(&m.data) {
                *o |= *v;
            }
        }
        Ok(out)
    }

    /// Nearest-neighbour resampling: destination pixel `x` reads source `floor((x + 0.5) * w / w')`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        let sx: Vec<usize> = (0..width)
            .map(|x| ((2 * x + 1) * self.width / (2 * width)).min(self.width - 1))
            .collect();
        BinaryMask::from_fn(width, height, |x, y| {
            let syy = ((2 * y + 1) * self.height / (2 * height)).min(self.height - 1);
            self.get(sx[x], syy)
        })
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    /// `(1, 1, H, W)` tensor of zeros and ones.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            Shape4::new(1, 1, self.height, self.width),
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .expect("mask dimensions are consistent")
    }

    /// Pixels on the boundary: foreground with at least one 4-neighbour outside the mask.
    pub fn contour(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            if !self.get(x, y) {
                return false;
            }
            let edge = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
            edge || !self.get(x - 1, y)
                || !self.get(x + 1, y)
                || !self.get(x, y - 1)
                || !self.get(x, y + 1)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_upsampling_replicates_cells() {
        let checker = BinaryMask::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let up = checker.resize_nearest(4, 4);
        let expected = BinaryMask::from_fn(4, 4, |x, y| (x / 2 + y / 2) % 2 == 0);
        assert_eq!(up, expected);
    }

    #[test]
    fn empty_mask_stays_empty_after_resizing() {
        let m = BinaryMask::zeros(37, 23);
        assert_eq!(m.resize_nearest(256, 256).area(), 0);
        assert_eq!(m.resize_nearest(8, 8).area(), 0);
    }

    #[test]
    fn contour_of_square() {
        let m = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        let c = m.contour();
        assert_eq!(c.area(), 8);
        assert!(!c.get(2, 2));
    }

    #[test]
    fn union_rejects_size_mismatch() {
        assert!(BinaryMask::union(&[BinaryMask::zeros(2, 2), BinaryMask::zeros(3, 2)]).is_err());
    }
}
