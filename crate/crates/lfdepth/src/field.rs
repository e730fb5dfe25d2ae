//! Dense per-pixel grids: scalar fields, boolean masks, and the typed
//! depth/confidence wrappers handed between pipeline stages.

use crate::error::{Error, Result};

/// Row-major H x W grid of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, fill: f64) -> Self {
        Field { height, width, data: vec![fill; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width, "field data length mismatch");
        Field { height, width, data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// (min, max) over all values.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Boolean per-pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask { height, width, data: vec![false; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width, "mask data length mismatch");
        Mask { height, width, data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Intersection over union; 1.0 when both masks are empty.
    pub fn iou(&self, other: &Mask) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            if *a && *b {
                inter += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Interpretation of the values carried by a [`DepthMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthKind {
    /// Per-pixel cost-volume winner, disparity units; every value is a grid label.
    Initial,
    /// Superpixel-wise depth broadcast to pixels, continuous label-index units.
    SpWise,
    /// Signed gap between the initial and superpixel-wise depth, label-index units.
    Epsilon,
    /// Final refined depth, disparity units.
    Final,
}

#[derive(Debug, Clone)]
pub struct DepthMap {
    pub kind: DepthKind,
    pub field: Field,
}

impl DepthMap {
    pub fn new(kind: DepthKind, field: Field) -> Self {
        DepthMap { kind, field }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceKind {
    Initial,
    Refined,
}

/// Per-pixel confidence with every value in [0, 1].
#[derive(Debug, Clone)]
pub struct ConfidenceMap {
    pub kind: ConfidenceKind,
    pub field: Field,
}

impl ConfidenceMap {
    pub fn new(kind: ConfidenceKind, field: Field) -> Result<Self> {
        for &v in field.data() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Param(format!("confidence value {v} outside [0, 1]")));
            }
        }
        Ok(ConfidenceMap { kind, field })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_roundtrip() {
        let mut f = Field::new(2, 3, 0.0);
        f.set(1, 2, 4.5);
        assert_eq!(f.get(1, 2), 4.5);
        assert_eq!(f.min_max(), (0.0, 4.5));
    }

    #[test]
    fn mask_iou() {
        let a = Mask::from_vec(1, 4, vec![true, true, false, false]);
        let b = Mask::from_vec(1, 4, vec![false, true, true, false]);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        let e = Mask::new(1, 4);
        assert_eq!(e.iou(&e), 1.0);
    }

    #[test]
    fn confidence_rejects_out_of_range() {
        let f = Field::from_vec(1, 2, vec![0.5, 1.2]);
        assert!(ConfidenceMap::new(ConfidenceKind::Initial, f).is_err());
    }
}
