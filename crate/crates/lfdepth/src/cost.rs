//! Angular-variance matching cost, its bilateral aggregation into a cost
//! volume, and the initial depth and confidence estimates read off it.
//!
//! For a disparity hypothesis s, the views of a correctly matched scene point
//! sample the same radiance, so the variance of the samples along the sheared
//! positions (x + u's, y + v's) is the matching cost. The volume aggregates
//! that variance over a spatial window with bilateral similarity weights
//! measured on the central view.

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{ConfidenceKind, ConfidenceMap, DepthKind, DepthMap, Field};
use crate::lightfield::{LabelGrid, LightField};

/// Floor applied to the per-pixel minimum cost inside the confidence ratio.
pub const COST_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Odd diameter of the aggregation window.
    pub w_sigma: usize,
    /// Bilateral range parameter on [0, 1] intensities.
    pub gamma: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { w_sigma: 5, gamma: 0.1 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.w_sigma % 2 == 0 {
            return Err(Error::Param(format!("w_sigma {} must be odd", self.w_sigma)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Param(format!("gamma {} must be positive", self.gamma)));
        }
        Ok(())
    }
}

/// Aggregated matching cost per pixel and label, stored label-major.
#[derive(Debug, Clone)]
pub struct CostVolume {
    pub height: usize,
    pub width: usize,
    labels: LabelGrid,
    data: Vec<f64>,
}

impl CostVolume {
    pub fn from_parts(height: usize, width: usize, labels: LabelGrid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * labels.len(), "cost volume length mismatch");
        CostVolume { height, width, labels, data }
    }

    pub fn labels(&self) -> &LabelGrid {
        &self.labels
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, l: usize) -> f64 {
        self.data[l * self.height * self.width + y * self.width + x]
    }

    /// All finite and non-negative; cheap sanity gate used by tests.
    pub fn validate(&self) -> Result<()> {
        for &v in &self.data {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Param(format!("cost volume entry {v}")));
            }
        }
        Ok(())
    }
}

#[inline]
fn variance_at(
    lf: &LightField,
    x: usize,
    y: usize,
    s: f64,
    cu: usize,
    cv: usize,
    buf: &mut Vec<f64>,
) -> f64 {
    let c = lf.channels;
    buf.clear();
    let mut tmp = [0.0f64; 3];
    let mut n = 0usize;
    for v in 0..lf.nv {
        let dv = v as f64 - cv as f64;
        for u in 0..lf.nu {
            let du = u as f64 - cu as f64;
            let px = x as f64 + s * du;
            let py = y as f64 + s * dv;
            if lf.view(v, u).sample_bilinear(px, py, &mut tmp[..c]) {
                buf.extend_from_slice(&tmp[..c]);
                n += 1;
            }
        }
    }
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mut acc = 0.0;
    for ch in 0..c {
        let mut mean = 0.0;
        for k in 0..n {
            mean += buf[k * c + ch];
        }
        mean /= nf;
        let mut ss = 0.0;
        for k in 0..n {
            let d = buf[k * c + ch] - mean;
            ss += d * d;
        }
        acc += ss / (nf - 1.0);
    }
    acc / c as f64
}

/// Unbiased variance of the in-bounds view samples along the slope of
/// disparity `s` through central-view pixel (x, y), averaged over channels.
/// Sample positions are bilinearly interpolated; positions that leave a view
/// are dropped, never clamped. Fewer than two surviving samples give zero.
pub fn angular_variance(lf: &LightField, x: usize, y: usize, s: f64) -> f64 {
    let (cu, cv) = lf.center();
    let mut buf = Vec::with_capacity(lf.nu * lf.nv * lf.channels);
    variance_at(lf, x, y, s, cu, cv, &mut buf)
}

fn variance_plane(lf: &LightField, s: f64) -> Field {
    let (cu, cv) = lf.center();
    let w = lf.width;
    let mut data = vec![0.0f64; lf.height * w];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut buf = Vec::with_capacity(lf.nu * lf.nv * lf.channels);
        for (x, slot) in row.iter_mut().enumerate() {
            *slot = variance_at(lf, x, y, s, cu, cv, &mut buf);
        }
    });
    Field::from_vec(lf.height, w, data)
}

/// Builds the aggregated cost volume: per label, the angular-variance plane
/// is summed over a `w_sigma` window with unnormalized bilateral weights on
/// the channel-mean central-view intensity. Windows truncate at the image
/// border. Summation order within each cell is fixed, so results are
/// identical under any parallel schedule.
pub fn build_cost_volume(
    lf: &LightField,
    grid: &LabelGrid,
    params: &CostParams,
) -> Result<CostVolume> {
    params.validate()?;
    let mean = lf.central_view().channel_mean();
    let planes: Vec<Field> =
        grid.labels().par_iter().map(|&s| variance_plane(lf, s)).collect();
    let (h, w) = (lf.height, lf.width);
    let r = (params.w_sigma - 1) / 2;
    let inv2g2 = 1.0 / (2.0 * params.gamma * params.gamma);
    let hw = h * w;
    let mut data = vec![0.0f64; hw * grid.len()];
    data.par_chunks_mut(hw).enumerate().for_each(|(l, slab)| {
        let plane = &planes[l];
        slab.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(h - 1);
            for (x, slot) in row.iter_mut().enumerate() {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r).min(w - 1);
                let center = mean.get(y, x);
                let mut acc = 0.0;
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let d = mean.get(yy, xx) - center;
                        acc += (-d * d * inv2g2).exp() * plane.get(yy, xx);
                    }
                }
                *slot = acc;
            }
        });
    });
    Ok(CostVolume::from_parts(h, w, grid.clone(), data))
}

/// Per-pixel winning label. Ties resolve toward the smaller label index.
pub fn initial_depth(cv: &CostVolume) -> DepthMap {
    let mut out = Field::new(cv.height, cv.width, 0.0);
    for y in 0..cv.height {
        for x in 0..cv.width {
            let mut best = 0usize;
            let mut best_cost = cv.get(y, x, 0);
            for l in 1..cv.n_labels() {
                let c = cv.get(y, x, l);
                if c < best_cost {
                    best_cost = c;
                    best = l;
                }
            }
            out.set(y, x, cv.labels.value(best));
        }
    }
    DepthMap::new(DepthKind::Initial, out)
}

/// Confidence from the per-pixel mean/min cost ratio, min-max normalized to
/// [0, 1] over the image. A constant ratio field maps to all ones.
pub fn initial_confidence(cv: &CostVolume) -> ConfidenceMap {
    let mut raw = Field::new(cv.height, cv.width, 0.0);
    let nl = cv.n_labels() as f64;
    for y in 0..cv.height {
        for x in 0..cv.width {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            for l in 0..cv.n_labels() {
                let c = cv.get(y, x, l);
                sum += c;
                if c < min {
                    min = c;
                }
            }
            raw.set(y, x, (sum / nl) / min.max(COST_FLOOR));
        }
    }
    let (lo, hi) = raw.min_max();
    let field = if hi > lo {
        raw.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
    } else {
        Field::new(cv.height, cv.width, 1.0)
    };
    ConfidenceMap::new(ConfidenceKind::Initial, field).expect("normalized to [0, 1]")
}
