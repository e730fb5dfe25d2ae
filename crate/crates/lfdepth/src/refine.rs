//! Confidence shrinkage and edge-strength manipulation ahead of the final
//! solve. Two factors shrink the initial confidence: one driven by negative
//! epsilon values (partial occlusion) and one by locally noisy initial depth.
//! Two factors raise edge strength, which the final solve turns into weaker
//! smoothing across those edges: one over detected occlusion borders and one
//! over very low-confidence regions.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{ConfidenceKind, ConfidenceMap, DepthKind, DepthMap, Field};
use crate::lightfield::LabelGrid;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Depth-variance threshold above which confidence shrinks.
    pub gamma_v: f64,
    /// Confidence threshold below which edge strength grows.
    pub gamma_c: f64,
    /// Edge-strength gain over occlusion borders.
    pub beta1: f64,
    /// Edge-strength gain over low-confidence regions.
    pub beta2: f64,
    /// Odd window diameter for the local depth variance.
    pub var_window: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams { gamma_v: 0.3, gamma_c: 0.1, beta1: 5.0, beta2: 2.0, var_window: 3 }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_v", self.gamma_v), ("gamma_c", self.gamma_c)] {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::Param(format!("{name} {v} must lie in (0, 1)")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Param(format!("{name} {v} must be nonnegative")));
            }
        }
        if self.var_window % 2 == 0 {
            return Err(Error::Param(format!("var_window {} must be odd", self.var_window)));
        }
        Ok(())
    }
}

/// Occlusion shrinkage: 2 / (1 + e^{-eps}) where eps is negative, else 1.
/// Continuous at zero and decaying toward 0 for strongly negative eps.
pub fn kappa_occ(eps: &DepthMap) -> Result<Field> {
    if eps.kind != DepthKind::Epsilon {
        return Err(Error::Param(format!("kappa_occ expects an epsilon map, got {:?}", eps.kind)));
    }
    Ok(eps.field.map(|e| if e < 0.0 { 2.0 / (1.0 + (-e).exp()) } else { 1.0 }))
}

/// Noise shrinkage: the initial depth is converted to label indices and its
/// population variance taken over a border-truncated window; the output is
/// 2 / (1 + e^{V - gamma_v}) where V exceeds gamma_v, else 1.
pub fn kappa_var(d: &DepthMap, grid: &LabelGrid, p: &RefineParams) -> Result<Field> {
    if d.kind != DepthKind::Initial {
        return Err(Error::Param(format!("kappa_var expects initial depth, got {:?}", d.kind)));
    }
    let idx = grid.to_index_field(&d.field);
    let (h, w) = (idx.height, idx.width);
    let r = (p.var_window - 1) / 2;
    let mut out = Field::new(h, w, 1.0);
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);
            let mut sum = 0.0;
            let mut count = 0.0;
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    sum += idx.get(yy, xx);
                    count += 1.0;
                }
            }
            let mean = sum / count;
            let mut ss = 0.0;
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let d = idx.get(yy, xx) - mean;
                    ss += d * d;
                }
            }
            let v = ss / count;
            if v > p.gamma_v {
                out.set(y, x, 2.0 / (1.0 + (v - p.gamma_v).exp()));
            }
        }
    }
    Ok(out)
}

/// Elementwise product of the initial confidence with both shrinkage factors.
pub fn refine_confidence(w: &ConfidenceMap, ko: &Field, kv: &Field) -> Result<ConfidenceMap> {
    if w.kind != ConfidenceKind::Initial {
        return Err(Error::Param("refine_confidence expects the initial confidence".into()));
    }
    if !w.field.same_shape(ko) || !w.field.same_shape(kv) {
        return Err(Error::Param("shrinkage factor dimensions differ".into()));
    }
    let mut field = w.field.clone();
    for (v, (a, b)) in field.data_mut().iter_mut().zip(ko.data().iter().zip(kv.data())) {
        *v *= a * b;
    }
    ConfidenceMap::new(ConfidenceKind::Refined, field)
}

/// Edge reinforcement over occlusion borders: 1 + beta1 * cos(pi/2 * ko)
/// where eps is negative, else 1. Continuous because ko tends to 1 as eps
/// approaches zero from below.
pub fn rho_occ(ko: &Field, eps: &DepthMap, p: &RefineParams) -> Result<Field> {
    if eps.kind != DepthKind::Epsilon {
        return Err(Error::Param(format!("rho_occ expects an epsilon map, got {:?}", eps.kind)));
    }
    if !ko.same_shape(&eps.field) {
        return Err(Error::Param("kappa_occ and epsilon dimensions differ".into()));
    }
    let mut out = Field::new(ko.height, ko.width, 1.0);
    for (o, (&k, &e)) in out.data_mut().iter_mut().zip(ko.data().iter().zip(eps.field.data())) {
        if e < 0.0 {
            *o = 1.0 + p.beta1 * (std::f64::consts::FRAC_PI_2 * k).cos();
        }
    }
    Ok(out)
}

/// Edge reinforcement over low-confidence regions: 1 + beta2 * cos(pi/2 * w)
/// where w falls below gamma_c, else 1. Deliberately discontinuous at the
/// threshold; the jump is part of the weighting scheme, not smoothed away.
pub fn rho_conf(w: &ConfidenceMap, p: &RefineParams) -> Result<Field> {
    if w.kind != ConfidenceKind::Initial {
        return Err(Error::Param("rho_conf expects the initial confidence".into()));
    }
    Ok(w.field.map(|v| {
        if v < p.gamma_c {
            1.0 + p.beta2 * (std::f64::consts::FRAC_PI_2 * v).cos()
        } else {
            1.0
        }
    }))
}
