//! Evaluation against ground truth: the fraction of pixels whose disparity
//! error exceeds a threshold, and a precision/recall sweep over depth-edge
//! detections measured against ground-truth occlusion boundaries.

use crate::error::{Error, Result};
use crate::field::{DepthKind, DepthMap, Field};

/// One point of the boundary precision/recall curve, together with the raw
/// counts behind it: g_p ground-truth boundary pixels, c_p predicted boundary
/// pixels at this threshold, t_p predictions within one pixel of the truth.
#[derive(Debug, Clone, Copy)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub g_p: usize,
    pub c_p: usize,
    pub t_p: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EvalResult {
    pub badpix_0_1: f64,
    pub pr_curve: Vec<PrPoint>,
}

/// Border width to exclude where the light field under-observes the scene:
/// the largest pixel displacement any view can apply.
pub fn under_observed_margin(max_angular_offset: f64, max_abs_disparity: f64) -> usize {
    (max_angular_offset * max_abs_disparity).ceil() as usize
}

/// Fraction of pixels whose absolute disparity error exceeds the threshold,
/// measured outside a `margin`-pixel border.
pub fn badpix(est: &DepthMap, gt: &Field, threshold: f64, margin: usize) -> Result<f64> {
    if est.kind == DepthKind::Epsilon {
        return Err(Error::Metric("badpix expects a disparity map, not an epsilon map".into()));
    }
    if !est.field.same_shape(gt) {
        return Err(Error::Metric("estimate and ground truth dimensions differ".into()));
    }
    let (h, w) = (gt.height, gt.width);
    if 2 * margin >= h || 2 * margin >= w {
        return Err(Error::Metric(format!("margin {margin} leaves no pixels in {w}x{h}")));
    }
    let mut bad = 0usize;
    let mut total = 0usize;
    for y in margin..h - margin {
        for x in margin..w - margin {
            total += 1;
            if (est.field.get(y, x) - gt.get(y, x)).abs() > threshold {
                bad += 1;
            }
        }
    }
    Ok(bad as f64 / total as f64)
}

/// Forward-difference gradient magnitude (L2 over the two axis differences).
fn gradient_magnitude(f: &Field) -> Field {
    let (h, w) = (f.height, f.width);
    let mut out = Field::new(h, w, 0.0);
    for y in 0..h {
        for x in 0..w {
            let gx = if x + 1 < w { f.get(y, x + 1) - f.get(y, x) } else { 0.0 };
            let gy = if y + 1 < h { f.get(y + 1, x) - f.get(y, x) } else { 0.0 };
            out.set(y, x, (gx * gx + gy * gy).sqrt());
        }
    }
    out
}

fn dilate8(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w {
                        out[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Sweeps 64 evenly spaced thresholds over the estimate's gradient magnitude
/// and scores each detection set against the ground-truth boundary (gradient
/// above `gt_boundary_threshold`). A detection counts as true within one
/// pixel of a true boundary pixel. Thresholds that detect nothing are
/// dropped, so a constant estimate yields an empty curve.
pub fn boundary_pr(est: &DepthMap, gt: &Field, gt_boundary_threshold: f64) -> Result<Vec<PrPoint>> {
    if est.kind == DepthKind::Epsilon {
        return Err(Error::Metric("boundary_pr expects a disparity map".into()));
    }
    if !est.field.same_shape(gt) {
        return Err(Error::Metric("estimate and ground truth dimensions differ".into()));
    }
    let (h, w) = (gt.height, gt.width);
    let gt_grad = gradient_magnitude(gt);
    let gt_mask: Vec<bool> = gt_grad.data().iter().map(|&g| g > gt_boundary_threshold).collect();
    let g_p = gt_mask.iter().filter(|&&b| b).count();
    if g_p == 0 {
        return Err(Error::Metric("ground-truth boundary is empty at this threshold".into()));
    }
    let near_gt = dilate8(&gt_mask, h, w);

    let est_grad = gradient_magnitude(&est.field);
    let max_grad = est_grad.data().iter().copied().fold(0.0f64, f64::max);
    let mut curve = Vec::new();
    for i in 0..64 {
        let t = max_grad * i as f64 / 64.0;
        let mut c_p = 0usize;
        let mut t_p = 0usize;
        for (idx, &g) in est_grad.data().iter().enumerate() {
            if g > t {
                c_p += 1;
                if near_gt[idx] {
                    t_p += 1;
                }
            }
        }
        if c_p == 0 {
            continue;
        }
        curve.push(PrPoint {
            threshold: t,
            precision: t_p as f64 / c_p as f64,
            recall: (c_p as f64 / g_p as f64).min(1.0),
            g_p,
            c_p,
            t_p,
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_level(h: usize, w: usize, split: usize, lo: f64, hi: f64) -> Field {
        let mut f = Field::new(h, w, lo);
        for y in 0..h {
            for x in split..w {
                f.set(y, x, hi);
            }
        }
        f
    }

    fn depth(f: Field) -> DepthMap {
        DepthMap::new(DepthKind::Final, f)
    }

    #[test]
    fn perfect_estimate_scores_zero() {
        let gt = two_level(10, 12, 6, -1.0, 0.5);
        assert_eq!(badpix(&depth(gt.clone()), &gt, 0.1, 0).unwrap(), 0.0);
        assert_eq!(badpix(&depth(gt.clone()), &gt, 0.1, 2).unwrap(), 0.0);
    }

    #[test]
    fn uniform_offset_scores_one() {
        let gt = two_level(10, 12, 6, -1.0, 0.5);
        let est = depth(gt.map(|v| v + 0.2));
        assert_eq!(badpix(&est, &gt, 0.1, 0).unwrap(), 1.0);
    }

    #[test]
    fn margin_excludes_border_errors() {
        let gt = Field::new(10, 10, 0.0);
        let mut est = gt.clone();
        for x in 0..10 {
            est.set(0, x, 5.0);
            est.set(9, x, 5.0);
        }
        assert!(badpix(&depth(est.clone()), &gt, 0.1, 0).unwrap() > 0.0);
        assert_eq!(badpix(&depth(est), &gt, 0.1, 1).unwrap(), 0.0);
        assert!(badpix(&depth(gt.clone()), &gt, 0.1, 5).is_err());
    }

    #[test]
    fn perfect_estimate_has_unit_precision_everywhere() {
        let gt = two_level(16, 20, 10, 0.0, 1.0);
        let curve = boundary_pr(&depth(gt.clone()), &gt, 0.5).unwrap();
        assert!(!curve.is_empty());
        for pt in &curve {
            assert_eq!(pt.precision, 1.0, "threshold {}", pt.threshold);
            assert!(pt.recall > 0.0 && pt.recall <= 1.0);
        }
        // The sweep reaches full recall at its lowest threshold.
        assert_eq!(curve[0].recall, 1.0);
    }

    #[test]
    fn constant_estimate_gives_empty_curve() {
        let gt = two_level(8, 8, 4, 0.0, 1.0);
        let est = depth(Field::new(8, 8, 0.3));
        assert!(boundary_pr(&est, &gt, 0.5).unwrap().is_empty());
    }

    #[test]
    fn flat_ground_truth_is_an_error() {
        let gt = Field::new(8, 8, 0.7);
        let est = depth(two_level(8, 8, 4, 0.0, 1.0));
        assert!(boundary_pr(&est, &gt, 0.5).is_err());
    }

    #[test]
    fn recall_nonincreasing_and_counts_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let gt = two_level(20, 24, 12, 0.0, 1.0);
            let mut est_f = gt.clone();
            for v in est_f.data_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
            let curve = boundary_pr(&depth(est_f), &gt, 0.5).unwrap();
            for pair in curve.windows(2) {
                assert!(pair[0].threshold <= pair[1].threshold);
                assert!(pair[0].recall >= pair[1].recall);
            }
            for pt in &curve {
                assert!(pt.t_p <= pt.c_p);
                assert!((0.0..=1.0).contains(&pt.precision));
                assert!((0.0..=1.0).contains(&pt.recall));
            }
        }
    }

    #[test]
    fn displaced_edge_loses_precision() {
        // An edge four pixels off the true one is outside the one-pixel
        // tolerance band, so no detection is ever a true positive.
        let gt = two_level(16, 24, 12, 0.0, 1.0);
        let est = depth(two_level(16, 24, 16, 0.0, 1.0));
        let curve = boundary_pr(&est, &gt, 0.5).unwrap();
        assert!(!curve.is_empty());
        for pt in &curve {
            assert_eq!(pt.precision, 0.0);
        }
    }
}
