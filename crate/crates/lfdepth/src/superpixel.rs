//! Superpixel segmentation of the central view, the superpixel adjacency
//! graph, piecewise-planar depth regularization over that graph, and the
//! epsilon map whose negative values flag partially occluded border regions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{ConfidenceMap, DepthKind, DepthMap, Field};
use crate::lightfield::{Image, LabelGrid};
use crate::solver::{assemble, solve, SolveReport, SolverParams};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpRegParams {
    /// Mean pixels per superpixel; the seed grid spacing is its square root.
    pub target_sp_size: usize,
    /// Spatial-vs-color tradeoff, on a [0, 100] color scale.
    pub slic_compactness: f64,
    pub slic_iters: usize,
    /// Smoothness weight between adjacent superpixels.
    pub lambda: f64,
    /// Floor added to gradient magnitudes before division.
    pub grad_floor: f64,
}

impl Default for SpRegParams {
    fn default() -> Self {
        SpRegParams {
            target_sp_size: 50,
            slic_compactness: 10.0,
            slic_iters: 10,
            lambda: 0.5,
            grad_floor: 1e-3,
        }
    }
}

impl SpRegParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_sp_size == 0 || self.slic_iters == 0 {
            return Err(Error::Param("target_sp_size and slic_iters must be positive".into()));
        }
        for (name, v) in [
            ("slic_compactness", self.slic_compactness),
            ("lambda", self.lambda),
            ("grad_floor", self.grad_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Param(format!("{name} {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Partition of the image into connected superpixels plus the adjacency
/// structure used by the piecewise depth solve: `members[k]` lists the pixel
/// indices of superpixel k, `adjacency[k]` its 4-connected neighbors, and
/// `borders[(k, l)]` the pixels of superpixel l that touch superpixel k.
#[derive(Debug, Clone)]
pub struct SuperpixelGraph {
    pub height: usize,
    pub width: usize,
    pub n: usize,
    pub label_map: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub adjacency: Vec<BTreeSet<usize>>,
    pub borders: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SuperpixelGraph {
    /// Derives the graph from a label map whose ids are compact in [0, n).
    /// Per-label connectivity is the caller's responsibility.
    pub fn from_label_map(height: usize, width: usize, label_map: Vec<usize>) -> Self {
        assert_eq!(label_map.len(), height * width);
        let n = label_map.iter().copied().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); n];
        for (i, &l) in label_map.iter().enumerate() {
            members[l].push(i);
        }
        assert!(members.iter().all(|m| !m.is_empty()), "label ids must be compact");
        let mut adjacency = vec![BTreeSet::new(); n];
        let mut borders: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let l = label_map[i];
                let mut touch = |j: usize| {
                    let k = label_map[j];
                    if k != l {
                        adjacency[l].insert(k);
                        adjacency[k].insert(l);
                        // i is a pixel of l on the border facing k.
                        borders.entry((k, l)).or_default().insert(i);
                    }
                };
                if x + 1 < width {
                    touch(i + 1);
                }
                if y + 1 < height {
                    touch(i + width);
                }
                if x > 0 {
                    touch(i - 1);
                }
                if y > 0 {
                    touch(i - width);
                }
            }
        }
        let borders = borders
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        SuperpixelGraph { height, width, n, label_map, members, adjacency, borders }
    }

    /// Checks the structural invariants: members partition the image,
    /// adjacency is symmetric, and a border set exists exactly for adjacent
    /// pairs and is nonempty.
    pub fn validate(&self) -> Result<()> {
        let total: usize = self.members.iter().map(|m| m.len()).sum();
        if total != self.height * self.width {
            return Err(Error::Param("superpixel members do not partition the image".into()));
        }
        for (k, m) in self.members.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::Param(format!("superpixel {k} is empty")));
            }
            if m.iter().any(|&i| self.label_map[i] != k) {
                return Err(Error::Param(format!("member list of {k} disagrees with label map")));
            }
        }
        for k in 0..self.n {
            for &l in &self.adjacency[k] {
                if !self.adjacency[l].contains(&k) {
                    return Err(Error::Param(format!("adjacency not symmetric for ({k}, {l})")));
                }
                let b = self.borders.get(&(k, l));
                if b.map_or(true, |v| v.is_empty()) {
                    return Err(Error::Param(format!("missing border set for ({k}, {l})")));
                }
            }
        }
        for (&(k, l), pix) in &self.borders {
            if !self.adjacency[k].contains(&l) {
                return Err(Error::Param(format!("border set for non-adjacent ({k}, {l})")));
            }
            if pix.iter().any(|&i| self.label_map[i] != l) {
                return Err(Error::Param(format!("border set ({k}, {l}) outside superpixel {l}")));
            }
        }
        Ok(())
    }
}

struct Center {
    color: [f64; 3],
    x: f64,
    y: f64,
}

/// SLIC segmentation: grid-seeded joint color/position clustering with a
/// fixed number of assignment/update rounds, followed by connectivity
/// enforcement (per label the largest component survives; every other
/// fragment merges into the largest adjacent region). Deterministic: centers
/// are visited in index order and ties keep the earlier assignment.
pub fn slic_segment(img: &Image, p: &SpRegParams) -> SuperpixelGraph {
    let (h, w, c) = (img.height, img.width, img.channels);
    let s = (p.target_sp_size as f64).sqrt();
    let nx = ((w as f64 / s).round() as usize).clamp(1, w);
    let ny = ((h as f64 / s).round() as usize).clamp(1, h);
    let cell_w = w as f64 / nx as f64;
    let cell_h = h as f64 / ny as f64;

    let color_at = |x: f64, y: f64| -> [f64; 3] {
        let xi = (x.round().max(0.0) as usize).min(w - 1);
        let yi = (y.round().max(0.0) as usize).min(h - 1);
        let mut out = [0.0; 3];
        for ch in 0..c {
            out[ch] = img.get(yi, xi, ch) as f64;
        }
        out
    };

    let mut centers: Vec<Center> = (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| {
                let x = (i as f64 + 0.5) * cell_w - 0.5;
                let y = (j as f64 + 0.5) * cell_h - 0.5;
                (x, y)
            })
        })
        .map(|(x, y)| Center { color: color_at(x, y), x, y })
        .collect();

    // Every pixel starts in its seed cell so none is ever unlabeled, even if
    // a drifting center's search window no longer reaches it.
    let mut labels: Vec<usize> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let ci = ((x as f64 / cell_w) as usize).min(nx - 1);
            let cj = ((y as f64 / cell_h) as usize).min(ny - 1);
            cj * nx + ci
        })
        .collect();

    let ratio2 = (p.slic_compactness / s) * (p.slic_compactness / s);
    for _ in 0..p.slic_iters {
        let mut best = vec![f64::INFINITY; h * w];
        for (k, ctr) in centers.iter().enumerate() {
            let x0 = (ctr.x - s).floor().max(0.0) as usize;
            let x1 = ((ctr.x + s).ceil().max(0.0) as usize).min(w - 1);
            let y0 = (ctr.y - s).floor().max(0.0) as usize;
            let y1 = ((ctr.y + s).ceil().max(0.0) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let mut dc2 = 0.0;
                    for ch in 0..c {
                        let d = 100.0 * (img.get(y, x, ch) as f64 - ctr.color[ch]);
                        dc2 += d * d;
                    }
                    let dx = x as f64 - ctr.x;
                    let dy = y as f64 - ctr.y;
                    let d2 = dc2 + ratio2 * (dx * dx + dy * dy);
                    if d2 < best[i] {
                        best[i] = d2;
                        labels[i] = k;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let (y, x) = (i / w, i % w);
            let a = &mut acc[l];
            for ch in 0..c {
                a[ch] += img.get(y, x, ch) as f64;
            }
            a[3] += x as f64;
            a[4] += y as f64;
            a[5] += 1.0;
        }
        for (ctr, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                for ch in 0..c {
                    ctr.color[ch] = a[ch] / a[5];
                }
                ctr.x = a[3] / a[5];
                ctr.y = a[4] / a[5];
            }
        }
    }

    enforce_connectivity(&mut labels, h, w);
    compact_relabel(&mut labels);
    SuperpixelGraph::from_label_map(h, w, labels)
}

/// Keeps, per label, the largest 4-connected component (ties broken toward
/// the raster-earliest one) and re-stamps every other fragment with the label
/// of its currently largest adjacent region.
fn enforce_connectivity(labels: &mut [usize], h: usize, w: usize) {
    let n_px = h * w;
    let mut comp = vec![usize::MAX; n_px];
    let mut comps: Vec<(usize, Vec<usize>)> = Vec::new();
    for start in 0..n_px {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let label = labels[start];
        let mut pixels = vec![start];
        comp[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / w, i % w);
            let mut push = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == label {
                    comp[j] = id;
                    pixels.push(j);
                    queue.push_back(j);
                }
            };
            if x + 1 < w {
                push(i + 1);
            }
            if x > 0 {
                push(i - 1);
            }
            if y + 1 < h {
                push(i + w);
            }
            if y > 0 {
                push(i - w);
            }
        }
        comps.push((label, pixels));
    }

    // Largest component per label survives; size ties keep the one whose
    // first pixel comes earliest in raster order.
    let mut keeper: BTreeMap<usize, usize> = BTreeMap::new();
    for (id, (label, pixels)) in comps.iter().enumerate() {
        match keeper.get(label) {
            Some(&k) if comps[k].1.len() >= pixels.len() => {}
            _ => {
                keeper.insert(*label, id);
            }
        }
    }
    let mut settled: Vec<bool> = (0..comps.len())
        .map(|id| keeper.get(&comps[id].0) == Some(&id))
        .collect();
    let mut size: BTreeMap<usize, usize> = BTreeMap::new();
    for (id, (label, pixels)) in comps.iter().enumerate() {
        if settled[id] {
            size.insert(*label, pixels.len());
        }
    }

    while settled.iter().any(|s| !s) {
        let mut progressed = false;
        for id in 0..comps.len() {
            if settled[id] {
                continue;
            }
            // Adjacent settled regions, by current label.
            let mut best: Option<(usize, usize)> = None; // (size, label)
            for &i in &comps[id].1 {
                let (y, x) = (i / w, i % w);
                let mut consider = |j: usize| {
                    if settled[comp[j]] {
                        let l = labels[j];
                        let sz = size[&l];
                        let better = match best {
                            None => true,
                            Some((bs, bl)) => sz > bs || (sz == bs && l < bl),
                        };
                        if better {
                            best = Some((sz, l));
                        }
                    }
                };
                if x + 1 < w {
                    consider(i + 1);
                }
                if x > 0 {
                    consider(i - 1);
                }
                if y + 1 < h {
                    consider(i + w);
                }
                if y > 0 {
                    consider(i - w);
                }
            }
            if let Some((_, l)) = best {
                for &i in &comps[id].1 {
                    labels[i] = l;
                }
                *size.get_mut(&l).unwrap() += comps[id].1.len();
                settled[id] = true;
                progressed = true;
            }
        }
        assert!(progressed, "orphan superpixel fragment with no settled neighbor");
    }
}

fn compact_relabel(labels: &mut [usize]) {
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels.iter_mut() {
        let next = remap.len();
        let id = *remap.entry(*l).or_insert(next);
        *l = id;
    }
}

/// Per-superpixel depth by weighted least squares: each superpixel's unknown
/// is pulled toward the confidence-weighted mean of the initial depth (in
/// label-index units) over its members, and toward its neighbors with
/// strength lambda summed over both border sets, each border pixel
/// contributing the inverse of its image gradient magnitude. The solution is
/// broadcast to all member pixels.
pub fn solve_sp_depth(
    g: &SuperpixelGraph,
    d: &DepthMap,
    w: &ConfidenceMap,
    central: &Image,
    grid: &LabelGrid,
    p: &SpRegParams,
    solver: &SolverParams,
) -> Result<(DepthMap, SolveReport)> {
    if d.kind != DepthKind::Initial {
        return Err(Error::Param(format!("superpixel solve expects initial depth, got {:?}", d.kind)));
    }
    if d.field.height != g.height || d.field.width != g.width {
        return Err(Error::Param("depth and segmentation dimensions differ".into()));
    }
    let d_idx = grid.to_index_field(&d.field);
    let grad = central.forward_gradient_l1();

    let mut diag = vec![0.0; g.n];
    let mut targets = vec![0.0; g.n];
    for (k, members) in g.members.iter().enumerate() {
        let mut wsum = 0.0;
        let mut dsum = 0.0;
        for &i in members {
            let om = w.field.data()[i];
            wsum += om;
            dsum += om * d_idx.data()[i];
        }
        diag[k] = wsum;
        targets[k] = if wsum > 0.0 { dsum / wsum } else { 0.0 };
    }

    let mut edges = Vec::new();
    for (&(k, l), pix) in &g.borders {
        if k >= l {
            continue;
        }
        let mut sum: f64 = pix.iter().map(|&i| 1.0 / (grad.data()[i] + p.grad_floor)).sum();
        if let Some(rev) = g.borders.get(&(l, k)) {
            sum += rev.iter().map(|&i| 1.0 / (grad.data()[i] + p.grad_floor)).sum::<f64>();
        }
        edges.push((k, l, p.lambda * sum));
    }

    let sys = assemble(&diag, &targets, &edges)?;
    let (x, report) = solve(&sys, solver)?;
    let mut field = Field::new(g.height, g.width, 0.0);
    for (i, &l) in g.label_map.iter().enumerate() {
        field.data_mut()[i] = x[l];
    }
    Ok((DepthMap::new(DepthKind::SpWise, field), report))
}

/// Pixelwise depth minus superpixel-wise depth, in label-index units.
/// Negative values mark pixels whose initial depth fell below the consensus
/// of their superpixel: the signature of partial occlusion at borders.
pub fn epsilon_map(d: &DepthMap, p: &DepthMap, grid: &LabelGrid) -> Result<DepthMap> {
    if d.kind != DepthKind::Initial || p.kind != DepthKind::SpWise {
        return Err(Error::Param(format!(
            "epsilon map expects initial and superpixel-wise depth, got {:?} and {:?}",
            d.kind, p.kind
        )));
    }
    if !d.field.same_shape(&p.field) {
        return Err(Error::Param("depth map dimensions differ".into()));
    }
    let d_idx = grid.to_index_field(&d.field);
    let mut field = Field::new(d.field.height, d.field.width, 0.0);
    for (out, (a, b)) in field
        .data_mut()
        .iter_mut()
        .zip(d_idx.data().iter().zip(p.field.data()))
    {
        *out = a - b;
    }
    Ok(DepthMap::new(DepthKind::Epsilon, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_cost_volume, initial_confidence, initial_depth, CostParams};
    use crate::field::{ConfidenceKind, Mask};
    use crate::synth::{
        render_synthetic, Axis, MaskShape, MaskSpec, PlaneSpec, SceneSpec, TextureSpec,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gray(h: usize, w: usize, v: f32) -> Image {
        Image::new(h, w, 1, vec![v; h * w])
    }

    fn sp_objective(
        g: &SuperpixelGraph,
        d_idx: &Field,
        w: &Field,
        grad: &Field,
        p: &SpRegParams,
        vals: &[f64],
    ) -> f64 {
        let mut obj = 0.0;
        for (k, members) in g.members.iter().enumerate() {
            for &i in members {
                let r = vals[k] - d_idx.data()[i];
                obj += w.data()[i] * r * r;
            }
        }
        for (&(k, l), pix) in &g.borders {
            let diff = vals[k] - vals[l];
            for &i in pix {
                obj += p.lambda * diff * diff / (grad.data()[i] + p.grad_floor);
            }
        }
        obj
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let p = a[col][col];
            for row in col + 1..n {
                let f = a[row][col] / p;
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for k in row + 1..n {
                s -= a[row][k] * x[k];
            }
            x[row] = s / a[row][row];
        }
        x
    }

    fn connected(g: &SuperpixelGraph, k: usize) -> bool {
        let members = &g.members[k];
        let inside: BTreeSet<usize> = members.iter().copied().collect();
        let mut seen = BTreeSet::from([members[0]]);
        let mut queue = VecDeque::from([members[0]]);
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / g.width, i % g.width);
            let mut push = |j: usize| {
                if inside.contains(&j) && seen.insert(j) {
                    queue.push_back(j);
                }
            };
            if x + 1 < g.width {
                push(i + 1);
            }
            if x > 0 {
                push(i - 1);
            }
            if y + 1 < g.height {
                push(i + g.width);
            }
            if y > 0 {
                push(i - g.width);
            }
        }
        seen.len() == members.len()
    }

    #[test]
    fn uniform_image_gives_near_regular_grid() {
        let img = gray(100, 100, 0.5);
        let g = slic_segment(&img, &SpRegParams::default());
        g.validate().unwrap();
        assert_eq!(g.n, 196);
        for k in 0..g.n {
            let sz = g.members[k].len();
            assert!((30..=80).contains(&sz), "superpixel {k} has {sz} pixels");
            assert!(connected(&g, k));
        }
    }

    #[test]
    fn superpixels_adhere_to_strong_edge() {
        let mut data = vec![0.1f32; 60 * 40];
        for y in 0..40 {
            for x in 30..60 {
                data[y * 60 + x] = 0.9;
            }
        }
        let img = Image::new(40, 60, 1, data);
        let g = slic_segment(&img, &SpRegParams::default());
        g.validate().unwrap();
        for members in &g.members {
            let left: Vec<usize> = members.iter().filter(|&&i| i % 60 < 30).copied().collect();
            let right: Vec<usize> = members.iter().filter(|&&i| i % 60 >= 30).copied().collect();
            if !left.is_empty() && !right.is_empty() {
                // The minority side may reach at most one pixel past the edge.
                if left.len() <= right.len() {
                    assert!(left.iter().all(|&i| i % 60 == 29));
                } else {
                    assert!(right.iter().all(|&i| i % 60 == 30));
                }
            }
        }
    }

    #[test]
    fn one_row_image_gives_contiguous_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f32> = (0..37).map(|_| rng.gen()).collect();
        let img = Image::new(1, 37, 1, data);
        let p = SpRegParams { target_sp_size: 9, ..Default::default() };
        let g = slic_segment(&img, &p);
        g.validate().unwrap();
        assert!(g.n >= 2);
        for members in &g.members {
            let lo = *members.first().unwrap();
            let hi = *members.last().unwrap();
            assert_eq!(hi - lo + 1, members.len(), "run not contiguous");
        }
    }

    #[test]
    fn graph_invariants_on_random_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f32> = (0..48 * 36 * 3).map(|_| rng.gen()).collect();
        let img = Image::new(36, 48, 3, data);
        let g = slic_segment(&img, &SpRegParams::default());
        g.validate().unwrap();
        for k in 0..g.n {
            assert!(connected(&g, k));
        }
    }

    #[test]
    fn single_superpixel_returns_mean() {
        let g = SuperpixelGraph::from_label_map(4, 5, vec![0; 20]);
        let vals: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let mean = vals.iter().sum::<f64>() / 20.0;
        let grid = LabelGrid::uniform(0.0, 1.9, 20).unwrap();
        let d = DepthMap::new(DepthKind::Initial, Field::from_vec(4, 5, vals));
        let w = ConfidenceMap::new(ConfidenceKind::Initial, Field::new(4, 5, 1.0)).unwrap();
        let (p, rep) = solve_sp_depth(
            &g,
            &d,
            &w,
            &gray(4, 5, 0.5),
            &grid,
            &SpRegParams::default(),
            &SolverParams::default(),
        )
        .unwrap();
        assert!(rep.converged);
        // In index units the expected value is the mean divided by the step.
        let want = mean / 0.1;
        for &v in p.field.data() {
            assert!((v - want).abs() < 1e-9, "{v} vs {want}");
        }
    }

    #[test]
    fn lambda_zero_decouples_superpixels() {
        // Two vertical halves; weighted means must come out independently.
        let labels: Vec<usize> = (0..6 * 4).map(|i| if i % 6 < 3 { 0 } else { 1 }).collect();
        let g = SuperpixelGraph::from_label_map(4, 6, labels);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = LabelGrid::uniform(0.0, 8.0, 9).unwrap();
        let dvals: Vec<f64> = (0..24).map(|_| grid.value(rng.gen_range(0..9))).collect();
        let wvals: Vec<f64> = (0..24).map(|_| rng.gen_range(0.05..1.0)).collect();
        let d = DepthMap::new(DepthKind::Initial, Field::from_vec(4, 6, dvals.clone()));
        let w = ConfidenceMap::new(ConfidenceKind::Initial, Field::from_vec(4, 6, wvals.clone()))
            .unwrap();
        let p = SpRegParams { lambda: 1e-30, ..Default::default() };
        let (sp, _) = solve_sp_depth(
            &g,
            &d,
            &w,
            &gray(4, 6, 0.5),
            &grid,
            &p,
            &SolverParams { tol: 1e-12, max_iter: None },
        )
        .unwrap();
        for k in 0..2 {
            let num: f64 = g.members[k]
                .iter()
                .map(|&i| wvals[i] * grid.index_of(dvals[i]))
                .sum();
            let den: f64 = g.members[k].iter().map(|&i| wvals[i]).sum();
            let got = sp.field.data()[g.members[k][0]];
            assert!((got - num / den).abs() < 1e-8, "sp {k}: {got} vs {}", num / den);
        }
    }

    fn toy_instance(
        seed: u64,
    ) -> (SuperpixelGraph, DepthMap, ConfidenceMap, Image, LabelGrid, SpRegParams) {
        // Six superpixels in a 2x3 block layout on a 12x18 image.
        let labels: Vec<usize> = (0..12 * 18)
            .map(|i| {
                let (y, x) = (i / 18, i % 18);
                (y / 6) * 3 + x / 6
            })
            .collect();
        let g = SuperpixelGraph::from_label_map(12, 18, labels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = LabelGrid::uniform(-1.0, 1.0, 9).unwrap();
        let dvals: Vec<f64> = (0..216).map(|_| grid.value(rng.gen_range(0..9))).collect();
        let wvals: Vec<f64> = (0..216).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = Image::new(12, 18, 1, (0..216).map(|_| rng.gen()).collect());
        let d = DepthMap::new(DepthKind::Initial, Field::from_vec(12, 18, dvals));
        let w =
            ConfidenceMap::new(ConfidenceKind::Initial, Field::from_vec(12, 18, wvals)).unwrap();
        (g, d, w, img, grid, SpRegParams::default())
    }

    #[test]
    fn toy_graph_matches_dense_oracle() {
        for seed in [1u64, 2, 3] {
            let (g, d, w, img, grid, p) = toy_instance(seed);
            let (sp, rep) = solve_sp_depth(
                &g,
                &d,
                &w,
                &img,
                &grid,
                &p,
                &SolverParams { tol: 1e-13, max_iter: None },
            )
            .unwrap();
            assert!(rep.final_residual < 1e-10);

            // Dense normal equations assembled straight from the energy.
            let d_idx = grid.to_index_field(&d.field);
            let grad = img.forward_gradient_l1();
            let mut a = vec![vec![0.0; g.n]; g.n];
            let mut b = vec![0.0; g.n];
            for (k, members) in g.members.iter().enumerate() {
                for &i in members {
                    a[k][k] += w.field.data()[i];
                    b[k] += w.field.data()[i] * d_idx.data()[i];
                }
            }
            for (&(k, l), pix) in &g.borders {
                let wt: f64 =
                    pix.iter().map(|&i| p.lambda / (grad.data()[i] + p.grad_floor)).sum();
                a[k][k] += wt;
                a[l][l] += wt;
                a[k][l] -= wt;
                a[l][k] -= wt;
            }
            let x = dense_solve(a, b);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for k in 0..g.n {
                let got = sp.field.data()[g.members[k][0]];
                assert!(
                    (got - x[k]).abs() / norm.max(1.0) < 1e-8,
                    "seed {seed} sp {k}: {got} vs {}",
                    x[k]
                );
            }
        }
    }

    #[test]
    fn solution_beats_per_superpixel_means() {
        for seed in [7u64, 8] {
            let (g, d, w, img, grid, p) = toy_instance(seed);
            let (sp, _) =
                solve_sp_depth(&g, &d, &w, &img, &grid, &p, &SolverParams::default()).unwrap();
            let d_idx = grid.to_index_field(&d.field);
            let grad = img.forward_gradient_l1();
            let sol: Vec<f64> = (0..g.n).map(|k| sp.field.data()[g.members[k][0]]).collect();
            let means: Vec<f64> = (0..g.n)
                .map(|k| {
                    g.members[k].iter().map(|&i| d_idx.data()[i]).sum::<f64>()
                        / g.members[k].len() as f64
                })
                .collect();
            let at_sol = sp_objective(&g, &d_idx, &w.field, &grad, &p, &sol);
            let at_means = sp_objective(&g, &d_idx, &w.field, &grad, &p, &means);
            assert!(at_sol <= at_means + 1e-9, "{at_sol} vs {at_means}");
        }
    }

    #[test]
    fn objective_is_stationary_at_solution() {
        let (g, d, w, img, grid, p) = toy_instance(12);
        let (sp, _) = solve_sp_depth(
            &g,
            &d,
            &w,
            &img,
            &grid,
            &p,
            &SolverParams { tol: 1e-13, max_iter: None },
        )
        .unwrap();
        let d_idx = grid.to_index_field(&d.field);
        let grad = img.forward_gradient_l1();
        let sol: Vec<f64> = (0..g.n).map(|k| sp.field.data()[g.members[k][0]]).collect();
        let obj = sp_objective(&g, &d_idx, &w.field, &grad, &p, &sol);
        let h = 1e-6;
        let mut max_grad = 0.0f64;
        for k in 0..g.n {
            let mut plus = sol.clone();
            plus[k] += h;
            let mut minus = sol.clone();
            minus[k] -= h;
            let fp = sp_objective(&g, &d_idx, &w.field, &grad, &p, &plus);
            let fm = sp_objective(&g, &d_idx, &w.field, &grad, &p, &minus);
            max_grad = max_grad.max(((fp - fm) / (2.0 * h)).abs());
        }
        assert!(max_grad < 1e-6 * (1.0 + obj), "gradient {max_grad} at objective {obj}");
    }

    #[test]
    fn epsilon_is_zero_when_maps_agree() {
        let grid = LabelGrid::uniform(0.0, 1.0, 5).unwrap();
        let d = DepthMap::new(DepthKind::Initial, Field::new(3, 3, grid.value(2)));
        let p = DepthMap::new(DepthKind::SpWise, Field::new(3, 3, 2.0));
        let eps = epsilon_map(&d, &p, &grid).unwrap();
        assert_eq!(eps.kind, DepthKind::Epsilon);
        assert!(eps.field.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epsilon_reports_underestimation_in_labels() {
        let grid = LabelGrid::uniform(-1.0, 1.0, 9).unwrap();
        // Initial depth three labels below the superpixel consensus.
        let d = DepthMap::new(DepthKind::Initial, Field::new(2, 2, grid.value(1)));
        let p = DepthMap::new(DepthKind::SpWise, Field::new(2, 2, 4.0));
        let eps = epsilon_map(&d, &p, &grid).unwrap();
        assert!(eps.field.data().iter().all(|&v| (v + 3.0).abs() < 1e-12));
    }

    // A dark near plane over a bright, weakly textured far plane. In the
    // strip of far-plane pixels shadowed by the occluder in off-center views
    // the initial depth collapses to the occluder's disparity, so epsilon
    // dips well below zero there while staying mild elsewhere.
    #[test]
    fn two_plane_scene_flags_occluded_border() {
        let scene = SceneSpec {
            width: 96,
            height: 64,
            nu: 9,
            nv: 9,
            planes: vec![
                PlaneSpec {
                    disparity: -1.0,
                    texture: TextureSpec::Noise { seed: 40, cell: 2.5, lo: 0.02, hi: 0.50 },
                    mask: MaskSpec {
                        shape: MaskShape::HalfPlane { axis: Axis::X, edge: 48.5 },
                        opacity: 1.0,
                    },
                },
                PlaneSpec {
                    disparity: -0.625,
                    texture: TextureSpec::Noise { seed: 41, cell: 4.0, lo: 0.80, hi: 0.98 },
                    mask: MaskSpec { shape: MaskShape::Full, opacity: 1.0 },
                },
            ],
            seed: 42,
            noise_sigma: 0.005,
        };
        let (lf, gt) = render_synthetic(&scene).unwrap();
        let grid = LabelGrid::uniform(-1.0, 1.0, 17).unwrap();
        let cv = build_cost_volume(&lf, &grid, &CostParams::default()).unwrap();
        let d = initial_depth(&cv);
        let w = initial_confidence(&cv);
        let params = SpRegParams { target_sp_size: 25, lambda: 0.02, ..SpRegParams::default() };
        let g = slic_segment(lf.central_view(), &params);
        let (sp, _) = solve_sp_depth(
            &g,
            &d,
            &w,
            lf.central_view(),
            &grid,
            &params,
            &SolverParams::default(),
        )
        .unwrap();
        let eps = epsilon_map(&d, &sp, &grid).unwrap();

        let mut on_sum = 0.0;
        let mut on_n = 0usize;
        let mut det = Mask::new(64, 96);
        for i in 0..96 * 64 {
            let v = eps.field.data()[i];
            if gt.pobr.data()[i] {
                on_sum += v;
                on_n += 1;
            }
            det.set(i / 96, i % 96, v < -0.5);
        }
        assert!(on_n > 0);
        let mean_on = on_sum / on_n as f64;
        assert!(mean_on < -1.0, "mean epsilon {mean_on} in occluded band");
        let iou = det.iou(&gt.pobr);
        assert!(iou > 0.5, "detection IoU {iou} against the true band");
    }
}
