//! Sparse SPD systems of the form diag + graph Laplacian, solved with
//! Jacobi-preconditioned conjugate gradients.
//!
//! The quadratic objective
//!   sum_i diag_i (x_i - t_i)^2 + sum_(i,j) w_ij (x_i - x_j)^2
//! has normal equations A x = b with A = diag(diag) + L(edges) and
//! b_i = diag_i t_i. Both weighted-least-squares stages of the pipeline
//! reduce to this shape.

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Assembled normal equations. Edges are undirected, stored once with
/// i < j and strictly positive weight.
#[derive(Debug, Clone)]
pub struct SparseSpdSystem {
    pub dim: usize,
    /// Per-unknown data-term weight (the diagonal before Laplacian terms).
    pub diag: Vec<f64>,
    pub edges: Vec<(usize, usize, f64)>,
    /// b_i = diag_i * target_i.
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Relative-residual stopping tolerance.
    pub tol: f64,
    /// Iteration cap; defaults to 10 * dim when absent.
    pub max_iter: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { tol: 1e-6, max_iter: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Builds the system for the given data weights, targets, and smoothness
/// edges. Zero-weight edges are dropped; any connected component whose data
/// weights are all zero makes the system singular and is rejected.
pub fn assemble(
    data_weights: &[f64],
    targets: &[f64],
    edges: &[(usize, usize, f64)],
) -> Result<SparseSpdSystem> {
    let dim = data_weights.len();
    if targets.len() != dim {
        return Err(Error::Param(format!(
            "targets length {} does not match {} unknowns",
            targets.len(),
            dim
        )));
    }
    if dim == 0 {
        return Err(Error::Param("empty system".into()));
    }
    for (i, (&w, &t)) in data_weights.iter().zip(targets).enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Param(format!("data weight {w} at unknown {i}")));
        }
        if !t.is_finite() {
            return Err(Error::Param(format!("non-finite target at unknown {i}")));
        }
    }

    let mut kept = Vec::with_capacity(edges.len());
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(i, j, w) in edges {
        if i >= dim || j >= dim || i == j {
            return Err(Error::Param(format!("bad edge ({i}, {j}) for {dim} unknowns")));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Param(format!("edge ({i}, {j}) weight {w}")));
        }
        if w == 0.0 {
            continue;
        }
        kept.push((i.min(j), i.max(j), w));
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        parent[ri] = rj;
    }

    let mut anchored = vec![false; dim];
    for i in 0..dim {
        if data_weights[i] > 0.0 {
            let r = find(&mut parent, i);
            anchored[r] = true;
        }
    }
    for i in 0..dim {
        let r = find(&mut parent, i);
        if !anchored[r] {
            return Err(Error::Singular(format!(
                "connected component containing unknown {i} has no data weight"
            )));
        }
    }

    let rhs = data_weights.iter().zip(targets).map(|(&w, &t)| w * t).collect();
    Ok(SparseSpdSystem { dim, diag: data_weights.to_vec(), edges: kept, rhs })
}

struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    a_diag: Vec<f64>,
}

fn build_csr(sys: &SparseSpdSystem) -> Csr {
    let mut counts = vec![0usize; sys.dim];
    for &(i, j, _) in &sys.edges {
        counts[i] += 1;
        counts[j] += 1;
    }
    let mut row_ptr = vec![0usize; sys.dim + 1];
    for i in 0..sys.dim {
        row_ptr[i + 1] = row_ptr[i] + counts[i];
    }
    let mut cols = vec![0usize; row_ptr[sys.dim]];
    let mut vals = vec![0.0f64; row_ptr[sys.dim]];
    let mut cursor = row_ptr.clone();
    let mut a_diag = sys.diag.clone();
    for &(i, j, w) in &sys.edges {
        cols[cursor[i]] = j;
        vals[cursor[i]] = w;
        cursor[i] += 1;
        cols[cursor[j]] = i;
        vals[cursor[j]] = w;
        cursor[j] += 1;
        a_diag[i] += w;
        a_diag[j] += w;
    }
    Csr { row_ptr, cols, vals, a_diag }
}

impl Csr {
    /// y = A x, rows computed independently in a fixed per-row order so the
    /// result is identical under any parallel schedule.
    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = self.a_diag[i] * x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc -= self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate-gradient solve with a Jacobi preconditioner, starting from the
/// data targets. Non-convergence within the iteration cap is reported, not
/// an error.
pub fn solve(sys: &SparseSpdSystem, params: &SolverParams) -> Result<(Vec<f64>, SolveReport)> {
    if !(params.tol.is_finite() && params.tol >= 0.0) {
        return Err(Error::Param(format!("solver tol {}", params.tol)));
    }
    let max_iter = params.max_iter.unwrap_or(10 * sys.dim);
    let csr = build_csr(sys);
    let b = &sys.rhs;
    let nb = norm(b);
    if nb == 0.0 {
        return Ok((
            vec![0.0; sys.dim],
            SolveReport { iterations: 0, final_residual: 0.0, converged: true },
        ));
    }

    let mut x: Vec<f64> = sys
        .diag
        .iter()
        .zip(&sys.rhs)
        .map(|(&d, &r)| if d > 0.0 { r / d } else { 0.0 })
        .collect();
    let m_inv: Vec<f64> = csr.a_diag.iter().map(|&d| 1.0 / d).collect();

    let mut r = vec![0.0; sys.dim];
    csr.matvec(&x, &mut r);
    for i in 0..sys.dim {
        r[i] = b[i] - r[i];
    }
    let mut res = norm(&r) / nb;
    let mut iterations = 0usize;
    if res > params.tol {
        let mut z: Vec<f64> = r.iter().zip(&m_inv).map(|(&ri, &mi)| ri * mi).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; sys.dim];
        while iterations < max_iter {
            csr.matvec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..sys.dim {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            res = norm(&r) / nb;
            if res <= params.tol {
                break;
            }
            for i in 0..sys.dim {
                z[i] = r[i] * m_inv[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..sys.dim {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    // Report the true residual of the returned iterate.
    let mut rt = vec![0.0; sys.dim];
    csr.matvec(&x, &mut rt);
    for i in 0..sys.dim {
        rt[i] = b[i] - rt[i];
    }
    let final_residual = norm(&rt) / nb;
    Ok((
        x,
        SolveReport { iterations, final_residual, converged: final_residual <= params.tol },
    ))
}

/// Objective value the system minimizes, useful for optimality checks.
pub fn objective(sys: &SparseSpdSystem, x: &[f64]) -> f64 {
    let mut obj = 0.0;
    for i in 0..sys.dim {
        if sys.diag[i] > 0.0 {
            let t = sys.rhs[i] / sys.diag[i];
            obj += sys.diag[i] * (x[i] - t) * (x[i] - t);
        }
    }
    for &(i, j, w) in &sys.edges {
        obj += w * (x[i] - x[j]) * (x[i] - x[j]);
    }
    obj
}
