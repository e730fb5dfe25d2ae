//! Configuration, the final edge-aware depth solve, and the staged pipeline
//! from light field to refined depth map.

use std::fmt;

use serde::Deserialize;

use crate::cost::{build_cost_volume, initial_confidence, initial_depth, CostParams, CostVolume};
use crate::error::{Error, Result};
use crate::field::{ConfidenceKind, ConfidenceMap, DepthKind, DepthMap, Field};
use crate::lightfield::{Image, LabelGrid, LightField};
use crate::refine::{kappa_occ, kappa_var, refine_confidence, rho_conf, rho_occ, RefineParams};
use crate::solver::{assemble, solve, SolveReport, SolverParams, SparseSpdSystem};
use crate::superpixel::{epsilon_map, slic_segment, solve_sp_depth, SpRegParams, SuperpixelGraph};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelGridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LabelGridSpec {
    fn default() -> Self {
        LabelGridSpec { min: -1.0, max: 1.0, count: 9 }
    }
}

impl LabelGridSpec {
    pub fn build(&self) -> Result<LabelGrid> {
        LabelGrid::uniform(self.min, self.max, self.count)
    }
}

/// Switches that pin individual weight fields to one, for measuring how much
/// each manipulation contributes.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSwitches {
    pub force_kappa_occ: bool,
    pub force_kappa_var: bool,
    pub force_rho_occ: bool,
    pub force_rho_conf: bool,
}

impl AblationSwitches {
    pub fn all() -> Self {
        AblationSwitches {
            force_kappa_occ: true,
            force_kappa_var: true,
            force_rho_occ: true,
            force_rho_conf: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub cost: CostParams,
    pub sp_reg: SpRegParams,
    pub refine: RefineParams,
    /// Trade-off between data fidelity and smoothness in the final solve.
    pub eta: f64,
    pub labels: LabelGridSpec,
    pub solver: SolverParams,
    pub ablation: AblationSwitches,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cost: CostParams::default(),
            sp_reg: SpRegParams::default(),
            refine: RefineParams::default(),
            eta: 0.03,
            labels: LabelGridSpec::default(),
            solver: SolverParams::default(),
            ablation: AblationSwitches::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Param(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        self.sp_reg.validate()?;
        self.refine.validate()?;
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Param(format!("eta {} must be positive", self.eta)));
        }
        if !(self.solver.tol.is_finite() && self.solver.tol >= 0.0) {
            return Err(Error::Param(format!("solver tol {} must be nonnegative", self.solver.tol)));
        }
        self.labels.build().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Cost,
    InitialDepth,
    Superpixel,
    SpWiseDepth,
    Epsilon,
    Refine,
    FinalSolve,
    Metrics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Cost => "cost",
            Stage::InitialDepth => "initial-depth",
            Stage::Superpixel => "superpixel",
            Stage::SpWiseDepth => "sp-depth",
            Stage::Epsilon => "epsilon",
            Stage::Refine => "refine",
            Stage::FinalSolve => "final-solve",
            Stage::Metrics => "metrics",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub fn at_stage<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, PipelineError> {
    r.map_err(|source| PipelineError { stage, source })
}

/// Everything the pipeline produces, retained for inspection and ablation.
#[derive(Debug, Clone)]
pub struct PipelineBundle {
    pub grid: LabelGrid,
    pub cost_volume: CostVolume,
    pub initial_depth: DepthMap,
    pub initial_confidence: ConfidenceMap,
    pub graph: SuperpixelGraph,
    pub sp_wise: DepthMap,
    pub epsilon: DepthMap,
    pub kappa_occ: Field,
    pub kappa_var: Field,
    pub refined_confidence: ConfidenceMap,
    pub rho_occ: Field,
    pub rho_conf: Field,
    pub final_depth: DepthMap,
    pub sp_report: SolveReport,
    pub final_report: SolveReport,
}

/// Assembles the final system over the pixel grid: data weights pull each
/// pixel toward its initial label index, and each undirected 4-neighbor pair
/// carries weight eta / ((|I(x)-I(y)|_1 + grad_floor) * m), where m averages
/// the two endpoints' edge-strength products. Larger edge strength therefore
/// weakens smoothing across that edge.
pub(crate) fn build_final_system(
    d_idx: &Field,
    wt: &Field,
    ro: &Field,
    rc: &Field,
    central: &Image,
    eta: f64,
    grad_floor: f64,
) -> Result<SparseSpdSystem> {
    let (h, w) = (d_idx.height, d_idx.width);
    let strength: Vec<f64> = ro.data().iter().zip(rc.data()).map(|(a, b)| a * b).collect();
    let mut edges = Vec::with_capacity(2 * h * w);
    let edge = |i: usize, j: usize, y0: usize, x0: usize, y1: usize, x1: usize| {
        let mut diff = 0.0;
        for c in 0..central.channels {
            diff += (central.get(y0, x0, c) as f64 - central.get(y1, x1, c) as f64).abs();
        }
        let m = 0.5 * (strength[i] + strength[j]);
        (i, j, eta / ((diff + grad_floor) * m))
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push(edge(i, i + 1, y, x, y, x + 1));
            }
            if y + 1 < h {
                edges.push(edge(i, i + w, y, x, y + 1, x));
            }
        }
    }
    assemble(wt.data(), d_idx.data(), &edges)
}

/// Final depth: weighted least squares over the pixel grid with the refined
/// confidence as data weight and image-driven, strength-scaled smoothness on
/// the 4-neighbor graph. Solved in label-index units and converted back to
/// disparity.
#[allow(clippy::too_many_arguments)]
pub fn final_depth(
    d: &DepthMap,
    wt: &ConfidenceMap,
    ro: &Field,
    rc: &Field,
    central: &Image,
    grid: &LabelGrid,
    eta: f64,
    grad_floor: f64,
    solver: &SolverParams,
) -> Result<(DepthMap, SolveReport)> {
    if d.kind != DepthKind::Initial {
        return Err(Error::Param(format!("final solve expects initial depth, got {:?}", d.kind)));
    }
    if wt.kind != ConfidenceKind::Refined {
        return Err(Error::Param("final solve expects the refined confidence".into()));
    }
    let d_idx = grid.to_index_field(&d.field);
    let sys = build_final_system(&d_idx, &wt.field, ro, rc, central, eta, grad_floor)?;
    let (x, report) = solve(&sys, solver)?;
    let mut field = Field::new(d.field.height, d.field.width, 0.0);
    for (out, &v) in field.data_mut().iter_mut().zip(&x) {
        *out = grid.disparity_of(v);
    }
    Ok((DepthMap::new(DepthKind::Final, field), report))
}

/// Runs every stage in order; an error anywhere aborts with the identity of
/// the stage that failed. Deterministic for fixed inputs and config.
pub fn run_pipeline(
    lf: &LightField,
    cfg: &PipelineConfig,
) -> std::result::Result<PipelineBundle, PipelineError> {
    at_stage(Stage::Config, cfg.validate())?;
    let grid = at_stage(Stage::Config, cfg.labels.build())?;
    let central = lf.central_view();

    let cost_volume = at_stage(Stage::Cost, build_cost_volume(lf, &grid, &cfg.cost))?;
    let d = initial_depth(&cost_volume);
    let w = initial_confidence(&cost_volume);

    let graph = slic_segment(central, &cfg.sp_reg);
    let (sp_wise, sp_report) = at_stage(
        Stage::SpWiseDepth,
        solve_sp_depth(&graph, &d, &w, central, &grid, &cfg.sp_reg, &cfg.solver),
    )?;
    let epsilon = at_stage(Stage::Epsilon, epsilon_map(&d, &sp_wise, &grid))?;

    let ones = || Field::new(d.field.height, d.field.width, 1.0);
    let ko_real = at_stage(Stage::Refine, kappa_occ(&epsilon))?;
    let ko = if cfg.ablation.force_kappa_occ { ones() } else { ko_real.clone() };
    let kv = if cfg.ablation.force_kappa_var {
        ones()
    } else {
        at_stage(Stage::Refine, kappa_var(&d, &grid, &cfg.refine))?
    };
    let wt = at_stage(Stage::Refine, refine_confidence(&w, &ko, &kv))?;
    let ro = if cfg.ablation.force_rho_occ {
        ones()
    } else {
        at_stage(Stage::Refine, rho_occ(&ko_real, &epsilon, &cfg.refine))?
    };
    let rc = if cfg.ablation.force_rho_conf {
        ones()
    } else {
        at_stage(Stage::Refine, rho_conf(&w, &cfg.refine))?
    };

    let (dhat, final_report) = at_stage(
        Stage::FinalSolve,
        final_depth(&d, &wt, &ro, &rc, central, &grid, cfg.eta, cfg.sp_reg.grad_floor, &cfg.solver),
    )?;

    Ok(PipelineBundle {
        grid,
        cost_volume,
        initial_depth: d,
        initial_confidence: w,
        graph,
        sp_wise,
        epsilon,
        kappa_occ: ko,
        kappa_var: kv,
        refined_confidence: wt,
        rho_occ: ro,
        rho_conf: rc,
        final_depth: dhat,
        sp_report,
        final_report,
    })
}
