//! Command-line front end: run the depth pipeline on a light field, render
//! synthetic scenes with ground truth, or score an estimate against a
//! reference disparity map.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lfdepth::io::{
    dump_cost_volume, read_pfm, write_image_png16, write_mask_png, write_pfm, write_png16,
};
use lfdepth::lightfield::parse_manifest;
use lfdepth::metrics::{badpix, boundary_pr, under_observed_margin, PrPoint};
use lfdepth::pipeline::{at_stage, PipelineError, Stage};
use lfdepth::synth::{render_synthetic, SceneSpec};
use lfdepth::{
    run_pipeline, DepthKind, DepthMap, Error, Field, PipelineBundle, PipelineConfig,
};

#[derive(Parser)]
#[command(name = "lfdepth", version, about = "Light-field depth estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate depth from a light field described by a view manifest.
    Run(RunArgs),
    /// Render a synthetic light field plus ground truth from a scene file.
    Synth(SynthArgs),
    /// Score an estimated disparity PFM against a ground-truth PFM.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Manifest listing the sub-aperture views (key=value lines).
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline configuration: inline TOML, or a path to a TOML file.
    /// Omitted keys fall back to their defaults.
    #[arg(long, default_value = "")]
    config: String,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Also write intermediate stages (cost volume, superpixels, weights...).
    #[arg(long)]
    dump_intermediates: bool,
    /// Ground-truth gradient threshold for the boundary precision/recall
    /// sweep. Requires ground truth in the manifest; omit to skip the sweep.
    #[arg(long)]
    boundary_threshold: Option<f64>,
    /// Error threshold for the bad-pixel ratio.
    #[arg(long, default_value_t = 0.1)]
    badpix_threshold: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML file).
    #[arg(long)]
    scene: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated disparity (PFM).
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth disparity (PFM).
    #[arg(long)]
    gt: PathBuf,
    /// Error threshold for the bad-pixel ratio.
    #[arg(long, default_value_t = 0.1)]
    badpix_threshold: f64,
    /// Border margin excluded from the bad-pixel ratio.
    #[arg(long, default_value_t = 0)]
    margin: usize,
    /// Ground-truth gradient threshold for the boundary precision/recall
    /// sweep; omit to skip it.
    #[arg(long)]
    boundary_threshold: Option<f64>,
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes instead of panicking on
    // EPIPE, like any other command-line filter.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Eval(args) => cmd_eval(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Accepts either a path to a TOML file or inline TOML text.
fn resolve_config(arg: &str) -> lfdepth::Result<PipelineConfig> {
    let candidate = Path::new(arg);
    let text = if candidate.is_file() {
        fs::read_to_string(candidate)
            .map_err(|e| Error::Param(format!("config {}: {e}", candidate.display())))?
    } else {
        arg.to_string()
    };
    PipelineConfig::from_toml(&text)
}

fn out_write<T>(r: lfdepth::Result<T>) -> Result<T, PipelineError> {
    at_stage(Stage::Output, r)
}

fn create_out_dir(dir: &Path) -> Result<(), PipelineError> {
    out_write(fs::create_dir_all(dir).map_err(Error::from))
}

fn write_pr_csv(path: &Path, curves: &[(&str, &[PrPoint])]) -> lfdepth::Result<()> {
    let mut text = String::from("map,gradient_threshold,precision,recall,predicted,matched,gt_count\n");
    for (name, curve) in curves {
        for p in *curve {
            text.push_str(&format!(
                "{name},{},{},{},{},{},{}\n",
                p.threshold, p.precision, p.recall, p.c_p, p.t_p, p.g_p
            ));
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), PipelineError> {
    let cfg = at_stage(Stage::Config, resolve_config(&args.config))?;
    let manifest = at_stage(Stage::Load, parse_manifest(&args.manifest))?;
    let lf = at_stage(Stage::Load, manifest.load_views())?;

    let bundle = run_pipeline(&lf, &cfg)?;
    println!(
        "superpixels: {}; sp solve {} iters (residual {:.3e}); final solve {} iters (residual {:.3e})",
        bundle.graph.n,
        bundle.sp_report.iterations,
        bundle.sp_report.final_residual,
        bundle.final_report.iterations,
        bundle.final_report.final_residual,
    );

    create_out_dir(&args.out)?;
    let grid = &bundle.grid;
    let (lo, hi) = (grid.value(0), grid.value(grid.len() - 1));
    out_write(write_pfm(&args.out.join("dhat.pfm"), &bundle.final_depth.field))?;
    out_write(write_png16(&args.out.join("dhat.png"), &bundle.final_depth.field, lo, hi))?;

    if args.dump_intermediates {
        dump_intermediates(&args.out, &bundle)?;
    }

    if let Some(gt_path) = manifest.gt_path() {
        let gt = at_stage(Stage::Metrics, read_pfm(&gt_path))?;
        let margin = under_observed_margin(lf.max_angular_offset(), grid.max_abs_disparity());
        let initial = &bundle.initial_depth;
        let final_ = &bundle.final_depth;
        let bp_init =
            at_stage(Stage::Metrics, badpix(initial, &gt, args.badpix_threshold, margin))?;
        let bp_final =
            at_stage(Stage::Metrics, badpix(final_, &gt, args.badpix_threshold, margin))?;
        let csv = format!(
            "map,badpix_threshold,border_margin,bad_ratio\ninitial,{t},{margin},{bp_init}\nfinal,{t},{margin},{bp_final}\n",
            t = args.badpix_threshold,
        );
        out_write(fs::write(args.out.join("badpix.csv"), csv).map_err(Error::from))?;
        println!(
            "badpix({}, margin {margin}): initial {bp_init:.4}, final {bp_final:.4}",
            args.badpix_threshold
        );

        if let Some(bt) = args.boundary_threshold {
            let pr_init = at_stage(Stage::Metrics, boundary_pr(initial, &gt, bt))?;
            let pr_final = at_stage(Stage::Metrics, boundary_pr(final_, &gt, bt))?;
            out_write(write_pr_csv(
                &args.out.join("pr_curve.csv"),
                &[("initial", &pr_init), ("final", &pr_final)],
            ))?;
            println!("pr curve: {} initial points, {} final points", pr_init.len(), pr_final.len());
        }
    } else if args.boundary_threshold.is_some() {
        return Err(PipelineError {
            stage: Stage::Metrics,
            source: Error::Metric("boundary sweep needs gt_disparity in the manifest".into()),
        });
    }

    println!("wrote {}", args.out.join("dhat.pfm").display());
    Ok(())
}

fn dump_intermediates(out: &Path, bundle: &PipelineBundle) -> Result<(), PipelineError> {
    let fields: [(&str, &Field); 9] = [
        ("initial_depth", &bundle.initial_depth.field),
        ("initial_confidence", &bundle.initial_confidence.field),
        ("sp_wise_depth", &bundle.sp_wise.field),
        ("epsilon", &bundle.epsilon.field),
        ("kappa_occ", &bundle.kappa_occ),
        ("kappa_var", &bundle.kappa_var),
        ("refined_confidence", &bundle.refined_confidence.field),
        ("rho_occ", &bundle.rho_occ),
        ("rho_conf", &bundle.rho_conf),
    ];
    for (name, field) in fields {
        out_write(write_pfm(&out.join(format!("{name}.pfm")), field))?;
    }
    let g = &bundle.graph;
    let labels =
        Field::from_vec(g.height, g.width, g.label_map.iter().map(|&l| l as f64).collect());
    let hi = (g.n.max(2) - 1) as f64;
    out_write(write_png16(&out.join("superpixels.png"), &labels, 0.0, hi))?;
    out_write(dump_cost_volume(&out.join("cost_volume.bin"), &bundle.cost_volume))?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), PipelineError> {
    let text = at_stage(
        Stage::Config,
        fs::read_to_string(&args.scene)
            .map_err(|e| Error::Param(format!("scene {}: {e}", args.scene.display()))),
    )?;
    let scene: SceneSpec = at_stage(
        Stage::Config,
        toml::from_str(&text).map_err(|e| Error::Param(format!("scene: {e}"))),
    )?;
    let (lf, gt) = at_stage(Stage::Load, render_synthetic(&scene))?;

    create_out_dir(&args.out)?;
    for row in 0..lf.nv {
        for col in 0..lf.nu {
            let name = format!("view_{row:02}_{col:02}.png");
            out_write(write_image_png16(&args.out.join(name), lf.view(row, col)))?;
        }
    }
    let manifest = format!(
        "rows={}\ncols={}\npattern=view_%02d_%02d.png\ngt_disparity=gt.pfm\n",
        lf.nv, lf.nu
    );
    out_write(fs::write(args.out.join("manifest.txt"), manifest).map_err(Error::from))?;
    out_write(write_pfm(&args.out.join("gt.pfm"), &gt.disparity))?;
    out_write(write_mask_png(&args.out.join("pobr.png"), &gt.pobr))?;
    out_write(write_mask_png(&args.out.join("boundary.png"), &gt.occlusion_boundary))?;
    println!(
        "wrote {} views, manifest.txt, gt.pfm, pobr.png, boundary.png to {}",
        lf.nv * lf.nu,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), PipelineError> {
    let est = at_stage(Stage::Load, read_pfm(&args.est))?;
    let gt = at_stage(Stage::Load, read_pfm(&args.gt))?;
    let est = DepthMap::new(DepthKind::Final, est);
    let bp = at_stage(Stage::Metrics, badpix(&est, &gt, args.badpix_threshold, args.margin))?;
    println!("badpix({}, margin {}): {bp:.6}", args.badpix_threshold, args.margin);
    if let Some(bt) = args.boundary_threshold {
        let curve = at_stage(Stage::Metrics, boundary_pr(&est, &gt, bt))?;
        println!("gradient_threshold,precision,recall,predicted,matched,gt_count");
        for p in &curve {
            println!(
                "{},{},{},{},{},{}",
                p.threshold, p.precision, p.recall, p.c_p, p.t_p, p.g_p
            );
        }
    }
    Ok(())
}
