use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{AblationMode, RunConfig, CONFIG_FILE};
use super::visualize;
use crate::completion::{complete_depth, CompletionConfig, CompletionInputs, SolveDiagnostics};
use crate::error::{Error, Result};
use crate::heightmap::{backproject_cloud, build_heightmap, rotation_stack, Heightmap};
use crate::io;
use crate::metrics::{
    ablation_report, depth_metrics, eval_resize_depth, eval_resize_mask, eval_resize_normals, mask_metrics,
    normal_metrics, write_eval_csv, EvalRow, RunMetrics, EVAL_HEIGHT, EVAL_WIDTH,
};
use crate::raster::{BoundaryClass, BoundaryMap, DepthImage, NormalMap, TransparencyMask};
use crate::scene::Scene;
use crate::synthgen::recipe::{generate_scene, BatchConfig};

pub const DEPTH_FILE: &str = "depth.png";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Runs a resolved config with `jobs` worker threads.
pub fn run(mut cfg: RunConfig, jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out = cfg.resolve_output();
    match cfg.command.as_str() {
        "generate" => generate(&cfg, &out, &pool),
        "complete" => complete(&cfg, &out, &pool),
        "eval" => eval(&cfg, &out, &pool),
        "ablate" => ablate(&cfg, &out, &pool),
        "heightmap" => heightmap(&cfg, &out),
        "visualize" => visualize_cmd(&cfg, &out, &pool),
        other => Err(Error::Config(format!("unknown command {other:?}"))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn begin(cfg: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    cfg.write(&out.join(CONFIG_FILE))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{flag} is required")))
}

/// Maps `f` over `items` on `pool`; results keep the order of `items` and the first
/// error in that order wins.
fn par_map<T: Sync, R: Send>(
    pool: &rayon::ThreadPool,
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    pool.install(|| items.par_iter().map(f).collect::<Vec<_>>()).into_iter().collect()
}

/// `root` itself when it holds a manifest, otherwise its subdirectories that do,
/// sorted by name.
pub fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(io::MANIFEST).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(io::MANIFEST).is_file())
        .collect();
    if dirs.is_empty() {
        let e = std::io::Error::new(std::io::ErrorKind::NotFound, "no scene directories with a manifest");
        return Err(Error::io(root, e));
    }
    dirs.sort();
    Ok(dirs)
}

fn generate(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<()> {
    cfg.batch.validate()?;
    begin(cfg, out)?;
    let indices: Vec<usize> = (0..cfg.batch.count).collect();
    par_map(pool, &indices, |i| {
        let id = BatchConfig::scene_id(*i);
        let scene = generate_scene(&cfg.batch, *i).map_err(|e| e.in_scene(&id))?;
        io::save_scene(&out.join(&id), &scene).map_err(|e| e.in_scene(&id))?;
        log::info!("generated {id}");
        Ok(())
    })?;
    Ok(())
}

/// Completes one scene, writing `depth.png` and `diagnostics.json` into `dir`.
fn complete_into(scene: &Scene, cc: &CompletionConfig, dir: &Path, panels: Option<[f64; 2]>) -> Result<DepthImage> {
    let solution = complete_depth(&CompletionInputs::from_scene(scene), cc)?;
    create_dir(dir)?;
    io::write_depth_png(&dir.join(DEPTH_FILE), &solution.depth)?;
    write_diagnostics(&dir.join(DIAGNOSTICS_FILE), &solution.diagnostics)?;
    if let Some(range) = panels {
        visualize::write_depth_panel(&dir.join(visualize::depth_file("depth", range)), &solution.depth, range)?;
        visualize::write_normals_panel(&dir.join("normals.png"), &scene.input_normals)?;
    }
    Ok(solution.depth)
}

fn write_diagnostics(path: &Path, d: &SolveDiagnostics) -> Result<()> {
    if !d.converged {
        log::warn!("solver stopped after {} iterations without converging", d.iterations);
    }
    io::write_json(path, d)
}

fn complete(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<()> {
    cfg.completion.weights.validate()?;
    let dirs = scene_dirs(required(&cfg.input, "--input")?)?;
    begin(cfg, out)?;
    let panels = cfg.visualize_outputs.then_some(cfg.visualize.depth_range);
    par_map(pool, &dirs, |dir| {
        let scene = io::load_scene(dir)?;
        let id = scene.id().to_string();
        complete_into(&scene, &cfg.completion, &out.join(&id), panels).map_err(|e| e.in_scene(&id))?;
        log::info!("completed {id}");
        Ok(())
    })?;
    Ok(())
}

/// Predictions scored for one scene. Normals and mask default to the scene's inputs.
pub struct Prediction<'a> {
    pub depth: &'a DepthImage,
    pub normals: &'a NormalMap,
    pub mask: &'a TransparencyMask,
}

fn to_eval_res(
    depth: &DepthImage,
    normals: &NormalMap,
    mask: &TransparencyMask,
) -> Result<(DepthImage, NormalMap, TransparencyMask)> {
    Ok((
        eval_resize_depth(depth, EVAL_WIDTH, EVAL_HEIGHT)?,
        eval_resize_normals(normals, EVAL_WIDTH, EVAL_HEIGHT)?,
        eval_resize_mask(mask, EVAL_WIDTH, EVAL_HEIGHT)?,
    ))
}

/// Scores a prediction at the evaluation resolution over `region` (the ground-truth
/// transparency mask unless given), or over every pixel when `full_image` is set.
pub fn evaluate(
    pred: &Prediction<'_>,
    gt: &Scene,
    region: Option<&TransparencyMask>,
    full_image: bool,
) -> Result<EvalRow> {
    let (pd, pn, pm) = to_eval_res(pred.depth, pred.normals, pred.mask)?;
    let (gd, gn, gm) = to_eval_res(&gt.gt_depth, &gt.gt_normals, &gt.gt_mask)?;
    let region = if full_image {
        TransparencyMask::full(EVAL_WIDTH, EVAL_HEIGHT)?
    } else {
        match region {
            Some(r) => eval_resize_mask(r, EVAL_WIDTH, EVAL_HEIGHT)?,
            None => gm.clone(),
        }
    };
    Ok(EvalRow {
        scene_id: gt.id().to_string(),
        depth: depth_metrics(&pd, &gd, &region)?,
        normals: normal_metrics(&pn, &gn, &region)?,
        mask: Some(mask_metrics(&pm, &gm)?),
    })
}

fn eval_mask_for(mask_dir: &Path, id: &str) -> Result<TransparencyMask> {
    let flat = mask_dir.join(format!("{id}.png"));
    let nested = mask_dir.join(id).join("gt_mask.png");
    io::read_mask_png(if !flat.is_file() && nested.is_file() { &nested } else { &flat })
}

fn prediction_dir(pred_root: &Path, id: &str) -> PathBuf {
    let nested = pred_root.join(id);
    if nested.join(DEPTH_FILE).is_file() || !pred_root.join(DEPTH_FILE).is_file() {
        nested
    } else {
        pred_root.to_path_buf()
    }
}

fn full_report_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.with_file_name(format!("{stem}_full.csv"))
}

fn eval(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<()> {
    let pred_root = required(&cfg.input, "--pred-dir")?;
    let gt_dirs = scene_dirs(required(&cfg.eval.gt_dir, "--gt-dir")?)?;
    begin(cfg, out)?;
    let rows = par_map(pool, &gt_dirs, |dir| {
        let gt = io::load_scene(dir)?;
        let id = gt.id().to_string();
        let score = || -> Result<(EvalRow, Option<EvalRow>)> {
            let pdir = prediction_dir(pred_root, &id);
            let depth = io::read_depth_png(&pdir.join(DEPTH_FILE))?;
            let normals_path = pdir.join("normals.pfm");
            let normals = if normals_path.is_file() { Some(io::read_normals_pfm(&normals_path)?) } else { None };
            let mask_path = pdir.join("mask.png");
            let mask = if mask_path.is_file() { Some(io::read_mask_png(&mask_path)?) } else { None };
            let pred = Prediction {
                depth: &depth,
                normals: normals.as_ref().unwrap_or(&gt.input_normals),
                mask: mask.as_ref().unwrap_or(&gt.input_mask),
            };
            let region = cfg.eval.mask_dir.as_deref().map(|m| eval_mask_for(m, &id)).transpose()?;
            let row = evaluate(&pred, &gt, region.as_ref(), false)?;
            let full = if cfg.eval.also_full_image { Some(evaluate(&pred, &gt, None, true)?) } else { None };
            Ok((row, full))
        };
        score().map_err(|e| e.in_scene(&id))
    })?;
    let report = cfg.eval.report.clone().unwrap_or_else(|| out.join("eval.csv"));
    let (main, full): (Vec<EvalRow>, Vec<Option<EvalRow>>) = rows.into_iter().unzip();
    write_eval_csv(&report, &main)?;
    if cfg.eval.also_full_image {
        write_eval_csv(&full_report_path(&report), &full.into_iter().flatten().collect::<Vec<_>>())?;
    }
    Ok(())
}

/// The boundary map with contact labels turned into occlusion boundaries.
pub fn contacts_as_occlusion(b: &BoundaryMap) -> Result<BoundaryMap> {
    let (w, h) = b.dims();
    let labels: Vec<BoundaryClass> = b
        .labels()
        .iter()
        .map(|l| if *l == BoundaryClass::Contact { BoundaryClass::Occlusion } else { *l })
        .collect();
    let prob = b
        .occlusion_prob()
        .iter()
        .zip(b.labels())
        .map(|(p, l)| if *l == BoundaryClass::Contact { 1.0 } else { *p })
        .collect();
    BoundaryMap::with_occlusion_prob(w, h, labels, prob)
}

/// Completion settings and scene inputs of one ablation mode.
pub fn ablation_variant(mode: AblationMode, base: &CompletionConfig, scene: &Scene) -> Result<(CompletionConfig, Scene)> {
    let mut cc = *base;
    let mut scene = scene.clone();
    match mode {
        AblationMode::Full => {}
        AblationMode::NoMask => cc.flags.use_mask = false,
        AblationMode::NoEdgeWeights => cc.flags.use_boundary_weighting = false,
        AblationMode::NoContactEdge => scene.input_boundary = contacts_as_occlusion(&scene.input_boundary)?,
    }
    Ok((cc, scene))
}

fn ablate(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<()> {
    cfg.completion.weights.validate()?;
    let mut modes = cfg.ablate.modes.clone();
    modes.dedup();
    if modes.len() < 2 {
        return Err(Error::Config("ablate needs at least two distinct modes".into()));
    }
    let dirs = scene_dirs(required(&cfg.input, "--input")?)?;
    begin(cfg, out)?;
    let per_scene = par_map(pool, &dirs, |dir| {
        let scene = io::load_scene(dir)?;
        let id = scene.id().to_string();
        let run_modes = || -> Result<Vec<EvalRow>> {
            modes
                .iter()
                .map(|mode| {
                    let (cc, variant) = ablation_variant(*mode, &cfg.completion, &scene)?;
                    let depth = complete_into(&variant, &cc, &out.join(mode.label()).join(&id), None)?;
                    let pred = Prediction {
                        depth: &depth,
                        normals: &scene.input_normals,
                        mask: &scene.input_mask,
                    };
                    evaluate(&pred, &scene, None, false)
                })
                .collect()
        };
        let rows = run_modes().map_err(|e| e.in_scene(&id))?;
        log::info!("ablated {id}");
        Ok(rows)
    })?;

    let mut runs = Vec::with_capacity(modes.len());
    for (k, mode) in modes.iter().enumerate() {
        let rows: Vec<EvalRow> = per_scene.iter().map(|r| r[k].clone()).collect();
        write_eval_csv(&out.join(mode.label()).join("eval.csv"), &rows)?;
        runs.push(RunMetrics {
            label: mode.label().to_string(),
            scenes: rows.into_iter().map(|r| (r.scene_id, r.depth)).collect::<BTreeMap<_, _>>(),
        });
    }
    let report = ablation_report(&runs)?;
    report.write_csv(&out.join("ablation.csv"))?;
    io::write_json(&out.join("ablation.json"), &report)?;
    print!("{}", report.to_table());
    Ok(())
}

fn write_heightmap(dir: &Path, stem: &str, h: &Heightmap) -> Result<()> {
    let (w, ht) = h.dims();
    let values: Vec<f64> = h
        .values()
        .iter()
        .zip(h.valid())
        .map(|(v, ok)| if *ok { *v } else { f64::NAN })
        .collect();
    io::write_scalar_pfm(&dir.join(format!("{stem}.pfm")), w, ht, &values)?;
    let valid = h.valid().iter().map(|v| if *v { 255 } else { 0 }).collect();
    io::write_gray_png(&dir.join(format!("{stem}_valid.png")), w, ht, valid)
}

fn heightmap(cfg: &RunConfig, out: &Path) -> Result<()> {
    let opts = &cfg.heightmap;
    let ws = opts
        .workspace
        .as_ref()
        .ok_or_else(|| Error::Config("--workspace is required".into()))?;
    ws.validate()?;
    let scene_dir = required(&cfg.input, "--scene")?;
    let manifest = io::load_manifest(scene_dir)?;
    let depth_path = opts.depth.clone().unwrap_or_else(|| scene_dir.join(&manifest.files.gt_depth));
    let depth = io::read_depth_png(&depth_path)?;
    crate::raster::check_dims("depth", manifest.intrinsics.dims(), depth.dims())
        .map_err(|e| e.in_scene(&manifest.scene_id))?;
    begin(cfg, out)?;
    let cloud = backproject_cloud(&depth, &manifest.intrinsics, &ws.cam_to_world)?;
    let h = build_heightmap(&cloud, ws)?;
    write_heightmap(out, "heightmap", &h)?;
    if opts.stack {
        let dir = out.join("stack");
        create_dir(&dir)?;
        for (k, r) in rotation_stack(&h, opts.rotations)?.iter().enumerate() {
            write_heightmap(&dir, &format!("rot_{k:02}"), r)?;
        }
    }
    Ok(())
}

fn visualize_cmd(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<()> {
    let v = &cfg.visualize;
    if !(v.depth_range[0] < v.depth_range[1]) || !(v.error_max > 0.0) {
        return Err(Error::Config("depth range must be increasing and error_max positive".into()));
    }
    let sources = visualize::panel_sources(required(&cfg.input, "--input")?)?;
    begin(cfg, out)?;
    par_map(pool, &sources, |src| {
        let name = src.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("panels"));
        let n = visualize::render_source(src, &out.join(name), v.gt_dir.as_deref(), v.depth_range, v.error_max)?;
        log::info!("{}: {n} panels", src.display());
        Ok(())
    })?;
    Ok(())
}
