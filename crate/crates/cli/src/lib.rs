//! Command-line front end. `run` parses arguments, executes one subcommand and
//! returns the process exit status.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use nestseg::grid::{to_semantic, LabelMask};
use nestseg::io::{
    read_label_mask, read_radial_field, read_scalar_field, write_bytes, write_label_mask,
    write_metric_report, write_radial_field, write_scalar_field, ImagePaths, ReportFormat,
    RunConfig,
};
use nestseg::loss::{
    toy_fit, wbr_exclusive_terms, wbr_overlap_terms, wbr_penalty, FitProblem, FitResult,
    LossConfig, PenaltyKind,
};
use nestseg::metrics::{metric_table, Aggregation, EvalImage, Nesting, OuterPolicy};
use nestseg::nms::{nms, propose, segment};
use nestseg::star::{argmax_pixels, boundary_distance_field, polygon_from_fields, radial_field, StarPolygon};
use nestseg::synth::{gen_scene, SceneSpec};
use nestseg::{Error, Result};

/// Environment variable that replaces the default worker thread count.
pub const THREADS_ENV: &str = "NESTSEG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nestseg", version, about = "Nested star-convex instance segmentation toolkit")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: NESTSEG_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label mask -> boundary distance (d.ssegf) and radial distances (r.ssegf).
    Fields {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        rays: Option<usize>,
    },
    /// d/r fields -> polygons as JSON. With --mask, one polygon per instance at
    /// its highest-d pixel; otherwise the proposals that survive suppression.
    Reconstruct {
        #[arg(long)]
        d: PathBuf,
        #[arg(long)]
        r: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Write the polygons here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also rasterize the polygons into this label mask.
        #[arg(long)]
        render: Option<PathBuf>,
        #[command(flatten)]
        nms: NmsArgs,
    },
    /// d/r fields -> predicted label mask.
    Nms {
        #[arg(long)]
        d: PathBuf,
        #[arg(long)]
        r: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        nms: NmsArgs,
    },
    /// Ground-truth / prediction mask pairs -> metric report.
    Eval(EvalArgs),
    /// Within-boundary penalty values of predicted masks.
    Penalty(PenaltyArgs),
    /// Generate a nested scene: outer and inner masks plus scene.json.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Mask file extension: sseg or png.
        #[arg(long, default_value = "sseg")]
        ext: String,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Paired toy fits with and without the penalty on generated scenes.
    DemoFit(DemoArgs),
}

#[derive(Debug, Args)]
struct NmsArgs {
    #[arg(long)]
    prob_thresh: Option<f64>,
    #[arg(long)]
    overlap_thresh: Option<f64>,
}

#[derive(Debug, Args)]
struct SceneArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    n_outer: Option<usize>,
    #[arg(long)]
    inner_min: Option<usize>,
    #[arg(long)]
    inner_max: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Repeat for several images; pairs with --pred-inner by position.
    #[arg(long)]
    gt_inner: Vec<PathBuf>,
    #[arg(long)]
    pred_inner: Vec<PathBuf>,
    #[arg(long)]
    gt_outer: Vec<PathBuf>,
    #[arg(long)]
    pred_outer: Vec<PathBuf>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long)]
    nesting: Option<Nesting>,
    #[arg(long)]
    aggregation: Option<Aggregation>,
    #[arg(long)]
    outer_policy: Option<OuterPolicy>,
    #[arg(long)]
    format: Option<ReportFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PenaltyArgs {
    #[arg(long)]
    pred_inner: PathBuf,
    #[arg(long)]
    pred_outer: PathBuf,
    #[arg(long)]
    gt_outer: PathBuf,
    /// Second inner prediction; enables the exclusive and overlap variants.
    #[arg(long, requires = "gt_inner")]
    pred_inner_b: Option<PathBuf>,
    /// Ground truth of the first inner category.
    #[arg(long, requires = "pred_inner_b")]
    gt_inner: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of scenes; scene i uses seed + i.
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[command(flatten)]
    scene: SceneArgs,
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok()
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(threads_from_env).unwrap_or(0);
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

/// Parse `args` (including the program name) and run. Returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads(cli.threads);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nestseg: error: {e}");
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Fields { mask, out_dir, rays } => {
            let rays = rays.unwrap_or(cfg.rays);
            let m = read_label_mask(&mask)?;
            create_dir(&out_dir)?;
            write_scalar_field(&out_dir.join("d.ssegf"), &boundary_distance_field(&m))?;
            write_radial_field(&out_dir.join("r.ssegf"), &radial_field(&m, rays)?)
        }
        Command::Reconstruct {
            d,
            r,
            mask,
            out,
            render,
            nms: n,
        } => {
            n.apply(&mut cfg);
            cfg.validate()?;
            reconstruct(&cfg, &d, &r, mask.as_deref(), out.as_deref(), render.as_deref())
        }
        Command::Nms { d, r, out, nms: n } => {
            n.apply(&mut cfg);
            cfg.validate()?;
            let (d, r) = (read_scalar_field(&d)?, read_radial_field(&r)?);
            write_label_mask(&out, &segment(&d, &r, &cfg.nms)?)
        }
        Command::Eval(args) => eval(cfg, args),
        Command::Penalty(args) => penalty(&cfg, args),
        Command::Synth { out_dir, ext, scene } => {
            scene.apply(&mut cfg);
            cfg.validate()?;
            synth(&cfg.scene, &out_dir, &ext)
        }
        Command::DemoFit(args) => demo_fit(cfg, args),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialise");
    s.push('\n');
    s
}

impl NmsArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.prob_thresh {
            cfg.nms.prob_thresh = v;
        }
        if let Some(v) = self.overlap_thresh {
            cfg.nms.overlap_thresh = v;
        }
    }
}

impl SceneArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
            cfg.apply_seed();
        }
        let s = &mut cfg.scene;
        if let Some(v) = self.height {
            s.height = v;
        }
        if let Some(v) = self.width {
            s.width = v;
        }
        if let Some(v) = self.n_outer {
            s.n_outer = v;
        }
        if let Some(v) = self.inner_min {
            s.inner_per_outer[0] = v;
        }
        if let Some(v) = self.inner_max {
            s.inner_per_outer[1] = v;
        }
        if let Some(v) = self.jitter {
            s.boundary_jitter = v;
        }
    }
}

fn polygon_json(id: u32, poly: &StarPolygon, score: f64) -> Value {
    let c = poly.centre();
    json!({
        "id": id,
        "centre": [c.row, c.col],
        "score": score,
        "radii": poly.radii(),
        "vertices": poly.vertices().iter().map(|&(y, x)| [y, x]).collect::<Vec<_>>(),
    })
}

fn reconstruct(
    cfg: &RunConfig,
    d: &Path,
    r: &Path,
    mask: Option<&Path>,
    out: Option<&Path>,
    render: Option<&Path>,
) -> Result<()> {
    let (d, r) = (read_scalar_field(d)?, read_radial_field(r)?);
    let (h, w) = d.shape();
    let polys: Vec<(u32, StarPolygon, f64)> = match mask {
        Some(m) => {
            let m = read_label_mask(m)?;
            argmax_pixels(&m, &d)
                .into_iter()
                .map(|(id, p)| Ok((id, polygon_from_fields(p, &r)?, d.get(p.row, p.col))))
                .collect::<Result<_>>()?
        }
        None => {
            let kept = nms(&propose(&d, &r, cfg.nms.prob_thresh)?, cfg.nms.overlap_thresh, h, w)?;
            kept.into_iter()
                .enumerate()
                .map(|(i, p)| (i as u32 + 1, p.polygon, p.score))
                .collect()
        }
    };
    if let Some(path) = render {
        let mut canvas = LabelMask::zeros(h, w);
        for (id, poly, _) in polys.iter().rev() {
            for s in poly.spans(h, w) {
                for c in s.col_start..s.col_end {
                    canvas.set(s.row, c, *id);
                }
            }
        }
        write_label_mask(path, &canvas)?;
    }
    let list: Vec<Value> = polys.iter().map(|(id, p, s)| polygon_json(*id, p, *s)).collect();
    emit(out, &pretty(&json!({ "height": h, "width": w, "polygons": list })))
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    if a.gt_inner.len() != a.pred_inner.len() {
        return Err(Error::InvalidParameter("--gt-inner and --pred-inner must be given the same number of times".into()));
    }
    if a.gt_outer.len() != a.pred_outer.len() || (!a.gt_outer.is_empty() && a.gt_outer.len() != a.gt_inner.len()) {
        return Err(Error::InvalidParameter(
            "outer masks must be given for every image or for none".into(),
        ));
    }
    for (i, (g, p)) in a.gt_inner.iter().zip(&a.pred_inner).enumerate() {
        cfg.images.push(ImagePaths {
            gt_inner: g.clone(),
            pred_inner: p.clone(),
            gt_outer: a.gt_outer.get(i).cloned(),
            pred_outer: a.pred_outer.get(i).cloned(),
        });
    }
    if let Some(t) = a.taus {
        cfg.metrics.taus = t;
    }
    if let Some(v) = a.nesting {
        cfg.metrics.nesting = v;
    }
    if let Some(v) = a.aggregation {
        cfg.metrics.aggregation = v;
    }
    if let Some(v) = a.outer_policy {
        cfg.metrics.outer_policy = v;
    }
    if let Some(v) = a.format {
        cfg.format = v;
    }
    cfg.validate()?;
    cfg.check_paths()?;
    if cfg.images.is_empty() {
        return Err(Error::InvalidParameter("no images to evaluate".into()));
    }
    let images: Vec<EvalImage> = cfg
        .images
        .par_iter()
        .map(|p| {
            let outer = match (&p.gt_outer, &p.pred_outer) {
                (Some(g), Some(q)) => Some((read_label_mask(g)?, read_label_mask(q)?)),
                _ => None,
            };
            Ok(EvalImage {
                gt_inner: read_label_mask(&p.gt_inner)?,
                pred_inner: read_label_mask(&p.pred_inner)?,
                outer,
            })
        })
        .collect::<Result<_>>()?;
    let report = metric_table(&images, &cfg.metrics, &cfg.loss)?;
    for w in &report.warnings {
        eprintln!("nestseg: warning: {w}");
    }
    emit(a.out.as_deref(), &write_metric_report(&report, cfg.format))
}

fn penalty(cfg: &RunConfig, a: PenaltyArgs) -> Result<()> {
    let mut loss = cfg.loss;
    if let Some(e) = a.epsilon {
        loss.epsilon = e;
    }
    if let Some(al) = a.alpha {
        loss.alpha = al;
    }
    let pi = to_semantic(&read_label_mask(&a.pred_inner)?);
    let po = to_semantic(&read_label_mask(&a.pred_outer)?);
    let go = to_semantic(&read_label_mask(&a.gt_outer)?);
    let mut values = vec![("wbr", wbr_penalty(&pi, &po, &go, loss.epsilon)?)];
    if let (Some(pb), Some(gi)) = (&a.pred_inner_b, &a.gt_inner) {
        let pb = to_semantic(&read_label_mask(pb)?);
        let gi = to_semantic(&read_label_mask(gi)?);
        let ex = wbr_exclusive_terms(&pi, &pb, &po, &gi, &go, loss.epsilon)?;
        let ov = wbr_overlap_terms(&pi, &pb, &po, &gi, &go, loss.alpha, loss.epsilon)?;
        values.push(("wbr_exclusive", ex.value));
        values.push(("wbr_overlap", ov.value));
        values.push(("interior_1", ex.interior_1));
        values.push(("interior_3", ex.interior_3));
        values.push(("pair_ratio", ex.pair_ratio));
    }
    if a.json {
        let mut m = serde_json::Map::new();
        for (k, v) in &values {
            m.insert((*k).into(), json!(v));
        }
        m.insert("epsilon".into(), json!(loss.epsilon));
        m.insert("alpha".into(), json!(loss.alpha));
        print!("{}", pretty(&Value::Object(m)));
    } else {
        for (k, v) in values {
            println!("{k} = {v:?}");
        }
    }
    Ok(())
}

fn synth(spec: &SceneSpec, out_dir: &Path, ext: &str) -> Result<()> {
    if !matches!(ext, "sseg" | "png") {
        return Err(Error::InvalidParameter(format!("--ext must be sseg or png, got '{ext}'")));
    }
    let s = gen_scene(spec)?;
    create_dir(out_dir)?;
    write_label_mask(&out_dir.join(format!("outer.{ext}")), &s.gt_outer)?;
    write_label_mask(&out_dir.join(format!("inner.{ext}")), &s.gt_inner)?;
    let centres = |m: &std::collections::BTreeMap<u32, nestseg::grid::Pixel>| {
        m.iter().map(|(id, p)| json!({ "id": id, "centre": [p.row, p.col] })).collect::<Vec<_>>()
    };
    let meta = json!({
        "spec": spec,
        "containment": s.containment.iter().map(|(i, o)| json!({ "inner": i, "outer": o })).collect::<Vec<_>>(),
        "outer_centres": centres(&s.outer_centres),
        "inner_centres": centres(&s.inner_centres),
    });
    write_bytes(&out_dir.join("scene.json"), pretty(&meta).as_bytes())
}

/// Both arms of one demo scene: with the configured penalty weight, then with it zeroed.
pub fn paired_fit(
    spec: &SceneSpec,
    loss: LossConfig,
    rays: usize,
    fit: &nestseg::loss::FitConfig,
) -> Result<(FitResult, FitResult)> {
    let s = gen_scene(spec)?;
    let with = FitProblem::nested(&s.gt_inner, &s.gt_outer, rays, loss, PenaltyKind::Wbr)?;
    let without = FitProblem::nested(
        &s.gt_inner,
        &s.gt_outer,
        rays,
        LossConfig { lambda3: 0.0, ..loss },
        PenaltyKind::Wbr,
    )?;
    Ok((toy_fit(&with, fit)?, toy_fit(&without, fit)?))
}

fn demo_fit(mut cfg: RunConfig, a: DemoArgs) -> Result<()> {
    a.scene.apply(&mut cfg);
    if let Some(v) = a.iterations {
        cfg.fit.iterations = v;
    }
    if let Some(v) = a.step_size {
        cfg.fit.step_size = v;
    }
    cfg.validate()?;
    if a.scenes == 0 {
        return Err(Error::InvalidParameter("--scenes must be >= 1".into()));
    }
    create_dir(&a.out_dir)?;
    let base = cfg.scene.seed;
    let runs: Vec<(u64, FitResult, FitResult)> = (0..a.scenes as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base.wrapping_add(i);
            let spec = SceneSpec { seed, ..cfg.scene.clone() };
            let fit = nestseg::loss::FitConfig { seed, ..cfg.fit };
            let (w, b) = paired_fit(&spec, cfg.loss, cfg.rays, &fit)?;
            Ok((seed, w, b))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("scene_seed,iteration,loss_wbr,loss_baseline\n");
    let mut summary = Vec::new();
    let mut lower = 0;
    for (seed, w, b) in &runs {
        for (it, (lw, lb)) in w.loss_trace.iter().zip(&b.loss_trace).enumerate() {
            csv.push_str(&format!("{seed},{it},{lw:?},{lb:?}\n"));
        }
        let is_lower = w.outside_mass_final < b.outside_mass_final;
        lower += usize::from(is_lower);
        println!(
            "scene {seed}: outside inner mass {:?} -> {:?} with penalty, {:?} -> {:?} without",
            w.outside_mass_initial, w.outside_mass_final, b.outside_mass_initial, b.outside_mass_final
        );
        summary.push(json!({
            "scene_seed": seed,
            "wbr": { "loss_trace": w.loss_trace, "outside_mass_initial": w.outside_mass_initial, "outside_mass_final": w.outside_mass_final },
            "baseline": { "loss_trace": b.loss_trace, "outside_mass_initial": b.outside_mass_initial, "outside_mass_final": b.outside_mass_final },
            "wbr_lower": is_lower,
        }));
    }
    println!("penalty gave lower outside mass in {lower}/{} scenes", runs.len());
    let doc = json!({
        "scene": cfg.scene,
        "fit": cfg.fit,
        "loss": cfg.loss,
        "rays": cfg.rays,
        "runs": summary,
        "wbr_lower_count": lower,
    });
    write_bytes(&a.out_dir.join("demo_fit.json"), pretty(&doc).as_bytes())?;
    write_bytes(&a.out_dir.join("trace.csv"), csv.as_bytes())
}
