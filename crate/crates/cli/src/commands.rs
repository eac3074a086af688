use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use sonocaustics::camera::{calibrate, capture, capture_background, rectify, CaptureConfig};
use sonocaustics::hologram::discretize_phases;
use sonocaustics::io::{self, Depth, FieldData};
use sonocaustics::metrics::{make_target_mask, two_circle_harness, weber_contrast};
use sonocaustics::plant::{deform_surface, render_caustics};
use sonocaustics::{HologramModel, PhasePlan, RealGrid, TargetImage};

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn runtime(e: std::io::Error, what: &Path) -> CliError {
    CliError::Runtime(format!("{}: {e}", what.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects written files so the command can finish with a manifest of
/// content hashes and the effective configuration.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| runtime(e, dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        io::write_bytes(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    pub fn pgm(&mut self, name: &str, grid: &RealGrid) -> Result<PathBuf> {
        self.write(name, &io::encode_pgm(grid, Depth::Sixteen))
    }

    pub fn scf(&mut self, name: &str, grid: &RealGrid) -> Result<PathBuf> {
        self.write(name, &io::encode_scf_real(grid)?)
    }

    /// Writes `config-<command>.toml` and `manifest-<command>.txt`; the
    /// manifest lists `sha256  file` lines in write order.
    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<PathBuf> {
        self.write(&format!("config-{command}.toml"), cfg.to_toml().as_bytes())?;
        let mut text = String::new();
        for (name, hash) in &self.files {
            writeln!(text, "{hash}  {name}").unwrap();
        }
        let path = self.dir.join(format!("manifest-{command}.txt"));
        io::write_bytes(&path, text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(path)
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

/// Grayscale pixels from a P5 graymap or a PNG.
pub struct SourceImage {
    pub width: usize,
    pub height: usize,
    pub max_value: f64,
    pub pixels: Vec<f64>,
    pub sha256: String,
}

pub fn load_source(path: &Path, convert_color: bool) -> Result<SourceImage> {
    let bytes = read_input(path)?;
    let sha256 = sha256_hex(&bytes);
    if bytes.starts_with(b"P5") {
        let g = io::decode_pgm(&bytes)?;
        return Ok(SourceImage {
            width: g.width,
            height: g.height,
            max_value: g.maxval as f64,
            pixels: g.pixels,
            sha256,
        });
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| CliError::Validation(format!("{}: not a P5 graymap or readable PNG: {e}", path.display())))?;
    use image::ColorType::*;
    let gray = matches!(img.color(), L8 | L16 | La8 | La16);
    if !gray && !convert_color {
        return Err(CliError::Validation(format!(
            "{}: image is not grayscale (set paths.convert_color to convert)",
            path.display()
        )));
    }
    let luma = img.to_luma16();
    let (w, h) = luma.dimensions();
    Ok(SourceImage {
        width: w as usize,
        height: h as usize,
        max_value: 65535.0,
        pixels: luma.into_raw().into_iter().map(f64::from).collect(),
        sha256,
    })
}

fn prepare_target(path: &Path, cfg: &RunConfig) -> Result<(TargetImage, SourceImage)> {
    let src = load_source(path, cfg.paths.convert_color)?;
    let plane = cfg.plane()?;
    let target = TargetImage::from_grayscale(
        src.width,
        src.height,
        &src.pixels,
        src.max_value,
        plane.width(),
        plane.height(),
    )?;
    Ok((target, src))
}

pub fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    let path = cfg
        .paths
        .target
        .as_ref()
        .ok_or_else(|| CliError::Validation("paths.target is not set".into()))?;
    let (target, src) = prepare_target(path, cfg)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    let scf = io::encode_scf_real(target.values())?;
    let prepared = cfg.prepared_path();
    io::write_bytes(&prepared, &scf).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.files.push((prepared.display().to_string(), sha256_hex(&scf)));
    out.pgm("target.pgm", target.values())?;
    let provenance = format!(
        "source = {:?}\nsource_sha256 = \"{}\"\nsource_width_px = {}\nsource_height_px = {}\nsource_max_value = {}\n\
         width_px = {}\nheight_px = {}\nconversion = \"invert, bicubic a=-0.5 half-pixel centers, clamp to [0, 1]\"\nprepared_sha256 = \"{}\"\n",
        path.display().to_string(),
        src.sha256,
        src.width,
        src.height,
        src.max_value,
        target.width(),
        target.height(),
        sha256_hex(&scf),
    );
    out.write("target.provenance.toml", provenance.as_bytes())?;
    out.finish("prepare", cfg)
}

fn load_target(cfg: &RunConfig) -> Result<TargetImage> {
    let path = cfg.prepared_path();
    let bytes = read_input(&path)?;
    match io::decode_scf(&bytes).map_err(|e| CliError::from(e).context(path.display()))? {
        FieldData::Real(g) => {
            let plane = cfg.plane()?;
            if g.dims() != (plane.width(), plane.height()) {
                return Err(CliError::Validation(format!(
                    "{}: prepared target is {}x{}, plane is {}x{}",
                    path.display(),
                    g.width(),
                    g.height(),
                    plane.width(),
                    plane.height()
                )));
            }
            Ok(TargetImage::new(g)?)
        }
        FieldData::Complex(_) => Err(CliError::Validation(format!("{}: expected a real field", path.display()))),
    }
}

fn load_plan(path: &Path) -> Result<PhasePlan> {
    let text = String::from_utf8(read_input(path)?)
        .map_err(|_| CliError::Validation(format!("{}: not UTF-8 text", path.display())))?;
    io::parse_plan(&text).map_err(|e| CliError::from(e).context(path.display()))
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    s
}

pub fn optimize(cfg: &RunConfig) -> Result<PathBuf> {
    let target = load_target(cfg)?;
    let model = HologramModel::new(&cfg.array()?, &cfg.plane()?)?;
    let trace = model.optimize(&target, cfg.optimizer.frames, &cfg.optim())?;
    let p_avg = model.time_avg_amplitude(&trace.plan)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    let plan_text = io::format_plan(&trace.plan);
    let plan_path = cfg.plan_path();
    io::write_bytes(&plan_path, plan_text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.files.push((plan_path.display().to_string(), sha256_hex(plan_text.as_bytes())));
    out.write("loss.csv", loss_csv(&trace.losses).as_bytes())?;
    out.pgm("pressure.pgm", &p_avg.values)?;
    out.scf("pressure.scf", &p_avg.values)?;
    out.finish("optimize", cfg)
}

/// Writes amplitude, height and caustic images (and the camera view when
/// enabled) for a plan under `prefix`.
fn render_stages(
    model: &HologramModel,
    plan: &PhasePlan,
    cfg: &RunConfig,
    out: &mut Outputs,
    prefix: &str,
) -> Result<RealGrid> {
    let plant = cfg.plant();
    let p_avg = model.time_avg_amplitude(plan)?;
    let height = deform_surface(&p_avg, &plant)?;
    let caustic = render_caustics(&height, &plant)?;
    out.scf(&format!("{prefix}amplitude.scf"), &p_avg.values)?;
    out.pgm(&format!("{prefix}amplitude.pgm"), &p_avg.values)?;
    out.scf(&format!("{prefix}height.scf"), &height.h)?;
    out.pgm(&format!("{prefix}height.pgm"), &height.h)?;
    out.scf(&format!("{prefix}caustic.scf"), &caustic.values)?;
    out.pgm(&format!("{prefix}caustic.pgm"), &caustic.values)?;
    if cfg.camera.capture_in_render {
        let cap = cfg.capture()?;
        let (w, h) = caustic.values.dims();
        let h_est = calibrate(&cap, w, h)?;
        let background = capture_background(w, h, &cap)?;
        let raw = capture(&caustic.values, &cap.with_seed(cap.seed.wrapping_add(1)))?;
        let rect = rectify(&raw, &h_est, &background, w, h)?;
        out.pgm(&format!("{prefix}raw.pgm"), &raw)?;
        out.pgm(&format!("{prefix}rectified.pgm"), &rect.values)?;
    }
    Ok(caustic.values)
}

pub fn render(cfg: &RunConfig) -> Result<PathBuf> {
    let plan = load_plan(&cfg.plan_path())?;
    let model = HologramModel::new(&cfg.array()?, &cfg.plane()?)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    render_stages(&model, &plan, cfg, &mut out, "")?;
    out.finish("render", cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn twin(cfg: &RunConfig) -> Result<PathBuf> {
    let target = load_target(cfg)?;
    let plan = load_plan(&cfg.plan_path())?;
    let model = HologramModel::new(&cfg.array()?, &cfg.plane()?)?;
    let trace = sonocaustics::run_twin(&model, &target, plan, &cfg.twin()?)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    out.write("twin_plan.txt", io::format_plan(&trace.plan).as_bytes())?;
    let mut csv = String::from("step,l_dt,weber\n");
    for (i, (l, w)) in trace.losses.iter().zip(&trace.weber).enumerate() {
        writeln!(csv, "{i},{l},{}", fmt_opt(*w)).unwrap();
    }
    out.write("twin.csv", csv.as_bytes())?;
    let abs = |v: Option<f64>| fmt_opt(v.map(f64::abs));
    let report = format!(
        "# mask_threshold={}\nweber_before,weber_after,abs_weber_before,abs_weber_after\n{},{},{},{}\n",
        cfg.metrics.mask_threshold,
        fmt_opt(trace.weber_before),
        fmt_opt(trace.weber_after),
        abs(trace.weber_before),
        abs(trace.weber_after)
    );
    out.write("contrast.csv", report.as_bytes())?;
    for (step, img) in &trace.snapshots {
        out.pgm(&format!("snapshots/c_img_{step:05}.pgm"), img)?;
    }
    out.pgm("c_img.pgm", &trace.c_img)?;
    out.finish("twin", cfg)
}

pub fn animate(cfg: &RunConfig) -> Result<PathBuf> {
    let spec = &cfg.animation;
    if spec.targets.is_empty() {
        return Err(CliError::Validation("animation.targets is empty".into()));
    }
    for (i, path) in spec.targets.iter().enumerate() {
        if !path.is_file() {
            return Err(CliError::Validation(format!("frame {i}: {} does not exist", path.display())));
        }
    }
    let model = HologramModel::new(&cfg.array()?, &cfg.plane()?)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    let mut index = String::from("index,source,image\n");
    for (i, path) in spec.targets.iter().enumerate() {
        let frame = |e: CliError| e.context(format!("frame {i}"));
        let (target, _) = prepare_target(path, cfg).map_err(frame)?;
        let mut optim = cfg.optim();
        optim.seed = optim.seed.wrapping_add(i as u64);
        let mut plan = model
            .optimize(&target, spec.frames, &optim)
            .map_err(|e| frame(e.into()))?
            .plan;
        if spec.twin {
            let mut tc = cfg.twin().map_err(frame)?;
            tc.seed = tc.seed.wrapping_add(i as u64);
            tc.snapshot_every = 0;
            plan = sonocaustics::run_twin(&model, &target, plan, &tc)
                .map_err(|e| frame(e.into()))?
                .plan;
        }
        let name = format!("frames/{i:04}_");
        render_stages(&model, &plan, cfg, &mut out, &name).map_err(frame)?;
        out.write(&format!("frames/{i:04}_plan.txt"), io::format_plan(&plan).as_bytes())?;
        writeln!(index, "{i},{},{name}caustic.pgm", path.display()).unwrap();
    }
    out.write("animation.csv", index.as_bytes())?;
    out.finish("animate", cfg)
}

pub fn export(cfg: &RunConfig) -> Result<PathBuf> {
    let plan = load_plan(&cfg.plan_path())?;
    let discrete = discretize_phases(&plan, cfg.export.levels)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    out.write("phases_device.txt", io::format_discrete_plan(&discrete).as_bytes())?;
    out.finish("export", cfg)
}

pub fn calib(cfg: &RunConfig) -> Result<PathBuf> {
    let plane = cfg.plane()?;
    let (w, h) = (plane.width(), plane.height());
    let cap: CaptureConfig = cfg.capture()?;
    let h_est = calibrate(&cap, w, h)?;
    // Reprojection check on the board corners and the screen corners.
    let (fw, fh) = ((w - 1) as f64, (h - 1) as f64);
    let mut csv = String::from("x,y,expected_u,expected_v,estimated_u,estimated_v,error_px\n");
    for p in [[0.0, 0.0], [fw, 0.0], [fw, fh], [0.0, fh], [0.5 * fw, 0.5 * fh]] {
        let (a, b) = (cap.homography.apply(p), h_est.apply(p));
        let err = (a[0] - b[0]).hypot(a[1] - b[1]);
        writeln!(csv, "{},{},{},{},{},{},{err:e}", p[0], p[1], a[0], a[1], b[0], b[1]).unwrap();
    }
    let board = RealGrid::from_fn(w, h, |x, y| ((x * 8 / w + y * 8 / h) % 2) as f64);
    let mut out = Outputs::new(cfg.out_dir())?;
    out.write("homography.txt", io::format_homography(&h_est).as_bytes())?;
    out.write("calibration.csv", csv.as_bytes())?;
    out.pgm("calibration_board_raw.pgm", &capture(&board, &cap)?)?;
    out.finish("calib", cfg)
}

pub fn metrics(cfg: &RunConfig) -> Result<PathBuf> {
    let harness = cfg.harness()?;
    let rows = two_circle_harness(&cfg.array()?, &harness)?;
    let mut out = Outputs::new(cfg.out_dir())?;
    let mut csv = format!(
        "# mask_threshold={} circle_radius_mm={} plane_extent_mm={} plane_px={} steps={} slope_fraction={}\n\
         separation_mm,frames,weber_before,weber_after,distinguishable\n",
        cfg.metrics.mask_threshold,
        cfg.metrics.circle_radius_mm,
        cfg.metrics.harness_extent_mm,
        cfg.metrics.harness_resolution_px,
        cfg.metrics.harness_steps,
        cfg.metrics.harness_slope_fraction
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.separation_mm,
            r.frames,
            r.weber_before,
            fmt_opt(r.weber_after),
            if r.distinguishable { "yes" } else { "no" }
        )
        .unwrap();
        out.pgm(&format!("scenes/sep_{:+.1}mm_f{:02}.pgm", r.separation_mm, r.frames), &r.caustic)?;
    }
    out.write("harness.csv", csv.as_bytes())?;
    // Contrast of the main scene, when a plan and prepared target exist.
    if cfg.plan_path().is_file() && cfg.prepared_path().is_file() {
        let target = load_target(cfg)?;
        let plan = load_plan(&cfg.plan_path())?;
        let model = HologramModel::new(&cfg.array()?, &cfg.plane()?)?;
        let plant = cfg.plant();
        let caustic = render_caustics(&deform_surface(&model.time_avg_amplitude(&plan)?, &plant)?, &plant)?;
        let mask = make_target_mask(&target, cfg.metrics.mask_threshold)?;
        let r = weber_contrast(&caustic.values, &mask)?;
        let text = format!(
            "# mask_threshold={}\ntarget_mean,background_mean,weber,abs_weber\n{},{},{},{}\n",
            cfg.metrics.mask_threshold,
            r.target_mean,
            r.background_mean,
            r.contrast,
            r.magnitude()
        );
        out.write("contrast.csv", text.as_bytes())?;
    }
    out.finish("metrics", cfg)
}
