//! Run configuration: one TOML document, every physical quantity carrying
//! its unit in the key name. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sonocaustics::metrics::{HarnessConfig, DEFAULT_MASK_THRESHOLD};
use sonocaustics::{
    AdamConfig, CaptureConfig, OptimConfig, PlantParams, SamplingPlane, TransducerArray, TwinConfig,
};

use crate::error::CliError;

const MM: f64 = 1e-3;

fn adam(step_size: f64, beta1: f64, beta2: f64, epsilon: f64) -> AdamConfig {
    AdamConfig {
        step_size,
        beta1,
        beta2,
        epsilon,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub columns: usize,
    pub rows: usize,
    pub pitch_mm: f64,
    pub radius_mm: f64,
    pub frequency_hz: f64,
    pub sound_speed_m_per_s: f64,
    /// Pressure amplitude at 1 m on axis.
    pub ref_pressure_pa_m: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            columns: 16,
            rows: 16,
            pitch_mm: TransducerArray::DEFAULT_PITCH / MM,
            radius_mm: TransducerArray::DEFAULT_RADIUS / MM,
            frequency_hz: TransducerArray::DEFAULT_FREQUENCY,
            sound_speed_m_per_s: TransducerArray::DEFAULT_SOUND_SPEED,
            ref_pressure_pa_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneConfig {
    pub distance_mm: f64,
    pub extent_mm: f64,
    pub resolution_px: usize,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        Self {
            distance_mm: SamplingPlane::DEFAULT_DISTANCE / MM,
            extent_mm: SamplingPlane::DEFAULT_EXTENT / MM,
            resolution_px: SamplingPlane::DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub frames: usize,
    pub seed: u64,
    pub step_size_rad: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimConfig::default();
        Self {
            steps: o.steps,
            frames: 1,
            seed: o.seed,
            step_size_rad: o.adam.step_size,
            beta1: o.adam.beta1,
            beta2: o.adam.beta2,
            epsilon: o.adam.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Depression per unit of smoothed squared pressure.
    pub coupling_m_per_pa2: f64,
    pub smoothing_radius_mm: f64,
    pub refractive_index: f64,
    pub screen_distance_mm: f64,
    pub rays_per_cell: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let p = PlantParams::default();
        Self {
            coupling_m_per_pa2: p.coupling,
            smoothing_radius_mm: p.smoothing_radius / MM,
            refractive_index: p.refractive_index,
            screen_distance_mm: p.screen_distance / MM,
            rays_per_cell: p.rays_per_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Standard deviation of sensor noise, in units of full scale.
    pub noise_sigma: f64,
    /// Ambient light level, in units of full scale.
    pub background_offset: f64,
    pub seed: u64,
    /// Also simulate capture and rectification in `render`.
    pub capture_in_render: bool,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            noise_sigma: CaptureConfig::DEFAULT_NOISE,
            background_offset: CaptureConfig::DEFAULT_OFFSET,
            seed: 0,
            capture_in_render: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinSection {
    pub steps: usize,
    pub snapshot_every: usize,
    pub step_size_rad: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TwinSection {
    fn default() -> Self {
        let t = TwinConfig::default();
        Self {
            steps: t.steps,
            snapshot_every: t.snapshot_every,
            step_size_rad: t.adam.step_size,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub mask_threshold: f64,
    pub circle_radius_mm: f64,
    pub separations_mm: Vec<f64>,
    pub frame_counts: Vec<usize>,
    /// The harness runs on its own, smaller plane centered like the main one.
    pub harness_extent_mm: f64,
    pub harness_resolution_px: usize,
    pub harness_steps: usize,
    /// Drive each scene to this fraction of the critical surface slope;
    /// 0 renders every scene with the plant coupling as configured.
    pub harness_slope_fraction: f64,
    pub harness_twin: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let h = HarnessConfig::default();
        Self {
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            circle_radius_mm: h.radius / MM,
            separations_mm: h.separations.iter().map(|s| s / MM).collect(),
            frame_counts: h.frame_counts,
            harness_extent_mm: h.plane.extent[0] / MM,
            harness_resolution_px: h.plane.resolution[0],
            harness_steps: h.optim.steps,
            harness_slope_fraction: h.slope_fraction.unwrap_or(0.0),
            harness_twin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Source picture for `prepare` (P5 graymap or PNG).
    pub target: Option<PathBuf>,
    /// Prepared target; defaults to `target.scf` in the output directory.
    pub prepared: Option<PathBuf>,
    /// Phase plan; defaults to `plan.txt` in the output directory.
    pub plan: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Accept color PNGs by converting them to luma.
    pub convert_color: bool,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            target: None,
            prepared: None,
            plan: None,
            out_dir: PathBuf::from("out"),
            convert_color: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub levels: u32,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            levels: sonocaustics::hologram::DEFAULT_PHASE_LEVELS,
        }
    }
}

/// Ordered animation targets, each optimized with `frames` superimposed
/// phase frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnimationSpec {
    pub targets: Vec<PathBuf>,
    pub frames: usize,
    pub twin: bool,
}

impl Default for AnimationSpec {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            frames: 9,
            twin: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub array: ArrayConfig,
    pub plane: PlaneConfig,
    pub optimizer: OptimizerConfig,
    pub plant: PlantConfig,
    pub camera: CameraConfig,
    pub twin: TwinSection,
    pub metrics: MetricsConfig,
    pub paths: PathsConfig,
    pub export: ExportConfig,
    pub animation: AnimationSpec,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub frames: Option<usize>,
    pub steps: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for opt in [&mut p.target, &mut p.prepared, &mut p.plan] {
            if let Some(path) = opt {
                fix(path);
            }
        }
        fix(&mut p.out_dir);
        self.animation.targets.iter_mut().for_each(fix);
    }

    /// Applies overrides for `command`: `--steps` sets the step count of the
    /// stage that command runs.
    pub fn apply(&mut self, command: &str, o: Overrides) {
        if let Some(seed) = o.seed {
            self.optimizer.seed = seed;
            self.camera.seed = seed;
        }
        if let Some(frames) = o.frames {
            self.optimizer.frames = frames;
            self.animation.frames = frames;
        }
        if let Some(steps) = o.steps {
            match command {
                "twin" => self.twin.steps = steps,
                "metrics" => self.metrics.harness_steps = steps,
                _ => self.optimizer.steps = steps,
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Validation(m.to_string()));
        if self.optimizer.frames == 0 || self.animation.frames == 0 {
            return bad("frame count must be at least 1");
        }
        if self.export.levels < 2 {
            return bad("export levels must be at least 2");
        }
        if !(self.metrics.mask_threshold > 0.0 && self.metrics.mask_threshold < 1.0) {
            return bad("mask threshold must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.metrics.harness_slope_fraction) {
            return bad("harness slope fraction must lie in [0, 1)");
        }
        if self.metrics.frame_counts.iter().any(|&f| f == 0) {
            return bad("harness frame counts must be at least 1");
        }
        self.array()?;
        self.plane()?;
        self.optim().validate()?;
        self.plant().validate()?;
        self.capture()?.validate()?;
        self.harness()?;
        Ok(())
    }

    pub fn array(&self) -> Result<TransducerArray, CliError> {
        let a = &self.array;
        let grid = TransducerArray::grid(a.columns, a.rows, a.pitch_mm * MM)?;
        Ok(TransducerArray::new(
            grid.positions().to_vec(),
            a.radius_mm * MM,
            a.frequency_hz,
            a.sound_speed_m_per_s,
            a.ref_pressure_pa_m,
        )?)
    }

    pub fn plane(&self) -> Result<SamplingPlane, CliError> {
        let p = &self.plane;
        Ok(SamplingPlane::square(p.distance_mm * MM, p.extent_mm * MM, p.resolution_px)?)
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            steps: self.optimizer.steps,
            adam: adam(self.optimizer.step_size_rad, self.optimizer.beta1, self.optimizer.beta2, self.optimizer.epsilon),
            seed: self.optimizer.seed,
        }
    }

    pub fn plant(&self) -> PlantParams {
        let p = &self.plant;
        PlantParams {
            coupling: p.coupling_m_per_pa2,
            smoothing_radius: p.smoothing_radius_mm * MM,
            refractive_index: p.refractive_index,
            screen_distance: p.screen_distance_mm * MM,
            rays_per_cell: p.rays_per_cell,
        }
    }

    pub fn capture(&self) -> Result<CaptureConfig, CliError> {
        let r = self.plane.resolution_px;
        let mut c = CaptureConfig::oblique(r, r)?;
        c.noise_sigma = self.camera.noise_sigma;
        c.background_offset = self.camera.background_offset;
        c.seed = self.camera.seed;
        Ok(c)
    }

    pub fn twin(&self) -> Result<TwinConfig, CliError> {
        Ok(TwinConfig {
            steps: self.twin.steps,
            adam: adam(self.twin.step_size_rad, self.twin.beta1, self.twin.beta2, self.twin.epsilon),
            seed: self.camera.seed,
            plant: self.plant(),
            capture: Some(self.capture()?),
            snapshot_every: self.twin.snapshot_every,
            mask_threshold: self.metrics.mask_threshold,
        })
    }

    pub fn harness(&self) -> Result<HarnessConfig, CliError> {
        let m = &self.metrics;
        let r = m.harness_resolution_px;
        let twin = if m.harness_twin {
            let mut capture = self.capture()?;
            let oblique = CaptureConfig::oblique(r, r)?;
            capture.homography = oblique.homography;
            capture.raw_width = oblique.raw_width;
            capture.raw_height = oblique.raw_height;
            Some(TwinConfig {
                capture: Some(capture),
                snapshot_every: 0,
                ..self.twin()?
            })
        } else {
            None
        };
        Ok(HarnessConfig {
            plane: SamplingPlane::square(self.plane.distance_mm * MM, m.harness_extent_mm * MM, r)?,
            optim: OptimConfig {
                steps: m.harness_steps,
                ..self.optim()
            },
            plant: self.plant(),
            slope_fraction: (m.harness_slope_fraction > 0.0).then_some(m.harness_slope_fraction),
            radius: m.circle_radius_mm * MM,
            separations: m.separations_mm.iter().map(|s| s * MM).collect(),
            frame_counts: m.frame_counts.clone(),
            mask_threshold: m.mask_threshold,
            twin,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.paths.out_dir
    }

    pub fn prepared_path(&self) -> PathBuf {
        self.paths.prepared.clone().unwrap_or_else(|| self.out_dir().join("target.scf"))
    }

    pub fn plan_path(&self) -> PathBuf {
        self.paths.plan.clone().unwrap_or_else(|| self.out_dir().join("plan.txt"))
    }
}
