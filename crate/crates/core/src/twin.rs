//! Closed-loop refinement: the measured caustic replaces the numerical
//! prediction in the loss value while gradients flow through the numerical
//! model only.

use crate::adam::{Adam, AdamConfig};
use crate::camera::{calibrate, capture, capture_background, rectify, CaptureConfig, Homography};
use crate::error::{Error, Result};
use crate::field::AmplitudeField;
use crate::grid::RealGrid;
use crate::hologram::{HologramModel, MinMax, PhasePlan};
use crate::metrics::{make_target_mask, weber_contrast, Mask, DEFAULT_MASK_THRESHOLD};
use crate::plant::{deform_surface, render_caustics, PlantParams};
use crate::target::TargetImage;

fn dot_and_norms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (ab, aa.sqrt(), bb.sqrt())
}

/// `1 - <a, b> / (|a| |b|)` over the flattened grids.
pub fn cosine_loss(p_dt: &RealGrid, p_target: &RealGrid) -> Result<f64> {
    p_dt.ensure_same_dims(p_target)?;
    let (ab, na, nb) = dot_and_norms(p_dt.as_slice(), p_target.as_slice());
    if na == 0.0 {
        return Err(Error::ZeroNorm("prediction"));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm("target"));
    }
    Ok(1.0 - ab / (na * nb))
}

/// Cosine loss and its gradient with respect to `p_dt`. A zero prediction
/// scores 1 with a zero gradient.
pub fn cosine_loss_grad(p_dt: &RealGrid, p_target: &RealGrid) -> Result<(f64, Vec<f64>)> {
    p_dt.ensure_same_dims(p_target)?;
    let (a, t) = (p_dt.as_slice(), p_target.as_slice());
    let (ab, na, nb) = dot_and_norms(a, t);
    if nb == 0.0 {
        return Err(Error::ZeroNorm("target"));
    }
    if na == 0.0 {
        return Ok((1.0, vec![0.0; a.len()]));
    }
    let cos = ab / (na * nb);
    let inv = 1.0 / (na * nb);
    let k = cos / (na * na);
    let grad = a.iter().zip(t).map(|(x, y)| -(y * inv - x * k)).collect();
    Ok((1.0 - cos, grad))
}

/// `P_num + stop_gradient(C_img - P_num)`: the value is the measurement,
/// the derivative is the numerical model's.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pub value: RealGrid,
}

impl Composed {
    pub fn backward(&self, upstream: &[f64]) -> Vec<f64> {
        upstream.to_vec()
    }
}

pub fn compose_dt(p_num: &RealGrid, c_img: &RealGrid) -> Result<Composed> {
    p_num.ensure_same_dims(c_img)?;
    Ok(Composed { value: c_img.clone() })
}

/// One observation of the physical (here simulated) system.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Rectified camera image, shadows high.
    pub c_img: RealGrid,
    /// Clean rendered caustic, when the plant can provide it.
    pub caustic: Option<RealGrid>,
}

pub trait Plant {
    fn observe(&mut self, p_avg: &AmplitudeField, p_num: &RealGrid) -> Result<Observation>;
}

/// Liquid surface, ray renderer and virtual camera with a calibrated
/// homography. Each observation uses a fresh noise seed.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    params: PlantParams,
    capture: CaptureConfig,
    h_est: Homography,
    background: RealGrid,
    captures: u64,
}

impl SimulatedPlant {
    pub fn new(params: PlantParams, capture: CaptureConfig, width: usize, height: usize) -> Result<Self> {
        params.validate()?;
        capture.validate()?;
        let h_est = calibrate(&capture, width, height)?;
        let background = capture_background(width, height, &capture)?;
        Ok(Self {
            params,
            capture,
            h_est,
            background,
            captures: 0,
        })
    }

    pub fn captures(&self) -> u64 {
        self.captures
    }
}

impl Plant for SimulatedPlant {
    fn observe(&mut self, p_avg: &AmplitudeField, _p_num: &RealGrid) -> Result<Observation> {
        let caustic = render_caustics(&deform_surface(p_avg, &self.params)?, &self.params)?;
        // seed + 1 onwards so no frame shares noise with the background
        self.captures += 1;
        let cfg = self.capture.with_seed(self.capture.seed.wrapping_add(self.captures));
        let raw = capture(&caustic.values, &cfg)?;
        let (w, h) = caustic.values.dims();
        let c_img = rectify(&raw, &self.h_est, &self.background, w, h)?.values;
        Ok(Observation {
            c_img,
            caustic: Some(caustic.values),
        })
    }
}

/// Returns the numerical prediction unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPlant;

impl Plant for IdentityPlant {
    fn observe(&mut self, _p_avg: &AmplitudeField, p_num: &RealGrid) -> Result<Observation> {
        Ok(Observation {
            c_img: p_num.clone(),
            caustic: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    /// Camera noise seed.
    pub seed: u64,
    pub plant: PlantParams,
    /// Camera model; `None` uses the default oblique view for the plane size.
    pub capture: Option<CaptureConfig>,
    /// Keep `C_img` every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Target-region threshold for the contrast log.
    pub mask_threshold: f64,
}

impl TwinConfig {
    pub const DEFAULT_STEPS: usize = 300;
    pub const DEFAULT_SNAPSHOT_EVERY: usize = 50;
    /// The twin starts from a converged numeric plan, so it takes smaller
    /// steps than the numeric optimizer.
    pub const DEFAULT_STEP_SIZE: f64 = 0.01;
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            steps: Self::DEFAULT_STEPS,
            adam: AdamConfig {
                step_size: Self::DEFAULT_STEP_SIZE,
                ..AdamConfig::default()
            },
            seed: 0,
            plant: PlantParams::default(),
            capture: None,
            snapshot_every: Self::DEFAULT_SNAPSHOT_EVERY,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub loss: f64,
    /// Signed Weber contrast of the rendered caustic observed in this step.
    pub weber: Option<f64>,
    pub gradient: Vec<f64>,
    pub c_img: RealGrid,
}

#[derive(Debug, Clone)]
pub struct TwinTrace {
    pub losses: Vec<f64>,
    pub weber: Vec<Option<f64>>,
    /// Contrast of the initial plan and of the final plan.
    pub weber_before: Option<f64>,
    pub weber_after: Option<f64>,
    pub plan: PhasePlan,
    /// Observation of the final plan.
    pub c_img: RealGrid,
    pub snapshots: Vec<(usize, RealGrid)>,
}

/// Twin optimization state; owns its Adam moments, which start from zero.
pub struct DigitalTwin<'a, P: Plant> {
    model: &'a HologramModel,
    target: &'a TargetImage,
    mask: Option<Mask>,
    plant: P,
    adam: Adam,
    pub plan: PhasePlan,
}

impl<'a, P: Plant> DigitalTwin<'a, P> {
    pub fn new(model: &'a HologramModel, target: &'a TargetImage, plan: PhasePlan, adam: AdamConfig, plant: P) -> Result<Self> {
        let plane = model.plane();
        if !target.matches(plane) {
            return Err(Error::DimensionMismatch {
                expected: (plane.width(), plane.height()),
                got: (target.width(), target.height()),
            });
        }
        if plan.transducers() != model.transducers() {
            return Err(Error::PhaseCount {
                expected: model.transducers(),
                got: plan.transducers(),
            });
        }
        let mask = make_target_mask(target, DEFAULT_MASK_THRESHOLD).ok();
        let adam = Adam::new(adam, plan.as_slice().len());
        Ok(Self {
            model,
            target,
            mask,
            plant,
            adam,
            plan,
        })
    }

    /// Changes the target-region threshold used for the contrast log.
    pub fn with_mask_threshold(mut self, threshold: f64) -> Self {
        self.mask = make_target_mask(self.target, threshold).ok();
        self
    }

    pub fn plant(&self) -> &P {
        &self.plant
    }

    fn contrast(&self, obs: &Observation) -> Option<f64> {
        let (mask, img) = (self.mask.as_ref()?, obs.caustic.as_ref()?);
        weber_contrast(img, mask).ok().map(|r| r.contrast)
    }

    /// Observes the current plan and returns the loss, its phase gradient
    /// and the observation, without updating anything.
    pub fn evaluate(&mut self) -> Result<StepRecord> {
        let fwd = self.model.forward(&self.plan)?;
        let norm = MinMax::forward(&fwd.average);
        let p_avg = AmplitudeField::new(*self.model.plane(), fwd.average.clone())?;
        let obs = self.plant.observe(&p_avg, &norm.values)?;
        let composed = compose_dt(&norm.values, &obs.c_img)?;
        let (loss, upstream) = cosine_loss_grad(&composed.value, self.target.values())?;
        let grad_avg = norm.backward(&composed.backward(&upstream));
        let gradient = self.model.backward(&self.plan, &fwd, &grad_avg);
        Ok(StepRecord {
            loss,
            weber: self.contrast(&obs),
            gradient,
            c_img: obs.c_img,
        })
    }

    /// One capture, one loss evaluation, one Adam update.
    pub fn step(&mut self) -> Result<StepRecord> {
        let rec = self.evaluate()?;
        self.adam.step(self.plan.as_mut_slice(), &rec.gradient);
        Ok(rec)
    }

    pub fn run(mut self, steps: usize, snapshot_every: usize) -> Result<TwinTrace> {
        let mut losses = Vec::with_capacity(steps);
        let mut weber = Vec::with_capacity(steps);
        let mut snapshots = Vec::new();
        for i in 0..steps {
            let rec = self.step()?;
            if !rec.loss.is_finite() {
                return Err(Error::Degenerate(format!("twin loss is not finite at step {i}")));
            }
            losses.push(rec.loss);
            weber.push(rec.weber);
            if snapshot_every > 0 && i % snapshot_every == 0 {
                snapshots.push((i, rec.c_img));
            }
        }
        let last = self.evaluate()?;
        let weber_before = if steps == 0 { last.weber } else { weber[0] };
        Ok(TwinTrace {
            losses,
            weber,
            weber_before,
            weber_after: last.weber,
            plan: self.plan,
            c_img: last.c_img,
            snapshots,
        })
    }
}

/// Runs the twin with the simulated plant starting from `initial`.
pub fn run_twin(model: &HologramModel, target: &TargetImage, initial: PhasePlan, cfg: &TwinConfig) -> Result<TwinTrace> {
    let plane = model.plane();
    let capture = match cfg.capture {
        Some(c) => c,
        None => CaptureConfig::oblique(plane.width(), plane.height())?,
    }
    .with_seed(cfg.seed);
    let plant = SimulatedPlant::new(cfg.plant, capture, plane.width(), plane.height())?;
    DigitalTwin::new(model, target, initial, cfg.adam, plant)?
        .with_mask_threshold(cfg.mask_threshold)
        .run(cfg.steps, cfg.snapshot_every)
}
