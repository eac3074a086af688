//! Phase-plan optimization against a target image.
//!
//! The objective is the L1 distance between the min-max normalized target
//! and the min-max normalized (time-averaged) pressure amplitude. Gradients
//! are obtained by reverse-mode differentiation written out by hand: the
//! normalization routes the extremum terms to the first arg-min / arg-max,
//! the frame average spreads uniformly over frames, and the modulus maps
//! back to phases through the adjoint of the transfer matrix.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::field::{pressure_field, AmplitudeField, FrameFields, Propagator, SamplingPlane, TransducerArray};
use crate::grid::RealGrid;
use crate::target::TargetImage;

/// `frames × transducers` phase delays in radians, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    frames: usize,
    transducers: usize,
    phases: Vec<f64>,
}

impl PhasePlan {
    pub fn new(frames: usize, transducers: usize, phases: Vec<f64>) -> Result<Self> {
        if frames == 0 || transducers == 0 {
            return Err(Error::invalid("phase plan needs at least one frame and transducer"));
        }
        if phases.len() != frames * transducers {
            return Err(Error::PhaseCount {
                expected: frames * transducers,
                got: phases.len(),
            });
        }
        Ok(Self {
            frames,
            transducers,
            phases,
        })
    }

    pub fn zeros(frames: usize, transducers: usize) -> Result<Self> {
        Self::new(frames, transducers, vec![0.0; frames * transducers])
    }

    /// Phases drawn uniformly from `[0, 2π)`.
    pub fn random(frames: usize, transducers: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = (0..frames * transducers)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self::new(frames, transducers, phases)
    }

    /// Every frame a copy of `phases`.
    pub fn repeated(phases: &[f64], frames: usize) -> Result<Self> {
        Self::new(frames, phases.len(), phases.repeat(frames))
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn transducers(&self) -> usize {
        self.transducers
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        &self.phases[f * self.transducers..(f + 1) * self.transducers]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        &mut self.phases[f * self.transducers..(f + 1) * self.transducers]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phases
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.phases
    }

    /// Copy with every phase wrapped into `[0, 2π)`.
    pub fn wrapped(&self) -> Self {
        Self {
            frames: self.frames,
            transducers: self.transducers,
            phases: self
                .phases
                .iter()
                .map(|p| {
                    let w = p.rem_euclid(TAU);
                    // rem_euclid can round up to exactly TAU for tiny negatives
                    if w >= TAU {
                        0.0
                    } else {
                        w
                    }
                })
                .collect(),
        }
    }
}

/// Phase plan quantized to `levels` steps per period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscretePlan {
    pub frames: usize,
    pub transducers: usize,
    pub levels: u32,
    pub values: Vec<u32>,
}

pub const DEFAULT_PHASE_LEVELS: u32 = 32;

pub fn discretize_phases(plan: &PhasePlan, levels: u32) -> Result<DiscretePlan> {
    if levels < 2 {
        return Err(Error::invalid("phase discretization needs at least 2 levels"));
    }
    let step = TAU / levels as f64;
    let values = plan
        .phases
        .iter()
        .map(|p| ((p / step).round() as i64).rem_euclid(levels as i64) as u32)
        .collect();
    Ok(DiscretePlan {
        frames: plan.frames,
        transducers: plan.transducers,
        levels,
        values,
    })
}

/// Forward record of a min-max normalization, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MinMax {
    pub values: RealGrid,
    min_index: usize,
    max_index: usize,
    range: f64,
}

impl MinMax {
    /// `(x - min) / (max - min)`; a constant input maps to all zeros.
    pub fn forward(input: &RealGrid) -> Self {
        let (min, min_index, max, max_index) = input.extrema();
        let range = max - min;
        let values = if range > 0.0 {
            input.map(|v| (v - min) / range)
        } else {
            RealGrid::zeros(input.width(), input.height())
        };
        Self {
            values,
            min_index,
            max_index,
            range,
        }
    }

    /// Gradient with respect to the input given the gradient with respect
    /// to the normalized output.
    pub fn backward(&self, upstream: &[f64]) -> Vec<f64> {
        let n = self.values.len();
        if !(self.range > 0.0) {
            return vec![0.0; n];
        }
        let inv = 1.0 / self.range;
        let mut grad: Vec<f64> = upstream.iter().map(|g| g * inv).collect();
        let mut to_min = 0.0;
        let mut to_max = 0.0;
        for (g, v) in upstream.iter().zip(self.values.as_slice()) {
            to_min += g * (v - 1.0);
            to_max -= g * v;
        }
        grad[self.min_index] += to_min * inv;
        grad[self.max_index] += to_max * inv;
        grad
    }
}

pub fn normalize_minmax(field: &RealGrid) -> RealGrid {
    MinMax::forward(field).values
}

/// `Σ |t - p|` and its gradient with respect to `p`.
fn l1_with_grad(target: &RealGrid, pred: &RealGrid) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grad = target
        .as_slice()
        .iter()
        .zip(pred.as_slice())
        .map(|(t, p)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}

/// L1 distance between the normalized target and normalized prediction.
pub fn loss_num(target: &TargetImage, pred: &AmplitudeField) -> Result<f64> {
    target.values().ensure_same_dims(&pred.values)?;
    let t = normalize_minmax(target.values());
    let p = normalize_minmax(&pred.values);
    Ok(l1_with_grad(&t, &p).0)
}

/// Running mean that reproduces its input exactly when all inputs agree.
#[inline]
fn mean_update(mean: f64, value: f64, count: usize) -> f64 {
    mean + (value - mean) / count as f64
}

/// Mean over frames of the per-frame amplitude.
pub fn time_avg_amplitude(
    array: &TransducerArray,
    plan: &PhasePlan,
    plane: &SamplingPlane,
) -> Result<AmplitudeField> {
    if plan.transducers != array.len() {
        return Err(Error::PhaseCount {
            expected: array.len(),
            got: plan.transducers,
        });
    }
    let mut avg = RealGrid::zeros(plane.width(), plane.height());
    for f in 0..plan.frames {
        let field = pressure_field(array, plan.frame(f), plane)?;
        for (a, p) in avg.as_mut_slice().iter_mut().zip(field.values.as_slice()) {
            *a = mean_update(*a, p.norm(), f + 1);
        }
    }
    AmplitudeField::new(*plane, avg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.step_size > 0.0) {
            return Err(Error::invalid("adam step size must be positive"));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::invalid("adam decay rates must lie in [0, 1)"));
        }
        if !(a.epsilon > 0.0) {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    /// Loss before each update; `losses.len() == steps`.
    pub losses: Vec<f64>,
    /// Loss of the returned plan.
    pub final_loss: f64,
    pub plan: PhasePlan,
}

/// Forward pass of the multi-frame model.
#[derive(Debug, Clone)]
pub struct Forward {
    pub fields: FrameFields,
    pub average: RealGrid,
}

/// Transfer matrix plus the forward/backward passes used by both the
/// numeric optimizer and the digital twin.
#[derive(Debug, Clone)]
pub struct HologramModel {
    propagator: Propagator,
}

impl HologramModel {
    pub fn new(array: &TransducerArray, plane: &SamplingPlane) -> Result<Self> {
        Ok(Self {
            propagator: Propagator::new(array, plane)?,
        })
    }

    pub fn plane(&self) -> &SamplingPlane {
        self.propagator.plane()
    }

    pub fn transducers(&self) -> usize {
        self.propagator.transducers()
    }

    fn check_plan(&self, plan: &PhasePlan) -> Result<()> {
        if plan.transducers != self.transducers() {
            return Err(Error::PhaseCount {
                expected: self.transducers(),
                got: plan.transducers,
            });
        }
        Ok(())
    }

    fn check_target(&self, target: &TargetImage) -> Result<()> {
        let plane = self.plane();
        if !target.matches(plane) {
            return Err(Error::DimensionMismatch {
                expected: (plane.width(), plane.height()),
                got: (target.width(), target.height()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, plan: &PhasePlan) -> Result<Forward> {
        self.check_plan(plan)?;
        let fields = self.propagator.fields(&plan.phases, plan.frames)?;
        let plane = self.plane();
        let mut average = RealGrid::zeros(plane.width(), plane.height());
        for f in 0..fields.frames {
            for (a, p) in average.as_mut_slice().iter_mut().zip(fields.frame(f)) {
                *a = mean_update(*a, p.norm(), f + 1);
            }
        }
        Ok(Forward { fields, average })
    }

    pub fn time_avg_amplitude(&self, plan: &PhasePlan) -> Result<AmplitudeField> {
        AmplitudeField::new(*self.plane(), self.forward(plan)?.average)
    }

    /// Phase gradient given the gradient with respect to the time-averaged
    /// amplitude. Samples with zero pressure contribute nothing.
    pub fn backward(&self, plan: &PhasePlan, fwd: &Forward, grad_average: &[f64]) -> Vec<f64> {
        let frames = plan.frames;
        let samples = self.propagator.samples();
        let scale = 1.0 / frames as f64;
        let mut weights = Vec::with_capacity(frames * samples);
        for f in 0..frames {
            for (p, g) in fwd.fields.frame(f).iter().zip(grad_average) {
                let r = p.norm();
                weights.push(if r > 0.0 && *g != 0.0 {
                    p.conj() * (g * scale / r)
                } else {
                    Complex64::new(0.0, 0.0)
                });
            }
        }
        let z = self.propagator.adjoint(&weights, frames);
        z.iter()
            .zip(&plan.phases)
            .map(|(z, phi)| {
                let (s, c) = phi.sin_cos();
                -(c * z.im + s * z.re)
            })
            .collect()
    }

    pub fn loss(&self, plan: &PhasePlan, target: &TargetImage) -> Result<f64> {
        self.check_target(target)?;
        let fwd = self.forward(plan)?;
        let t = normalize_minmax(target.values());
        Ok(l1_with_grad(&t, &MinMax::forward(&fwd.average).values).0)
    }

    pub fn loss_and_grad(&self, plan: &PhasePlan, target: &TargetImage) -> Result<(f64, Vec<f64>)> {
        self.check_target(target)?;
        let t = normalize_minmax(target.values());
        self.loss_and_grad_normalized(plan, &t)
    }

    fn loss_and_grad_normalized(&self, plan: &PhasePlan, target: &RealGrid) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward(plan)?;
        let norm = MinMax::forward(&fwd.average);
        let (loss, grad_norm) = l1_with_grad(target, &norm.values);
        let grad_avg = norm.backward(&grad_norm);
        Ok((loss, self.backward(plan, &fwd, &grad_avg)))
    }

    /// Runs `config.steps` Adam updates from a seeded random plan.
    pub fn optimize(&self, target: &TargetImage, frames: usize, config: &OptimConfig) -> Result<OptimTrace> {
        let plan = PhasePlan::random(frames, self.transducers(), config.seed)?;
        self.optimize_from(plan, target, config)
    }

    pub fn optimize_from(&self, mut plan: PhasePlan, target: &TargetImage, config: &OptimConfig) -> Result<OptimTrace> {
        config.validate()?;
        self.check_target(target)?;
        self.check_plan(&plan)?;
        let t = normalize_minmax(target.values());
        let mut adam = Adam::new(config.adam, plan.phases.len());
        let mut losses = Vec::with_capacity(config.steps);
        for _ in 0..config.steps {
            let (loss, grad) = self.loss_and_grad_normalized(&plan, &t)?;
            losses.push(loss);
            adam.step(&mut plan.phases, &grad);
        }
        let final_loss = self.loss(&plan, target)?;
        Ok(OptimTrace {
            losses,
            final_loss,
            plan,
        })
    }
}

pub fn grad_loss(
    array: &TransducerArray,
    plan: &PhasePlan,
    plane: &SamplingPlane,
    target: &TargetImage,
) -> Result<Vec<f64>> {
    Ok(HologramModel::new(array, plane)?.loss_and_grad(plan, target)?.1)
}

pub fn optimize(
    array: &TransducerArray,
    plane: &SamplingPlane,
    target: &TargetImage,
    frames: usize,
    config: &OptimConfig,
) -> Result<OptimTrace> {
    HologramModel::new(array, plane)?.optimize(target, frames, config)
}
