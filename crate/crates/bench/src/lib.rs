//! Shared fixtures for the benchmarks.

use sonocaustics::{HologramModel, PhasePlan, Result, SamplingPlane, TargetImage, TransducerArray};

/// Default 16x16 array over a square plane of `resolution` samples.
pub fn scene(resolution: usize) -> Result<(TransducerArray, SamplingPlane, HologramModel, TargetImage)> {
    let array = TransducerArray::default();
    let plane = SamplingPlane::square(SamplingPlane::DEFAULT_DISTANCE, SamplingPlane::DEFAULT_EXTENT, resolution)?;
    let model = HologramModel::new(&array, &plane)?;
    let target = TargetImage::default_checkerboard(&plane);
    Ok((array, plane, model, target))
}

pub fn plan(frames: usize, transducers: usize) -> PhasePlan {
    PhasePlan::random(frames, transducers, 0).expect("non-empty plan")
}
