//! Phase optimization for phased-array ultrasound that shapes a liquid
//! surface into caustic images, together with the simulated liquid plant,
//! virtual camera, closed-loop digital twin and evaluation metrics.

pub mod adam;
pub mod bessel;
pub mod camera;
pub mod error;
pub mod field;
pub mod grid;
pub mod hologram;
pub mod io;
pub mod metrics;
pub mod plant;
pub mod target;
pub mod twin;

pub use adam::{Adam, AdamConfig};
pub use camera::{CaptureConfig, Homography};
pub use error::{Error, Result};
pub use field::{
    amplitude, pressure_field, AmplitudeField, ComplexField, Propagator, SamplingPlane,
    TransducerArray,
};
pub use grid::{Grid, RealGrid};
pub use hologram::{HologramModel, OptimConfig, OptimTrace, PhasePlan};
pub use plant::{CausticImage, HeightField, PlantParams};
pub use target::TargetImage;
pub use metrics::{ContrastReport, HarnessConfig, HarnessRow, ResolutionScene};
pub use twin::{run_twin, TwinConfig, TwinTrace};
