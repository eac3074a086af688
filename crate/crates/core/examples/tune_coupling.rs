//! Picks the surface coupling for the default checkerboard scene.
//!
//! Optimizes the default checkerboard with the default numeric settings,
//! then scales the coupling so the steepest surface slope is a fixed
//! fraction of the slope at which rays would be totally internally
//! reflected. Prints the contrast of the rendered caustic over a range of
//! couplings for reference.
//!
//! Usage: `cargo run --release --example tune_coupling [steps]`

use sonocaustics::metrics::{make_target_mask, weber_contrast, DEFAULT_MASK_THRESHOLD};
use sonocaustics::plant::{coupling_for_slope, deform_surface, peak_slope, render_caustics, DEFAULT_SLOPE_FRACTION};
use sonocaustics::*;

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).map_or(Ok(1000), |s| s.parse()).expect("steps must be an integer");
    let array = TransducerArray::default();
    let plane = SamplingPlane::default();
    let target = TargetImage::default_checkerboard(&plane);
    let model = HologramModel::new(&array, &plane)?;
    let trace = model.optimize(&target, 1, &OptimConfig { steps, ..Default::default() })?;
    let p_avg = model.time_avg_amplitude(&trace.plan)?;
    let mask = make_target_mask(&target, DEFAULT_MASK_THRESHOLD)?;

    let tuned = coupling_for_slope(&p_avg, &PlantParams::default(), DEFAULT_SLOPE_FRACTION)?;
    println!("loss {:.1} -> {:.1}", trace.losses[0], trace.final_loss);
    println!("coupling for {:.0}% of critical slope: {tuned:.3e}", DEFAULT_SLOPE_FRACTION * 100.0);
    println!("{:>10} {:>8} {:>9}", "coupling", "slope", "|weber|");
    for f in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let params = PlantParams {
            coupling: tuned * f,
            ..PlantParams::default()
        };
        let h = deform_surface(&p_avg, &params)?;
        let img = render_caustics(&h, &params)?;
        let c = weber_contrast(&img.values, &mask)?;
        println!("{:>10.3e} {:>8.4} {:>9.4}", params.coupling, peak_slope(&h)?, c.magnitude());
    }
    Ok(())
}
