//! Numeric optimization followed by the closed-loop twin on the default
//! checkerboard, printing contrast before and after.
//!
//! Usage: `cargo run --release --example twin_checkerboard [frames] [twin_steps]`

use sonocaustics::*;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer argument"));
    let frames = args.next().unwrap_or(1);
    let steps = args.next().unwrap_or(TwinConfig::DEFAULT_STEPS);
    let plane = SamplingPlane::default();
    let target = TargetImage::default_checkerboard(&plane);
    let model = HologramModel::new(&TransducerArray::default(), &plane)?;
    let numeric = model.optimize(&target, frames, &OptimConfig::default())?;
    println!("numeric loss {:.1} -> {:.1}", numeric.losses[0], numeric.final_loss);
    let cfg = TwinConfig { steps, ..Default::default() };
    let trace = run_twin(&model, &target, numeric.plan, &cfg)?;
    for (i, l) in trace.losses.iter().enumerate().step_by((steps / 10).max(1)) {
        println!("step {i:>4} L_dt {l:.5} weber {:?}", trace.weber[i]);
    }
    println!("weber before {:?} after {:?}", trace.weber_before, trace.weber_after);
    Ok(())
}
