//! Filter-only round trip (decimate then interpolate, no quantization):
//! EVM floor on the occupied subcarriers for a few FIR designs.

use cpri_compress::multirate::{decimate, interpolate, ResamplerSpec};
use cpri_compress::signal::{generate_frame, EvmAccumulator, FrameSpec, Scenario};

fn floor_db(scenario: Scenario, rs: &ResamplerSpec, frames: u64) -> cpri_compress::Result<f64> {
    let spec = FrameSpec::default_for(scenario);
    let mut acc = EvmAccumulator::default();
    for i in 0..frames {
        let frame = generate_frame(&spec, None, 7, i)?;
        let y = interpolate(&decimate(&frame.samples, rs)?, rs)?;
        acc.add_occupied(&spec.occupied_spectrum(&frame.samples)?, &spec.occupied_spectrum(&y)?)?;
    }
    Ok(acc.finish()?.db)
}

fn main() -> cpri_compress::Result<()> {
    let designs: Vec<(usize, f64)> = std::env::args()
        .nth(1)
        .map(|_| vec![(161, 8.0)])
        .unwrap_or_else(|| vec![(161, 8.0), (241, 8.0), (321, 8.0), (321, 10.0), (481, 10.0)]);
    println!("taps  beta  downlink_db  uplink_db");
    for (taps, beta) in designs {
        let rs = ResamplerSpec::new(5, 8, taps, beta)?;
        let dl = floor_db(Scenario::Downlink, &rs, 50)?;
        let ul = floor_db(Scenario::Uplink, &rs, 50)?;
        println!("{taps:>4}  {beta:>4.1}  {dl:>11.2}  {ul:>9.2}");
    }
    Ok(())
}
