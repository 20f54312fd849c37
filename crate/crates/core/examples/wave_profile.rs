//! A traveling wave at a supercritical speed by monotone iteration from the
//! super-solution, with its residual and sandwich margins.
//!
//!     cargo run --release --example wave_profile -- [c]

use agewave::model::{ModelSpec, SpaceGrid};
use agewave::spectral::DispersionReport;
use agewave::waves::{lipschitz_modulus_check, traveling_wave, IterationOptions};

fn main() -> agewave::Result<()> {
    let c: f64 = std::env::args().nth(1).map_or(Ok(2.0), |s| s.parse()).expect("c must be a number");
    let spec = ModelSpec::reference(41, 1.0)?;
    let report = DispersionReport::compute(&spec)?;
    let xi = SpaceGrid::new(30.0, 601)?;

    let (pair, w) = traveling_wave(&spec, &report, c, &xi, &IterationOptions::default())?;
    println!("c = {c}, c* = {:.6}", report.c_star);
    println!("discrete decay rate {:.6} (minimizer of Lambda {:.6})", pair.lambda, pair.continuous_lambda);
    println!("iterations {}, residual {:.3e}", w.iterations, w.residual);
    println!("below super {:.2e}, above sub {:.2e}", w.sandwich.below_upper, w.sandwich.above_lower);
    let (left, right) = w.edge_errors();
    println!("edge errors {left:.2e} {right:.2e}");
    let lip = lipschitz_modulus_check(&w)?;
    println!("fitted Lipschitz modulus {:.4}", lip.m_fit);

    let last = spec.n_ages() - 1;
    for x in [-10.0, -5.0, 0.0, 5.0, 10.0] {
        println!("w(0, {x:>5}) = {:.6}   w(a_max, {x:>5}) = {:.6}", w.wave_frame_value(0, x), w.wave_frame_value(last, x));
    }
    Ok(())
}
