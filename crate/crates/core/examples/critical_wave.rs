//! Normalized waves at speeds decreasing to c*, and how fast they settle.
//!
//! Close to c* the iteration slows down, so this runs on a coarse grid with a
//! loose tolerance.

use agewave::model::{ModelSpec, SpaceGrid};
use agewave::spectral::DispersionReport;
use agewave::waves::{critical_wave, IterationOptions};

fn main() -> agewave::Result<()> {
    let spec = ModelSpec::reference(21, 1.0)?;
    let report = DispersionReport::compute(&spec)?;
    let xi = SpaceGrid::new(30.0, 301)?;
    let opts = IterationOptions { tol: 1e-6, max_iter: 20_000, ..Default::default() };

    let cw = critical_wave(&spec, &report, &xi, &opts)?;
    println!("c* = {:.6}", cw.c_star);
    for k in 0..cw.speeds.len() {
        println!(
            "c = {:.4}  iterations {:>6}  residual {:.2e}  translate {:+.4}",
            cw.speeds[k], cw.iterations[k], cw.residuals[k], cw.translates[k]
        );
    }
    println!("successive differences {:?}", cw.cauchy_differences);
    if let Some(gap) = cw.extrapolated_gap {
        println!("estimated distance to the limit {gap:.3e}");
    }
    Ok(())
}
