//! c* over transmission strength and kernel width, computed in parallel.

use agewave::kernel::Kernel;
use agewave::model::ModelSpec;
use agewave::spectral::DispersionReport;
use rayon::prelude::*;

fn main() -> agewave::Result<()> {
    let grid: Vec<(f64, f64)> =
        [0.5, 1.0, 2.0, 4.0].iter().flat_map(|&k| [0.5, 1.0, 2.0].map(move |s| (k, s))).collect();
    let rows: Vec<agewave::Result<(f64, f64, f64, f64)>> = grid
        .par_iter()
        .map(|&(kappa, sigma)| {
            let spec = ModelSpec::reference(101, kappa)?.with_kernel(Kernel::gaussian(sigma)?);
            let r = DispersionReport::compute(&spec)?;
            Ok((kappa, sigma, r.s0, r.c_star))
        })
        .collect();
    println!("{:>6} {:>6} {:>10} {:>10}", "kappa", "sigma", "s0", "c*");
    for row in rows {
        match row {
            Ok((k, s, s0, c)) => println!("{k:>6} {s:>6} {s0:>10.5} {c:>10.5}"),
            Err(e) => println!("failed: {e}"),
        }
    }
    Ok(())
}
