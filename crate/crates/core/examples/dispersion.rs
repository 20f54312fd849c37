//! Spectral bound, critical speed and the decay roots on either side of it.
//!
//!     cargo run --release --example dispersion -- [kappa]

use agewave::model::{validate_assumptions, ModelSpec};
use agewave::spectral::{dispersion_table, DispersionReport};

fn main() -> agewave::Result<()> {
    let kappa: f64 = std::env::args().nth(1).map_or(Ok(1.0), |s| s.parse()).expect("kappa must be a number");
    let spec = ModelSpec::reference(101, kappa)?;
    let checks = validate_assumptions(&spec);
    println!("assumptions pass: {}", checks.all_passed());

    let report = DispersionReport::compute(&spec)?;
    println!("s0 = {:.10}", report.s0);
    println!("c* = {:.10}  (lambda* = {:.10})", report.c_star, report.lambda_star);

    let speeds: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 2.0].iter().map(|d| report.c_star + d).collect();
    println!("{:>10} {:>12} {:>12} {:>12}", "c", "lambda1", "lambda2", "lambda(c)");
    for row in dispersion_table(&report, &speeds)? {
        println!("{:>10.5} {:>12.6} {:>12.6} {:>12.6}", row.c, row.lambda1, row.lambda2, row.lambda_of_c);
    }
    Ok(())
}
