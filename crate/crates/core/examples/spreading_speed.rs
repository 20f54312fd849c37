//! Front speed of the solution started from an indicator, against c*.
//!
//! A coarse age grid keeps this quick; the ratio moves up toward 1 as the
//! grid is refined and the run gets longer.

use agewave::model::{ModelSpec, SpaceGrid};
use agewave::spectral::DispersionReport;
use agewave::spreading::{spreading_speed_run, SpeedRunOptions};

fn main() -> agewave::Result<()> {
    let spec = ModelSpec::reference(21, 1.0)?;
    let report = DispersionReport::compute(&spec)?;
    let space = SpaceGrid::with_spacing(60.0, 0.1)?;
    let opts = SpeedRunOptions { t_end: 25.0, ..Default::default() };

    let run = spreading_speed_run(&spec, &report, &space, &opts)?;
    println!("c* = {:.5}", run.c_star);
    println!("fitted right speed {:.5} (+/- {:.1e}), left {:.5}", run.estimate.c_right, run.estimate.stderr_right, run.estimate.c_left);
    println!("ratio {:.4}", run.ratio);
    println!("outer bound margin {:.2e}, interior minimum {:.6}", run.outer.worst_margin, run.interior_min);
    Ok(())
}
