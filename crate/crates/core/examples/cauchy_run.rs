//! Initial-value problem from a compact bump, stepped along characteristics.

use agewave::cauchy::{comparison_check, run, Field};
use agewave::kernel::Closure;
use agewave::model::{ModelSpec, SpaceGrid};

fn main() -> agewave::Result<()> {
    let spec = ModelSpec::reference(51, 1.0)?;
    let space = SpaceGrid::new(20.0, 401)?;
    let u0 = Field::from_fn(*spec.ages(), space, |_, x| if x.abs() <= 1.0 { 0.5 } else { 0.0 })?;

    let traj = run(&u0, &spec, 4.0, &[0.0, 1.0, 2.0, 4.0], Closure::Zero)?;
    println!("dt {} over {} steps, cfl {:.3}", traj.dt, traj.steps, traj.cfl);
    println!("range [{:.3e}, {:.6}]", traj.min_value, traj.max_value);
    for f in &traj.snapshots {
        let mid = space.len() / 2;
        println!("t = {:.2}: u(0, 0) = {:.6}, u(a_max, 0) = {:.6}", f.t, f.value(0, mid), f.value(spec.n_ages() - 1, mid));
    }

    // a smaller start stays below
    let v0 = Field::from_fn(*spec.ages(), space, |_, x| if x.abs() <= 0.5 { 0.25 } else { 0.0 })?;
    let cmp = comparison_check(&v0, &u0, &spec, 2.0, Closure::Zero)?;
    println!("ordered: {} (worst margin {:.2e})", cmp.ordered, cmp.worst_margin);
    Ok(())
}
