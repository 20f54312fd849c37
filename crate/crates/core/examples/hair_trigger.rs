//! A small bump anywhere grows until it reaches a high level.

use agewave::model::{ModelSpec, SpaceGrid};
use agewave::spreading::hair_trigger_check;

fn main() -> agewave::Result<()> {
    let spec = ModelSpec::reference(21, 1.0)?;
    let space = SpaceGrid::with_spacing(20.0, 0.1)?;
    for x0 in [0.0, 3.0] {
        let r = hair_trigger_check(&spec, &space, 0.1, 0.9, x0, 30.0)?;
        match r.t_elapsed {
            Some(t) => println!("bump at {x0}: reaches 0.9 after t = {t:.2} (lower margin {:.1e})", r.lower_margin),
            None => println!("bump at {x0}: never reached 0.9"),
        }
    }
    Ok(())
}
