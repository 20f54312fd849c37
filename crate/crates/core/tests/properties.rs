//! Property tests for the stepping scheme and the dispersion solvers.

use agewave::cauchy::{comparison_check, run, Field, Stepper, INVARIANCE_TOL};
use agewave::kernel::{Closure, Kernel};
use agewave::model::{ModelSpec, SpaceGrid};
use agewave::spectral::{rho_of_s, DispersionReport};
use proptest::prelude::*;

fn r1(n_a: usize) -> ModelSpec {
    ModelSpec::reference(n_a, 1.0).unwrap()
}

/// Smooth bump family used as random initial data.
fn bump(amp: f64, center: f64, width: f64, tilt: f64) -> impl Fn(f64, f64) -> f64 {
    move |a, x| amp * (1.0 - tilt * a) * (-(x - center) * (x - center) / (2.0 * width * width)).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaled_data_stay_below(
        theta in 0.0f64..1.0,
        amp in 0.05f64..1.0,
        center in -3.0f64..3.0,
        width in 0.3f64..3.0,
        tilt in 0.0f64..0.9,
    ) {
        let spec = r1(11);
        let space = SpaceGrid::new(10.0, 81).unwrap();
        let v0 = Field::from_fn(*spec.ages(), space, bump(amp, center, width, tilt)).unwrap();
        let u0 = Field::new(*spec.ages(), space, 0.0, v0.u.iter().map(|v| theta * v).collect()).unwrap();
        let r = comparison_check(&u0, &v0, &spec, 2.0, Closure::Zero).unwrap();
        prop_assert!(r.worst_margin >= -1e-10, "margin {}", r.worst_margin);
    }

    #[test]
    fn random_data_stay_in_the_unit_interval(seed in any::<u64>(), closure_edge in any::<bool>()) {
        let spec = r1(11);
        let space = SpaceGrid::new(6.0, 49).unwrap();
        let n = spec.n_ages() * space.len();
        // cheap deterministic noise in [0, 1]
        let mut s = seed | 1;
        let u: Vec<f64> = (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let u0 = Field::new(*spec.ages(), space, 0.0, u).unwrap();
        let closure = if closure_edge { Closure::Edge } else { Closure::Zero };
        let traj = run(&u0, &spec, 1.0, &[], closure).unwrap();
        prop_assert!(traj.min_value >= -INVARIANCE_TOL && traj.max_value <= 1.0 + INVARIANCE_TOL);
    }

    #[test]
    fn uniform_data_follow_the_space_free_recursion(level in 0.0f64..1.0, tilt in 0.0f64..1.0) {
        let spec = r1(21);
        let space = SpaceGrid::new(5.0, 41).unwrap();
        let u0 = Field::from_fn(*spec.ages(), space, |a, _| level * (1.0 - tilt * a)).unwrap();
        let stepper = Stepper::new(&spec, &space, Closure::Edge).unwrap();

        let na = spec.n_ages();
        let dt = spec.ages().step();
        let bw: Vec<f64> = spec.age_weights().iter().zip(spec.gamma()).map(|(w, g)| w * g).collect();
        let mut field = u0.clone();
        let mut v: Vec<f64> = (0..na).map(|i| u0.value(i, 0)).collect();
        for _ in 0..20 {
            field = stepper.step(&field).unwrap();
            let force = spec.force_of_infection(&v);
            let mut next = vec![0.0; na];
            for i in 1..na {
                next[i] = v[i - 1] + dt * force[i - 1] * (1.0 - v[i - 1]);
            }
            next[0] = (1..na).map(|k| bw[k] * next[k]).sum::<f64>() / (1.0 - bw[0]);
            v = next;
            for i in 0..na {
                for j in 0..space.len() {
                    prop_assert!((field.value(i, j) - v[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shifting_the_data_shifts_the_solution(shift in -8isize..=8, width in 0.3f64..1.5) {
        let spec = r1(21);
        let space = SpaceGrid::new(15.0, 121).unwrap();
        let h = space.spacing();
        let base = Field::from_fn(*spec.ages(), space, bump(0.6, 0.0, width, 0.3)).unwrap();
        let moved = Field::from_fn(*spec.ages(), space, bump(0.6, shift as f64 * h, width, 0.3)).unwrap();
        let a = run(&base, &spec, 1.0, &[], Closure::Zero).unwrap();
        let b = run(&moved, &spec, 1.0, &[], Closure::Zero).unwrap();
        let (fa, fb) = (a.last(), b.last());
        let nx = space.len() as isize;
        for i in 0..spec.n_ages() {
            for j in 20..nx - 20 {
                let k = j + shift;
                let d = (fb.value(i, k as usize) - fa.value(i, j as usize)).abs();
                // node positions are rounded differently in the two samplings
                prop_assert!(d < 1e-10, "a {i} node {j}: {d:e}");
            }
        }
    }

    #[test]
    fn spectral_radius_is_increasing(s in -3.0f64..1.0, ds in 0.01f64..1.0, kappa in 0.2f64..3.0) {
        let spec = ModelSpec::reference(41, kappa).unwrap();
        prop_assert!(rho_of_s(&spec, s + ds).unwrap() > rho_of_s(&spec, s).unwrap());
    }

    #[test]
    fn critical_speed_grows_with_transmission(kappa in 0.2f64..3.0, factor in 1.05f64..2.0) {
        let weak = DispersionReport::compute(&ModelSpec::reference(41, kappa).unwrap()).unwrap();
        let strong = DispersionReport::compute(&ModelSpec::reference(41, kappa * factor).unwrap()).unwrap();
        prop_assert!(strong.s0 < weak.s0);
        prop_assert!(strong.c_star > weak.c_star);
    }

    #[test]
    fn stencils_are_symmetric_with_unit_mass(sigma in 0.3f64..3.0, h in 0.05f64..0.5) {
        let st = Kernel::gaussian(sigma).unwrap().stencil(h).unwrap();
        let total: f64 = st.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let r = st.radius() as isize;
        for m in 1..=r {
            prop_assert_eq!(st.weight(m), st.weight(-m));
        }
    }
}
