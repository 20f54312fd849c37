//! Spreading experiments on top of the Cauchy solver: front tracking, the
//! auxiliary KPP constants, and the outer, inner and hair-trigger comparisons.

use serde::{Deserialize, Serialize};

use crate::cauchy::{self, Field, Stepper, Trajectory, COMPARISON_TOL};
use crate::error::{Error, Result};
use crate::kernel::{Closure, Stencil};
use crate::model::{ModelSpec, SpaceGrid};
use crate::roots;
use crate::spectral::DispersionReport;

/// Relative agreement required between `c0` and `c*`.
pub const CROSS_VALIDATION_TOL: f64 = 1e-6;
/// Slack for the outer super-solution bound.
pub const OUTER_TOL: f64 = 1e-8;
/// Fraction of a track dropped as transient before fitting.
pub const DEFAULT_TRANSIENT: f64 = 0.4;
pub const MIN_FIT_POINTS: usize = 10;

/// Which x-profile the front is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrontSlice {
    /// `max_a u(a, x)`.
    #[default]
    AgeMax,
    /// `int u(a, x) da / a+`.
    AgeMean,
}

fn slice(field: &Field, kind: FrontSlice) -> Vec<f64> {
    match kind {
        FrontSlice::AgeMax => field.age_max(),
        FrontSlice::AgeMean => {
            let w = field.ages.weights();
            let total: f64 = w.iter().sum();
            let mut out = vec![0.0; field.space.len()];
            for (i, wi) in w.iter().enumerate() {
                for (o, v) in out.iter_mut().zip(field.row(i)) {
                    *o += wi * v / total;
                }
            }
            out
        }
    }
}

/// Rightmost and leftmost crossings of level `rho` on an x-profile.
pub fn crossings(profile: &[f64], space: &SpaceGrid, rho: f64) -> Option<(f64, f64)> {
    let n = profile.len();
    let h = space.spacing();
    let right = profile.iter().rposition(|v| *v >= rho)?;
    let left = profile.iter().position(|v| *v >= rho)?;
    let x_plus = if right == n - 1 {
        space.node(n - 1)
    } else {
        let (a, b) = (profile[right], profile[right + 1]);
        space.node(right) + h * (a - rho) / (a - b)
    };
    let x_minus = if left == 0 {
        space.node(0)
    } else {
        let (a, b) = (profile[left - 1], profile[left]);
        space.node(left) - h * (b - rho) / (b - a)
    };
    Some((x_plus, x_minus))
}

/// `(x_plus, x_minus)` of the age-max slice; `None` when the level is never reached.
pub fn front_position(field: &Field, rho: f64) -> Option<(f64, f64)> {
    crossings(&field.age_max(), &field.space, rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontTrack {
    pub level: f64,
    pub slice: FrontSlice,
    pub times: Vec<f64>,
    /// `(x_plus, x_minus)` or `None` when the level was absent.
    pub positions: Vec<Option<(f64, f64)>>,
}

impl FrontTrack {
    pub fn new(level: f64, slice: FrontSlice) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Validation(format!("front level must lie in (0, 1), got {level}")));
        }
        Ok(Self { level, slice, times: Vec::new(), positions: Vec::new() })
    }

    pub fn record(&mut self, field: &Field) {
        self.times.push(field.t);
        self.positions.push(crossings(&slice(field, self.slice), &field.space, self.level));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedEstimate {
    pub c_right: f64,
    pub c_left: f64,
    /// Standard error of `c_right`.
    pub stderr_right: f64,
    /// `|c_right - c_left|`.
    pub asymmetry: f64,
    pub points: usize,
    pub window_start: f64,
}

/// Least-squares slope and its standard error.
fn slope(t: &[f64], x: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let xm = x.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let stx: f64 = t.iter().zip(x).map(|(a, b)| (a - tm) * (b - xm)).sum();
    let b = stx / stt;
    let sse: f64 = t.iter().zip(x).map(|(a, c)| (c - xm - b * (a - tm)).powi(2)).sum();
    let se = if n > 2.0 { (sse / (n - 2.0) / stt).sqrt() } else { f64::INFINITY };
    (b, se)
}

/// Fits both fronts on the track after dropping the first `transient` fraction of its time span.
pub fn estimate_speed(track: &FrontTrack, transient: f64) -> Result<SpeedEstimate> {
    let (Some(&t0), Some(&t1)) = (track.times.first(), track.times.last()) else {
        return Err(Error::Estimation("empty front track".into()));
    };
    let start = t0 + transient * (t1 - t0);
    let (mut t, mut xp, mut xm) = (Vec::new(), Vec::new(), Vec::new());
    for (ti, p) in track.times.iter().zip(&track.positions) {
        if let (true, Some((a, b))) = (*ti >= start, p) {
            t.push(*ti);
            xp.push(*a);
            xm.push(-*b);
        }
    }
    if t.len() < MIN_FIT_POINTS {
        return Err(Error::Estimation(format!("{} windowed points, need {MIN_FIT_POINTS}", t.len())));
    }
    let (c_right, stderr_right) = slope(&t, &xp);
    let (c_left, _) = slope(&t, &xm);
    Ok(SpeedEstimate {
        c_right,
        c_left,
        stderr_right,
        asymmetry: (c_right - c_left).abs(),
        points: t.len(),
        window_start: start,
    })
}

/// Constants of the auxiliary KPP problem.
#[derive(Debug, Clone, Serialize)]
pub struct KppReference {
    pub lambda0: f64,
    pub phi_min: f64,
    pub p: f64,
    pub c0: f64,
    /// Minimizer of `(mgf(lambda) - 1 + lambda0) / lambda`.
    pub lambda_min: f64,
    pub c_star: f64,
    pub relative: f64,
}

/// `lambda0 = -s0`, `Phi_min`, `P = sup_a int K pi phi / lambda0` and
/// `c0 = inf (mgf(lambda) - 1 + lambda0) / lambda` by golden section.
///
/// Fails when `c0` and the dispersion `c*` disagree beyond [`CROSS_VALIDATION_TOL`].
pub fn kpp_reference(spec: &ModelSpec, report: &DispersionReport) -> Result<KppReference> {
    let lambda0 = -report.s0;
    if !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("lambda0 = {lambda0} is not positive")));
    }
    let phi_min = spec.min_contact();
    let p = spec.force_of_infection(&report.phi).into_iter().fold(0.0, f64::max) / lambda0;
    let kernel = report.kernel();
    let objective = |l: f64| Ok((kernel.mgf(l)? - 1.0 + lambda0) / l);
    let lo = 1e-4;
    let mut hi = 1.0;
    while objective(2.0 * hi)? < objective(hi)? {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Bracket("c0 objective keeps decreasing".into()));
        }
    }
    let (lambda_min, c0) = roots::golden_section(objective, lo, 2.0 * hi, 1e-10)?;
    let relative = (c0 - report.c_star).abs() / report.c_star;
    if relative > CROSS_VALIDATION_TOL {
        return Err(Error::CrossValidation { c0, c_star: report.c_star, relative });
    }
    Ok(KppReference { lambda0, phi_min, p, c0, lambda_min, c_star: report.c_star, relative })
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterBoundReport {
    pub c: f64,
    pub lambda: f64,
    pub v0: f64,
    /// `min (v - u)` over snapshots and nodes, with `v` capped at 1.
    pub worst_margin: f64,
    /// `(t, sup_{|x| >= c t} max_a u)` per snapshot.
    pub sup_outside: Vec<(f64, f64)>,
}

/// Smallest amplitude with `v0 e^{-lambda |x|} phi(a) >= u0` on the grid.
pub fn outer_amplitude(u0: &Field, phi: &[f64], lambda: f64) -> f64 {
    let mut v0: f64 = 0.0;
    for (i, p) in phi.iter().enumerate() {
        for (j, u) in u0.row(i).iter().enumerate() {
            if *u > 0.0 {
                v0 = v0.max(u * (lambda * u0.space.node(j).abs()).exp() / p);
            }
        }
    }
    v0
}

/// Checks `u <= min(1, v0 e^{-lambda (|x| - c t)} phi(a))` at every snapshot,
/// with `lambda` the smaller decay root at speed `c > c*`.
///
/// `v0 = None` scales the amplitude from the first snapshot, which must be at t = 0.
pub fn outer_bound_check(
    traj: &Trajectory,
    report: &DispersionReport,
    c: f64,
    v0: Option<f64>,
) -> Result<OuterBoundReport> {
    if !(c > report.c_star) {
        return Err(Error::Domain(format!("outer bound needs c > c* = {}, got {c}", report.c_star)));
    }
    let (lambda, _) = report.decay_roots(c)?;
    let phi = &report.phi;
    let first = &traj.snapshots[0];
    if phi.len() != first.ages.len() {
        return Err(Error::Validation("dispersion report and trajectory use different age grids".into()));
    }
    let v0 = match v0 {
        Some(v) => v,
        None if first.t == 0.0 => outer_amplitude(first, phi, lambda),
        None => return Err(Error::Validation("auto-scaled amplitude needs a snapshot at t = 0".into())),
    };
    let mut worst = f64::INFINITY;
    let mut sup_outside = Vec::with_capacity(traj.snapshots.len());
    for f in &traj.snapshots {
        let mut outside: f64 = 0.0;
        for (i, p) in phi.iter().enumerate() {
            for (j, u) in f.row(i).iter().enumerate() {
                let x = f.space.node(j);
                let v = (v0 * p * (-lambda * (x.abs() - c * f.t)).exp()).min(1.0);
                worst = worst.min(v - u);
                if x.abs() >= c * f.t {
                    outside = outside.max(*u);
                }
            }
        }
        sup_outside.push((f.t, outside));
    }
    if worst < -OUTER_TOL {
        return Err(Error::Comparison { context: "outer super-solution".into(), margin: worst });
    }
    Ok(OuterBoundReport { c, lambda, v0, worst_margin: worst, sup_outside })
}

/// `w + dt (J * w - w + rate w (1 - cap w))` in place.
fn kpp_step(stencil: &Stencil, w: &mut [f64], buf: &mut [f64], dt: f64, rate: f64, cap: f64) {
    stencil.convolve_into(w, Closure::Zero, buf);
    for (v, c) in w.iter_mut().zip(buf.iter()) {
        *v += dt * (c - *v + rate * *v * (1.0 - cap * *v));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HairTriggerReport {
    pub rho0: f64,
    pub rho: f64,
    pub x0: f64,
    /// First time the full solution exceeds `rho` on `[x0 - 1, x0 + 1]` at every age.
    pub t_elapsed: Option<f64>,
    /// `min (u - w)` over all steps, ages and nodes.
    pub lower_margin: f64,
    pub steps: usize,
}

/// Runs the full problem and `w_t = J * w - w + Phi_min w (1 - w)` from
/// `rho0 1_{[x0 - 1, x0 + 1]}` side by side until the full solution exceeds
/// `rho` on `[x0 - 1, x0 + 1]` or `t_max` passes.
pub fn hair_trigger_check(
    spec: &ModelSpec,
    space: &SpaceGrid,
    rho0: f64,
    rho: f64,
    x0: f64,
    t_max: f64,
) -> Result<HairTriggerReport> {
    if !(rho0 > 0.0 && rho0 < 1.0 && rho > 0.0 && rho < 1.0) {
        return Err(Error::Validation(format!("levels must lie in (0, 1), got rho0 = {rho0}, rho = {rho}")));
    }
    let window: Vec<usize> = (0..space.len()).filter(|&j| (space.node(j) - x0).abs() <= 1.0 + 1e-12).collect();
    if window.is_empty() {
        return Err(Error::Validation(format!("x0 = {x0} leaves no grid node in [x0 - 1, x0 + 1]")));
    }
    let indicator = |x: f64| if (x - x0).abs() <= 1.0 + 1e-12 { rho0 } else { 0.0 };
    let mut u = Field::from_fn(*spec.ages(), *space, |_, x| indicator(x))?;
    let mut w: Vec<f64> = space.nodes().into_iter().map(indicator).collect();
    let stepper = Stepper::new(spec, space, Closure::Zero)?;
    let dt = stepper.dt();
    let phi_min = spec.min_contact();
    let mut buf = vec![0.0; space.len()];
    let reached = |f: &Field| (0..f.ages.len()).all(|i| window.iter().all(|&j| f.value(i, j) >= rho));
    let margin = |f: &Field, w: &[f64]| {
        (0..f.ages.len())
            .flat_map(|i| f.row(i).iter().zip(w).map(|(a, b)| a - b).collect::<Vec<_>>())
            .fold(f64::INFINITY, f64::min)
    };

    let mut lower_margin = margin(&u, &w);
    let max_steps = (t_max / dt).ceil() as usize;
    let mut t_elapsed = if reached(&u) { Some(0.0) } else { None };
    let mut steps = 0;
    while t_elapsed.is_none() && steps < max_steps {
        u = stepper.step(&u)?;
        kpp_step(stepper.stencil(), &mut w, &mut buf, dt, phi_min, 1.0);
        steps += 1;
        lower_margin = lower_margin.min(margin(&u, &w));
        if reached(&u) {
            t_elapsed = Some(steps as f64 * dt);
        }
    }
    if lower_margin < -COMPARISON_TOL {
        return Err(Error::Comparison { context: "hair-trigger auxiliary lower bound".into(), margin: lower_margin });
    }
    Ok(HairTriggerReport { rho0, rho, x0, t_elapsed, lower_margin, steps })
}

#[derive(Debug, Clone, Serialize)]
pub struct InnerReport {
    pub c_frac: f64,
    pub t_end: f64,
    /// Time the auxiliary comparison starts (one age span).
    pub start: f64,
    /// `min (u - phi v)` from `start` to `t_end`.
    pub lower_margin: f64,
    /// `1/P - max v` over the run.
    pub cap_margin: f64,
    /// `min u` over `|x| <= c_frac c* t_end` and all ages at `t_end`.
    pub interior_min: f64,
    pub target: f64,
    pub passed: bool,
}

/// Compares the full solution from `1_{|x| <= radius}` with `phi(a) v(t, x)`,
/// `v` solving `v_t = J * v - v + lambda0 v (1 - P v)` from one age span on.
///
/// `v` starts from `min(1/P, min_a u(a+, a, x) / phi(a))` on `|x| <= radius`.
#[allow(clippy::too_many_arguments)]
pub fn inner_spreading_check(
    spec: &ModelSpec,
    report: &DispersionReport,
    kpp: &KppReference,
    space: &SpaceGrid,
    radius: f64,
    c_frac: f64,
    t_end: f64,
    epsilon: f64,
) -> Result<InnerReport> {
    if !(c_frac > 0.0 && c_frac < 1.0) {
        return Err(Error::Validation(format!("c_frac must lie in (0, 1), got {c_frac}")));
    }
    let start = spec.ages().a_max();
    if t_end < start {
        return Err(Error::Validation(format!("t_end = {t_end} ends before one age span ({start})")));
    }
    let u0 = Field::from_fn(*spec.ages(), *space, |_, x| if x.abs() <= radius { 1.0 } else { 0.0 })?;
    let stepper = Stepper::new(spec, space, Closure::Zero)?;
    let dt = stepper.dt();
    let phi = &report.phi;
    let cap = 1.0 / kpp.p;

    let mut u = u0;
    let start_steps = (start / dt).round() as usize;
    for _ in 0..start_steps {
        u = stepper.step(&u)?;
    }
    let mut v: Vec<f64> = (0..space.len())
        .map(|j| {
            if space.node(j).abs() > radius {
                return 0.0;
            }
            let m = (0..phi.len()).map(|i| u.value(i, j) / phi[i]).fold(f64::INFINITY, f64::min);
            m.clamp(0.0, cap)
        })
        .collect();
    let mut buf = vec![0.0; space.len()];
    let margin = |f: &Field, v: &[f64]| {
        let mut m = f64::INFINITY;
        for (i, p) in phi.iter().enumerate() {
            for (a, b) in f.row(i).iter().zip(v) {
                m = m.min(a - p * b);
            }
        }
        m
    };
    let mut lower_margin = margin(&u, &v);
    let mut cap_margin = cap - v.iter().copied().fold(0.0, f64::max);
    let total = (t_end / dt).round() as usize;
    for _ in start_steps..total {
        u = stepper.step(&u)?;
        kpp_step(stepper.stencil(), &mut v, &mut buf, dt, kpp.lambda0, kpp.p);
        lower_margin = lower_margin.min(margin(&u, &v));
        cap_margin = cap_margin.min(cap - v.iter().copied().fold(0.0, f64::max));
    }
    if lower_margin < -COMPARISON_TOL {
        return Err(Error::Comparison { context: "inner KPP sub-solution".into(), margin: lower_margin });
    }
    let reach = c_frac * report.c_star * t_end;
    let interior_min = interior_minimum(&u, reach);
    let target = 1.0 - epsilon;
    Ok(InnerReport {
        c_frac,
        t_end,
        start,
        lower_margin,
        cap_margin,
        interior_min,
        target,
        passed: interior_min >= target,
    })
}

/// `min u` over `|x| <= reach` and all ages.
pub fn interior_minimum(field: &Field, reach: f64) -> f64 {
    let mins = field.age_min();
    (0..field.space.len())
        .filter(|&j| field.space.node(j).abs() <= reach)
        .map(|j| mins[j])
        .fold(f64::INFINITY, f64::min)
}

/// Settings of a spreading-speed run from `1_{|x| <= radius}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpeedRunOptions {
    pub t_end: f64,
    pub radius: f64,
    pub level: f64,
    pub slice: FrontSlice,
    /// Time between recorded front positions and snapshots.
    pub sample_every: f64,
    /// Speed offset above `c*` for the outer bound.
    pub outer_offset: f64,
    /// Interior minimum is taken over `|x| <= interior_frac c* t_end`.
    pub interior_frac: f64,
}

impl Default for SpeedRunOptions {
    fn default() -> Self {
        Self {
            t_end: 35.0,
            radius: 1.0,
            level: 0.5,
            slice: FrontSlice::AgeMax,
            sample_every: 0.5,
            outer_offset: 0.3,
            interior_frac: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedRun {
    pub track: FrontTrack,
    pub estimate: SpeedEstimate,
    pub c_star: f64,
    /// `c_right / c*`.
    pub ratio: f64,
    pub outer: OuterBoundReport,
    pub interior_min: f64,
    pub trajectory: Trajectory,
}

/// Full spreading experiment with zero far field.
pub fn spreading_speed_run(
    spec: &ModelSpec,
    report: &DispersionReport,
    space: &SpaceGrid,
    opts: &SpeedRunOptions,
) -> Result<SpeedRun> {
    let u0 = Field::from_fn(*spec.ages(), *space, |_, x| if x.abs() <= opts.radius { 1.0 } else { 0.0 })?;
    let dt = spec.ages().step();
    let every = ((opts.sample_every / dt).round() as usize).max(1);
    let samples: Vec<f64> = (0..)
        .map(|k| (k * every) as f64 * dt)
        .take_while(|t| *t <= opts.t_end + 0.5 * dt)
        .collect();
    let mut track = FrontTrack::new(opts.level, opts.slice)?;
    let traj = cauchy::run(&u0, spec, opts.t_end, &samples, Closure::Zero)?;
    for f in &traj.snapshots {
        track.record(f);
    }
    let estimate = estimate_speed(&track, DEFAULT_TRANSIENT)?;
    let outer = outer_bound_check(&traj, report, report.c_star + opts.outer_offset, None)?;
    let interior_min = interior_minimum(traj.last(), opts.interior_frac * report.c_star * opts.t_end);
    Ok(SpeedRun {
        ratio: estimate.c_right / report.c_star,
        c_star: report.c_star,
        track,
        estimate,
        outer,
        interior_min,
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AgeGrid;

    #[test]
    fn crossings_of_simple_profiles() {
        let space = SpaceGrid::new(5.0, 101).unwrap();
        let ones = vec![1.0; 101];
        assert_eq!(crossings(&ones, &space, 0.5), Some((5.0, -5.0)));
        assert_eq!(crossings(&vec![0.0; 101], &space, 0.5), None);
        let step: Vec<f64> = space.nodes().iter().map(|x| if *x <= 0.0 { 1.0 } else { 0.0 }).collect();
        let (xp, _) = crossings(&step, &space, 0.5).unwrap();
        assert!(xp.abs() <= space.spacing());
    }

    #[test]
    fn front_position_reads_age_max() {
        let ages = AgeGrid::new(1.0, 3).unwrap();
        let space = SpaceGrid::new(2.0, 5).unwrap();
        let f = Field::from_fn(ages, space, |a, x| if a == 1.0 && x.abs() < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let (xp, xm) = front_position(&f, 0.5).unwrap();
        assert!((xp - 0.5).abs() < 1e-12 && (xm + 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_slope() {
        let mut track = FrontTrack::new(0.5, FrontSlice::AgeMax).unwrap();
        for k in 0..40 {
            let t = k as f64 * 0.5;
            let noise = 1e-6 * ((k * 7919 % 13) as f64 / 13.0 - 0.5);
            track.times.push(t);
            track.positions.push(Some((1.7 * t + noise, -1.7 * t)));
        }
        let e = estimate_speed(&track, 0.4).unwrap();
        assert!((e.c_right - 1.7).abs() < 1e-4 && (e.c_left - 1.7).abs() < 1e-12);
        track.positions.iter_mut().for_each(|p| *p = Some((2.0, -2.0)));
        assert!(estimate_speed(&track, 0.4).unwrap().c_right.abs() < 1e-12);
        track.times.truncate(5);
        track.positions.truncate(5);
        assert!(matches!(estimate_speed(&track, 0.4), Err(Error::Estimation(_))));
    }

    #[test]
    fn kpp_constants_on_reference_model() {
        let spec = ModelSpec::reference(21, 1.0).unwrap();
        let report = DispersionReport::compute(&spec).unwrap();
        let k = kpp_reference(&spec, &report).unwrap();
        assert!((k.lambda0 - 1.0).abs() < 1e-8);
        assert!((k.phi_min - 1.0).abs() < 1e-12);
        assert!((k.p - 1.0).abs() < 1e-8);
        assert!((k.c0 - 1f64.exp().sqrt()).abs() < 1e-6);
        assert!((k.lambda_min - 1.0).abs() < 1e-4);
    }

    #[test]
    fn hair_trigger_is_immediate_at_the_start_level() {
        let spec = ModelSpec::reference(11, 1.0).unwrap();
        let space = SpaceGrid::new(10.0, 101).unwrap();
        let r = hair_trigger_check(&spec, &space, 0.1, 0.1, 0.0, 5.0).unwrap();
        assert_eq!(r.t_elapsed, Some(0.0));
    }
}
