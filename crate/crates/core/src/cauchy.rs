//! The initial-value problem on a truncated line, stepped along characteristics.
//!
//! Time and age advance in lockstep (`dt` equals the age spacing), so every
//! characteristic `a - t = const` passes through grid nodes and no
//! interpolation in age is needed.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Closure, Stencil};
use crate::model::{AgeGrid, ModelSpec, SpaceGrid};
use crate::quad;

/// Allowed excursion outside `[0, 1]` before a step is rejected.
pub const INVARIANCE_TOL: f64 = 1e-8;
/// Slack in the comparison principle checks.
pub const COMPARISON_TOL: f64 = 1e-10;
/// Series truncation for the semigroup `e^{(J - I) t}`.
pub const SERIES_TAIL: f64 = 1e-10;
const SERIES_MAX_TERMS: usize = 400;

/// `u(a_i, x_j)` at one time, row-major in age.
#[derive(Debug, Clone, Serialize)]
pub struct Field {
    pub t: f64,
    pub ages: AgeGrid,
    pub space: SpaceGrid,
    #[serde(skip)]
    pub u: Vec<f64>,
}

impl Field {
    pub fn new(ages: AgeGrid, space: SpaceGrid, t: f64, u: Vec<f64>) -> Result<Self> {
        if u.len() != ages.len() * space.len() {
            return Err(Error::Validation(format!(
                "field has {} values, grid needs {}",
                u.len(),
                ages.len() * space.len()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("field contains non-finite values".into()));
        }
        Ok(Self { t, ages, space, u })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(ages: AgeGrid, space: SpaceGrid, f: F) -> Result<Self> {
        let mut u = Vec::with_capacity(ages.len() * space.len());
        for i in 0..ages.len() {
            let a = ages.node(i);
            u.extend((0..space.len()).map(|j| f(a, space.node(j))));
        }
        Self::new(ages, space, 0.0, u)
    }

    pub fn constant(ages: AgeGrid, space: SpaceGrid, value: f64) -> Result<Self> {
        Self::new(ages, space, 0.0, vec![value; ages.len() * space.len()])
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.space.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let nx = self.space.len();
        &self.u[i * nx..(i + 1) * nx]
    }

    /// `x -> max_a u(a, x)`.
    pub fn age_max(&self) -> Vec<f64> {
        let nx = self.space.len();
        let mut out = vec![f64::NEG_INFINITY; nx];
        for i in 0..self.ages.len() {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o = o.max(*v);
            }
        }
        out
    }

    /// `x -> min_a u(a, x)`.
    pub fn age_min(&self) -> Vec<f64> {
        let nx = self.space.len();
        let mut out = vec![f64::INFINITY; nx];
        for i in 0..self.ages.len() {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o = o.min(*v);
            }
        }
        out
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Precomputed pieces of one time step.
pub struct Stepper<'a> {
    spec: &'a ModelSpec,
    stencil: Stencil,
    closure: Closure,
    space: SpaceGrid,
    // rows of the contact matrix that are exact copies share one force evaluation
    distinct_rows: Vec<usize>,
    row_group: Vec<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ModelSpec, space: &SpaceGrid, closure: Closure) -> Result<Self> {
        let dt = spec.ages().step();
        let m = spec.max_contact();
        if dt * (1.0 + m) > 1.0 {
            return Err(Error::Stability { step: dt, bound: 1.0 / (1.0 + m) });
        }
        let mut distinct_rows: Vec<usize> = Vec::new();
        let mut row_group = Vec::with_capacity(spec.n_ages());
        for i in 0..spec.n_ages() {
            match distinct_rows.iter().position(|&r| spec.contact_row(r) == spec.contact_row(i)) {
                Some(g) => row_group.push(g),
                None => {
                    row_group.push(distinct_rows.len());
                    distinct_rows.push(i);
                }
            }
        }
        Ok(Self {
            spec,
            stencil: spec.kernel().stencil(space.spacing())?,
            closure,
            space: *space,
            distinct_rows,
            row_group,
        })
    }

    pub fn dt(&self) -> f64 {
        self.spec.ages().step()
    }

    /// `dt (1 + M)`, at most 1 for a valid stepper.
    pub fn cfl(&self) -> f64 {
        self.dt() * (1.0 + self.spec.max_contact())
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Advances by one step; the renewal row is solved from the new rows.
    pub fn step(&self, field: &Field) -> Result<Field> {
        let (na, nx) = (self.spec.n_ages(), self.space.len());
        if field.ages.len() != na || field.space.len() != nx {
            return Err(Error::Validation("field grid does not match the stepper".into()));
        }
        let dt = self.dt();
        let u = &field.u;
        let forces: Vec<Vec<f64>> = self
            .distinct_rows
            .par_iter()
            .map(|&i| {
                let mut force = vec![0.0; nx];
                for (k, c) in self.spec.contact_row(i).iter().enumerate() {
                    if *c != 0.0 {
                        for (f, v) in force.iter_mut().zip(&u[k * nx..(k + 1) * nx]) {
                            *f += c * v;
                        }
                    }
                }
                force
            })
            .collect();
        let mut next = vec![0.0; na * nx];
        next[nx..].par_chunks_mut(nx).enumerate().for_each(|(i, out)| {
            let prev = &u[i * nx..(i + 1) * nx];
            self.stencil.convolve_into(prev, self.closure, out);
            let force = &forces[self.row_group[i]];
            for j in 0..nx {
                let p = prev[j];
                out[j] = p + dt * (out[j] - p + force[j] * (1.0 - p));
            }
        });

        // u(a_0) = sum_k w_k gamma_k u(a_k), with the k = 0 term moved to the left
        let bw: Vec<f64> = self.spec.age_weights().iter().zip(self.spec.gamma()).map(|(w, g)| w * g).collect();
        let (head, tail) = next.split_at_mut(nx);
        for (j, h) in head.iter_mut().enumerate() {
            *h = (1..na).map(|k| bw[k] * tail[(k - 1) * nx + j]).sum::<f64>() / (1.0 - bw[0]);
        }

        let t = field.t + dt;
        if let Some(v) = next.iter().find(|v| !v.is_finite() || **v < -INVARIANCE_TOL || **v > 1.0 + INVARIANCE_TOL) {
            return Err(Error::Invariance { t, value: *v });
        }
        Ok(Field { t, ages: field.ages, space: field.space, u: next })
    }
}

/// One step with a fresh [`Stepper`]; `dt` must equal the age spacing.
pub fn step(field: &Field, spec: &ModelSpec, dt: f64, closure: Closure) -> Result<Field> {
    check_dt(spec, dt)?;
    Stepper::new(spec, &field.space, closure)?.step(field)
}

fn check_dt(spec: &ModelSpec, dt: f64) -> Result<()> {
    let da = spec.ages().step();
    if (dt - da).abs() > 1e-12 * da {
        return Err(Error::Validation(format!("dt = {dt} must equal the age spacing {da}")));
    }
    Ok(())
}

/// Snapshots of a run plus the extreme values seen along the way.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub dt: f64,
    pub closure: Closure,
    pub steps: usize,
    pub cfl: f64,
    /// Smallest value of `u` over all steps.
    pub min_value: f64,
    /// Largest value of `u` over all steps.
    pub max_value: f64,
    pub snapshots: Vec<Field>,
}

impl Trajectory {
    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory holds at least the final field")
    }
}

/// Steps from `u0` to `t_end`, keeping snapshots at `sample_times` (rounded to
/// the nearest step) and always at the final time.
pub fn run(u0: &Field, spec: &ModelSpec, t_end: f64, sample_times: &[f64], closure: Closure) -> Result<Trajectory> {
    run_with(u0, spec, t_end, sample_times, closure, |_| Ok(()))
}

/// As [`run`], calling `observe` on every field including the initial one.
pub fn run_with<F>(
    u0: &Field,
    spec: &ModelSpec,
    t_end: f64,
    sample_times: &[f64],
    closure: Closure,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(&Field) -> Result<()>,
{
    let stepper = Stepper::new(spec, &u0.space, closure)?;
    let dt = stepper.dt();
    let (lo, hi) = u0.range();
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::Validation(format!("initial data leaves [0, 1]: range [{lo}, {hi}]")));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Validation(format!("final time must be nonnegative, got {t_end}")));
    }
    let steps = (t_end / dt).round() as usize;
    let mut marks: Vec<usize> = Vec::with_capacity(sample_times.len() + 1);
    for &ts in sample_times {
        if !(0.0..=t_end + 0.5 * dt).contains(&ts) {
            return Err(Error::Validation(format!("snapshot time {ts} outside [0, {t_end}]")));
        }
        marks.push((ts / dt).round() as usize);
    }
    marks.push(steps);
    marks.sort_unstable();
    marks.dedup();

    let mut traj = Trajectory {
        dt,
        closure,
        steps,
        cfl: stepper.cfl(),
        min_value: lo,
        max_value: hi,
        snapshots: Vec::with_capacity(marks.len()),
    };
    let mut field = Field { t: 0.0, ..u0.clone() };
    observe(&field)?;
    let mut next_mark = 0;
    if marks[0] == 0 {
        traj.snapshots.push(field.clone());
        next_mark = 1;
    }
    for n in 1..=steps {
        field = stepper.step(&field)?;
        field.t = n as f64 * dt;
        let (lo, hi) = field.range();
        traj.min_value = traj.min_value.min(lo);
        traj.max_value = traj.max_value.max(hi);
        observe(&field)?;
        if next_mark < marks.len() && marks[next_mark] == n {
            traj.snapshots.push(field.clone());
            next_mark += 1;
        }
    }
    Ok(traj)
}

/// Every field of a run, one per step.
pub fn history(u0: &Field, spec: &ModelSpec, t_end: f64, closure: Closure) -> Result<Vec<Field>> {
    let mut out = Vec::new();
    run_with(u0, spec, t_end, &[], closure, |f| {
        out.push(f.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Outcome of comparing the stepped solution with the characteristics formula.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalCheck {
    pub t: f64,
    pub defect: f64,
    /// Most series terms used by any semigroup evaluation.
    pub max_terms: usize,
    pub converged: bool,
}

/// `e^{(J - I) tau} v` by the truncated series `e^{-tau} sum tau^n / n! J^n v`.
fn semigroup(stencil: &Stencil, closure: Closure, tau: f64, v: &[f64]) -> (Vec<f64>, usize, bool) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut out: Vec<f64> = v.iter().map(|x| x * (-tau).exp()).collect();
    if tau == 0.0 || scale == 0.0 {
        return (out, 0, true);
    }
    let mut power = v.to_vec();
    let mut buf = vec![0.0; v.len()];
    let mut coef = (-tau).exp();
    for n in 1..=SERIES_MAX_TERMS {
        stencil.convolve_into(&power, closure, &mut buf);
        std::mem::swap(&mut power, &mut buf);
        coef *= tau / n as f64;
        for (o, p) in out.iter_mut().zip(&power) {
            *o += coef * p;
        }
        // the remaining terms sum to at most scale * (1 - sum of the Poisson weights so far)
        if coef * scale < SERIES_TAIL && n as f64 > tau {
            return (out, n, true);
        }
    }
    (out, SERIES_MAX_TERMS, false)
}

/// Sup-norm difference between `history[n]` and the characteristics formula.
///
/// Along the characteristic through `(t, a)` the solution is
/// `e^{(J-I) s} u(start) + int_0^s e^{(J-I)(s - r)} F(r) dr` with
/// `F = N(u)(1 - u)`, starting from the initial data when `a >= t` and from the
/// renewal row at time `t - a` otherwise. The integral uses the trapezoid rule
/// on the stored steps.
pub fn renewal_formula_check(history: &[Field], spec: &ModelSpec, n: usize, closure: Closure) -> Result<RenewalCheck> {
    let field = history.get(n).ok_or_else(|| Error::Validation(format!("history has no step {n}")))?;
    for (k, f) in history.iter().enumerate().take(n + 1) {
        if (f.t - k as f64 * spec.ages().step()).abs() > 1e-9 {
            return Err(Error::Validation("history must hold every step from t = 0".into()));
        }
    }
    let stencil = spec.kernel().stencil(field.space.spacing())?;
    let (na, nx) = (spec.n_ages(), field.space.len());
    let dt = spec.ages().step();

    // F(t_k, a_i, x)
    let reaction = |k: usize, i: usize| -> Vec<f64> {
        let f = &history[k];
        let mut force = vec![0.0; nx];
        for (m, c) in spec.contact_row(i).iter().enumerate() {
            for (o, v) in force.iter_mut().zip(f.row(m)) {
                *o += c * v;
            }
        }
        force.iter().zip(f.row(i)).map(|(nf, v)| nf * (1.0 - v)).collect()
    };

    let rows: Vec<(f64, usize, bool)> = (0..na)
        .into_par_iter()
        .map(|i| {
            // characteristic steps back to its start: min(i, n)
            let len = i.min(n);
            let (k0, i0) = (n - len, i - len);
            let start = history[k0].row(i0);
            let span = len as f64 * dt;
            let (mut value, mut terms, mut ok) = semigroup(&stencil, closure, span, start);
            for q in 0..=len {
                let w = if len == 0 { 0.0 } else if q == 0 || q == len { 0.5 * dt } else { dt };
                if w == 0.0 {
                    continue;
                }
                let f = reaction(k0 + q, i0 + q);
                let (g, t, c) = semigroup(&stencil, closure, (len - q) as f64 * dt, &f);
                terms = terms.max(t);
                ok &= c;
                for (v, gv) in value.iter_mut().zip(&g) {
                    *v += w * gv;
                }
            }
            let defect = value.iter().zip(field.row(i)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (defect, terms, ok)
        })
        .collect();
    Ok(RenewalCheck {
        t: field.t,
        defect: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_terms: rows.iter().map(|r| r.1).max().unwrap_or(0),
        converged: rows.iter().all(|r| r.2),
    })
}

/// An age profile solving the space-free steady problem.
#[derive(Debug, Clone, Serialize)]
pub struct Equilibrium {
    pub profile: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyScanResult {
    pub guesses: Vec<f64>,
    pub equilibria: Vec<Equilibrium>,
    /// Index into `equilibria` reached from each guess.
    pub labels: Vec<usize>,
}

/// Tolerance for two equilibria to count as the same.
pub const EQUILIBRIUM_MATCH: f64 = 1e-7;
const STEADY_TOL: f64 = 1e-12;
const STEADY_MAX_OUTER: usize = 10_000;
const STEADY_MAX_INNER: usize = 1_000;

/// Solves `du/da = N(u)(1 - u)` for a given `u(0)`, by Picard iteration on the
/// nonlocal term. For fixed `N` the equation integrates exactly:
/// `1 - u(a) = (1 - u(0)) exp(-int_0^a N)`.
fn steady_profile(spec: &ModelSpec, u0: f64, guess: &[f64]) -> Result<Vec<f64>> {
    let h = spec.ages().step();
    let mut u = guess.to_vec();
    for _ in 0..STEADY_MAX_INNER {
        let n = spec.force_of_infection(&u);
        let cum = quad::cumulative_trapezoid(&n, h);
        let next: Vec<f64> = cum.iter().map(|c| 1.0 - (1.0 - u0) * (-c).exp()).collect();
        let diff = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        if diff < STEADY_TOL {
            return Ok(u);
        }
    }
    Err(Error::NonConvergence { iterations: STEADY_MAX_INNER, increment: f64::NAN })
}

fn steady_residual(spec: &ModelSpec, u: &[f64]) -> f64 {
    let h = spec.ages().step();
    let cum = quad::cumulative_trapezoid(&spec.force_of_infection(u), h);
    let ode = u
        .iter()
        .zip(&cum)
        .map(|(v, c)| ((1.0 - v) - (1.0 - u[0]) * (-c).exp()).abs())
        .fold(0.0, f64::max);
    ode.max((u[0] - spec.births(u)).abs())
}

/// Boundary fixed-point iteration from `n_guesses` constants `theta_k = k / (n - 1)`.
///
/// Fails with a model-inconsistency error if any guess lands on something
/// other than the zero or the unit profile.
pub fn steady_state_scan(spec: &ModelSpec, n_guesses: usize) -> Result<SteadyScanResult> {
    if n_guesses < 2 {
        return Err(Error::Validation("steady-state scan needs at least two guesses".into()));
    }
    let na = spec.n_ages();
    let guesses: Vec<f64> = (0..n_guesses).map(|k| k as f64 / (n_guesses - 1) as f64).collect();
    let found: Vec<Result<Equilibrium>> = guesses
        .par_iter()
        .map(|&theta| {
            let mut u = vec![theta; na];
            for _ in 0..STEADY_MAX_OUTER {
                let profile = steady_profile(spec, u[0], &u)?;
                let b = spec.births(&profile).clamp(0.0, 1.0);
                let change = (b - profile[0]).abs();
                u = profile;
                if change < STEADY_TOL {
                    let residual = steady_residual(spec, &u);
                    return Ok(Equilibrium { profile: u, residual });
                }
                u[0] = b;
            }
            Err(Error::NonConvergence { iterations: STEADY_MAX_OUTER, increment: f64::NAN })
        })
        .collect();

    let mut equilibria: Vec<Equilibrium> = Vec::new();
    let mut labels = Vec::with_capacity(n_guesses);
    for e in found {
        let e = e?;
        let dist = |p: &[f64], v: f64| p.iter().map(|x| (x - v).abs()).fold(0.0, f64::max);
        if dist(&e.profile, 0.0) > EQUILIBRIUM_MATCH && dist(&e.profile, 1.0) > EQUILIBRIUM_MATCH {
            return Err(Error::ModelInconsistency(format!(
                "steady scan found a third equilibrium with u(0) = {}",
                e.profile[0]
            )));
        }
        let same = equilibria.iter().position(|q| {
            q.profile.iter().zip(&e.profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < EQUILIBRIUM_MATCH
        });
        match same {
            Some(k) => labels.push(k),
            None => {
                labels.push(equilibria.len());
                equilibria.push(e);
            }
        }
    }
    Ok(SteadyScanResult { guesses, equilibria, labels })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub ordered: bool,
    /// `min over steps of (v - u)`.
    pub worst_margin: f64,
    pub steps: usize,
}

/// Runs both data side by side and tracks `min(v - u)` over every step.
pub fn comparison_check(u0: &Field, v0: &Field, spec: &ModelSpec, t_end: f64, closure: Closure) -> Result<ComparisonReport> {
    if u0.u.len() != v0.u.len() {
        return Err(Error::Validation("comparison needs two fields on the same grid".into()));
    }
    let stepper = Stepper::new(spec, &u0.space, closure)?;
    let steps = (t_end / stepper.dt()).round() as usize;
    let margin = |a: &Field, b: &Field| b.u.iter().zip(&a.u).map(|(v, u)| v - u).fold(f64::INFINITY, f64::min);
    let (mut u, mut v) = (u0.clone(), v0.clone());
    let mut worst = margin(&u, &v);
    for _ in 0..steps {
        u = stepper.step(&u)?;
        v = stepper.step(&v)?;
        worst = worst.min(margin(&u, &v));
    }
    Ok(ComparisonReport { ordered: worst >= -COMPARISON_TOL, worst_margin: worst, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> (ModelSpec, SpaceGrid) {
        (ModelSpec::reference(5, 1.0).unwrap(), SpaceGrid::new(3.0, 7).unwrap())
    }

    #[test]
    fn zero_and_one_are_fixed() {
        let (spec, space) = micro();
        for v in [0.0, 1.0] {
            let f = Field::constant(*spec.ages(), space, v).unwrap();
            let closure = Closure::Fixed { left: v, right: v };
            let g = step(&f, &spec, spec.ages().step(), closure).unwrap();
            assert!(g.u.iter().all(|x| (x - v).abs() < 1e-12), "{:?}", g.u);
        }
    }

    #[test]
    fn one_step_matches_direct_evaluation() {
        let (spec, space) = micro();
        let f = Field::from_fn(*spec.ages(), space, |_, x| if x.abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let dt = spec.ages().step();
        let g = step(&f, &spec, dt, Closure::Zero).unwrap();
        let s = spec.kernel().stencil(space.spacing()).unwrap();
        // all rows equal, so N = kappa * int pi u = u(x) and rows 1.. share one value
        for j in 0..7 {
            let mut conv = 0.0;
            for jj in 0..7 {
                conv += s.weight(j as isize - jj as isize) * f.value(0, jj);
            }
            let p = f.value(0, j);
            let expected = p + dt * (conv - p + p * (1.0 - p));
            for i in 1..5 {
                assert!((g.value(i, j) - expected).abs() < 1e-14, "row {i} node {j}");
            }
        }
        for j in 0..7 {
            let v = g.value(1, j);
            assert!(v > 0.0 && v <= 1.0);
            // renewal row equals the births of the new rows
            assert!((g.value(0, j) - v).abs() < 1e-12);
        }
        // support widened: nodes at |x| = 2 pick up mass
        assert!(g.value(1, 1) > 0.0 && f.value(1, 1) == 0.0);
    }

    #[test]
    fn step_rejects_wrong_dt_and_cfl() {
        let (spec, space) = micro();
        let f = Field::constant(*spec.ages(), space, 0.5).unwrap();
        assert!(matches!(step(&f, &spec, 0.1, Closure::Zero), Err(Error::Validation(_))));
        let coarse = ModelSpec::reference(3, 3.0).unwrap();
        let f = Field::constant(*coarse.ages(), space, 0.5).unwrap();
        assert!(matches!(step(&f, &coarse, 0.5, Closure::Zero), Err(Error::Stability { .. })));
    }

    #[test]
    fn run_keeps_requested_snapshots() {
        let (spec, space) = micro();
        let f = Field::constant(*spec.ages(), space, 0.3).unwrap();
        let traj = run(&f, &spec, 1.0, &[0.0, 0.5], Closure::Edge).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.5, 1.0]);
        assert_eq!(traj.steps, 4);
    }

    #[test]
    fn renewal_check_is_exact_at_time_zero() {
        let (spec, space) = micro();
        let f = Field::from_fn(*spec.ages(), space, |_, x| 0.5 * (-x * x).exp()).unwrap();
        let h = history(&f, &spec, 0.5, Closure::Zero).unwrap();
        let r = renewal_formula_check(&h, &spec, 0, Closure::Zero).unwrap();
        assert_eq!(r.defect, 0.0);
        let r = renewal_formula_check(&h, &spec, 2, Closure::Zero).unwrap();
        assert!(r.converged && r.defect < 5e-2, "{r:?}");
    }

    #[test]
    fn steady_scan_on_reference_model() {
        let spec = ModelSpec::reference(21, 1.0).unwrap();
        let scan = steady_state_scan(&spec, 11).unwrap();
        assert_eq!(scan.equilibria.len(), 2);
        assert_eq!(scan.labels[0], 0);
        for e in &scan.equilibria {
            assert!(e.residual < 1e-9);
        }
        // every interior guess ends on the unit profile
        assert!(scan.labels[1..].iter().all(|&l| l == scan.labels[10]));
    }

    #[test]
    fn equal_data_stay_equal() {
        let (spec, space) = micro();
        let f = Field::from_fn(*spec.ages(), space, |a, x| 0.4 * (1.0 - a * 0.5) * (-x * x).exp()).unwrap();
        let r = comparison_check(&f, &f, &spec, 1.0, Closure::Zero).unwrap();
        assert!(r.ordered && r.worst_margin == 0.0);
    }
}
