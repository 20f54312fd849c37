//! Traveling waves: the explicit sub/super-solution pair, the monotone
//! iteration in the moving frame, and diagnostics on the resulting profile.
//!
//! Two frames appear here. The wave frame `U(a, z)` with `z = x - c t` is where
//! the sub- and super-solutions are written. The characteristic frame
//! `w(a, xi) = U(a, xi - c a)` is where the iteration runs, because there the
//! transport term becomes a plain age derivative. In that frame the contact
//! integral reads `int K(a, a') pi(a') w(a', xi - c (a - a')) da'`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Stencil};
use crate::model::{AgeGrid, ModelSpec, SpaceGrid};
use crate::roots;
use crate::spectral::{spectral_radius, DispersionReport, LsMatrix, PrincipalPair, LAMBDA_TOL};

/// Allowed increase of an iterate over its predecessor on the maximal branch.
pub const ORDERING_TOL: f64 = 1e-8;
const MAX_SELECTION_RETRIES: usize = 40;

/// `p(eta) = mgf(lambda) - c lambda - mgf(lambda + eta) + c (lambda + eta)`.
pub fn p_of_eta(kernel: &Kernel, eta: f64, lambda: f64, c: f64) -> Result<f64> {
    if eta == 0.0 {
        return Ok(0.0);
    }
    Ok(kernel.mgf(lambda)? - c * lambda - kernel.mgf(lambda + eta)? + c * (lambda + eta))
}

/// Explicit sub- and super-solutions in the wave frame.
///
/// `super(a, z) = min(1, e^{-lambda (z - shift)} phi(a))` and
/// `sub(a, z) = max(0, (e^{-lambda (z - shift)} - k e^{-(lambda + eta)(z - shift)}) phi(a))`.
#[derive(Debug, Clone, Serialize)]
pub struct SubSuperPair {
    pub c: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub k: f64,
    pub eta: f64,
    pub xi_m: f64,
    pub p_eta: f64,
    /// Translation applied to both functions.
    pub shift: f64,
    pub retries: usize,
    pub s0: f64,
    #[serde(skip)]
    phi: Vec<f64>,
    #[serde(skip)]
    contact_phi: Vec<f64>,
}

impl SubSuperPair {
    /// Pair with an arbitrary decay rate and no verification.
    ///
    /// Meant for diagnostics such as probing a speed below `c*`, where no
    /// admissible decay rate exists.
    pub fn with_decay(spec: &ModelSpec, report: &DispersionReport, c: f64, lambda: f64) -> Result<Self> {
        let phi = report.phi.clone();
        let alpha = report.phi_max();
        let eta = 0.5 * lambda;
        let p_eta = p_of_eta(report.kernel(), eta, lambda, c)?;
        Ok(Self {
            c,
            lambda,
            alpha,
            k: 1.0,
            eta,
            xi_m: alpha.ln() / lambda,
            p_eta,
            shift: 0.0,
            retries: 0,
            s0: report.s0,
            contact_phi: spec.force_of_infection(&phi),
            phi,
        })
    }

    /// Same pair translated by `delta` in the wave frame.
    pub fn translated(&self, delta: f64) -> Self {
        Self { shift: self.shift + delta, ..self.clone() }
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `super(a_i, z)`.
    pub fn upper(&self, i: usize, z: f64) -> f64 {
        (self.phi[i] * (-self.lambda * (z - self.shift)).exp()).min(1.0)
    }

    /// `sub(a_i, z)`.
    pub fn lower(&self, i: usize, z: f64) -> f64 {
        self.lower_raw(i, z).max(0.0)
    }

    fn lower_raw(&self, i: usize, z: f64) -> f64 {
        let z = z - self.shift;
        let e1 = (-self.lambda * z).exp();
        let e2 = (-(self.lambda + self.eta) * z).exp();
        (e1 - self.k * e2) * self.phi[i]
    }

    /// Where the sub-solution changes sign.
    fn lower_root(&self) -> f64 {
        self.shift + self.k.ln() / self.eta
    }

    /// Margin of the Case 1 inequality (`z > xi_M`) at age node `i`.
    fn case1_margin(&self, i: usize, z: f64) -> f64 {
        let z = z - self.shift;
        self.k * self.phi[i] * self.p_eta
            + self.alpha * self.contact_phi[i] * (-self.lambda * z).exp() * (self.k - (self.eta * z).exp())
    }

    /// Margin of the Case 2 inequality (`z <= xi_M`) at age node `i`.
    fn case2_margin(&self, i: usize, z: f64) -> f64 {
        let z = z - self.shift;
        let e = (-self.eta * z).exp();
        self.k * self.phi[i] * e * self.p_eta - self.contact_phi[i] * (1.0 - self.k * e)
    }

    /// Both w-frame samples `(lower, upper)` on the age x xi grid, row-major.
    pub fn frame_samples(&self, ages: &AgeGrid, xi: &SpaceGrid) -> (Vec<f64>, Vec<f64>) {
        let (na, nx) = (ages.len(), xi.len());
        let mut lo = vec![0.0; na * nx];
        let mut hi = vec![0.0; na * nx];
        for i in 0..na {
            let a = ages.node(i);
            for j in 0..nx {
                let z = xi.node(j) - self.c * a;
                lo[i * nx + j] = self.lower(i, z);
                hi[i * nx + j] = self.upper(i, z);
            }
        }
        (lo, hi)
    }
}

/// Chooses `alpha, eta, k` for speed `c > c*` and checks both Case inequalities
/// at every node of the age grid and `grid`.
pub fn select_sub_parameters(
    spec: &ModelSpec,
    report: &DispersionReport,
    c: f64,
    grid: &SpaceGrid,
) -> Result<SubSuperPair> {
    if !(c > report.c_star) {
        return Err(Error::Domain(format!("sub-solution needs c > c* = {}, got {c}", report.c_star)));
    }
    let kernel = report.kernel();
    let (l1, l2) = report.decay_roots(c)?;
    if l2 <= l1 {
        return Err(Error::Domain(format!("c = {c} is at the critical speed; no gap between decay roots")));
    }
    let phi = report.phi.clone();
    let alpha = report.phi_max();
    let phi_min = report.phi_min();
    let xi_m = alpha.ln() / l1;
    let contact_phi = spec.force_of_infection(&phi);
    let sup_contact = contact_phi.iter().copied().fold(0.0, f64::max);

    let mut eta = 0.5 * l1.min(l2 - l1);
    let mut p = p_of_eta(kernel, eta, l1, c)?;
    while p <= 0.0 {
        eta *= 0.5;
        if eta < 1e-12 {
            return Err(Error::Domain(format!("p(eta) stays nonpositive at c = {c}")));
        }
        p = p_of_eta(kernel, eta, l1, c)?;
    }
    let k1 = alpha * sup_contact * ((eta - l1) * xi_m).exp() / (p * phi_min);
    let k2 = sup_contact * (eta * xi_m).exp() / (p * phi_min);
    let mut pair = SubSuperPair {
        c,
        lambda: l1,
        alpha,
        k: k1.max(k2).max(1.0),
        eta,
        xi_m,
        p_eta: p,
        shift: 0.0,
        retries: 0,
        s0: report.s0,
        phi,
        contact_phi,
    };

    let ages = spec.ages();
    for retry in 0..=MAX_SELECTION_RETRIES {
        pair.retries = retry;
        match check_cases(&pair, ages, grid) {
            Ok(()) => return Ok(pair),
            Err(e) if retry == MAX_SELECTION_RETRIES => return Err(e),
            Err(_) => {
                pair.eta *= 0.5;
                pair.p_eta = p_of_eta(kernel, pair.eta, l1, c)?;
                pair.k *= 2.0;
            }
        }
    }
    unreachable!()
}

fn check_cases(pair: &SubSuperPair, ages: &AgeGrid, grid: &SpaceGrid) -> Result<()> {
    for i in 0..ages.len() {
        for z in grid.nodes() {
            let (inequality, margin) = if z > pair.xi_m {
                ("case 1", pair.case1_margin(i, z))
            } else {
                ("case 2", pair.case2_margin(i, z))
            };
            if margin < -1e-12 {
                return Err(Error::ParameterSelection { inequality, a: ages.node(i), xi: z, margin });
            }
            let (lo, hi) = (pair.lower(i, z), pair.upper(i, z));
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::ParameterSelection { inequality: "order", a: ages.node(i), xi: z, margin: hi - lo });
            }
        }
    }
    Ok(())
}

/// Worst margins of the sub/super inequalities on a grid (negative means violated).
#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    /// `min(sub, super - sub, 1 - super)` over the grid.
    pub order_margin: f64,
    pub super_margin: f64,
    pub super_at: (f64, f64),
    pub super_boundary_margin: f64,
    pub sub_margin: f64,
    pub sub_at: (f64, f64),
    pub sub_boundary_margin: f64,
    pub case1_margin: f64,
    pub case2_margin: f64,
}

impl PairReport {
    pub fn worst(&self) -> f64 {
        [
            self.order_margin,
            self.super_margin,
            self.super_boundary_margin,
            self.sub_margin,
            self.sub_boundary_margin,
            self.case1_margin,
            self.case2_margin,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates both differential inequalities and both boundary inequalities in
/// the wave frame at every node of the age grid and `grid`.
///
/// Convolutions are computed by adaptive quadrature against the exact
/// functions, with break points at their kinks.
pub fn verify_ordered_pair(pair: &SubSuperPair, spec: &ModelSpec, grid: &SpaceGrid) -> Result<PairReport> {
    let ages = spec.ages();
    let kernel = spec.kernel();
    let na = ages.len();
    // phi' = s0 phi + int K pi phi
    let s0_phi: Vec<f64> = (0..na).map(|i| pair.s0 * pair.phi[i] + pair.contact_phi[i]).collect();
    let zs = grid.nodes();

    let rows: Vec<Result<PairReport>> = zs
        .par_iter()
        .map(|&z| {
            let mut r = PairReport::empty();
            let upper: Vec<f64> = (0..na).map(|i| pair.upper(i, z)).collect();
            let lower: Vec<f64> = (0..na).map(|i| pair.lower(i, z)).collect();
            let n_up = spec.force_of_infection(&upper);
            let n_lo = spec.force_of_infection(&lower);
            for i in 0..na {
                let a = ages.node(i);
                let (u, l) = (upper[i], lower[i]);
                r.order_margin = r.order_margin.min(l).min(u - l).min(1.0 - u);

                // super: dU/da - [J*U - U + c U_z + (1 - U) N(U)] >= 0
                let kink = z - pair.shift - pair.phi[i].ln() / pair.lambda;
                let conv = kernel.integrate_against(|y| pair.upper(i, z - y), &[z - kink])?;
                let e = pair.phi[i] * (-pair.lambda * (z - pair.shift)).exp();
                let (du_da, du_dz) = if e >= 1.0 {
                    (0.0, 0.0)
                } else {
                    (e / pair.phi[i] * s0_phi[i], -pair.lambda * e)
                };
                let m = du_da - (conv - u + pair.c * du_dz + (1.0 - u) * n_up[i]);
                if m < r.super_margin {
                    r.super_margin = m;
                    r.super_at = (a, z);
                }

                // sub: J*U - U + c U_z + (1 - U) N(U) - dU/da >= 0
                let root = pair.lower_root();
                let conv = kernel.integrate_against(|y| pair.lower(i, z - y), &[z - root])?;
                let (dl_da, dl_dz) = if pair.lower_raw(i, z) <= 0.0 {
                    (0.0, 0.0)
                } else {
                    let zz = z - pair.shift;
                    let e1 = (-pair.lambda * zz).exp();
                    let e2 = (-(pair.lambda + pair.eta) * zz).exp();
                    ((e1 - pair.k * e2) * s0_phi[i], (-pair.lambda * e1 + pair.k * (pair.lambda + pair.eta) * e2) * pair.phi[i])
                };
                let m = conv - l + pair.c * dl_dz + (1.0 - l) * n_lo[i] - dl_da;
                if m < r.sub_margin {
                    r.sub_margin = m;
                    r.sub_at = (a, z);
                }

                let case = if z > pair.xi_m + pair.shift {
                    &mut r.case1_margin
                } else {
                    &mut r.case2_margin
                };
                let cm = if z > pair.xi_m + pair.shift { pair.case1_margin(i, z) } else { pair.case2_margin(i, z) };
                *case = case.min(cm);
            }
            r.super_boundary_margin = upper[0] - spec.births(&upper);
            r.sub_boundary_margin = spec.births(&lower) - lower[0];
            Ok(r)
        })
        .collect();

    let mut out = PairReport::empty();
    for r in rows {
        out.merge(&r?);
    }
    Ok(out)
}

impl PairReport {
    fn empty() -> Self {
        Self {
            order_margin: f64::INFINITY,
            super_margin: f64::INFINITY,
            super_at: (f64::NAN, f64::NAN),
            super_boundary_margin: f64::INFINITY,
            sub_margin: f64::INFINITY,
            sub_at: (f64::NAN, f64::NAN),
            sub_boundary_margin: f64::INFINITY,
            case1_margin: f64::INFINITY,
            case2_margin: f64::INFINITY,
        }
    }

    fn merge(&mut self, o: &PairReport) {
        self.order_margin = self.order_margin.min(o.order_margin);
        if o.super_margin < self.super_margin {
            self.super_margin = o.super_margin;
            self.super_at = o.super_at;
        }
        if o.sub_margin < self.sub_margin {
            self.sub_margin = o.sub_margin;
            self.sub_at = o.sub_at;
        }
        self.super_boundary_margin = self.super_boundary_margin.min(o.super_boundary_margin);
        self.sub_boundary_margin = self.sub_boundary_margin.min(o.sub_boundary_margin);
        self.case1_margin = self.case1_margin.min(o.case1_margin);
        self.case2_margin = self.case2_margin.min(o.case2_margin);
    }
}

/// Lower and upper starting functions of the iteration in the characteristic
/// frame, row-major over `age x xi`, with the decay rate used beyond the right edge.
#[derive(Debug, Clone)]
pub struct FrameEnvelope {
    pub c: f64,
    pub tail_rate: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FrameEnvelope {
    /// Samples of the explicit pair. Only a diagnostic: the explicit pair is not
    /// ordered with respect to the discrete scheme at every node.
    pub fn from_pair(pair: &SubSuperPair, ages: &AgeGrid, xi: &SpaceGrid) -> Self {
        let (lower, upper) = pair.frame_samples(ages, xi);
        Self { c: pair.c, tail_rate: pair.lambda, lower, upper }
    }
}

/// Dense `n_a x n_a` matrix whose Perron root is 1 exactly when
/// `psi(a_i) e^{-lambda xi}` solves the linearized scheme at speed `c`.
///
/// The age step is explicit Euler, so the growth of a mode over one step is
/// `1 + da (m_h(lambda) - 1)` rather than `e^{da (mgf(lambda) - 1)}`.
pub fn scheme_dispersion(spec: &ModelSpec, stencil: &Stencil, c: f64, lambda: f64) -> Result<PrincipalPair> {
    let n = spec.n_ages();
    let da = spec.ages().step();
    let g = 1.0 + da * (stencil.mgf(lambda) - 1.0);
    let mut h = vec![0.0; n * n];
    for k in 0..n {
        let b = spec.age_weights()[k] * spec.gamma()[k];
        h[k] = b * (-lambda * c * spec.ages().node(k)).exp();
    }
    for i in 0..n - 1 {
        let contact = spec.contact_row(i);
        let ai = spec.ages().node(i);
        for k in 0..n {
            let e = da * contact[k] * (lambda * c * (ai - spec.ages().node(k))).exp();
            h[(i + 1) * n + k] = g * h[i * n + k] + e;
        }
    }
    spectral_radius(&LsMatrix::from_entries(n, h))
}

/// Both roots of `rho(H_lambda) = 1`, split at the continuous `lambda(c)`.
pub fn scheme_decay_roots(spec: &ModelSpec, stencil: &Stencil, c: f64, split: f64) -> Result<(f64, f64)> {
    let f = |l: f64| Ok(scheme_dispersion(spec, stencil, c, l)?.rho - 1.0);
    let mid = f(split)?;
    if mid >= 0.0 {
        return Err(Error::Domain(format!(
            "c = {c} is not above the critical speed of the discretized problem (rho = {})",
            mid + 1.0
        )));
    }
    let l1 = roots::bisect(f, 0.0, split, LAMBDA_TOL, 0.0)?;
    let mut hi = 2.0 * split;
    let mut expansions = 0;
    while f(hi)? <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 40 {
            return Err(Error::Bracket(format!("rho(H) stays below 1 up to lambda = {hi}")));
        }
    }
    let l2 = roots::bisect(f, split, hi, LAMBDA_TOL, 0.0)?;
    Ok((l1, l2))
}

/// Sub/super pair built from the discretized operator.
///
/// `super = min(1, e^{-lambda z} phi)` and
/// `sub = max(0, e^{-lambda z} phi - k e^{-(lambda + eta) z} chi)` where `phi`
/// and `chi` are Perron vectors of the scheme at `lambda` and `lambda + eta`.
/// Both inequalities are checked on one sweep of the scheme itself.
#[derive(Debug, Clone, Serialize)]
pub struct SchemePair {
    pub c: f64,
    pub lambda: f64,
    pub lambda2: f64,
    /// Decay rate of the continuous problem, for comparison.
    pub continuous_lambda: f64,
    pub eta: f64,
    pub rho_eta: f64,
    pub k: f64,
    pub retries: usize,
    /// `min(super - T(super))` over the grid.
    pub super_margin: f64,
    /// `min(T(sub) - sub)` over the grid.
    pub sub_margin: f64,
    #[serde(skip)]
    phi: Vec<f64>,
    #[serde(skip)]
    chi: Vec<f64>,
}

/// Slack allowed in the one-sweep checks, for rounding in the Perron vectors.
pub const SCHEME_CHECK_TOL: f64 = 1e-10;

impl SchemePair {
    pub fn upper(&self, i: usize, z: f64) -> f64 {
        (self.phi[i] * (-self.lambda * z).exp()).min(1.0)
    }

    pub fn lower(&self, i: usize, z: f64) -> f64 {
        let v = self.phi[i] * (-self.lambda * z).exp() - self.k * self.chi[i] * (-(self.lambda + self.eta) * z).exp();
        v.max(0.0)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn envelope(&self, ages: &AgeGrid, xi: &SpaceGrid) -> FrameEnvelope {
        let (na, nx) = (ages.len(), xi.len());
        let mut lower = vec![0.0; na * nx];
        let mut upper = vec![0.0; na * nx];
        for i in 0..na {
            for j in 0..nx {
                let z = xi.node(j) - self.c * ages.node(i);
                lower[i * nx + j] = self.lower(i, z);
                upper[i * nx + j] = self.upper(i, z);
            }
        }
        FrameEnvelope { c: self.c, tail_rate: self.lambda, lower, upper }
    }
}

fn wave_frame_vector(psi: &[f64], ages: &AgeGrid, rate: f64) -> Vec<f64> {
    let v: Vec<f64> = psi.iter().enumerate().map(|(i, p)| p * (-rate * ages.node(i)).exp()).collect();
    let top = v.iter().copied().fold(0.0, f64::max);
    v.into_iter().map(|x| x / top).collect()
}

/// Builds and verifies the scheme pair at speed `c` on `xi`.
pub fn scheme_pair(
    spec: &ModelSpec,
    report: &DispersionReport,
    c: f64,
    xi: &SpaceGrid,
    interpolation: ShiftInterpolation,
) -> Result<SchemePair> {
    if !(c > report.c_star) {
        return Err(Error::Domain(format!("sub-solution needs c > c* = {}, got {c}", report.c_star)));
    }
    let ages = *spec.ages();
    let stencil = spec.kernel().stencil(xi.spacing())?;
    let continuous_lambda = report.lambda_of(c)?;
    let (l1, l2) = scheme_decay_roots(spec, &stencil, c, continuous_lambda)?;
    let phi = wave_frame_vector(&scheme_dispersion(spec, &stencil, c, l1)?.eigvec, &ages, l1 * c);
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let sup_contact = spec.force_of_infection(&phi).into_iter().fold(0.0, f64::max);

    let p_h = |eta: f64| stencil.mgf(l1) - c * l1 - stencil.mgf(l1 + eta) + c * (l1 + eta);
    let mut eta = 0.5 * l1.min(l2 - l1);
    while p_h(eta) <= 0.0 {
        eta *= 0.5;
        if eta < 1e-12 {
            return Err(Error::Domain(format!("p(eta) stays nonpositive at c = {c}")));
        }
    }
    let mut k = (sup_contact / (p_h(eta) * phi_min)).max(1.0);

    let op = FrameOperator::new(spec, xi, c, l1, interpolation)?;
    let m = spec.max_contact();
    for retries in 0..=MAX_SELECTION_RETRIES {
        let chi_pair = scheme_dispersion(spec, &stencil, c, l1 + eta)?;
        let pair = SchemePair {
            c,
            lambda: l1,
            lambda2: l2,
            continuous_lambda,
            eta,
            rho_eta: chi_pair.rho,
            k,
            retries,
            super_margin: f64::NAN,
            sub_margin: f64::NAN,
            phi: phi.clone(),
            chi: wave_frame_vector(&chi_pair.eigvec, &ages, (l1 + eta) * c),
        };
        let env = pair.envelope(&ages, xi);
        let t_lo = op.sweep(&env.lower, m);
        let sub_margin = t_lo.iter().zip(&env.lower).map(|(t, l)| t - l).fold(f64::INFINITY, f64::min);
        if sub_margin >= -SCHEME_CHECK_TOL && chi_pair.rho < 1.0 {
            let t_hi = op.sweep(&env.upper, m);
            let super_margin = env.upper.iter().zip(&t_hi).map(|(u, t)| u - t).fold(f64::INFINITY, f64::min);
            if super_margin < -SCHEME_CHECK_TOL {
                let idx = env.upper.iter().zip(&t_hi).position(|(u, t)| u - t == super_margin).unwrap_or(0);
                let nx = xi.len();
                return Err(Error::ParameterSelection {
                    inequality: "super",
                    a: ages.node(idx / nx),
                    xi: xi.node(idx % nx),
                    margin: super_margin,
                });
            }
            return Ok(SchemePair { super_margin, sub_margin, ..pair });
        }
        if retries == MAX_SELECTION_RETRIES {
            let idx = t_lo.iter().zip(&env.lower).position(|(t, l)| t - l == sub_margin).unwrap_or(0);
            let nx = xi.len();
            return Err(Error::ParameterSelection {
                inequality: "sub",
                a: ages.node(idx / nx),
                xi: xi.node(idx % nx),
                margin: sub_margin,
            });
        }
        eta *= 0.5;
        k *= 2.0;
    }
    unreachable!()
}

/// How values at `xi + shift` are read off the xi grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftInterpolation {
    /// Geometric interpolation `v0^{1-t} v1^t`: exact on exponential tails,
    /// so the super-solution stays a super-solution of the scheme.
    LogLinear,
    /// Plain linear interpolation.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Decreasing sequence from the super-solution.
    Maximal,
    /// Increasing sequence from the sub-solution.
    Minimal,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub branch: Branch,
    pub interpolation: ShiftInterpolation,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, branch: Branch::Maximal, interpolation: ShiftInterpolation::LogLinear }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offset {
    base: isize,
    frac: f64,
}

impl Offset {
    fn new(shift: f64, h: f64) -> Self {
        let s = shift / h;
        let mut base = s.floor();
        let mut frac = s - base;
        if frac > 1.0 - 1e-12 {
            base += 1.0;
            frac = 0.0;
        } else if frac < 1e-12 {
            frac = 0.0;
        }
        Self { base: base as isize, frac }
    }
}

/// Discrete operators of the characteristic frame for one speed.
///
/// Left of the grid every row is 1. Right of it a row continues as
/// `u_last e^{-tail_rate d}`, the decay of the linearized scheme, so that
/// exponential tails pass through the boundary unchanged.
struct FrameOperator<'a> {
    spec: &'a ModelSpec,
    nx: usize,
    h: f64,
    tail_rate: f64,
    stencil: Stencil,
    // e^{-tail_rate m h} for m = 1..=radius
    tail_factors: Vec<f64>,
    // indexed by i - k + (na - 1)
    contact_offsets: Vec<Offset>,
    birth_offsets: Vec<Offset>,
    birth_weights: Vec<f64>,
    interpolation: ShiftInterpolation,
}

impl<'a> FrameOperator<'a> {
    fn new(spec: &'a ModelSpec, xi: &SpaceGrid, c: f64, tail_rate: f64, interpolation: ShiftInterpolation) -> Result<Self> {
        let na = spec.n_ages();
        let ha = spec.ages().step();
        let h = xi.spacing();
        let stencil = spec.kernel().stencil(h)?;
        let contact_offsets = (0..2 * na - 1)
            .map(|d| Offset::new(-c * ha * (d as f64 - (na - 1) as f64), h))
            .collect();
        let birth_offsets = (0..na).map(|k| Offset::new(c * spec.ages().node(k), h)).collect();
        let birth_weights = spec.age_weights().iter().zip(spec.gamma()).map(|(w, g)| w * g).collect();
        let tail_factors = (1..=stencil.radius()).map(|m| (-tail_rate * m as f64 * h).exp()).collect();
        Ok(Self {
            spec,
            nx: xi.len(),
            h,
            tail_rate,
            stencil,
            tail_factors,
            contact_offsets,
            birth_offsets,
            birth_weights,
            interpolation,
        })
    }

    fn logs(&self, u: &[f64]) -> Vec<f64> {
        match self.interpolation {
            ShiftInterpolation::Linear => Vec::new(),
            ShiftInterpolation::LogLinear => {
                u.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect()
            }
        }
    }

    /// `out[j] += weight * row(xi_j + shift)`.
    fn accumulate(&self, out: &mut [f64], weight: f64, row: &[f64], logs: &[f64], off: Offset) {
        if weight == 0.0 {
            return;
        }
        let n = self.nx as isize;
        let last = row[self.nx - 1];
        let at = |idx: isize| -> f64 {
            if idx < 0 {
                1.0
            } else if idx >= n {
                last * (-self.tail_rate * (idx - n + 1) as f64 * self.h).exp()
            } else {
                row[idx as usize]
            }
        };
        let t = off.frac;
        if t == 0.0 {
            for (j, o) in out.iter_mut().enumerate() {
                let idx = j as isize + off.base;
                *o += weight * if (0..n).contains(&idx) { row[idx as usize] } else { at(idx) };
            }
            return;
        }
        let log_at = |idx: isize| -> f64 {
            if idx < 0 {
                0.0
            } else if idx >= n {
                logs[self.nx - 1] - self.tail_rate * (idx - n + 1) as f64 * self.h
            } else {
                logs[idx as usize]
            }
        };
        for (j, o) in out.iter_mut().enumerate() {
            let i0 = j as isize + off.base;
            let (v0, v1) = (at(i0), at(i0 + 1));
            let v = if v0 == v1 {
                v0
            } else {
                match self.interpolation {
                    ShiftInterpolation::Linear => v0 + t * (v1 - v0),
                    ShiftInterpolation::LogLinear => {
                        if v0 <= 0.0 || v1 <= 0.0 {
                            0.0
                        } else {
                            ((1.0 - t) * log_at(i0) + t * log_at(i0 + 1)).exp()
                        }
                    }
                }
            };
            *o += weight * v;
        }
    }

    /// `N[u](a_i, xi) = int K(a_i, a') pi(a') u(a', xi - c (a_i - a')) da'` for
    /// the first `rows` age nodes.
    fn contact(&self, u: &[f64], logs: &[f64], rows: usize) -> Vec<f64> {
        let (na, nx) = (self.spec.n_ages(), self.nx);
        let mut out = vec![0.0; rows * nx];
        out.par_chunks_mut(nx).enumerate().for_each(|(i, o)| {
            let weights = self.spec.contact_row(i);
            for k in 0..na {
                let lg = if logs.is_empty() { &[][..] } else { &logs[k * nx..(k + 1) * nx] };
                self.accumulate(o, weights[k], &u[k * nx..(k + 1) * nx], lg, self.contact_offsets[i + na - 1 - k]);
            }
        });
        out
    }

    /// `int gamma(a) u(a, xi + c a) da`.
    fn births(&self, u: &[f64], logs: &[f64]) -> Vec<f64> {
        let nx = self.nx;
        let mut out = vec![0.0; nx];
        for k in 0..self.spec.n_ages() {
            let lg = if logs.is_empty() { &[][..] } else { &logs[k * nx..(k + 1) * nx] };
            self.accumulate(&mut out, self.birth_weights[k], &u[k * nx..(k + 1) * nx], lg, self.birth_offsets[k]);
        }
        out
    }

    /// `J_h * row` with the frame's far-field values.
    fn convolve(&self, row: &[f64], padded: &mut Vec<f64>, out: &mut [f64]) {
        let r = self.stencil.radius();
        let last = row[row.len() - 1];
        padded.clear();
        padded.resize(r, 1.0);
        padded.extend_from_slice(row);
        padded.extend(self.tail_factors.iter().map(|f| last * f));
        self.stencil.convolve_padded(padded, out);
    }

    /// One sweep of the linearized age problem driven by `prev`.
    fn sweep(&self, prev: &[f64], m: f64) -> Vec<f64> {
        let (na, nx) = (self.spec.n_ages(), self.nx);
        let da = self.spec.ages().step();
        let logs = self.logs(prev);
        let n_prev = self.contact(prev, &logs, na - 1);
        let mut next = vec![0.0; na * nx];
        next[..nx].copy_from_slice(&self.births(prev, &logs));
        let mut conv = vec![0.0; nx];
        let mut padded = Vec::with_capacity(nx + 2 * self.stencil.radius());
        for i in 0..na - 1 {
            let (done, rest) = next.split_at_mut((i + 1) * nx);
            let cur = &done[i * nx..];
            self.convolve(cur, &mut padded, &mut conv);
            let p = &prev[i * nx..(i + 1) * nx];
            let nn = &n_prev[i * nx..(i + 1) * nx];
            for j in 0..nx {
                rest[j] = cur[j] + da * (conv[j] - (1.0 + m) * cur[j] + nn[j] * (1.0 - p[j]) + m * p[j]);
            }
        }
        next
    }
}

/// How far the iterates strayed from the envelope and from monotonicity.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    /// `min over iterates of (upper - u)`.
    pub below_upper: f64,
    /// `min over iterates of (u - lower)`.
    pub above_lower: f64,
    /// Largest step against the branch direction (`u^n - u^{n-1}` on the maximal branch).
    pub max_reversal: f64,
}

impl SandwichReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.below_upper >= -tol && self.above_lower >= -tol && self.max_reversal <= tol
    }
}

/// Converged wave in the characteristic frame, `w[i * n_xi + j] = w(a_i, xi_j)`.
#[derive(Debug, Clone, Serialize)]
pub struct WaveProfile {
    pub c: f64,
    /// Decay rate of the envelope, also used beyond the right edge.
    pub lambda: f64,
    pub ages: AgeGrid,
    pub xi: SpaceGrid,
    #[serde(skip)]
    pub w: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub sandwich: SandwichReport,
    pub branch: Branch,
    pub interpolation: ShiftInterpolation,
    /// Translation applied after the iteration, if any.
    pub translate: f64,
}

impl WaveProfile {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.xi.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let nx = self.xi.len();
        &self.w[i * nx..(i + 1) * nx]
    }

    /// `(max_a |w(a, -L) - 1|, max_a |w(a, L)|)`.
    pub fn edge_errors(&self) -> (f64, f64) {
        let nx = self.xi.len();
        let mut left: f64 = 0.0;
        let mut right: f64 = 0.0;
        for i in 0..self.ages.len() {
            left = left.max((self.value(i, 0) - 1.0).abs());
            right = right.max(self.value(i, nx - 1).abs());
        }
        (left, right)
    }

    /// Largest increase `w(a, xi_{j+1}) - w(a, xi_j)`; nonpositive for a nonincreasing profile.
    pub fn monotonicity_violation(&self) -> f64 {
        (0..self.ages.len())
            .flat_map(|i| self.row(i).windows(2).map(|p| p[1] - p[0]).collect::<Vec<_>>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self.w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `U(a_i, z) = w(a_i, z + c a_i)`, linearly interpolated.
    pub fn wave_frame_value(&self, i: usize, z: f64) -> f64 {
        sample_at(self, i, z + self.c * self.ages.node(i))
    }
}

/// Monotone iteration from the upper envelope (or the lower one on the
/// minimal branch) until the sup-norm increment falls below `opts.tol`.
pub fn monotone_iterate(
    spec: &ModelSpec,
    env: &FrameEnvelope,
    xi: &SpaceGrid,
    opts: &IterationOptions,
) -> Result<WaveProfile> {
    monotone_iterate_with(spec, env, xi, opts, |_, _| {})
}

/// As [`monotone_iterate`], calling `observe(n, u^n)` after every sweep.
pub fn monotone_iterate_with<F>(
    spec: &ModelSpec,
    env: &FrameEnvelope,
    xi: &SpaceGrid,
    opts: &IterationOptions,
    mut observe: F,
) -> Result<WaveProfile>
where
    F: FnMut(usize, &[f64]),
{
    let ages = *spec.ages();
    let m = spec.max_contact();
    let da = ages.step();
    if da * (1.0 + m) > 1.0 {
        return Err(Error::Stability { step: da, bound: 1.0 / (1.0 + m) });
    }
    let nx = xi.len();
    if env.upper.len() != ages.len() * nx || env.lower.len() != ages.len() * nx {
        return Err(Error::Validation("envelope does not match the age x xi grid".into()));
    }
    let op = FrameOperator::new(spec, xi, env.c, env.tail_rate, opts.interpolation)?;
    let (lower, upper) = (&env.lower, &env.upper);
    let mut u = match opts.branch {
        Branch::Maximal => upper.clone(),
        Branch::Minimal => lower.clone(),
    };
    let sign = match opts.branch {
        Branch::Maximal => 1.0,
        Branch::Minimal => -1.0,
    };
    let mut sandwich =
        SandwichReport { below_upper: f64::INFINITY, above_lower: f64::INFINITY, max_reversal: f64::NEG_INFINITY };
    let mut increments = Vec::new();

    for n in 1..=opts.max_iter {
        let next = op.sweep(&u, m);
        let mut inc: f64 = 0.0;
        let mut worst = (f64::NEG_INFINITY, 0);
        for (idx, (&new, &old)) in next.iter().zip(&u).enumerate() {
            if !new.is_finite() {
                return Err(Error::NonConvergence { iterations: n, increment: f64::NAN });
            }
            inc = inc.max((new - old).abs());
            let reversal = sign * (new - old);
            if reversal > worst.0 {
                worst = (reversal, idx);
            }
            sandwich.below_upper = sandwich.below_upper.min(upper[idx] - new);
            sandwich.above_lower = sandwich.above_lower.min(new - lower[idx]);
        }
        sandwich.max_reversal = sandwich.max_reversal.max(worst.0);
        if worst.0 > ORDERING_TOL {
            let (i, j) = (worst.1 / nx, worst.1 % nx);
            return Err(Error::Ordering { iteration: n, excess: worst.0, a: ages.node(i), xi: xi.node(j) });
        }
        increments.push(inc);
        u = next;
        observe(n, &u);
        if inc < opts.tol {
            let mut profile = WaveProfile {
                c: env.c,
                lambda: env.tail_rate,
                ages,
                xi: *xi,
                w: u,
                residual: f64::NAN,
                iterations: n,
                increments,
                sandwich,
                branch: opts.branch,
                interpolation: opts.interpolation,
                translate: 0.0,
            };
            profile.residual = wave_residual(&profile, spec)?;
            return Ok(profile);
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, increment: *increments.last().unwrap_or(&f64::NAN) })
}

/// Scheme pair at speed `c` followed by the maximal-branch iteration.
pub fn traveling_wave(
    spec: &ModelSpec,
    report: &DispersionReport,
    c: f64,
    xi: &SpaceGrid,
    opts: &IterationOptions,
) -> Result<(SchemePair, WaveProfile)> {
    let pair = scheme_pair(spec, report, c, xi, opts.interpolation)?;
    let profile = monotone_iterate(spec, &pair.envelope(spec.ages(), xi), xi, opts)?;
    Ok((pair, profile))
}

/// Sup-norm defect of the discrete wave equation and of the renewal boundary,
/// away from bands of width `2 R_J` at both ends of the xi grid.
///
/// The age derivative is the forward difference matching the iteration, so a
/// fixed point of the scheme has residual zero up to the iteration tolerance.
pub fn wave_residual(profile: &WaveProfile, spec: &ModelSpec) -> Result<f64> {
    let op = FrameOperator::new(spec, &profile.xi, profile.c, profile.lambda, profile.interpolation)?;
    let (na, nx) = (profile.ages.len(), profile.xi.len());
    let da = profile.ages.step();
    let band = 2 * op.stencil.radius();
    if 2 * band >= nx {
        return Err(Error::Validation(format!(
            "xi grid of {nx} nodes leaves no interior outside the {band}-node edge bands"
        )));
    }
    let w = &profile.w;
    let logs = op.logs(w);
    let n = op.contact(w, &logs, na - 1);
    let births = op.births(w, &logs);
    let mut worst: f64 = 0.0;
    for j in band..nx - band {
        worst = worst.max((w[j] - births[j]).abs());
    }
    let mut conv = vec![0.0; nx];
    let mut padded = Vec::new();
    for i in 0..na - 1 {
        let cur = &w[i * nx..(i + 1) * nx];
        let nxt = &w[(i + 1) * nx..(i + 2) * nx];
        op.convolve(cur, &mut padded, &mut conv);
        for j in band..nx - band {
            let rhs = conv[j] - cur[j] + n[i * nx + j] * (1.0 - cur[j]);
            worst = worst.max(((nxt[j] - cur[j]) / da - rhs).abs());
        }
    }
    Ok(worst)
}

/// Smallest admissible Lipschitz modulus of a profile in xi.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    /// `max_s ln(1 + D_s) / (s h)` with `D_s` the largest difference over `s` nodes.
    pub m_min: f64,
    /// Smallest candidate on the geometric grid with `m >= m_min`.
    pub m_fit: f64,
    /// `max(m_fit, lambda)`, the constant the regularity bound is stated with.
    pub m: f64,
    pub lambda: f64,
    /// Largest `|w(a, xi + s h) - w(a, xi)|` for `s = 1..=5`.
    pub max_differences: Vec<f64>,
    /// Worst `|dw| - (e^{m |h|} - 1)` over all pairs at the reported `m`.
    pub margin: f64,
}

pub const LIPSCHITZ_SHIFTS: usize = 5;
const M_CANDIDATE_MIN: f64 = 1e-3;
const M_CANDIDATE_RATIO: f64 = 1.02;
const M_CANDIDATE_MAX: f64 = 1e4;

/// Finds the smallest `m` on a geometric candidate grid such that
/// `|w(a, xi + h) - w(a, xi)| <= e^{m |h|} - 1` for all node pairs up to five
/// spacings apart.
pub fn lipschitz_modulus_check(profile: &WaveProfile) -> Result<LipschitzReport> {
    let h = profile.xi.spacing();
    let mut diffs = vec![0.0f64; LIPSCHITZ_SHIFTS];
    for i in 0..profile.ages.len() {
        let row = profile.row(i);
        for (s, d) in diffs.iter_mut().enumerate() {
            let s = s + 1;
            for j in 0..row.len().saturating_sub(s) {
                *d = d.max((row[j + s] - row[j]).abs());
            }
        }
    }
    let m_min = diffs
        .iter()
        .enumerate()
        .map(|(s, d)| (1.0 + d).ln() / ((s + 1) as f64 * h))
        .fold(0.0, f64::max);
    let mut m_fit = M_CANDIDATE_MIN;
    while m_fit < m_min {
        m_fit *= M_CANDIDATE_RATIO;
        if m_fit > M_CANDIDATE_MAX {
            return Err(Error::Regularity { required: m_min });
        }
    }
    let m = m_fit.max(profile.lambda);
    let margin = diffs
        .iter()
        .enumerate()
        .map(|(s, d)| d - ((m * (s + 1) as f64 * h).exp() - 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LipschitzReport { m_min, m_fit, m, lambda: profile.lambda, max_differences: diffs, margin })
}

/// Translates a profile in xi so that `w(0, 0) = 1/2`, using the leftmost
/// crossing of the age-zero row.
pub fn normalize_translate(profile: &WaveProfile) -> Result<WaveProfile> {
    let row = profile.row(0);
    let h = profile.xi.spacing();
    if row[0] < 0.5 {
        return Err(Error::Domain("age-zero row never reaches 1/2".into()));
    }
    let j = row
        .windows(2)
        .position(|p| p[1] <= 0.5)
        .ok_or_else(|| Error::Domain("age-zero row never drops to 1/2".into()))?;
    let (w0, w1) = (row[j], row[j + 1]);
    let star = profile.xi.node(j) + if w0 > w1 { h * (w0 - 0.5) / (w0 - w1) } else { 0.0 };

    let nx = profile.xi.len();
    let off = Offset::new(star, h);
    let mut w = vec![0.0; profile.w.len()];
    for i in 0..profile.ages.len() {
        let src = profile.row(i);
        let at = |idx: isize| {
            if idx < 0 {
                1.0
            } else if idx >= nx as isize {
                src[nx - 1] * (-profile.lambda * (idx - nx as isize + 1) as f64 * h).exp()
            } else {
                src[idx as usize]
            }
        };
        for jj in 0..nx {
            let k = jj as isize + off.base;
            let (v0, v1) = (at(k), at(k + 1));
            w[i * nx + jj] = v0 + off.frac * (v1 - v0);
        }
    }
    // the node at xi = 0 may sit off the exact crossing by rounding only
    Ok(WaveProfile { w, translate: profile.translate + star, ..profile.clone() })
}

/// Profile value at `(a_i, xi)` by linear interpolation in xi.
pub fn sample_at(profile: &WaveProfile, i: usize, x: f64) -> f64 {
    let h = profile.xi.spacing();
    let s = (x + profile.xi.half_width()) / h;
    let nx = profile.xi.len();
    if s <= 0.0 {
        return profile.value(i, 0);
    }
    if s >= (nx - 1) as f64 {
        return profile.value(i, nx - 1);
    }
    let j = s.floor() as usize;
    let t = s - j as f64;
    profile.value(i, j) * (1.0 - t) + profile.value(i, j + 1) * t
}

/// Waves at speeds approaching `c*` from above, all normalized by `w(0, 0) = 1/2`.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalWave {
    pub c_star: f64,
    pub speeds: Vec<f64>,
    pub translates: Vec<f64>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Sup-differences between consecutive normalized profiles.
    pub cauchy_differences: Vec<f64>,
    /// Ratio of the last two Cauchy differences.
    pub contraction: Option<f64>,
    /// Geometric-series estimate of the distance from the last profile to the limit.
    pub extrapolated_gap: Option<f64>,
    pub profile: WaveProfile,
}

pub const CRITICAL_OFFSETS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

pub fn critical_wave(
    spec: &ModelSpec,
    report: &DispersionReport,
    xi: &SpaceGrid,
    opts: &IterationOptions,
) -> Result<CriticalWave> {
    let speeds: Vec<f64> = CRITICAL_OFFSETS.iter().map(|d| report.c_star + d).collect();
    let profiles: Vec<WaveProfile> = speeds
        .par_iter()
        .map(|&c| normalize_translate(&traveling_wave(spec, report, c, xi, opts)?.1))
        .collect::<Result<_>>()?;
    let cauchy_differences: Vec<f64> = profiles
        .windows(2)
        .map(|p| p[0].w.iter().zip(&p[1].w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let contraction = match cauchy_differences.as_slice() {
        [.., a, b] if *a > 0.0 => Some(b / a),
        _ => None,
    };
    let extrapolated_gap = contraction.filter(|r| *r < 1.0).map(|r| cauchy_differences.last().unwrap() * r / (1.0 - r));
    Ok(CriticalWave {
        c_star: report.c_star,
        translates: profiles.iter().map(|p| p.translate).collect(),
        iterations: profiles.iter().map(|p| p.iterations).collect(),
        residuals: profiles.iter().map(|p| p.residual).collect(),
        speeds,
        cauchy_differences,
        contraction,
        extrapolated_gap,
        profile: profiles.into_iter().last().unwrap(),
    })
}

/// `||u^* - u_*||_inf` between the maximal and minimal branches.
pub fn extremal_gap(spec: &ModelSpec, env: &FrameEnvelope, xi: &SpaceGrid, opts: &IterationOptions) -> Result<f64> {
    let hi = monotone_iterate(spec, env, xi, &IterationOptions { branch: Branch::Maximal, ..*opts })?;
    let lo = monotone_iterate(spec, env, xi, &IterationOptions { branch: Branch::Minimal, ..*opts })?;
    Ok(hi.w.iter().zip(&lo.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}
