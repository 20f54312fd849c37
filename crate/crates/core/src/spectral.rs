//! The age-renewal eigenproblem, the dispersion function and the critical speed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::model::ModelSpec;
use crate::quad;
use crate::roots;

const POWER_MAX_ITER: usize = 20_000;
const POWER_TOL: f64 = 1e-12;
/// `|rho(L_s) - 1|` accepted by the s0 bisection.
pub const S0_TOL: f64 = 1e-10;
/// Accuracy of `lambda(c)` and the decay roots.
pub const LAMBDA_TOL: f64 = 1e-12;
/// `|Lambda(lambda(c), c) - s0|` accepted by the c* bisection.
pub const CSTAR_TOL: f64 = 1e-10;
/// Below this gap `Lambda(lambda(c), c) - s0` the two decay roots are treated as one.
pub const TANGENCY_TOL: f64 = 1e-9;

/// Dense discretization of `L_s` on the age grid.
///
/// Row `i` approximates `[L_s phi](a_i)`: Simpson weights in `a'` and exact
/// product integration of `e^{s(a-l)}` against the piecewise-linear inner
/// integral in `l`.
#[derive(Debug, Clone)]
pub struct LsMatrix {
    s: f64,
    n: usize,
    entries: Vec<f64>,
}

impl LsMatrix {
    pub fn assemble(spec: &ModelSpec, s: f64) -> Self {
        let n = spec.n_ages();
        let h = spec.ages().step();
        let w = spec.age_weights();
        let gamma = spec.gamma();
        let (left, right) = quad::exp_linear_weights(-s, h);
        let decay = (s * h).exp();

        // p[i][k]: weight of the inner integral at a_k in int_0^{a_i} e^{s(a_i-l)} F(l) dl
        let mut p = vec![0.0; n * n];
        for i in 1..n {
            for k in 0..i {
                p[i * n + k] = decay * p[(i - 1) * n + k];
            }
            p[i * n + i] += left;
            p[i * n + i - 1] += right;
        }

        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            let e = (s * spec.ages().node(i)).exp();
            let row = &mut entries[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] = e * w[j] * gamma[j];
            }
            for k in 0..=i {
                let pk = p[i * n + k];
                if pk == 0.0 {
                    continue;
                }
                for (r, c) in row.iter_mut().zip(spec.contact_row(k)) {
                    *r += pk * c;
                }
            }
        }
        Self { s, n, entries }
    }

    pub fn shift(&self) -> f64 {
        self.s
    }

    /// Wraps a dense row-major nonnegative matrix that is not an `L_s`.
    pub(crate) fn from_entries(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { s: f64::NAN, n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(phi, &mut out);
        out
    }

    fn apply_into(&self, phi: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.entries[i * self.n..(i + 1) * self.n].iter().zip(phi).map(|(m, p)| m * p).sum();
        }
    }

    /// Entrywise multiple of the matrix.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { s: self.s, n: self.n, entries: self.entries.iter().map(|v| v * factor).collect() }
    }
}

/// Principal eigenpair from power iteration.
#[derive(Debug, Clone, Serialize)]
pub struct PrincipalPair {
    pub rho: f64,
    /// Positive eigenvector with max entry 1.
    pub eigvec: Vec<f64>,
    pub iterations: usize,
    /// `||M v - rho v||_inf`.
    pub residual: f64,
}

/// Power iteration with max-normalization from the all-ones vector.
pub fn spectral_radius(m: &LsMatrix) -> Result<PrincipalPair> {
    let n = m.dim();
    let mut v = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut rho = f64::NAN;
    for it in 1..=POWER_MAX_ITER {
        m.apply_into(&v, &mut next);
        let top = next.iter().copied().fold(0.0, f64::max);
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::Spectral { iterations: it, residual: f64::NAN });
        }
        for x in &mut next {
            *x /= top;
        }
        let dv = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let converged = (top - rho).abs() <= POWER_TOL * top.max(1.0) && dv <= 10.0 * POWER_TOL;
        rho = top;
        std::mem::swap(&mut v, &mut next);
        if converged || (it > 1 && dv == 0.0) {
            let mv = m.apply(&v);
            let residual = mv.iter().zip(&v).map(|(a, b)| (a - rho * b).abs()).fold(0.0, f64::max);
            return Ok(PrincipalPair { rho, eigvec: v, iterations: it, residual });
        }
    }
    let mv = m.apply(&v);
    let residual = mv.iter().zip(&v).map(|(a, b)| (a - rho * b).abs()).fold(0.0, f64::max);
    Err(Error::Spectral { iterations: POWER_MAX_ITER, residual })
}

/// `rho(L_s)` for the given model.
pub fn rho_of_s(spec: &ModelSpec, s: f64) -> Result<f64> {
    Ok(spectral_radius(&LsMatrix::assemble(spec, s))?.rho)
}

/// The unique `s0 < 0` with `rho(L_{s0}) = 1`.
pub fn find_s0(spec: &ModelSpec) -> Result<f64> {
    let rho0 = rho_of_s(spec, 0.0)?;
    if rho0 <= 1.0 {
        return Err(Error::Subcritical { rho0 });
    }
    let mut s_lo = -1.0;
    let mut expansions = 0;
    while rho_of_s(spec, s_lo)? >= 1.0 {
        s_lo *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Bracket(format!("rho(L_s) stays above 1 down to s = {s_lo}")));
        }
    }
    roots::bisect(|s| Ok(rho_of_s(spec, s)? - 1.0), s_lo, 0.0, 1e-15, 1e-14).and_then(|s0| {
        let gap = (rho_of_s(spec, s0)? - 1.0).abs();
        if gap > S0_TOL {
            return Err(Error::Bracket(format!("|rho(L_s0) - 1| = {gap:e} after bisection")));
        }
        Ok(s0)
    })
}

/// Positive fixed point of `L_{s0}` normalized to max 1.
pub fn eigenfunction_phi(spec: &ModelSpec, s0: f64) -> Result<Vec<f64>> {
    Ok(spectral_radius(&LsMatrix::assemble(spec, s0))?.eigvec)
}

/// `Lambda(lambda, c) = int J e^{lambda y} dy - 1 - c lambda`.
pub fn big_lambda(kernel: &Kernel, lambda: f64, c: f64) -> Result<f64> {
    Ok(kernel.mgf(lambda)? - 1.0 - c * lambda)
}

/// Root of `int J(y) y e^{lambda y} dy = c`, the minimizer of `Lambda(., c)`.
pub fn lambda_of_c(kernel: &Kernel, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("lambda(c) needs c > 0, got {c}")));
    }
    let mut hi = 1.0;
    while kernel.mgf_derivative(hi)? <= c {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Bracket(format!("kernel first moment stays below c = {c}")));
        }
    }
    roots::bisect(|l| Ok(kernel.mgf_derivative(l)? - c), 0.0, hi, LAMBDA_TOL, 0.0)
}

/// `c -> Lambda(lambda(c), c)`, strictly decreasing.
pub fn tangency_value(kernel: &Kernel, c: f64) -> Result<f64> {
    big_lambda(kernel, lambda_of_c(kernel, c)?, c)
}

/// Critical speed `c*` solving `Lambda(lambda(c), c) = s0`.
pub fn critical_speed(kernel: &Kernel, s0: f64) -> Result<f64> {
    if !(s0 < 0.0) {
        return Err(Error::Domain(format!("critical speed needs s0 < 0, got {s0}")));
    }
    let mut hi = 1.0;
    while tangency_value(kernel, hi)? - s0 >= 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Bracket(format!("Lambda(lambda(c), c) stays above s0 = {s0}")));
        }
    }
    // at c -> 0+ the tangency value tends to 0 > s0
    let c = roots::bisect(
        |c| if c == 0.0 { Ok(-s0) } else { Ok(tangency_value(kernel, c)? - s0) },
        0.0,
        hi,
        1e-14,
        0.0,
    )?;
    let gap = (tangency_value(kernel, c)? - s0).abs();
    if gap > CSTAR_TOL {
        return Err(Error::Bracket(format!("|Lambda(lambda(c*), c*) - s0| = {gap:e}")));
    }
    Ok(c)
}

/// Roots `lambda1 <= lambda2` of `Lambda(., c) = s0`.
///
/// At tangency (within [`TANGENCY_TOL`]) both roots equal `lambda(c)`.
pub fn decay_roots(kernel: &Kernel, s0: f64, c: f64) -> Result<(f64, f64)> {
    let lc = lambda_of_c(kernel, c)?;
    let bottom = big_lambda(kernel, lc, c)? - s0;
    if bottom.abs() <= TANGENCY_TOL {
        return Ok((lc, lc));
    }
    if bottom > 0.0 {
        return Err(Error::Domain(format!(
            "c = {c} is below the critical speed: min Lambda(., c) - s0 = {bottom:e} > 0"
        )));
    }
    let g = |l: f64| Ok(big_lambda(kernel, l, c)? - s0);
    let l1 = roots::bisect(g, 0.0, lc, LAMBDA_TOL, 0.0)?;
    let mut step = lc.max(1.0);
    let mut hi = lc + step;
    while g(hi)? <= 0.0 {
        step *= 2.0;
        hi = lc + step;
        if step > 1e6 {
            return Err(Error::Bracket("Lambda(., c) does not return above s0".into()));
        }
    }
    let l2 = roots::bisect(g, lc, hi, LAMBDA_TOL, 0.0)?;
    Ok((l1, l2))
}

/// Spectral data of a model and the dispersion relation of its kernel.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionReport {
    pub rho0: f64,
    pub s0: f64,
    /// Principal eigenfunction at `s0`, max 1.
    pub phi: Vec<f64>,
    /// `||L_{s0} phi - phi||_inf`.
    pub phi_residual: f64,
    pub c_star: f64,
    /// `lambda(c*)`.
    pub lambda_star: f64,
    #[serde(skip)]
    kernel: Kernel,
}

impl DispersionReport {
    pub fn compute(spec: &ModelSpec) -> Result<Self> {
        let s0 = find_s0(spec)?;
        let rho0 = rho_of_s(spec, 0.0)?;
        let m = LsMatrix::assemble(spec, s0);
        let pair = spectral_radius(&m)?;
        let phi = pair.eigvec;
        let lphi = m.apply(&phi);
        let phi_residual = lphi.iter().zip(&phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let kernel = spec.kernel().clone();
        let c_star = critical_speed(&kernel, s0)?;
        let lambda_star = lambda_of_c(&kernel, c_star)?;
        Ok(Self { rho0, s0, phi, phi_residual, c_star, lambda_star, kernel })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn lambda_of(&self, c: f64) -> Result<f64> {
        lambda_of_c(&self.kernel, c)
    }

    pub fn big_lambda(&self, lambda: f64, c: f64) -> Result<f64> {
        big_lambda(&self.kernel, lambda, c)
    }

    pub fn decay_roots(&self, c: f64) -> Result<(f64, f64)> {
        decay_roots(&self.kernel, self.s0, c)
    }

    pub fn phi_min(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn phi_max(&self) -> f64 {
        self.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One row of the dispersion table.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionRow {
    pub c: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_of_c: f64,
    pub big_lambda_at_tangency: f64,
}

/// Decay roots on a list of speeds at or above `c*`.
pub fn dispersion_table(report: &DispersionReport, speeds: &[f64]) -> Result<Vec<DispersionRow>> {
    speeds
        .iter()
        .map(|&c| {
            let (lambda1, lambda2) = report.decay_roots(c)?;
            let lc = report.lambda_of(c)?;
            Ok(DispersionRow { c, lambda1, lambda2, lambda_of_c: lc, big_lambda_at_tangency: report.big_lambda(lc, c)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one_rho(s: f64, kappa: f64) -> f64 {
        if s == 0.0 {
            1.0 + kappa / 2.0
        } else {
            (s.exp() - 1.0) / s * (1.0 + kappa / s) - kappa / s
        }
    }

    #[test]
    fn ls_on_constants() {
        let spec = ModelSpec::reference(101, 1.0).unwrap();
        let ones = vec![1.0; 101];
        let l0 = LsMatrix::assemble(&spec, 0.0).apply(&ones);
        for (i, v) in l0.iter().enumerate() {
            assert!((v - (1.0 + spec.ages().node(i))).abs() < 1e-13);
        }
        let lm = LsMatrix::assemble(&spec, -1.0).apply(&ones);
        assert!(lm.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let zero = LsMatrix::assemble(&spec, 0.3).apply(&vec![0.0; 101]);
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn entries_are_nonnegative_and_continuous_in_s() {
        let spec = ModelSpec::reference(21, 1.0).unwrap();
        let a = LsMatrix::assemble(&spec, -0.7);
        let b = LsMatrix::assemble(&spec, -0.7 + 1e-7);
        assert!(a.entries().iter().all(|v| *v >= 0.0));
        let gap = a.entries().iter().zip(b.entries()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-6);
    }

    #[test]
    fn power_iteration_matches_rank_one_closed_form() {
        let spec = ModelSpec::reference(101, 1.0).unwrap();
        for s in [-2.0, -1.0, -0.5, 0.0, 0.5] {
            let rho = rho_of_s(&spec, s).unwrap();
            assert!((rho - rank_one_rho(s, 1.0)).abs() < 1e-8, "s = {s}: {rho}");
        }
    }

    #[test]
    fn radius_is_homogeneous() {
        let spec = ModelSpec::reference(31, 1.0).unwrap();
        let m = LsMatrix::assemble(&spec, -0.4);
        let r1 = spectral_radius(&m).unwrap().rho;
        let r2 = spectral_radius(&m.scaled(2.0)).unwrap().rho;
        assert!((r2 - 2.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn s0_examples() {
        for kappa in [1.0, 2.0] {
            let spec = ModelSpec::reference(101, kappa).unwrap();
            let s0 = find_s0(&spec).unwrap();
            assert!((s0 + kappa).abs() < 1e-8, "kappa {kappa}: {s0}");
            let phi = eigenfunction_phi(&spec, s0).unwrap();
            assert!(phi.iter().all(|p| (p - 1.0).abs() < 1e-9));
        }
        let weak = ModelSpec::reference(101, 1e-6).unwrap();
        let s0 = find_s0(&weak).unwrap();
        assert!(s0 < 0.0 && s0 > -1e-4);
    }

    #[test]
    fn subcritical_model_is_rejected() {
        let spec = ModelSpec::reference(21, 1.0).unwrap();
        let ages = *spec.ages();
        let weak = ModelSpec::from_survival(ages, vec![1.0; 21], vec![0.5; 21], vec![0.1; 441], spec.kernel().clone())
            .unwrap();
        assert!(matches!(find_s0(&weak), Err(Error::Subcritical { .. })));
    }

    #[test]
    fn gaussian_dispersion_closed_forms() {
        let k = Kernel::gaussian(1.0).unwrap();
        let e = std::f64::consts::E;
        // the kernel is cut where its tail mass drops below 1e-12, which moves
        // the tilted first moment by a few 1e-9
        assert!((lambda_of_c(&k, e.sqrt()).unwrap() - 1.0).abs() < 1e-8);
        assert!((lambda_of_c(&k, 2.0 * e * e).unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(big_lambda(&k, 0.0, 3.0).unwrap(), 0.0);
        assert!((big_lambda(&k, 1.0, 0.7).unwrap() - (e.sqrt() - 1.7)).abs() < 1e-9);
        assert!(matches!(lambda_of_c(&k, 0.0), Err(Error::Domain(_))));
        let c_star = critical_speed(&k, -1.0).unwrap();
        assert!((c_star - e.sqrt()).abs() < 1e-8);
        assert!(critical_speed(&k, -2.0).unwrap() > c_star);
    }

    #[test]
    fn decay_roots_bracket_lambda_of_c() {
        let k = Kernel::gaussian(1.0).unwrap();
        let (l1, l2) = decay_roots(&k, -1.0, 2.0).unwrap();
        let lc = lambda_of_c(&k, 2.0).unwrap();
        assert!(0.0 < l1 && l1 < lc && lc < l2);
        assert!((big_lambda(&k, l1, 2.0).unwrap() + 1.0).abs() < 1e-9);
        assert!((big_lambda(&k, l2, 2.0).unwrap() + 1.0).abs() < 1e-9);
        let c_star = critical_speed(&k, -1.0).unwrap();
        let (t1, t2) = decay_roots(&k, -1.0, c_star).unwrap();
        assert!((t1 - t2).abs() < 1e-5);
        let (n1, n2) = decay_roots(&k, -1.0, c_star + 1e-3).unwrap();
        assert!(n2 > n1 && n2 - n1 < 0.2);
        assert!(matches!(decay_roots(&k, -1.0, 1.0), Err(Error::Domain(_))));
    }
}
