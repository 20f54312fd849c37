//! Problem data: demography, transmission and dispersal, plus the derived
//! survival `pi`, birth kernel `gamma` and the age integrals every solver uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quad;

/// Default tolerance on `|int gamma - 1|`.
pub const DEFAULT_NORMALIZATION_TOL: f64 = 1e-10;

/// Uniform grid on `[0, a_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeGrid {
    a_max: f64,
    n: usize,
}

impl AgeGrid {
    pub fn new(a_max: f64, n: usize) -> Result<Self> {
        if !(a_max > 0.0 && a_max.is_finite()) {
            return Err(Error::Validation(format!("a_max must be positive, got {a_max}")));
        }
        if n < 3 {
            return Err(Error::Validation(format!("age grid needs at least 3 nodes, got {n}")));
        }
        Ok(Self { a_max, n })
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.a_max / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.a_max
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Quadrature weights for `int_0^{a_max}` (composite Simpson).
    pub fn weights(&self) -> Vec<f64> {
        quad::simpson_weights(self.n, self.step())
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }
}

/// Uniform grid on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    half_width: f64,
    n: usize,
}

impl SpaceGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Validation(format!("half width must be positive, got {half_width}")));
        }
        if n < 3 {
            return Err(Error::Validation(format!("space grid needs at least 3 nodes, got {n}")));
        }
        Ok(Self { half_width, n })
    }

    /// Grid with the given spacing; the node count is rounded to match.
    pub fn with_spacing(half_width: f64, h: f64) -> Result<Self> {
        let n = (2.0 * half_width / h).round() as usize + 1;
        Self::new(half_width, n)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }
}

/// `pi(a) = exp(-int_0^a mu)` by cumulative trapezoid.
pub fn build_survival(mu: &[f64], grid: &AgeGrid) -> Result<Vec<f64>> {
    check_len("mu", mu, grid)?;
    if let Some((i, v)) = mu.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("death rate must be finite and nonnegative, mu[{i}] = {v}")));
    }
    Ok(quad::cumulative_trapezoid(mu, grid.step()).into_iter().map(|c| (-c).exp()).collect())
}

/// Birth kernel samples and their integral.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthKernel {
    pub gamma: Vec<f64>,
    pub integral: f64,
}

/// `gamma = beta * pi`, rejected when `int gamma` is off one by more than `tolerance`.
pub fn build_gamma(beta: &[f64], pi: &[f64], grid: &AgeGrid, tolerance: f64) -> Result<BirthKernel> {
    check_len("beta", beta, grid)?;
    check_len("pi", pi, grid)?;
    if beta.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(Error::Validation("birth rate must be finite and nonnegative".into()));
    }
    if pi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Validation("survival must be positive".into()));
    }
    let gamma: Vec<f64> = beta.iter().zip(pi).map(|(b, p)| b * p).collect();
    let integral = dot(&grid.weights(), &gamma);
    if (integral - 1.0).abs() > tolerance {
        return Err(Error::Normalization { integral, tolerance });
    }
    Ok(BirthKernel { gamma, integral })
}

/// `|int beta(a) exp(-int_0^a mu) da - 1|`.
pub fn demography_residual(beta: &[f64], mu: &[f64], grid: &AgeGrid) -> Result<f64> {
    check_len("beta", beta, grid)?;
    let pi = build_survival(mu, grid)?;
    let integrand: Vec<f64> = beta.iter().zip(&pi).map(|(b, p)| b * p).collect();
    Ok((dot(&grid.weights(), &integrand) - 1.0).abs())
}

fn check_len(name: &str, v: &[f64], grid: &AgeGrid) -> Result<()> {
    if v.len() != grid.len() {
        return Err(Error::Validation(format!(
            "{name} has {} samples but the age grid has {}",
            v.len(),
            grid.len()
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Validated problem data.
///
/// Age functions are stored as samples on the age grid. The transmission
/// rate `K(a_i, a_j)` is a dense row-major matrix.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    ages: AgeGrid,
    weights: Vec<f64>,
    mu: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    pi: Vec<f64>,
    gamma: Vec<f64>,
    k: Vec<f64>,
    kernel: Kernel,
    normalization_tol: f64,
    // w_j K(a_i, a_j) pi(a_j)
    contact: Vec<f64>,
}

impl ModelSpec {
    /// Builds the model from death and birth rates.
    pub fn from_rates(
        ages: AgeGrid,
        mu: Vec<f64>,
        beta: Vec<f64>,
        transmission: Vec<f64>,
        kernel: Kernel,
        normalization_tol: f64,
    ) -> Result<Self> {
        let pi = build_survival(&mu, &ages)?;
        let birth = build_gamma(&beta, &pi, &ages, normalization_tol)?;
        let mut spec = Self::assemble(ages, pi, birth.gamma, transmission, kernel)?;
        spec.mu = Some(mu);
        spec.beta = Some(beta);
        spec.normalization_tol = normalization_tol;
        Ok(spec)
    }

    /// Builds the model from survival and birth-kernel samples directly.
    ///
    /// Only structural checks run here; use [`validate_assumptions`] for the
    /// modelling hypotheses.
    pub fn from_survival(
        ages: AgeGrid,
        pi: Vec<f64>,
        gamma: Vec<f64>,
        transmission: Vec<f64>,
        kernel: Kernel,
    ) -> Result<Self> {
        Self::assemble(ages, pi, gamma, transmission, kernel)
    }

    /// Constant-coefficient reference model: `a+ = 1`, `mu = 0`, `gamma = 1`,
    /// `K = kappa`, standard Gaussian dispersal.
    pub fn reference(n_a: usize, kappa: f64) -> Result<Self> {
        let ages = AgeGrid::new(1.0, n_a)?;
        Self::from_rates(
            ages,
            vec![0.0; n_a],
            vec![1.0; n_a],
            vec![kappa; n_a * n_a],
            Kernel::gaussian(1.0)?,
            DEFAULT_NORMALIZATION_TOL,
        )
    }

    fn assemble(ages: AgeGrid, pi: Vec<f64>, gamma: Vec<f64>, k: Vec<f64>, kernel: Kernel) -> Result<Self> {
        check_len("pi", &pi, &ages)?;
        check_len("gamma", &gamma, &ages)?;
        let n = ages.len();
        if k.len() != n * n {
            return Err(Error::Validation(format!("transmission matrix has {} entries, expected {}", k.len(), n * n)));
        }
        if pi.iter().chain(&gamma).chain(&k).any(|v| !v.is_finite()) {
            return Err(Error::Validation("model data contains non-finite values".into()));
        }
        let weights = ages.weights();
        let mut contact = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                contact[i * n + j] = weights[j] * k[i * n + j] * pi[j];
            }
        }
        Ok(Self {
            ages,
            weights,
            mu: None,
            beta: None,
            pi,
            gamma,
            k,
            kernel,
            normalization_tol: DEFAULT_NORMALIZATION_TOL,
            contact,
        })
    }

    /// Same demography and transmission with a different dispersal kernel.
    pub fn with_kernel(&self, kernel: Kernel) -> Self {
        Self { kernel, ..self.clone() }
    }

    /// Transmission rate multiplied by `factor`.
    pub fn with_transmission_scale(&self, factor: f64) -> Result<Self> {
        let k = self.k.iter().map(|v| v * factor).collect();
        let mut spec = Self::assemble(self.ages, self.pi.clone(), self.gamma.clone(), k, self.kernel.clone())?;
        spec.mu = self.mu.clone();
        spec.beta = self.beta.clone();
        spec.normalization_tol = self.normalization_tol;
        Ok(spec)
    }

    pub fn ages(&self) -> &AgeGrid {
        &self.ages
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn age_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mu(&self) -> Option<&[f64]> {
        self.mu.as_deref()
    }

    pub fn beta(&self) -> Option<&[f64]> {
        self.beta.as_deref()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `K(a_i, a_j)`.
    pub fn transmission(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.ages.len() + j]
    }

    pub fn transmission_matrix(&self) -> &[f64] {
        &self.k
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn normalization_tol(&self) -> f64 {
        self.normalization_tol
    }

    /// Row `i` of the contact quadrature `w_j K(a_i, a_j) pi(a_j)`.
    pub fn contact_row(&self, i: usize) -> &[f64] {
        let n = self.ages.len();
        &self.contact[i * n..(i + 1) * n]
    }

    /// `int gamma` by the age quadrature.
    pub fn gamma_integral(&self) -> f64 {
        dot(&self.weights, &self.gamma)
    }

    /// `int_0^{a+} K(a_i, a') pi(a') u(a') da'` for every age node.
    pub fn force_of_infection(&self, u: &[f64]) -> Vec<f64> {
        (0..self.ages.len()).map(|i| dot(self.contact_row(i), u)).collect()
    }

    /// `int_0^{a+} gamma(a) u(a) da`.
    pub fn births(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(&self.gamma).zip(u).map(|((w, g), v)| w * g * v).sum()
    }

    /// `a -> int K(a, a') pi(a') da'`.
    pub fn contact_mass(&self) -> Vec<f64> {
        self.force_of_infection(&vec![1.0; self.ages.len()])
    }

    /// `M = max_a int K(a, a') pi(a') da'`.
    pub fn max_contact(&self) -> f64 {
        self.contact_mass().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Phi_min = min_a int K(a, a') pi(a') da'`.
    pub fn min_contact(&self) -> f64 {
        self.contact_mass().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `int J(y) e^{lambda y} dy`.
    pub fn mgf_j(&self, lambda: f64) -> Result<f64> {
        self.kernel.mgf(lambda)
    }
}

/// Outcome of one assumption item.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub item: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub items: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }

    pub fn item(&self, id: &str) -> Option<&AssumptionCheck> {
        self.items.iter().find(|c| c.item == id)
    }
}

/// Probe decay rates for the finite exponential moment check.
pub const MGF_PROBES: [f64; 3] = [0.5, 1.0, 2.0];

/// Checks the four modelling hypotheses and reports measured residuals.
pub fn validate_assumptions(spec: &ModelSpec) -> AssumptionReport {
    let mut items = Vec::with_capacity(4);

    let gamma_min = spec.gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma_gap = (spec.gamma_integral() - 1.0).abs();
    items.push(AssumptionCheck {
        item: "i",
        description: "gamma >= 0 with unit integral",
        passed: gamma_min >= 0.0 && gamma_gap <= spec.normalization_tol,
        residual: gamma_gap.max((-gamma_min).max(0.0)),
        detail: format!("min gamma = {gamma_min:e}, |int gamma - 1| = {gamma_gap:e}"),
    });

    let pi_min = spec.pi.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma_pi: f64 = spec.weights.iter().zip(&spec.gamma).zip(&spec.pi).map(|((w, g), p)| w * g * p).sum();
    items.push(AssumptionCheck {
        item: "ii",
        description: "pi > 0 and gamma*pi not identically zero",
        passed: pi_min > 0.0 && gamma_pi > 0.0,
        residual: pi_min.min(gamma_pi),
        detail: format!("min pi = {pi_min:e}, int gamma pi = {gamma_pi:e}"),
    });

    items.push(check_kernel(&spec.kernel));

    let k_min = spec.k.iter().copied().fold(f64::INFINITY, f64::min);
    items.push(AssumptionCheck {
        item: "iv",
        description: "K > 0",
        passed: k_min > 0.0,
        residual: k_min,
        detail: format!("min K = {k_min:e}"),
    });

    AssumptionReport { items }
}

fn check_kernel(kernel: &Kernel) -> AssumptionCheck {
    let r = kernel.support_radius();
    let samples = 4001;
    let mut min_j = f64::INFINITY;
    let mut max_j: f64 = 0.0;
    let mut asym: f64 = 0.0;
    for s in 0..samples {
        let y = -r + 2.0 * r * s as f64 / (samples - 1) as f64;
        let (a, b) = (kernel.eval(y), kernel.eval(-y));
        min_j = min_j.min(a);
        max_j = max_j.max(a);
        asym = asym.max((a - b).abs());
    }
    let j0 = kernel.eval(0.0);
    let mass_gap = kernel.mass().map(|m| (m - 1.0).abs()).unwrap_or(f64::INFINITY);
    let mgf_ok = MGF_PROBES
        .iter()
        .all(|&l| matches!(kernel.mgf(l), Ok(v) if v.is_finite()) && matches!(kernel.mgf(-l), Ok(v) if v.is_finite()));
    let sym_ok = asym <= 1e-12 * max_j.max(1.0);
    let passed = min_j >= 0.0 && sym_ok && mass_gap <= 1e-10 && j0 > 0.0 && mgf_ok;
    AssumptionCheck {
        item: "iii",
        description: "J >= 0, symmetric, unit mass, J(0) > 0, finite exponential moments",
        passed,
        residual: mass_gap.max(asym).max((-min_j).max(0.0)),
        detail: format!(
            "min J = {min_j:e}, max |J(y) - J(-y)| = {asym:e}, |int J - 1| = {mass_gap:e}, J(0) = {j0:e}, moments finite = {mgf_ok}"
        ),
    }
}
