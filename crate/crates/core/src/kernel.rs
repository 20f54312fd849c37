//! Dispersal kernels `J` and their exponential moments.
//!
//! Every kernel carries an effective support radius used for its moment
//! integrals. The radius is wide enough that the exponentially tilted tails
//! stay negligible for the decay rates the solvers visit. Discrete stencils
//! are cut shorter, where the discarded mass drops below `1e-12`.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quad;

/// Tail mass left outside the effective support.
pub const TAIL_MASS: f64 = 1e-12;

const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// Centered normal density with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// `exp(-|y|/b) / (2b)`.
    Laplace { b: f64 },
    /// Normalized `exp(-1/(1-(y/r)^2))` on `(-r, r)`.
    CompactBump { r: f64, norm: f64 },
    /// Piecewise-linear interpolation of tabulated samples, zero outside.
    Tabulated { ys: Vec<f64>, js: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    support: f64,
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Validation(format!("gaussian sigma must be positive, got {sigma}")));
        }
        // 7.2 sigma already leaves only 6e-13 of mass, but the tilted density
        // e^{lambda y} J(y) for lambda = 2 still has 1e-7 of its mass there
        Ok(Self { family: KernelFamily::Gaussian { sigma }, support: 10.0 * sigma })
    }

    pub fn laplace(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Validation(format!("laplace scale must be positive, got {b}")));
        }
        // twice the plain tail cut, so moments up to lambda = 1/(2b) keep a 1e-12 tail
        let support = 2.0 * b * (1.0 / TAIL_MASS).ln();
        Ok(Self { family: KernelFamily::Laplace { b }, support })
    }

    pub fn compact_bump(r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Validation(format!("bump radius must be positive, got {r}")));
        }
        let unit = quad::integrate(bump_profile, -1.0, 1.0, 1e-16, 1e-14)?;
        Ok(Self { family: KernelFamily::CompactBump { r, norm: 1.0 / (r * unit) }, support: r })
    }

    /// Kernel from tabulated samples `(y, J(y))`, interpolated linearly.
    pub fn tabulated(ys: Vec<f64>, js: Vec<f64>) -> Result<Self> {
        if ys.len() != js.len() || ys.len() < 3 {
            return Err(Error::Validation("tabulated kernel needs at least three (y, J) pairs".into()));
        }
        if ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("tabulated kernel abscissae must be strictly increasing".into()));
        }
        if ys.iter().chain(js.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("tabulated kernel contains non-finite values".into()));
        }
        let support = ys[0].abs().max(ys[ys.len() - 1].abs());
        Ok(Self { family: KernelFamily::Tabulated { ys, js }, support })
    }

    /// Samples `f` once on `n` uniform nodes of `[-radius, radius]`.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, radius: f64, n: usize) -> Result<Self> {
        if n < 3 || !(radius > 0.0) {
            return Err(Error::Validation("sampled kernel needs n >= 3 and radius > 0".into()));
        }
        let h = 2.0 * radius / (n - 1) as f64;
        let ys: Vec<f64> = (0..n).map(|i| -radius + i as f64 * h).collect();
        let js = ys.iter().map(|&y| f(y)).collect();
        Self::tabulated(ys, js)
    }

    /// Reads a two-column CSV with header `y,J`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
        let header = reader.headers().map_err(|e| bad(e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != ["y", "J"] {
            return Err(bad(format!("expected header `y,J`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
        }
        let (mut ys, mut js) = (Vec::new(), Vec::new());
        for row in reader.deserialize::<(f64, f64)>() {
            let (y, j) = row.map_err(|e| bad(e.to_string()))?;
            ys.push(y);
            js.push(j);
        }
        Self::tabulated(ys, js)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Effective support radius `R_J`.
    pub fn support_radius(&self) -> f64 {
        self.support
    }

    /// Kernel value; zero outside the effective support.
    pub fn eval(&self, y: f64) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                if y.abs() > self.support {
                    0.0
                } else {
                    (-0.5 * (y / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
                }
            }
            KernelFamily::Laplace { b } => {
                if y.abs() > self.support {
                    0.0
                } else {
                    (-y.abs() / b).exp() / (2.0 * b)
                }
            }
            KernelFamily::CompactBump { r, norm } => norm * bump_profile(y / r),
            KernelFamily::Tabulated { ys, js } => interp_table(ys, js, y),
        }
    }

    /// Points where the kernel is not smooth.
    fn breaks(&self) -> Vec<f64> {
        match &self.family {
            KernelFamily::Gaussian { .. } | KernelFamily::CompactBump { .. } => vec![0.0],
            KernelFamily::Laplace { .. } => vec![0.0],
            KernelFamily::Tabulated { ys, .. } => ys.clone(),
        }
    }

    fn integrate_weighted<F: Fn(f64) -> f64>(&self, weight: F) -> Result<f64> {
        let r = self.support;
        quad::integrate_with_breaks(|y| self.eval(y) * weight(y), -r, r, &self.breaks(), QUAD_ABS, QUAD_REL)
    }

    /// Integrates `J(y) g(y)` over the support, splitting at the kernel kinks
    /// and at the extra break points of `g`.
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, g: F, extra_breaks: &[f64]) -> Result<f64> {
        let r = self.support;
        let mut breaks = self.breaks();
        breaks.extend_from_slice(extra_breaks);
        quad::integrate_with_breaks(|y| self.eval(y) * g(y), -r, r, &breaks, QUAD_ABS, QUAD_REL)
    }

    /// Total mass `int J`.
    pub fn mass(&self) -> Result<f64> {
        self.integrate_weighted(|_| 1.0)
    }

    /// Moment generating function `int J(y) e^{lambda y} dy`.
    pub fn mgf(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return self.mass();
        }
        self.integrate_weighted(|y| (lambda * y).exp())
    }

    /// `int J(y) y e^{lambda y} dy`, the derivative of [`Kernel::mgf`].
    pub fn mgf_derivative(&self, lambda: f64) -> Result<f64> {
        self.integrate_weighted(|y| y * (lambda * y).exp())
    }

    /// Discrete convolution weights on a grid with spacing `h`.
    pub fn stencil(&self, h: f64) -> Result<Stencil> {
        Stencil::from_kernel(self, h)
    }
}

fn bump_profile(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

fn interp_table(ys: &[f64], js: &[f64], y: f64) -> f64 {
    let n = ys.len();
    if y < ys[0] || y > ys[n - 1] {
        return 0.0;
    }
    let idx = ys.partition_point(|&v| v <= y);
    if idx == 0 {
        return js[0];
    }
    if idx >= n {
        return js[n - 1];
    }
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    let t = (y - y0) / (y1 - y0);
    js[idx - 1] * (1.0 - t) + js[idx] * t
}

/// How a discrete convolution treats values outside the computational grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// Zero outside the domain.
    Zero,
    /// Constant extension of the edge values.
    Edge,
    /// Fixed far-field states on the left and right.
    Fixed { left: f64, right: f64 },
}

/// Normalized convolution weights `w_m ~ h J(m h)` for `|m| <= radius`.
#[derive(Debug, Clone)]
pub struct Stencil {
    weights: Vec<f64>,
    radius: usize,
    h: f64,
}

impl Stencil {
    fn from_kernel(kernel: &Kernel, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Validation(format!("grid spacing must be positive, got {h}")));
        }
        let radius = (kernel.support_radius() / h).floor() as usize;
        if radius == 0 {
            return Err(Error::Validation(format!(
                "grid spacing {h} exceeds the kernel support {}",
                kernel.support_radius()
            )));
        }
        let mut weights: Vec<f64> = (0..=2 * radius)
            .map(|k| h * kernel.eval((k as f64 - radius as f64) * h))
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("kernel has no mass on the grid".into()));
        }
        // drop the outer offsets whose combined mass is below the tail budget
        let mut cut = 0;
        let mut dropped = 0.0;
        while cut + 1 < radius {
            let next = weights[cut] + weights[2 * radius - cut];
            if (dropped + next) / total > TAIL_MASS {
                break;
            }
            dropped += next;
            cut += 1;
        }
        weights.truncate(2 * radius + 1 - cut);
        weights.drain(..cut);
        let radius = radius - cut;
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { weights, radius, h })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Weight of the offset `m` in `-radius..=radius`.
    pub fn weight(&self, m: isize) -> f64 {
        self.weights[(m + self.radius as isize) as usize]
    }

    /// `sum_m w_m e^{lambda m h}`, the discrete counterpart of the kernel mgf.
    pub fn mgf(&self, lambda: f64) -> f64 {
        let r = self.radius as f64;
        self.weights
            .iter()
            .enumerate()
            .map(|(q, w)| w * (lambda * (q as f64 - r) * self.h).exp())
            .sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `out[j] = sum_m w_m u[j - m]` with the given far-field closure.
    pub fn convolve_into(&self, u: &[f64], closure: Closure, out: &mut [f64]) {
        let n = u.len();
        let r = self.radius;
        let (left, right) = match closure {
            Closure::Zero => (0.0, 0.0),
            Closure::Edge => (u[0], u[n - 1]),
            Closure::Fixed { left, right } => (left, right),
        };
        let mut padded = Vec::with_capacity(n + 2 * r);
        padded.resize(r, left);
        padded.extend_from_slice(u);
        padded.resize(n + 2 * r, right);
        self.convolve_padded(&padded, out);
    }

    /// Convolution of a row already padded with `radius` far-field values on
    /// each side: `out[j] = sum_m w_m padded[j + radius - m]`.
    pub fn convolve_padded(&self, padded: &[f64], out: &mut [f64]) {
        let width = 2 * self.radius + 1;
        assert_eq!(padded.len(), out.len() + width - 1, "padding must equal the stencil radius");
        for (j, o) in out.iter_mut().enumerate() {
            let window = &padded[j..j + width];
            *o = window.iter().zip(self.weights.iter().rev()).map(|(v, w)| v * w).sum();
        }
    }

    pub fn convolve(&self, u: &[f64], closure: Closure) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.convolve_into(u, closure, &mut out);
        out
    }
}
