//! Quadrature rules shared by every module: adaptive Gauss-Kronrod for
//! kernel integrals on the real line and fixed-grid rules for age integrals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Converges when the summed error estimate drops below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Integration(format!("non-finite interval [{a}, {b}]")));
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let mut pieces = vec![(lo, hi, kronrod15(&f, lo, hi))];
    for _ in 0..2000 {
        let total: f64 = pieces.iter().map(|p| p.2 .0).sum();
        let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if !total.is_finite() {
            return Err(Error::Integration(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(sign * total);
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (p_lo, p_hi, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (p_lo + p_hi);
        pieces.push((p_lo, mid, kronrod15(&f, p_lo, mid)));
        pieces.push((mid, p_hi, kronrod15(&f, mid, p_hi)));
    }
    let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
    Err(Error::Integration(format!(
        "error estimate {err:e} after 2000 subdivisions on [{lo}, {hi}]"
    )))
}

/// Integrates over `[a, b]`, splitting at the given interior break points
/// (kinks of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(a);
    edges.extend(points);
    edges.push(b);
    let pieces = (edges.len() - 1) as f64;
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += integrate(&f, w[0], w[1], abs_tol / pieces, rel_tol)?;
    }
    Ok(total)
}

/// Weights of the composite Simpson rule on `n` uniformly spaced nodes with
/// spacing `h`. An odd number of intervals closes with the 3/8 rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 3, "Simpson weights need at least three nodes");
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    let simpson_intervals = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
    for k in (0..simpson_intervals).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if simpson_intervals < intervals {
        let k = simpson_intervals;
        let c = 3.0 * h / 8.0;
        w[k] += c;
        w[k + 1] += 3.0 * c;
        w[k + 2] += 3.0 * c;
        w[k + 3] += c;
    }
    w
}

/// Running trapezoid integral; the first entry is zero.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Weights `(left, right)` with
/// `int_0^h e^{-s tau} g(tau) d tau = left * g(0) + right * g(h)`
/// exactly when `g` is linear on `[0, h]`.
pub fn exp_linear_weights(s: f64, h: f64) -> (f64, f64) {
    let z = s * h;
    let (e0, e1) = if z.abs() < 0.5 {
        // int_0^1 e^{-z t} dt and int_0^1 t e^{-z t} dt by series
        let mut term = 1.0;
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        for n in 0..30 {
            e0 += term / (n as f64 + 1.0);
            e1 += term / (n as f64 + 2.0);
            term *= -z / (n as f64 + 1.0);
        }
        (e0, e1)
    } else {
        let ez = (-z).exp();
        ((1.0 - ez) / z, (1.0 - ez * (1.0 + z)) / (z * z))
    };
    (h * (e0 - e1), h * e1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_gaussian_moment() {
        let f = |y: f64| (-0.5 * y * y).exp() * (2.0 * y).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(f, -20.0, 20.0, 1e-14, 1e-14).unwrap();
        assert!((v - 2f64.exp()).abs() < 1e-11);
    }

    #[test]
    fn reversed_interval_flips_sign() {
        let v = integrate(|x| x * x, 1.0, 0.0, 1e-14, 1e-14).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn breaks_handle_kinks() {
        let v = integrate_with_breaks(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-14, 1e-14).unwrap();
        assert!((v - 2.5).abs() < 1e-13);
    }

    #[test]
    fn simpson_weights_sum_and_exactness() {
        for n in [3, 4, 5, 6, 7, 11, 12, 101] {
            let h = 1.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "n = {n}");
            let cubic: f64 = w
                .iter()
                .enumerate()
                .map(|(i, wi)| wi * (i as f64 * h).powi(3))
                .sum();
            assert!((cubic - 0.25).abs() < 1e-14, "n = {n}");
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn exp_linear_weights_match_closed_forms() {
        for &s in &[-3.0, -1e-9, 0.0, 1e-7, 0.2, 2.5] {
            let h = 0.3;
            let (l, r) = exp_linear_weights(s, h);
            // g = 1
            let exact_const = if s == 0.0 { h } else { -(-s * h).exp_m1() / s };
            assert!((l + r - exact_const).abs() < 1e-14, "s = {s}: {} vs {exact_const}", l + r);
            // g = tau
            let num = integrate(|t: f64| (-s * t).exp() * t, 0.0, h, 1e-16, 1e-15).unwrap();
            assert!((r * h - num).abs() < 1e-14, "s = {s}: {} vs {num}", r * h);
        }
    }

    #[test]
    fn cumulative_trapezoid_of_linear_is_exact() {
        let vals: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let c = cumulative_trapezoid(&vals, 0.1);
        assert!((c[10] - 0.5).abs() < 1e-15);
    }
}
