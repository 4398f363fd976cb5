//! The normalising constant `C_σ` of the singular-integral representation.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::quad::{adaptive, gauss_legendre, gauss_legendre_integrate};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::special::{gamma, gamma_ratio};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CSigmaScheme {
    /// Series on `[0, 1]`, Gauss–Legendre on π-panels, asymptotic tail.
    SeriesPanels,
    /// Power substitution near 0, adaptive Gauss–Kronrod on π/2-panels, asymptotic tail.
    SubstitutionAdaptive,
}

/// `|S^{n−1}|`.
pub fn sphere_area<T: Real>(n: usize) -> T {
    let half_n = lit::<T>(n as f64 / 2.0);
    lit::<T>(2.0) * T::PI().powf(half_n) / gamma(half_n)
}

/// `∫_{S^{n−1}} |ω₁|^{2σ} dω = 2π^{(n−1)/2} Γ(σ+½)/Γ(σ+n/2)`.
pub fn sphere_moment<T: Real>(n: usize, sigma: T) -> T {
    let half: T = lit(0.5);
    lit::<T>(2.0)
        * T::PI().powf(lit::<T>((n as f64 - 1.0) / 2.0))
        * gamma_ratio(sigma + half, sigma + lit((n as f64) / 2.0))
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients `a_0, a_1, …` of `sin^{2p} r = a_0 + Σ a_j cos(2jr)`.
fn sin_power_cosines<T: Real>(p: u32) -> Vec<T> {
    let norm = 2f64.powi(2 * p as i32);
    (0..=p)
        .map(|j| {
            let c = binomial(2 * p, p - j) / norm;
            lit(if j == 0 {
                c
            } else if j % 2 == 0 {
                2.0 * c
            } else {
                -2.0 * c
            })
        })
        .collect()
}

/// `∫_A^∞ cos(ωr) r^{−μ} dr` by the integration-by-parts asymptotic series.
fn cos_tail<T: Real>(omega: T, mu: T, a: T) -> T {
    let i = Complex::new(T::zero(), T::one());
    let phase = Complex::new((omega * a).cos(), (omega * a).sin());
    let mut term = -phase * a.powf(-mu) / (i * omega);
    let mut sum = term;
    for k in 0..200 {
        let next = term * (mu + from_usize(k)) / (i * omega * a);
        if next.norm() >= term.norm() {
            break;
        }
        term = next;
        sum = sum + term;
        if term.norm() <= T::epsilon() * sum.norm() {
            break;
        }
    }
    sum.re
}

/// `∫_A^∞ sin^{2p}(r) r^{−1−2σ} dr`.
fn radial_tail<T: Real>(p: u32, sigma: T, a: T) -> T {
    let two: T = lit(2.0);
    let coeffs = sin_power_cosines::<T>(p);
    let mut tail = coeffs[0] * a.powf(-two * sigma) / (two * sigma);
    for (j, &c) in coeffs.iter().enumerate().skip(1) {
        tail += c * cos_tail(two * from_usize(j), T::one() + two * sigma, a);
    }
    tail
}

/// Power series of `(sin r / r)^{2p}` in `r²`, `terms` coefficients.
pub fn sinc_power_series<T: Real>(p: u32, terms: usize) -> Vec<T> {
    let mut sinc = vec![T::zero(); terms];
    let mut fact = 1.0_f64;
    for (j, s) in sinc.iter_mut().enumerate() {
        if j > 0 {
            fact *= ((2 * j) * (2 * j + 1)) as f64;
        }
        *s = lit(if j % 2 == 0 { 1.0 } else { -1.0 } / fact);
    }
    let mut acc = vec![T::zero(); terms];
    acc[0] = T::one();
    for _ in 0..2 * p {
        let mut next = vec![T::zero(); terms];
        for (i, &a) in acc.iter().enumerate() {
            for (j, &s) in sinc.iter().enumerate().take(terms - i) {
                next[i + j] += a * s;
            }
        }
        acc = next;
    }
    acc
}

/// `F = ∫_0^∞ sin^{2m+2}(r) r^{−1−2σ} dr`.
pub fn radial_integral<T: Real>(sigma: T, scheme: CSigmaScheme) -> Result<T> {
    let m = sigma.floor();
    let p = to_f64(m) as u32 + 1;
    let two: T = lit(2.0);
    let f = move |r: T| r.sin().powi(2 * p as i32) * r.powf(-T::one() - two * sigma);
    match scheme {
        CSigmaScheme::SeriesPanels => {
            let series = sinc_power_series::<T>(p, 40);
            let head = series.iter().enumerate().fold(T::zero(), |s, (k, &c)| {
                s + c / (two * from_usize(k) + two * from_usize(p as usize) - two * sigma)
            });
            let rule = gauss_legendre::<T>(24);
            let panels = 400;
            let mut mid = gauss_legendre_integrate(f, T::one(), T::PI(), &rule);
            for k in 1..panels {
                let a = T::PI() * from_usize(k);
                mid += gauss_legendre_integrate(f, a, a + T::PI(), &rule);
            }
            let a = T::PI() * from_usize(panels);
            Ok(head + mid + radial_tail(p, sigma, a))
        }
        CSigmaScheme::SubstitutionAdaptive => {
            // r = u^κ flattens the r^{2p−1−2σ} behaviour at the origin
            let kappa = (two * from_usize(p as usize) - two * sigma).recip();
            let g = move |u: T| {
                if u <= T::zero() {
                    return T::zero();
                }
                let r = u.powf(kappa);
                f(r) * kappa * u.powf(kappa - T::one())
            };
            let tol: T = lit(1e-14);
            let head = adaptive(g, &[T::zero(), T::one()], tol, tol, 4000)?.value;
            let half_pi = T::FRAC_PI_2();
            let count = 601;
            let mut breaks = vec![T::one()];
            breaks.extend((1..=count).map(|k| half_pi * from_usize(k)).filter(|&b| b > T::one()));
            let end = *breaks.last().unwrap_or(&T::one());
            let mid = adaptive(f, &breaks, tol, tol, 20_000)?.value;
            Ok(head + mid + radial_tail(p, sigma, end))
        }
    }
}

fn check_sigma<T: Real>(sigma: T) -> Result<()> {
    if !(sigma > T::zero()) || !sigma.is_finite() || sigma == sigma.floor() {
        return Err(invalid(
            "sigma",
            format!("must be positive and non-integer, got {sigma}"),
        ));
    }
    Ok(())
}

/// `C_σ = 2^{2σ−2⌊σ⌋−2} (∫ sin(y₁)^{2⌊σ⌋+2}/|y|^{n+2σ} dy)^{−1}`.
pub fn c_sigma_with<T: Real>(sigma: T, n: usize, scheme: CSigmaScheme) -> Result<T> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    let m = sigma.floor();
    let two: T = lit(2.0);
    let integral = radial_integral(sigma, scheme)? * sphere_moment(n, sigma);
    Ok(two.powf(two * sigma - two * m - two) / integral)
}

pub fn c_sigma<T: Real>(sigma: T, n: usize) -> Result<T> {
    c_sigma_with(sigma, n, CSigmaScheme::SeriesPanels)
}

/// Closed form for `σ ∈ (0, 1)`: `4^σ Γ(n/2+σ) / (2 π^{n/2} |Γ(−σ)|)`.
pub fn c_sigma_closed<T: Real>(sigma: T, n: usize) -> Result<T> {
    if !(sigma > T::zero() && sigma < T::one()) {
        return Err(invalid("sigma", format!("closed form needs σ ∈ (0, 1), got {sigma}")));
    }
    let half_n = lit::<T>(n as f64 / 2.0);
    Ok(lit::<T>(4.0).powf(sigma) * gamma(half_n + sigma)
        / (lit::<T>(2.0) * T::PI().powf(half_n) * gamma(-sigma).abs()))
}
