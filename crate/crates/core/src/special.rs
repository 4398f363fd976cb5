//! Gamma and Beta functions (Lanczos, g = 7, nine coefficients).

use crate::scalar::{lit, Real};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_series(x: f64) -> f64 {
    LANCZOS
        .iter()
        .enumerate()
        .skip(1)
        .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + i as f64))
}

fn gamma_f64(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_f64(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * lanczos_series(x)
    }
}

fn ln_gamma_f64(x: f64) -> f64 {
    if x < 0.5 {
        let s = (std::f64::consts::PI * x).sin().abs();
        std::f64::consts::PI.ln() - s.ln() - ln_gamma_f64(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + lanczos_series(x).ln()
    }
}

/// Euler's Gamma function. Poles at non-positive integers return ±inf.
pub fn gamma<T: Real>(x: T) -> T {
    let xf = x.to_f64().unwrap_or(f64::NAN);
    if xf <= 0.0 && xf == xf.floor() {
        return T::infinity();
    }
    lit(gamma_f64(xf))
}

/// `ln |Γ(x)|`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    lit(ln_gamma_f64(x.to_f64().unwrap_or(f64::NAN)))
}

/// Beta function `B(a, b)` for positive arguments.
pub fn beta<T: Real>(a: T, b: T) -> T {
    let (af, bf) = (
        a.to_f64().unwrap_or(f64::NAN),
        b.to_f64().unwrap_or(f64::NAN),
    );
    lit((ln_gamma_f64(af) + ln_gamma_f64(bf) - ln_gamma_f64(af + bf)).exp())
}

/// `Γ(a) / Γ(b)` evaluated through log-gammas, for positive arguments.
pub fn gamma_ratio<T: Real>(a: T, b: T) -> T {
    let (af, bf) = (
        a.to_f64().unwrap_or(f64::NAN),
        b.to_f64().unwrap_or(f64::NAN),
    );
    if af < 150.0 && bf < 150.0 {
        lit(gamma_f64(af) / gamma_f64(bf))
    } else {
        lit((ln_gamma_f64(af) - ln_gamma_f64(bf)).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_and_half_integer_values() {
        assert!((gamma(5.0_f64) - 24.0).abs() < 1e-12);
        assert!((gamma(0.5_f64) - std::f64::consts::PI.sqrt()).abs() < 1e-14);
        assert!((gamma(1.5_f64) - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-14);
        // Γ(4.5) = 3.5 · 2.5 · 1.5 · 0.5 · √π
        let g45 = 3.5 * 2.5 * 1.5 * 0.5 * std::f64::consts::PI.sqrt();
        assert!((gamma(4.5_f64) / g45 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reflection_branch() {
        // Γ(-1/2) = -2√π
        let v = gamma(-0.5_f64);
        assert!((v + 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!(gamma(-2.0_f64).is_infinite());
    }

    #[test]
    fn beta_matches_integral_identity() {
        // B(0.5, 2) = 4/3
        assert!((beta(0.5_f64, 2.0) - 4.0 / 3.0).abs() < 1e-13);
        assert!((ln_gamma(10.0_f64) - 362_880.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_precision() {
        assert!((gamma(5.0_f32) - 24.0).abs() < 1e-4);
    }
}
