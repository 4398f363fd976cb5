//! Critical exponents, the scaling functions `g(η)`, `h(η)` and the region atlas.

use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Tolerance of the critical-equality test in [`classify`].
pub const CRITICAL_TOL: f64 = 1e-12;

/// Serialises `+∞` as the string `"inf"` (JSON has no infinity).
pub fn ser_extended<T: Real, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > T::zero() { "inf" } else { "-inf" })
    } else {
        v.serialize(s)
    }
}

fn ser_extended_opt<T: Real, S: Serializer>(
    v: &Option<T>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser_extended(x, s),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentInputs<T> {
    pub n: usize,
    pub gamma: T,
    pub theta: T,
    pub s: Option<T>,
}

impl<T: Real> ExponentInputs<T> {
    /// Requires `n ≥ 1`, `γ ∈ (0, 1]`, `θ ∈ [0, 1/2)`, `s ≥ 0`.
    ///
    /// `γ = 1` is admitted so the regularity exponent can be evaluated at the endpoint.
    pub fn new(n: usize, gamma: T, theta: T, s: Option<T>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "dimension must be at least 1"));
        }
        if !(gamma > T::zero() && gamma <= T::one()) {
            return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
        }
        if !(theta >= T::zero() && theta < lit(0.5)) {
            return Err(invalid("theta", format!("must lie in [0, 1/2), got {theta}")));
        }
        if let Some(s) = s {
            if !(s >= T::zero()) || !s.is_finite() {
                return Err(invalid("s", format!("must be finite and nonnegative, got {s}")));
            }
        }
        Ok(Self { n, gamma, theta, s })
    }

    fn nr(&self) -> T {
        lit(self.n as f64)
    }

    /// `(n − 2)/n`, the memory/Fujita branch boundary in `γ`.
    pub fn gamma_boundary(&self) -> T {
        (self.nr() - lit(2.0)) / self.nr()
    }

    /// `γ > (n − 2)/n`.
    pub fn fujita_branch(&self) -> bool {
        self.gamma > self.gamma_boundary()
    }
}

/// `1 + 2(1 + (1−γ)(1−θ)) / (n − 2 + 2γ(1−θ))₊`, `+∞` when the denominator is not positive.
pub fn p_c<T: Real>(i: &ExponentInputs<T>) -> T {
    let one = T::one();
    let two: T = lit(2.0);
    let den = i.nr() - two + two * i.gamma * (one - i.theta);
    if den <= T::zero() {
        return T::infinity();
    }
    one + two * (one + (one - i.gamma) * (one - i.theta)) / den
}

/// `(6n + 4 − 4(n+1)θ) / (2s + n(3 − 2θ) − 4(1−γ)(1−θ))`.
pub fn p_tilde_c<T: Real>(i: &ExponentInputs<T>) -> Result<T> {
    let s = i
        .s
        .ok_or_else(|| invalid("s", "regularity s is required for p_tilde_c"))?;
    let n = i.nr();
    let one = T::one();
    let num = lit::<T>(6.0) * n + lit(4.0) - lit::<T>(4.0) * (n + one) * i.theta;
    let den = lit::<T>(2.0) * s + n * (lit::<T>(3.0) - lit::<T>(2.0) * i.theta)
        - lit::<T>(4.0) * (one - i.gamma) * (one - i.theta);
    if den <= T::zero() {
        return Err(Error::Domain(format!(
            "p_tilde_c denominator 2s + n(3-2θ) - 4(1-γ)(1-θ) = {den} is not positive \
             for n = {}, γ = {}, θ = {}, s = {s}",
            i.n, i.gamma, i.theta
        )));
    }
    Ok(num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    FujitaType,
    Memory,
    Regularity,
}

impl Binding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Binding::FujitaType => "fujita_type",
            Binding::Memory => "memory",
            Binding::Regularity => "regularity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport<T: Real> {
    pub inputs: ExponentInputs<T>,
    #[serde(serialize_with = "ser_extended")]
    pub p_c: T,
    pub inv_gamma: T,
    #[serde(serialize_with = "ser_extended_opt")]
    pub p_tilde_c: Option<T>,
    #[serde(serialize_with = "ser_extended")]
    pub p_bar: T,
    pub binding: Binding,
}

/// `p̄ = max{1/γ, p_c}`, joined by `p̃_c` when `n ≥ 4` and `s` is given.
pub fn p_bar<T: Real>(i: &ExponentInputs<T>) -> Result<ExponentReport<T>> {
    let pc = p_c(i);
    let inv_gamma = i.gamma.recip();
    let p_tilde = if i.n >= 4 && i.s.is_some() {
        Some(p_tilde_c(i)?)
    } else {
        None
    };
    let (mut p_bar, mut binding) = if i.fujita_branch() {
        (pc.max(inv_gamma), Binding::FujitaType)
    } else {
        (inv_gamma.max(pc), Binding::Memory)
    };
    if let Some(pt) = p_tilde {
        if pt > p_bar {
            p_bar = pt;
            binding = Binding::Regularity;
        }
    }
    Ok(ExponentReport {
        inputs: *i,
        p_c: pc,
        inv_gamma,
        p_tilde_c: p_tilde,
        p_bar,
        binding,
    })
}

fn check_eta<T: Real>(eta: T) -> Result<()> {
    if eta >= T::zero() {
        Ok(())
    } else {
        Err(invalid("eta", format!("must be nonnegative, got {eta}")))
    }
}

/// `g(η) = min{αη + 2, (α+1)η + 2θ, (α+2)η}`, `α = 1 − γ`.
pub fn g_eta<T: Real>(eta: T, gamma: T, theta: T) -> Result<T> {
    check_eta(eta)?;
    let a = T::one() - gamma;
    let two: T = lit(2.0);
    Ok((a * eta + two)
        .min((a + T::one()) * eta + two * theta)
        .min((a + two) * eta))
}

/// Piecewise form of `g`: `(3−γ)η` on `[0, 2θ]`, `(2−γ)η + 2θ` up to `2(1−θ)`, `(1−γ)η + 2` beyond.
pub fn g_eta_piecewise<T: Real>(eta: T, gamma: T, theta: T) -> Result<T> {
    check_eta(eta)?;
    let two: T = lit(2.0);
    Ok(if eta <= two * theta {
        (lit::<T>(3.0) - gamma) * eta
    } else if eta <= two * (T::one() - theta) {
        (two - gamma) * eta + two * theta
    } else {
        (T::one() - gamma) * eta + two
    })
}

/// `h(η) = 1 + g(η)/(n + η − g(η))`, `+∞` when the denominator is not positive.
pub fn h_eta<T: Real>(eta: T, n: usize, gamma: T, theta: T) -> Result<T> {
    let g = g_eta(eta, gamma, theta)?;
    let den = lit::<T>(n as f64) + eta - g;
    Ok(if den <= T::zero() {
        T::infinity()
    } else {
        T::one() + g / den
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HArgmax<T: Real> {
    /// Maximiser; `+∞` when `h` only approaches its supremum as `η → ∞`.
    #[serde(serialize_with = "ser_extended")]
    pub eta: T,
    #[serde(serialize_with = "ser_extended")]
    pub h: T,
    pub attained: bool,
}

/// Closed-form maximiser of `h`: `η* = 2(1−θ)` when `γ > (n−2)/n`, otherwise `h`
/// is nondecreasing and `sup h = 1/γ` as `η → ∞`.
pub fn h_argmax<T: Real>(n: usize, gamma: T, theta: T) -> Result<HArgmax<T>> {
    let i = ExponentInputs::new(n, gamma, theta, None)?;
    if i.fujita_branch() {
        let eta = lit::<T>(2.0) * (T::one() - theta);
        Ok(HArgmax {
            eta,
            h: h_eta(eta, n, gamma, theta)?,
            attained: true,
        })
    } else {
        Ok(HArgmax {
            eta: T::infinity(),
            h: gamma.recip(),
            attained: false,
        })
    }
}

/// Dense grid search for the maximiser of `h` on `[0, eta_max]` with spacing `step`.
///
/// Ties keep the first maximiser.
pub fn h_grid_argmax<T: Real>(
    n: usize,
    gamma: T,
    theta: T,
    eta_max: T,
    step: T,
) -> Result<(T, T)> {
    if !(step > T::zero()) || !(eta_max > T::zero()) {
        return Err(invalid("step", "grid step and extent must be positive"));
    }
    let count = to_f64(eta_max / step).round() as usize;
    let mut best = (T::zero(), h_eta(T::zero(), n, gamma, theta)?);
    for k in 1..=count {
        let eta = step * lit(k as f64);
        let h = h_eta(eta, n, gamma, theta)?;
        if h > best.1 {
            best = (eta, h);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification<T: Real> {
    pub p: T,
    #[serde(serialize_with = "ser_extended")]
    pub p_bar: T,
    pub binding: Binding,
    pub regime: Regime,
    /// Critical case `p = p̄` is covered by nonexistence iff `γ > (n−2)/n`.
    pub critical_case_covered: bool,
    /// Nonexistence of global solutions is predicted for this `p`.
    pub nonexistence: bool,
}

pub fn classify<T: Real>(i: &ExponentInputs<T>, p: T) -> Result<Classification<T>> {
    let report = p_bar(i)?;
    let tol = lit::<T>(CRITICAL_TOL) * T::one().max(report.p_bar.abs());
    let regime = if report.p_bar.is_infinite() || p < report.p_bar - tol {
        Regime::Subcritical
    } else if (p - report.p_bar).abs() <= tol {
        Regime::Critical
    } else {
        Regime::Supercritical
    };
    let covered = i.fujita_branch();
    Ok(Classification {
        p,
        p_bar: report.p_bar,
        binding: report.binding,
        regime,
        critical_case_covered: covered,
        nonexistence: regime == Regime::Subcritical || (regime == Regime::Critical && covered),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtlasRow<T: Real> {
    pub gamma: T,
    #[serde(serialize_with = "ser_extended")]
    pub p_c: T,
    pub inv_gamma: T,
    #[serde(serialize_with = "ser_extended_opt", skip_serializing_if = "Option::is_none")]
    pub p_tilde_c: Option<T>,
    #[serde(serialize_with = "ser_extended")]
    pub p_bar: T,
    pub binding: Binding,
    /// `p̃_c > max(p_c, 1/γ)`.
    pub tilde_dominant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atlas<T: Real> {
    pub n: usize,
    pub theta: T,
    pub s: Option<T>,
    pub rows: Vec<AtlasRow<T>>,
}

/// `count` midpoints of `(0, 1)`: `γ_i = (i + 1/2)/count`.
pub fn default_gamma_grid<T: Real>(count: usize) -> Vec<T> {
    (0..count)
        .map(|i| lit::<T>((i as f64 + 0.5) / count as f64))
        .collect()
}

pub fn region_atlas<T: Real>(n: usize, theta: T, s: Option<T>, gamma_grid: &[T]) -> Result<Atlas<T>> {
    let rows = gamma_grid
        .iter()
        .map(|&g| {
            let r = p_bar(&ExponentInputs::new(n, g, theta, s)?)?;
            let tilde_dominant = r
                .p_tilde_c
                .map(|pt| pt > r.p_c.max(r.inv_gamma))
                .unwrap_or(false);
            Ok(AtlasRow {
                gamma: g,
                p_c: r.p_c,
                inv_gamma: r.inv_gamma,
                p_tilde_c: r.p_tilde_c,
                p_bar: r.p_bar,
                binding: r.binding,
                tilde_dominant,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Atlas { n, theta, s, rows })
}

fn fmt_num<T: Real>(v: T) -> String {
    let x = to_f64(v);
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:?}")
    }
}

impl<T: Real> Atlas<T> {
    /// The `p_tilde_c` column exists only when the exponent was evaluated (`n ≥ 4`, `s` given).
    pub fn has_tilde(&self) -> bool {
        self.rows.iter().any(|r| r.p_tilde_c.is_some())
    }

    pub fn to_csv(&self) -> String {
        let tilde = self.has_tilde();
        let mut out = String::from(if tilde {
            "gamma,p_c,inv_gamma,p_tilde_c,p_bar,binding\n"
        } else {
            "gamma,p_c,inv_gamma,p_bar,binding\n"
        });
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", fmt_num(r.gamma), fmt_num(r.p_c), fmt_num(r.inv_gamma));
            if tilde {
                let _ = write!(out, ",{}", r.p_tilde_c.map(fmt_num).unwrap_or_default());
            }
            let _ = writeln!(out, ",{},{}", fmt_num(r.p_bar), r.binding.as_str());
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    /// Indices of rows where `p̃_c` dominates.
    pub fn tilde_region(&self) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.tilde_dominant)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Fujita exponent `1 + 2/n`.
pub fn p_fujita<T: Real>(n: usize) -> Result<T> {
    if n == 0 {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    Ok(T::one() + lit::<T>(2.0) / lit(n as f64))
}

/// Strauss exponent: larger root of `(n−1)p² − (n+1)p − 2 = 0`; `+∞` for `n = 1`.
pub fn p_strauss<T: Real>(n: usize) -> Result<T> {
    if n == 0 {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    if n == 1 {
        return Ok(T::infinity());
    }
    let a: T = lit((n - 1) as f64);
    let b: T = lit((n + 1) as f64);
    let disc = b * b + lit::<T>(8.0) * a;
    // b > 0 so (b + √disc)/2 is free of cancellation
    let q = (b + disc.sqrt()) / lit(2.0);
    Ok(q / a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inp(n: usize, g: f64, th: f64, s: Option<f64>) -> ExponentInputs<f64> {
        ExponentInputs::new(n, g, th, s).unwrap()
    }

    #[test]
    fn p_c_examples() {
        assert!((p_c(&inp(2, 0.5, 0.0, None)) - 4.0).abs() < 1e-14);
        assert!(p_c(&inp(1, 0.1, 0.0, None)).is_infinite());
        assert!((p_c(&inp(4, 0.5, 0.0, None)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn p_tilde_examples() {
        assert!((p_tilde_c(&inp(4, 1.0, 0.0, Some(0.0))).unwrap() - 7.0 / 3.0).abs() < 1e-14);
        // 10 / (2·2 + 3 − 2)
        assert!((p_tilde_c(&inp(1, 0.5, 0.0, Some(2.0))).unwrap() - 2.0).abs() < 1e-14);
        assert!(p_tilde_c(&inp(1, 0.5, 0.0, None)).is_err());
        let found = (1..100).any(|k| {
            let g = 0.9 + 0.001 * k as f64;
            let i = inp(4, g, 0.01, Some(2.0));
            p_tilde_c(&i).unwrap() > p_c(&i)
        });
        assert!(found);
    }

    #[test]
    fn p_tilde_denominator_error_names_inputs() {
        // n = 1, θ = 0, γ small, s = 0: 3 − 4(1−γ) < 0
        let e = p_tilde_c(&inp(1, 0.1, 0.0, Some(0.0))).unwrap_err();
        assert!(e.to_string().contains("denominator"));
    }

    #[test]
    fn p_bar_examples() {
        let r = p_bar(&inp(3, 1.0 / 3.0, 0.2, None)).unwrap();
        assert!((r.p_c - 3.0).abs() < 1e-12 && (r.inv_gamma - 3.0).abs() < 1e-12);
        for g in [0.1, 0.5, 0.9] {
            assert_eq!(p_bar(&inp(2, g, 0.1, None)).unwrap().binding, Binding::FujitaType);
        }
        let r = p_bar(&inp(6, 0.2, 0.0, None)).unwrap();
        assert!((r.p_bar - 5.0).abs() < 1e-14);
        assert_eq!(r.binding, Binding::Memory);
        let r = p_bar(&inp(4, 0.95, 0.01, Some(2.0))).unwrap();
        assert_eq!(r.binding, Binding::Regularity);
        let r = p_bar(&inp(2, 0.95, 0.01, Some(2.0))).unwrap();
        assert!(r.p_tilde_c.is_none());
    }

    #[test]
    fn report_serialises_infinity() {
        let r = p_bar(&inp(1, 0.5, 0.1, None)).unwrap();
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["p_c"], "inf");
        assert_eq!(j["p_bar"], "inf");
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_eta(0.0, 0.3, 0.2).unwrap(), 0.0);
        let (g, th) = (0.3_f64, 0.2_f64);
        assert!(((3.0 - g) * 2.0 * th - ((2.0 - g) * 2.0 * th + 2.0 * th)).abs() < 1e-15);
        let e = 2.0 * (1.0 - th);
        assert!(((2.0 - g) * e + 2.0 * th - ((1.0 - g) * e + 2.0)).abs() < 1e-14);
        assert!(g_eta(-1.0, 0.3, 0.2).is_err());
    }

    #[test]
    fn h_examples() {
        for &(n, g, th) in &[(2, 0.5, 0.0), (3, 0.6, 0.25), (5, 0.9, 0.4)] {
            let pc = p_c(&inp(n, g, th, None));
            let h: f64 = h_eta(2.0 * (1.0 - th), n, g, th).unwrap();
            assert!((h - pc).abs() < 1e-12);
        }
        let h: f64 = h_eta(1e4, 3, 0.6, 0.25).unwrap();
        assert!((h - 1.0 / 0.6).abs() < 1e-2);
        let (eta, _): (f64, f64) = h_grid_argmax(6, 0.25, 0.1, 50.0, 1e-2).unwrap();
        assert!((eta - 50.0).abs() < 1e-9);
        let m = h_argmax(6, 0.25_f64, 0.1).unwrap();
        assert!(!m.attained && m.eta.is_infinite());
    }

    #[test]
    fn grid_argmax_matches_closed_form() {
        let (n, g, th) = (3, 0.6, 0.25);
        let (eta, h): (f64, f64) = h_grid_argmax(n, g, th, 50.0, 1e-4).unwrap();
        let m = h_argmax(n, g, th).unwrap();
        assert!((eta - m.eta).abs() <= 1e-4 + 1e-12);
        assert!((h - m.h).abs() < 1e-8);
    }

    #[test]
    fn classify_examples() {
        let i = inp(2, 0.5, 0.0, None);
        assert_eq!(classify(&i, 3.0).unwrap().regime, Regime::Subcritical);
        let c = classify(&i, 4.0).unwrap();
        assert_eq!(c.regime, Regime::Critical);
        assert!(c.critical_case_covered && c.nonexistence);
        assert_eq!(classify(&i, 10.0).unwrap().regime, Regime::Supercritical);
        let c = classify(&inp(6, 0.2, 0.0, None), 5.0).unwrap();
        assert_eq!(c.regime, Regime::Critical);
        assert!(!c.critical_case_covered && !c.nonexistence);
    }

    #[test]
    fn atlas_examples() {
        let grid = default_gamma_grid::<f64>(512);
        let a = region_atlas(4, 0.01, Some(2.0), &grid).unwrap();
        assert_eq!(a.rows.len(), 512);
        let region = a.tilde_region();
        assert!(!region.is_empty());
        assert_eq!(*region.last().unwrap(), 511);
        assert!(region.windows(2).all(|w| w[1] == w[0] + 1));
        assert!(a.to_csv().starts_with("gamma,p_c,inv_gamma,p_tilde_c,p_bar,binding\n"));
        assert_eq!(a.to_csv(), region_atlas(4, 0.01, Some(2.0), &grid).unwrap().to_csv());
        let b = region_atlas(2, 0.01, Some(2.0), &grid).unwrap();
        assert!(!b.has_tilde());
        assert!(!b.to_csv().contains("p_tilde_c"));
        let edge = region_atlas(4, 0.3_f64, None, &[0.5]).unwrap();
        assert!((edge.rows[0].p_c - edge.rows[0].inv_gamma).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(json["rows"].as_array().unwrap().len(), 512);
    }

    #[test]
    fn historical_exponents() {
        assert_eq!(p_fujita::<f64>(2).unwrap(), 2.0);
        assert!((p_strauss::<f64>(3).unwrap() - (1.0 + 2.0_f64.sqrt())).abs() < 1e-14);
        assert!(p_strauss::<f64>(1).unwrap().is_infinite());
        assert!(p_fujita::<f64>(0).is_err());
        for n in 2..10 {
            let p = p_strauss::<f64>(n).unwrap();
            let nf = n as f64;
            assert!(((nf - 1.0) * p * p - (nf + 1.0) * p - 2.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn branch_boundary_identity(n in 3usize..9, th in 0.0..0.49f64) {
            let g = (n as f64 - 2.0) / n as f64;
            let pc = p_c(&inp(n, g, th, None));
            prop_assert!((pc - n as f64 / (n as f64 - 2.0)).abs() < 1e-12);
        }

        #[test]
        fn g_forms_agree(eta in 0.0..20.0f64, g in 0.01..0.99f64, th in 0.0..0.499f64) {
            let a = g_eta(eta, g, th).unwrap();
            let b = g_eta_piecewise(eta, g, th).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }

        #[test]
        fn h_monotone_on_memory_branch(n in 3usize..9, frac in 0.05..1.0f64, th in 0.0..0.49f64) {
            let g = frac * (n as f64 - 2.0) / n as f64;
            let mut prev = h_eta(0.0, n, g, th).unwrap();
            for k in 1..400 {
                let h = h_eta(0.125 * k as f64, n, g, th).unwrap();
                prop_assert!(h >= prev - 1e-12);
                prev = h;
            }
        }

        #[test]
        fn p_c_decreasing(n in 1usize..8, g in 0.05..0.9f64, th in 0.0..0.49f64) {
            let a = p_c(&inp(n, g, th, None));
            let b = p_c(&inp(n, g + 0.05, th, None));
            let c = p_c(&inp(n + 1, g, th, None));
            if b.is_finite() { prop_assert!(b < a); }
            if c.is_finite() { prop_assert!(c < a); }
        }
    }
}
