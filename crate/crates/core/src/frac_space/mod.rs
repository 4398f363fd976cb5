//! Fractional Laplacian `(−Δ)^σ`: spectral on periodic grids, singular integral
//! at points, plus the helpers built on top of them.

mod constant;
mod grid;
mod profiles;
mod singular;

pub use constant::{
    c_sigma, c_sigma_closed, c_sigma_with, radial_integral, sinc_power_series, sphere_area,
    sphere_moment, CSigmaScheme,
};
pub use grid::{Field, SpaceGrid, SpectralPlan};
pub use profiles::{
    bracket_fn, bracket_laplacian_closed, japanese, rescale_test_fn, Bracket, BracketSeries,
    Constant, Cosine, Gaussian, Plateau, Profile, Rescaled,
};
pub use singular::{frac_laplacian_singular, SingularEstimate, SingularIntegrator};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::line_fit;
use crate::scalar::{lit, Real};

fn check_order<T: Real>(sigma: T) -> Result<()> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// `(−Δ)^σ f` by the Fourier multiplier `|k|^{2σ}`; the zero mode maps to zero for `σ > 0`.
pub fn frac_laplacian_spectral<T: Real>(f: &Field<T>, sigma: T) -> Result<Field<T>> {
    let plan = SpectralPlan::new(f.grid().clone());
    frac_laplacian_spectral_with(&plan, f, sigma)
}

/// As [`frac_laplacian_spectral`] with a reusable plan.
pub fn frac_laplacian_spectral_with<T: Real>(
    plan: &SpectralPlan<T>,
    f: &Field<T>,
    sigma: T,
) -> Result<Field<T>> {
    check_order(sigma)?;
    if sigma == T::zero() {
        return Ok(f.clone());
    }
    plan.apply_multiplier(f, |k2| {
        if k2 == T::zero() {
            T::zero()
        } else {
            k2.powf(sigma)
        }
    })
}

/// Least-squares fit of `log|(−Δ)^σ⟨x⟩^{−q}|` against `log⟨x⟩`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    /// `−(q + 2σ)` for integer `σ`, `−(n + 2s)` otherwise (`s` the fractional part).
    pub target: T,
    pub radii: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> DecayFit<T> {
    pub fn deviation(&self) -> T {
        (self.slope - self.target).abs()
    }
}

/// Decay rate of `(−Δ)^σ⟨x⟩^{−q}` along the first axis in dimension `n`.
///
/// Requires radii `> 1` spanning a ratio of at least 30; rejects samples whose
/// magnitude is not monotonically decreasing.
pub fn decay_exponent_probe<T: Real>(sigma: T, q: T, n: usize, radii: &[T]) -> Result<DecayFit<T>> {
    check_order(sigma)?;
    if !(q > T::zero()) {
        return Err(invalid("q", format!("must be positive, got {q}")));
    }
    if radii.len() < 3 {
        return Err(invalid("radii", "need at least three radii"));
    }
    if radii.iter().any(|&r| !(r > T::one()) || !r.is_finite()) {
        return Err(invalid("radii", "every radius must be finite and exceed 1"));
    }
    let lo = radii.iter().fold(T::infinity(), |a, &r| a.min(r));
    let hi = radii.iter().fold(T::zero(), |a, &r| a.max(r));
    if hi / lo < lit(30.0) {
        return Err(invalid("radii", format!("span ratio {} is below 30", hi / lo)));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let m = sigma.floor();
    let s = sigma - m;
    let series = BracketSeries::single(q).power(n, m.to_u32().unwrap_or(0));
    let point = |r: T| {
        let mut x = vec![T::zero(); n];
        x[0] = r;
        x
    };
    let values: Vec<T> = if s == T::zero() {
        radii.iter().map(|&r| series.value(&point(r))).collect()
    } else {
        let integ = SingularIntegrator::new(s, n, lit::<T>(1e6) * hi)?;
        radii
            .iter()
            .map(|&r| integ.eval(&series, &point(r)).map(|e| e.value))
            .collect::<Result<_>>()?
    };
    let mags: Vec<T> = values.iter().map(|v| v.abs()).collect();
    if mags.windows(2).any(|w| !(w[1] < w[0])) || mags.iter().any(|&v| v == T::zero()) {
        return Err(Error::FitRejected(
            "sampled magnitudes are not strictly decreasing".into(),
        ));
    }
    let xs: Vec<T> = radii.iter().map(|&r| japanese(&[r]).ln()).collect();
    let ys: Vec<T> = mags.iter().map(|v| v.ln()).collect();
    let fit = line_fit(&xs, &ys)?;
    let two: T = lit(2.0);
    let target = if s == T::zero() {
        -(q + two * sigma)
    } else {
        -(lit::<T>(n as f64) + two * s)
    };
    Ok(DecayFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        target,
        radii,
        values,
    })
}

/// Checks `(−Δ)^σ[Φ(·/R)](x) = R^{−2σ}((−Δ)^σΦ)(x/R)` spectrally.
///
/// `Φ` is sampled on `grid` and on a grid of period `R·L` with the same point
/// count, so the two discrete problems correspond node by node. Returns the
/// maximum discrepancy relative to the sup norm of the reference.
pub fn spectral_rescaling_discrepancy<T: Real, P: Profile<T>>(
    phi: &P,
    grid: &SpaceGrid<T>,
    radius: T,
    sigma: T,
) -> Result<T> {
    check_order(sigma)?;
    let big = SpaceGrid::new(grid.dim(), grid.points_per_axis(), grid.period() * radius)?;
    let scaled = rescale_test_fn(phi, radius)?;
    let base = frac_laplacian_spectral(&Field::from_real_fn(grid.clone(), |x| phi.value(x)), sigma)?;
    let wide = frac_laplacian_spectral(&Field::from_real_fn(big, |x| scaled.value(x)), sigma)?;
    let factor = radius.powf(-lit::<T>(2.0) * sigma);
    let scale = base.sup_norm() * factor;
    let worst = base
        .values()
        .iter()
        .zip(wide.values())
        .fold(T::zero(), |m, (a, b)| m.max((*a * factor - *b).norm()));
    Ok(if scale > T::zero() { worst / scale } else { worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;
    use proptest::prelude::*;

    fn random_field(grid: &SpaceGrid<f64>, seed: &[f64]) -> Field<f64> {
        Field::from_real_fn(grid.clone(), |x| {
            seed.iter().enumerate().fold(0.0, |s, (k, c)| {
                s + c * ((k as f64 + 1.0) * x[0] * std::f64::consts::TAU / grid.period()).cos()
            }) + (-x[0] * x[0]).exp()
        })
    }

    #[test]
    fn spectral_on_a_single_mode() {
        let g = SpaceGrid::new(1, 64, std::f64::consts::TAU).unwrap();
        let f = Field::from_real_fn(g, |x| (3.0 * x[0]).cos());
        let out = frac_laplacian_spectral(&f, 0.75).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a.re - 3f64.powf(1.5) * b.re).abs() < 1e-11);
        }
        assert!(frac_laplacian_spectral(&f, -0.1).is_err());
        let same = frac_laplacian_spectral(&f, 0.0).unwrap();
        assert_eq!(same.values(), f.values());
    }

    #[test]
    fn zero_mode_is_annihilated() {
        let g = SpaceGrid::new(2, 16, 10.0).unwrap();
        let f = Field::from_real_fn(g, |_| 2.5);
        let out = frac_laplacian_spectral(&f, 0.4).unwrap();
        assert!(out.sup_norm() < 1e-12);
    }

    #[test]
    fn singular_matches_spectral_on_cosines() {
        for &s in &[0.3, 0.5, 0.7] {
            let c = Cosine {
                amplitude: 1.0,
                wavenumber: 2.0,
            };
            for &x in &[0.0, 0.4] {
                let e = frac_laplacian_singular(&c, s, &[x], 2000.0).unwrap();
                let exact: f64 = 2f64.powf(2.0 * s) * (2.0 * x).cos();
                assert!(
                    (e.value - exact).abs() < 0.01 * exact.abs(),
                    "s={s} x={x}: {} vs {exact}",
                    e.value
                );
            }
        }
    }

    #[test]
    fn singular_gaussian_in_two_and_three_dimensions() {
        // spectral reference on a large periodic box
        for n in [2usize, 3] {
            let g = Gaussian {
                amplitude: 1.0,
                width: 1.0,
            };
            let pts = if n == 2 { 256 } else { 64 };
            let grid = SpaceGrid::new(n, pts, 24.0).unwrap();
            let f = Field::from_real_fn(grid.clone(), |x| g.value(x));
            let out = frac_laplacian_spectral(&f, 0.5).unwrap();
            let centre = (0..n).fold(0, |acc, _| acc * pts + pts / 2);
            let reference: f64 = out.values()[centre].re;
            let e = frac_laplacian_singular(&g, 0.5, &vec![0.0; n], 1e4).unwrap();
            assert!(
                (e.value - reference).abs() < 0.01 * reference.abs(),
                "n={n}: {} vs {reference}",
                e.value
            );
        }
    }

    #[test]
    fn bracket_against_large_box_spectral() {
        let q = 1.5;
        let grid = SpaceGrid::new(1, 16384, 2048.0).unwrap();
        let f = Field::from_real_fn(grid.clone(), |x| bracket_fn(x, q));
        let out = frac_laplacian_spectral(&f, 0.4).unwrap();
        let reference: f64 = out.values()[8192].re;
        let e = frac_laplacian_singular(&Bracket::new(q).unwrap(), 0.4, &[0.0], 1e6).unwrap();
        assert!(
            (e.value - reference).abs() < 0.01 * reference.abs(),
            "{} vs {reference}",
            e.value
        );
    }

    #[test]
    fn undeclared_tail_is_rejected() {
        let grow = BracketSeries {
            terms: vec![(1.0, -1.0)],
        };
        let r = frac_laplacian_singular(&grow, 0.5, &[0.0], 100.0);
        assert!(matches!(r, Err(Error::DivergentTail(_))));
    }

    #[test]
    fn decay_rates() {
        let radii = [10.0, 20.0, 40.0, 80.0, 160.0, 320.0];
        let fit = decay_exponent_probe(1.0, 3.0, 1, &radii).unwrap();
        assert!(fit.deviation() < 0.05, "{fit:?}");
        let radii = [200.0, 600.0, 2000.0, 6000.0, 20000.0];
        let fit = decay_exponent_probe(0.5, 3.0, 1, &radii).unwrap();
        assert_eq!(fit.target, -2.0);
        assert!(fit.deviation() < 0.05, "{fit:?}");
    }

    #[test]
    fn decay_probe_preconditions() {
        assert!(decay_exponent_probe(0.5, 3.0, 1, &[2.0, 4.0, 8.0]).is_err());
        assert!(decay_exponent_probe(0.5, 3.0, 1, &[0.5, 4.0, 80.0]).is_err());
        assert!(decay_exponent_probe(0.5, -1.0, 1, &[2.0, 4.0, 80.0]).is_err());
    }

    #[test]
    fn rescaling_is_exact_spectrally() {
        let grid = SpaceGrid::new(1, 128, 16.0).unwrap();
        let g = Gaussian {
            amplitude: 1.0,
            width: 1.0,
        };
        for &r in &[1.0, 2.0, 7.5] {
            let d = spectral_rescaling_discrepancy(&g, &grid, r, 0.6).unwrap();
            assert!(d < 1e-12, "R={r}: {d}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn composition(a in 0.05f64..1.5, b in 0.05f64..1.5, seed in prop::collection::vec(-1.0f64..1.0, 4)) {
            let g = SpaceGrid::new(1, 64, 20.0).unwrap();
            let f = random_field(&g, &seed);
            let lhs = frac_laplacian_spectral(&frac_laplacian_spectral(&f, a).unwrap(), b).unwrap();
            let rhs = frac_laplacian_spectral(&f, a + b).unwrap();
            let scale = rhs.sup_norm().max(1.0);
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((x - y).norm() < 1e-9 * scale);
            }
        }

        #[test]
        fn self_adjoint_and_nonnegative(s in 0.05f64..2.0, a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4)) {
            let g = SpaceGrid::new(1, 64, 20.0).unwrap();
            let f = random_field(&g, &a);
            let h = random_field(&g, &b);
            let lf = frac_laplacian_spectral(&f, s).unwrap();
            let lh = frac_laplacian_spectral(&h, s).unwrap();
            let ip1: Complex<f64> = lf.inner(&h).unwrap();
            let ip2: Complex<f64> = f.inner(&lh).unwrap();
            prop_assert!((ip1 - ip2).norm() < 1e-9 * (1.0 + ip1.norm()));
            let q = lf.inner(&f).unwrap();
            prop_assert!(q.re > -1e-10);
        }

        #[test]
        fn square_root_consistency(s in 0.05f64..1.0, a in prop::collection::vec(-1.0f64..1.0, 4)) {
            let g = SpaceGrid::new(1, 64, 20.0).unwrap();
            let f = random_field(&g, &a);
            let lf = frac_laplacian_spectral(&f, s).unwrap();
            let half = frac_laplacian_spectral(&f, s / 2.0).unwrap();
            let lhs = lf.inner(&f).unwrap().re;
            let rhs = half.l2_norm().powi(2);
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs));
        }
    }
}
