//! Pointwise-evaluable spatial profiles with closed-form Laplacians.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::scalar::{lit, Real};

fn norm_sq<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |s, &v| s + v * v)
}

fn dim_of<T: Real>(x: &[T]) -> T {
    lit(x.len() as f64)
}

/// A smooth function on `ℝⁿ` (`n = x.len()`) with enough structure for the
/// singular-integral evaluator and the weak-form quadrature.
pub trait Profile<T: Real>: Send + Sync {
    fn value(&self, x: &[T]) -> T;

    /// `−Δf(x)`.
    fn neg_laplacian(&self, x: &[T]) -> T;

    /// `Δ²f(x)`, when available in closed form.
    fn bilaplacian(&self, _x: &[T]) -> Option<T> {
        None
    }

    /// `sup{|f(y)| : |y| ≥ r}`; `None` when the profile declares no bound.
    fn sup_outside(&self, r: T) -> Option<T>;

    /// Length over which the profile varies.
    fn length_scale(&self) -> T {
        T::one()
    }

    /// Oscillation length; quadrature panels are kept below a quarter of it.
    fn oscillation(&self) -> Option<T> {
        None
    }
}

impl<T: Real, P: Profile<T> + ?Sized> Profile<T> for &P {
    fn value(&self, x: &[T]) -> T {
        (**self).value(x)
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        (**self).neg_laplacian(x)
    }
    fn bilaplacian(&self, x: &[T]) -> Option<T> {
        (**self).bilaplacian(x)
    }
    fn sup_outside(&self, r: T) -> Option<T> {
        (**self).sup_outside(r)
    }
    fn length_scale(&self) -> T {
        (**self).length_scale()
    }
    fn oscillation(&self) -> Option<T> {
        (**self).oscillation()
    }
}

/// `⟨x⟩ = (1 + |x|²)^{1/2}`.
pub fn japanese<T: Real>(x: &[T]) -> T {
    (T::one() + norm_sq(x)).sqrt()
}

/// `⟨x⟩^{−q}`.
pub fn bracket_fn<T: Real>(x: &[T], q: T) -> T {
    (T::one() + norm_sq(x)).powf(-q / lit(2.0))
}

/// `(−Δ)⟨x⟩^{−q} = −q(q+2−n)⟨x⟩^{−q−2} + q(q+2)⟨x⟩^{−q−4}`, `n = x.len()`.
pub fn bracket_laplacian_closed<T: Real>(x: &[T], q: T) -> T {
    let two: T = lit(2.0);
    let b = japanese(x);
    -q * (q + two - dim_of(x)) * b.powf(-q - two) + q * (q + two) * b.powf(-q - lit(4.0))
}

/// Decaying test function `Φ(x) = ⟨x⟩^{−q}`, `q > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bracket<T> {
    pub q: T,
}

impl<T: Real> Bracket<T> {
    pub fn new(q: T) -> Result<Self> {
        if q > T::zero() && q.is_finite() {
            Ok(Self { q })
        } else {
            Err(invalid("q", format!("must be positive, got {q}")))
        }
    }

    /// Requires the integrability condition `q > n`.
    pub fn integrable(q: T, n: usize) -> Result<Self> {
        if q > lit(n as f64) {
            Self::new(q)
        } else {
            Err(invalid("q", format!("must exceed n = {n} for integrability, got {q}")))
        }
    }
}

impl<T: Real> Profile<T> for Bracket<T> {
    fn value(&self, x: &[T]) -> T {
        bracket_fn(x, self.q)
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        bracket_laplacian_closed(x, self.q)
    }
    fn bilaplacian(&self, x: &[T]) -> Option<T> {
        Some(
            BracketSeries::single(self.q)
                .neg_laplacian_series(x.len())
                .neg_laplacian_series(x.len())
                .value(x),
        )
    }
    fn sup_outside(&self, r: T) -> Option<T> {
        Some(bracket_fn(&[r.max(T::zero())], self.q))
    }
}

/// Finite sum `Σ c_i ⟨x⟩^{−a_i}`, closed under `−Δ` in a fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketSeries<T> {
    pub terms: Vec<(T, T)>,
}

impl<T: Real> BracketSeries<T> {
    pub fn single(q: T) -> Self {
        Self {
            terms: vec![(T::one(), q)],
        }
    }

    /// Termwise `−Δ⟨x⟩^{−a} = a(n−a−2)⟨x⟩^{−a−2} + a(a+2)⟨x⟩^{−a−4}` in dimension `n`.
    pub fn neg_laplacian_series(&self, n: usize) -> Self {
        let nf: T = lit(n as f64);
        let two: T = lit(2.0);
        let mut out: Vec<(T, T)> = Vec::new();
        let mut push = |c: T, a: T| {
            if c == T::zero() {
                return;
            }
            match out.iter_mut().find(|t| t.1 == a) {
                Some(t) => t.0 += c,
                None => out.push((c, a)),
            }
        };
        for &(c, a) in &self.terms {
            push(c * a * (nf - a - two), a + two);
            push(c * a * (a + two), a + lit(4.0));
        }
        out.retain(|t| t.0 != T::zero());
        Self { terms: out }
    }

    /// `(−Δ)^k` of the series.
    pub fn power(&self, n: usize, k: u32) -> Self {
        (0..k).fold(self.clone(), |s, _| s.neg_laplacian_series(n))
    }

    pub fn value(&self, x: &[T]) -> T {
        let b = japanese(x);
        self.terms
            .iter()
            .fold(T::zero(), |s, &(c, a)| s + c * b.powf(-a))
    }
}

impl<T: Real> Profile<T> for BracketSeries<T> {
    fn value(&self, x: &[T]) -> T {
        BracketSeries::value(self, x)
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        self.neg_laplacian_series(x.len()).value(x)
    }
    fn bilaplacian(&self, x: &[T]) -> Option<T> {
        Some(self.power(x.len(), 2).value(x))
    }
    fn sup_outside(&self, r: T) -> Option<T> {
        if self.terms.iter().any(|t| t.1 < T::zero()) {
            return None;
        }
        let b = japanese(&[r.max(T::zero())]);
        Some(self.terms.iter().fold(T::zero(), |s, &(c, a)| s + c.abs() * b.powf(-a)))
    }
}

/// `x ↦ Φ(x/R)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rescaled<P, T> {
    pub inner: P,
    pub radius: T,
}

impl<T: Real, P: Profile<T>> Rescaled<P, T> {
    fn scaled(&self, x: &[T]) -> Vec<T> {
        x.iter().map(|&v| v / self.radius).collect()
    }
}

/// `φ_R(x) = Φ(x/R)`; `R ≥ 1`, with `R = 1` the identity.
pub fn rescale_test_fn<T: Real, P: Profile<T>>(phi: P, radius: T) -> Result<Rescaled<P, T>> {
    if !(radius >= T::one()) || !radius.is_finite() {
        return Err(invalid("R", format!("must be finite and at least 1, got {radius}")));
    }
    Ok(Rescaled { inner: phi, radius })
}

impl<T: Real, P: Profile<T>> Profile<T> for Rescaled<P, T> {
    fn value(&self, x: &[T]) -> T {
        self.inner.value(&self.scaled(x))
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        self.inner.neg_laplacian(&self.scaled(x)) / (self.radius * self.radius)
    }
    fn bilaplacian(&self, x: &[T]) -> Option<T> {
        self.inner
            .bilaplacian(&self.scaled(x))
            .map(|v| v / self.radius.powi(4))
    }
    fn sup_outside(&self, r: T) -> Option<T> {
        self.inner.sup_outside(r / self.radius)
    }
    fn length_scale(&self) -> T {
        self.inner.length_scale() * self.radius
    }
    fn oscillation(&self) -> Option<T> {
        self.inner.oscillation().map(|l| l * self.radius)
    }
}

/// `A exp(−|x|²/(2w²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gaussian<T> {
    pub amplitude: T,
    pub width: T,
}

impl<T: Real> Profile<T> for Gaussian<T> {
    fn value(&self, x: &[T]) -> T {
        self.amplitude * (-norm_sq(x) / (lit::<T>(2.0) * self.width * self.width)).exp()
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        let w2 = self.width * self.width;
        let r2 = norm_sq(x);
        -self.value(x) * (r2 / (w2 * w2) - dim_of(x) / w2)
    }
    fn bilaplacian(&self, x: &[T]) -> Option<T> {
        let w2 = self.width * self.width;
        let r2 = norm_sq(x);
        let n = dim_of(x);
        let two: T = lit(2.0);
        Some(
            self.value(x)
                * (r2 * r2 / (w2 * w2 * w2 * w2) - two * (n + two) * r2 / (w2 * w2 * w2)
                    + n * (n + two) / (w2 * w2)),
        )
    }
    fn sup_outside(&self, r: T) -> Option<T> {
        let r = r.max(T::zero());
        Some(self.amplitude.abs() * (-r * r / (lit::<T>(2.0) * self.width * self.width)).exp())
    }
    fn length_scale(&self) -> T {
        self.width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Constant<T> {
    pub value: T,
}

impl<T: Real> Profile<T> for Constant<T> {
    fn value(&self, _x: &[T]) -> T {
        self.value
    }
    fn neg_laplacian(&self, _x: &[T]) -> T {
        T::zero()
    }
    fn bilaplacian(&self, _x: &[T]) -> Option<T> {
        Some(T::zero())
    }
    fn sup_outside(&self, _r: T) -> Option<T> {
        Some(self.value.abs())
    }
}

/// `A cos(k x₀)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cosine<T> {
    pub amplitude: T,
    pub wavenumber: T,
}

impl<T: Real> Profile<T> for Cosine<T> {
    fn value(&self, x: &[T]) -> T {
        self.amplitude * (self.wavenumber * x[0]).cos()
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        self.wavenumber * self.wavenumber * self.value(x)
    }
    fn bilaplacian(&self, x: &[T]) -> Option<T> {
        Some(self.wavenumber.powi(4) * self.value(x))
    }
    fn sup_outside(&self, _r: T) -> Option<T> {
        Some(self.amplitude.abs())
    }
    fn oscillation(&self) -> Option<T> {
        Some(T::TAU() / self.wavenumber.abs())
    }
}

/// Smooth radial plateau: `1` on `|x| ≤ 1/2`, `0` on `|x| ≥ 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Plateau;

impl Plateau {
    fn smooth_step<T: Real>(u: T) -> T {
        let g = |t: T| {
            if t <= T::zero() {
                T::zero()
            } else {
                (-t.recip()).exp()
            }
        };
        let a = g(T::one() - u);
        a / (a + g(u))
    }

    fn radial<T: Real>(r: T) -> T {
        let half: T = lit(0.5);
        if r <= half {
            T::one()
        } else if r >= T::one() {
            T::zero()
        } else {
            Self::smooth_step((r - half) / half)
        }
    }
}

impl<T: Real> Profile<T> for Plateau {
    fn value(&self, x: &[T]) -> T {
        Self::radial(norm_sq(x).sqrt())
    }
    fn neg_laplacian(&self, x: &[T]) -> T {
        let r = norm_sq(x).sqrt();
        let h: T = lit(1e-3);
        let two: T = lit(2.0);
        if r <= lit::<T>(0.5) - two * h || r >= T::one() + two * h {
            return T::zero();
        }
        let f = |s: T| Self::radial::<T>(s);
        let twelve: T = lit(12.0);
        let d1 = (f(r - two * h) - lit::<T>(8.0) * f(r - h) + lit::<T>(8.0) * f(r + h)
            - f(r + two * h))
            / (twelve * h);
        let d2 = (-f(r - two * h) + lit::<T>(16.0) * f(r - h) - lit::<T>(30.0) * f(r)
            + lit::<T>(16.0) * f(r + h)
            - f(r + two * h))
            / (twelve * h * h);
        -(d2 + (dim_of(x) - T::one()) * d1 / r)
    }
    fn sup_outside(&self, r: T) -> Option<T> {
        Some(Self::radial(r))
    }
}
