//! Singular-integral evaluation of `(−Δ)^σ`, `σ ∈ (0, 1)`, at single points.

use serde::Serialize;

use super::constant::{c_sigma, sphere_area};
use super::profiles::Profile;
use crate::error::{invalid, Error, Result};
use crate::quad::{adaptive, gauss_legendre};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Value of `(−Δ)^σ f(x)` with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SingularEstimate<T> {
    pub value: T,
    /// Quadrature error + Taylor remainder + analytic tail bound.
    pub error: T,
    pub tail_bound: T,
}

/// Evaluator of `−C_σ ∫_{S^{n−1}} ∫_0^∞ (f(x+rω) − 2f(x) + f(x−rω)) r^{−1−2σ} dr dω`.
#[derive(Clone, Debug)]
pub struct SingularIntegrator<T> {
    sigma: T,
    n: usize,
    c: T,
    area: T,
    directions: Vec<(Vec<T>, T)>,
    cutoff_radius: T,
    rel_tol: T,
}

impl<T: Real> SingularIntegrator<T> {
    pub fn new(sigma: T, n: usize, cutoff_radius: T) -> Result<Self> {
        if !(sigma > T::zero() && sigma < T::one()) {
            return Err(invalid("sigma", format!("must lie in (0, 1), got {sigma}")));
        }
        if !(1..=3).contains(&n) {
            return Err(invalid("n", format!("must be 1, 2 or 3, got {n}")));
        }
        if !(cutoff_radius > T::zero()) || !cutoff_radius.is_finite() {
            return Err(invalid("cutoff_radius", "must be positive and finite"));
        }
        Ok(Self {
            sigma,
            n,
            c: c_sigma(sigma, n)?,
            area: sphere_area(n),
            directions: directions(n),
            cutoff_radius,
            rel_tol: lit(1e-10),
        })
    }

    pub fn c_sigma(&self) -> T {
        self.c
    }

    pub fn with_rel_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn eval<P: Profile<T> + ?Sized>(&self, f: &P, x: &[T]) -> Result<SingularEstimate<T>> {
        if x.len() != self.n {
            return Err(Error::MeshMismatch(format!(
                "point has {} coordinates, integrator is {}-dimensional",
                x.len(),
                self.n
            )));
        }
        let two: T = lit(2.0);
        let s = self.sigma;
        let nf: T = from_usize(self.n);
        let scale = f.length_scale();
        let delta = T::epsilon().powf(lit(0.25)) * scale;
        let rc = self.cutoff_radius.max(lit::<T>(4.0) * delta);
        let fx = f.value(x);
        let xnorm = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();

        let tail_sup = f
            .sup_outside((rc - xnorm).max(T::zero()))
            .ok_or_else(|| Error::DivergentTail("profile declares no bound beyond the cutoff".into()))?;
        let tail_bound = self.c * self.area * two * tail_sup * rc.powf(-two * s) / (two * s);

        // |y| < δ: second-order Taylor term of the centred difference
        let small = self.c * self.area * f.neg_laplacian(x) / nf * delta.powf(two - two * s)
            / (two - two * s);
        let sup = f.sup_outside(T::zero()).unwrap_or(fx.abs());
        let taylor = self.c * self.area * sup * (delta / scale).powi(4) * delta.powf(-two * s)
            / (lit::<T>(4.0) - two * s);

        let far_sup = f.sup_outside(xnorm / two).unwrap_or(sup);
        let abs_tol = lit::<T>(1e-12)
            * (fx.abs() * scale.powf(-two * s)
                + far_sup * scale * (xnorm + scale).powf(-T::one() - two * s)
                + T::epsilon() * sup);
        let mut radial = T::zero();
        let mut quad_err = T::zero();
        let mut y_plus = vec![T::zero(); self.n];
        let mut y_minus = vec![T::zero(); self.n];
        for (omega, w) in &self.directions {
            let proj = x
                .iter()
                .zip(omega)
                .fold(T::zero(), |a, (&xi, &oi)| a + xi * oi)
                .abs();
            let breaks = self.breakpoints(delta, rc, proj, scale, f.oscillation());
            let integrand = |r: T| {
                for i in 0..self.n {
                    y_plus[i] = x[i] + r * omega[i];
                    y_minus[i] = x[i] - r * omega[i];
                }
                (f.value(&y_plus) - two * fx + f.value(&y_minus)) * r.powf(-T::one() - two * s)
            };
            let q = adaptive(integrand, &breaks, abs_tol, self.rel_tol, 50_000)?;
            radial += *w * q.value;
            quad_err += *w * q.error;
        }
        // −2f(x) beyond the cutoff, exactly
        let far = self.area * two * fx * rc.powf(-two * s) / (two * s);
        let value = small - self.c * radial + self.c * far;
        Ok(SingularEstimate {
            value,
            error: self.c * quad_err + taylor + tail_bound,
            tail_bound,
        })
    }

    fn breakpoints(&self, delta: T, rc: T, proj: T, scale: T, osc: Option<T>) -> Vec<T> {
        let two: T = lit(2.0);
        let mut b = vec![delta];
        let mut r = delta;
        while r * two < rc {
            r = r * two;
            b.push(r);
        }
        b.push(rc);
        for c in [proj - scale, proj, proj + scale] {
            if c > delta && c < rc {
                b.push(c);
            }
        }
        b.sort_by(|a, c| a.partial_cmp(c).unwrap_or(std::cmp::Ordering::Equal));
        b.dedup();
        if let Some(l) = osc {
            let width = l / lit(4.0);
            let mut fine = vec![b[0]];
            for w in b.windows(2) {
                let pieces = to_f64(((w[1] - w[0]) / width).ceil()).max(1.0) as usize;
                for k in 1..=pieces {
                    fine.push(w[0] + (w[1] - w[0]) * from_usize(k) / from_usize(pieces));
                }
            }
            b = fine;
        }
        b
    }
}

/// Quadrature directions with weights; `n = 1, 2` use the half sphere with doubled weights.
fn directions<T: Real>(n: usize) -> Vec<(Vec<T>, T)> {
    match n {
        1 => vec![(vec![T::one()], lit(2.0))],
        2 => {
            let m = 48;
            let w = lit::<T>(2.0) * T::PI() / from_usize(m);
            (0..m)
                .map(|k| {
                    let phi = T::PI() * (from_usize::<T>(k) + lit(0.5)) / from_usize(m);
                    (vec![phi.cos(), phi.sin()], w)
                })
                .collect()
        }
        _ => {
            let (mu, wmu) = gauss_legendre::<T>(16);
            let m = 24;
            let dphi = T::TAU() / from_usize(m);
            let mut out = Vec::with_capacity(16 * m);
            for (&z, &wz) in mu.iter().zip(&wmu) {
                let rho = (T::one() - z * z).sqrt();
                for k in 0..m {
                    let phi = dphi * from_usize(k);
                    out.push((vec![z, rho * phi.cos(), rho * phi.sin()], wz * dphi));
                }
            }
            out
        }
    }
}

/// One-shot `(−Δ)^σ f(x)` by the singular integral with tail cutoff `cutoff_radius`.
pub fn frac_laplacian_singular<T: Real, P: Profile<T> + ?Sized>(
    f: &P,
    sigma: T,
    x: &[T],
    cutoff_radius: T,
) -> Result<SingularEstimate<T>> {
    SingularIntegrator::new(sigma, x.len(), cutoff_radius)?.eval(f, x)
}
