use serde::Serialize;

use crate::error::{invalid, Result};
use crate::scalar::{lit, Real};

/// The problem quadruple `(n, γ, θ, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FracParams<T> {
    pub n: usize,
    pub gamma: T,
    pub theta: T,
    pub p: T,
}

impl<T: Real> FracParams<T> {
    /// Requires `n ≥ 1`, `γ ∈ (0, 1)`, `θ ∈ [0, 1/2)`, `p > 1`.
    pub fn new(n: usize, gamma: T, theta: T, p: T) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "dimension must be at least 1"));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {gamma}")));
        }
        if !(theta >= T::zero() && theta < lit(0.5)) {
            return Err(invalid("theta", format!("must lie in [0, 1/2), got {theta}")));
        }
        if !(p > T::one()) || !p.is_finite() {
            return Err(invalid("p", format!("must be finite and exceed 1, got {p}")));
        }
        Ok(Self { n, gamma, theta, p })
    }

    /// `α = 1 − γ`.
    pub fn alpha(&self) -> T {
        T::one() - self.gamma
    }

    /// `p′ = p/(p − 1)`.
    pub fn p_conj(&self) -> T {
        conjugate(self.p)
    }

    pub fn n_real(&self) -> T {
        lit(self.n as f64)
    }
}

/// Hölder conjugate `p/(p − 1)`.
pub fn conjugate<T: Real>(p: T) -> T {
    p / (p - T::one())
}
