//! Riemann–Liouville integrals and derivatives on a uniform mesh of `[0, T]`,
//! the cutoff `ω_T^β`, its fractional derivative and the memory convolution.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::solve_dense;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::special::{gamma, gamma_ratio};

/// Uniform mesh `0 = t_0 < … < t_{N-1} = T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeMesh<T> {
    t_end: T,
    num_points: usize,
}

impl<T: Real> TimeMesh<T> {
    pub fn new(t_end: T, num_points: usize) -> Result<Self> {
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(invalid("t_end", format!("must be positive and finite, got {t_end}")));
        }
        if num_points < 2 {
            return Err(Error::MeshTooCoarse {
                needed: 2,
                got: num_points,
            });
        }
        Ok(Self { t_end, num_points })
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> T {
        self.t_end / from_usize(self.num_points - 1)
    }

    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.num_points {
            self.t_end
        } else {
            self.step() * from_usize(i)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.num_points).map(|i| self.node(i)).collect()
    }

    /// Mesh on the same interval with every cell halved.
    pub fn refined(&self) -> Self {
        Self {
            t_end: self.t_end,
            num_points: 2 * self.num_points - 1,
        }
    }
}

/// Values of a function at the nodes of a [`TimeMesh`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledFn<T> {
    mesh: TimeMesh<T>,
    values: Vec<T>,
}

impl<T: Real> SampledFn<T> {
    pub fn new(mesh: TimeMesh<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::MeshMismatch(format!(
                "{} values for a mesh of {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at node {i}")));
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: TimeMesh<T>, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(mesh, mesh.nodes().into_iter().map(f).collect())
    }

    pub fn zeros(mesh: TimeMesh<T>) -> Self {
        Self {
            mesh,
            values: vec![T::zero(); mesh.len()],
        }
    }

    pub fn mesh(&self) -> &TimeMesh<T> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    fn with_values(&self, values: Vec<T>) -> Self {
        Self {
            mesh: self.mesh,
            values,
        }
    }
}

/// Fractional order `α ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FracOrder<T>(T);

impl<T: Real> FracOrder<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if alpha > T::zero() && alpha < T::one() {
            Ok(Self(alpha))
        } else {
            Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
        }
    }

    pub fn value(&self) -> T {
        self.0
    }

    /// `1 − α`.
    pub fn complement(&self) -> Self {
        Self(T::one() - self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Parameters of the cutoff `ω_T^β` used as a temporal test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffParams<T> {
    pub t_end: T,
    pub beta: T,
    pub alpha: FracOrder<T>,
}

impl<T: Real> CutoffParams<T> {
    /// Requires `T > 0` and `β > α + 2`.
    pub fn new(t_end: T, beta: T, alpha: FracOrder<T>) -> Result<Self> {
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(invalid("t_end", format!("must be positive and finite, got {t_end}")));
        }
        if !(beta > alpha.value() + lit(2.0)) {
            return Err(invalid(
                "beta",
                format!("must exceed alpha + 2 = {}, got {beta}", alpha.value() + lit(2.0)),
            ));
        }
        Ok(Self {
            t_end,
            beta,
            alpha,
        })
    }
}

/// Product-integration weights for `J^α` on a unit-spacing mesh.
///
/// `J^α f(t_k) ≈ h^α/Γ(α+2) · (a0_k f_0 + Σ_{j=1..k} b_{k−j} f_j)`.
#[derive(Clone, Debug)]
pub struct ProductWeights<T> {
    alpha: T,
    b: Vec<T>,
    a0: Vec<T>,
    norm: T,
}

impl<T: Real> ProductWeights<T> {
    pub fn new(alpha: FracOrder<T>, num_points: usize) -> Self {
        let a = alpha.value();
        let ap1 = a + T::one();
        let mut b = vec![T::one(); num_points];
        let mut a0 = vec![T::zero(); num_points];
        for m in 1..num_points {
            let mf: T = from_usize(m);
            b[m] = (mf + T::one()).powf(ap1) - lit::<T>(2.0) * mf.powf(ap1)
                + (mf - T::one()).powf(ap1);
            a0[m] = (mf - T::one()).powf(ap1) - (mf - ap1) * mf.powf(a);
        }
        Self {
            alpha: a,
            b,
            a0,
            norm: gamma(a + lit(2.0)).recip(),
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Weight of sample `j` in the value at node `k`, unit spacing, without `1/Γ(α+2)`.
    #[inline]
    pub fn raw(&self, k: usize, j: usize) -> T {
        if k == 0 || j > k {
            T::zero()
        } else if j == 0 {
            self.a0[k]
        } else {
            self.b[k - j]
        }
    }

    /// Multiplier turning raw sums into `J^α` values on spacing `h`.
    pub fn scale(&self, h: T) -> T {
        h.powf(self.alpha) * self.norm
    }

    /// Raw weighted sum for node `k` over the first `k+1` samples.
    #[inline]
    pub fn raw_sum(&self, k: usize, values: &[T]) -> T {
        if k == 0 {
            return T::zero();
        }
        let mut s = self.a0[k] * values[0];
        for j in 1..=k {
            s += self.b[k - j] * values[j];
        }
        s
    }

    /// Left-sided `J^α` of `values` on spacing `h`.
    pub fn apply_left(&self, values: &[T], h: T) -> Vec<T> {
        let c = self.scale(h);
        (0..values.len()).map(|k| c * self.raw_sum(k, values)).collect()
    }
}

/// Cache of weight tables keyed by `(num_points, α)`.
#[derive(Default, Debug)]
pub struct WeightCache<T> {
    tables: RwLock<HashMap<(usize, u64), Arc<ProductWeights<T>>>>,
}

impl<T: Real> WeightCache<T> {
    pub fn new() -> Self {
        Self {
            tables: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, alpha: FracOrder<T>, num_points: usize) -> Arc<ProductWeights<T>> {
        let key = (num_points, to_f64(alpha.value()).to_bits());
        if let Some(w) = self.tables.read().ok().and_then(|m| m.get(&key).cloned()) {
            return w;
        }
        let w = Arc::new(ProductWeights::new(alpha, num_points));
        if let Ok(mut m) = self.tables.write() {
            m.entry(key).or_insert_with(|| w.clone());
        }
        w
    }

    pub fn len(&self) -> usize {
        self.tables.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Starting weights that make the left product rule exact for `t^ν`, `ν` in `exponents`
/// (in addition to `1` and `t`, which the linear rule already integrates exactly).
#[derive(Clone, Debug)]
pub struct StartingWeights<T> {
    alpha: T,
    /// `s[k][j]`, unit spacing, `j < m`.
    s: Vec<Vec<T>>,
}

impl<T: Real> StartingWeights<T> {
    pub fn new(alpha: FracOrder<T>, num_points: usize, exponents: &[T]) -> Result<Self> {
        let mut exps = vec![T::zero(), T::one()];
        exps.extend_from_slice(exponents);
        let m = exps.len();
        if num_points < m {
            return Err(Error::MeshTooCoarse {
                needed: m,
                got: num_points,
            });
        }
        let a = alpha.value();
        let w = ProductWeights::new(alpha, num_points);
        let unit = T::one();
        let mut err = vec![vec![T::zero(); num_points]; m];
        for (i, &nu) in exps.iter().enumerate().skip(2) {
            let f: Vec<T> = (0..num_points).map(|k| from_usize::<T>(k).powf(nu)).collect();
            let approx = w.apply_left(&f, unit);
            let c = gamma_ratio(nu + T::one(), nu + T::one() + a);
            for k in 0..num_points {
                err[i][k] = c * from_usize::<T>(k).powf(nu + a) - approx[k];
            }
        }
        let vander: Vec<Vec<T>> = exps
            .iter()
            .map(|&nu| {
                (0..m)
                    .map(|j| {
                        if j == 0 && nu == T::zero() {
                            T::one()
                        } else {
                            from_usize::<T>(j).powf(nu)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut s = Vec::with_capacity(num_points);
        for k in 0..num_points {
            let rhs: Vec<T> = (0..m).map(|i| err[i][k]).collect();
            s.push(solve_dense(vander.clone(), rhs)?);
        }
        Ok(Self { alpha: a, s })
    }

    /// Adds the correction to a left `J^α` computed on spacing `h`.
    pub fn correct(&self, values: &[T], h: T, out: &mut [T]) {
        let c = h.powf(self.alpha);
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.s[k];
            let s = row
                .iter()
                .zip(values)
                .fold(T::zero(), |acc, (&w, &f)| acc + w * f);
            *o += c * s;
        }
    }
}

fn reversed<T: Copy>(v: &[T]) -> Vec<T> {
    v.iter().rev().copied().collect()
}

fn integrate_side<T: Real>(
    values: &[T],
    h: T,
    weights: &ProductWeights<T>,
    start: Option<&StartingWeights<T>>,
    side: Side,
) -> Vec<T> {
    let run = |v: &[T]| {
        let mut out = weights.apply_left(v, h);
        if let Some(sw) = start {
            sw.correct(v, h, &mut out);
        }
        out
    };
    match side {
        Side::Left => run(values),
        Side::Right => reversed(&run(&reversed(values))),
    }
}

/// `J^α_{0|t} f` (left) or `J^α_{t|T} f` (right) by product integration.
pub fn rl_integral<T: Real>(
    f: &SampledFn<T>,
    alpha: FracOrder<T>,
    side: Side,
) -> Result<SampledFn<T>> {
    let w = ProductWeights::new(alpha, f.mesh.len());
    Ok(f.with_values(integrate_side(&f.values, f.mesh.step(), &w, None, side)))
}

/// Like [`rl_integral`] with starting weights exact for `(t − t_edge)^ν`, `ν ∈ exponents`,
/// at the singular end of the integration direction.
pub fn rl_integral_corrected<T: Real>(
    f: &SampledFn<T>,
    alpha: FracOrder<T>,
    side: Side,
    exponents: &[T],
) -> Result<SampledFn<T>> {
    let n = f.mesh.len();
    let w = ProductWeights::new(alpha, n);
    let sw = StartingWeights::new(alpha, n, exponents)?;
    Ok(f.with_values(integrate_side(&f.values, f.mesh.step(), &w, Some(&sw), side)))
}

/// Fourth-order first derivative of nodal values (one-sided five-point stencils at the ends).
pub fn differentiate<T: Real>(g: &[T], h: T) -> Result<Vec<T>> {
    let n = g.len();
    if n < 5 {
        return Err(Error::MeshTooCoarse { needed: 5, got: n });
    }
    let c = |x: f64| lit::<T>(x);
    let den = c(12.0) * h;
    let mut d = vec![T::zero(); n];
    for k in 2..n - 2 {
        d[k] = (-g[k + 2] + c(8.0) * g[k + 1] - c(8.0) * g[k - 1] + g[k - 2]) / den;
    }
    let fwd0 = |g0: T, g1: T, g2: T, g3: T, g4: T| {
        (c(-25.0) * g0 + c(48.0) * g1 - c(36.0) * g2 + c(16.0) * g3 - c(3.0) * g4) / den
    };
    let fwd1 = |g0: T, g1: T, g2: T, g3: T, g4: T| {
        (c(-3.0) * g0 - c(10.0) * g1 + c(18.0) * g2 - c(6.0) * g3 + g4) / den
    };
    d[0] = fwd0(g[0], g[1], g[2], g[3], g[4]);
    d[1] = fwd1(g[0], g[1], g[2], g[3], g[4]);
    d[n - 1] = -fwd0(g[n - 1], g[n - 2], g[n - 3], g[n - 4], g[n - 5]);
    d[n - 2] = -fwd1(g[n - 1], g[n - 2], g[n - 3], g[n - 4], g[n - 5]);
    Ok(d)
}

fn signed_derivative<T: Real>(g: &[T], h: T, side: Side) -> Result<Vec<T>> {
    let mut d = differentiate(g, h)?;
    if side == Side::Right {
        d.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(d)
}

/// `D^α = ±∂_t J^{1−α}`; sign `+` on the left, `−` on the right.
///
/// The value at the singular endpoint (`t = 0` left, `t = T` right) is not meaningful.
pub fn rl_derivative<T: Real>(
    f: &SampledFn<T>,
    alpha: FracOrder<T>,
    side: Side,
) -> Result<SampledFn<T>> {
    if f.mesh.len() < 5 {
        return Err(Error::MeshTooCoarse {
            needed: 5,
            got: f.mesh.len(),
        });
    }
    let j = rl_integral(f, alpha.complement(), side)?;
    Ok(f.with_values(signed_derivative(&j.values, f.mesh.step(), side)?))
}

/// [`rl_derivative`] whose inner `J^{1−α}` carries starting weights for `exponents`.
pub fn rl_derivative_corrected<T: Real>(
    f: &SampledFn<T>,
    alpha: FracOrder<T>,
    side: Side,
    exponents: &[T],
) -> Result<SampledFn<T>> {
    if f.mesh.len() < 5 {
        return Err(Error::MeshTooCoarse {
            needed: 5,
            got: f.mesh.len(),
        });
    }
    let j = rl_integral_corrected(f, alpha.complement(), side, exponents)?;
    Ok(f.with_values(signed_derivative(&j.values, f.mesh.step(), side)?))
}

/// `D^α` of an evaluable function with the inner integral Richardson-extrapolated
/// from `mesh` and its refinement: `(4 J_{h/2} − J_h)/3`.
pub fn rl_derivative_richardson<T: Real>(
    f: impl Fn(T) -> T,
    mesh: TimeMesh<T>,
    alpha: FracOrder<T>,
    side: Side,
) -> Result<SampledFn<T>> {
    let coarse = SampledFn::from_fn(mesh, &f)?;
    let fine = SampledFn::from_fn(mesh.refined(), &f)?;
    let jc = rl_integral(&coarse, alpha.complement(), side)?;
    let jf = rl_integral(&fine, alpha.complement(), side)?;
    let three: T = lit(3.0);
    let four: T = lit(4.0);
    let j: Vec<T> = jc
        .values
        .iter()
        .zip(jf.values.iter().step_by(2))
        .map(|(&c, &f)| (four * f - c) / three)
        .collect();
    Ok(coarse.with_values(signed_derivative(&j, mesh.step(), side)?))
}

/// `ω_T(t)^β = (1 − t/T)^β` on `[0, T]`, zero beyond `T`.
pub fn cutoff<T: Real>(t: T, t_end: T, beta: T) -> T {
    if t >= t_end {
        T::zero()
    } else if t <= T::zero() {
        T::one()
    } else {
        (T::one() - t / t_end).powf(beta)
    }
}

/// `Γ(β+1)/Γ(β+1−α)`.
pub fn c_alpha_beta<T: Real>(alpha: T, beta: T) -> T {
    gamma_ratio(beta + T::one(), beta + T::one() - alpha)
}

/// The alternative constant `Γ(β+1)/((β+2−α)Γ(β−α))`, kept for comparison.
pub fn c_alpha_beta_printed<T: Real>(alpha: T, beta: T) -> T {
    gamma_ratio(beta + T::one(), beta - alpha) / (beta + lit(2.0) - alpha)
}

fn check_time<T: Real>(t: T, t_end: T) -> Result<()> {
    if t >= T::zero() && t <= t_end {
        Ok(())
    } else {
        Err(Error::Domain(format!("t = {t} lies outside [0, {t_end}]")))
    }
}

/// `D^α_{t|T} ω_T^β(t) = C_{α,β} T^{−α} ω_T(t)^{β−α}`.
pub fn closed_cutoff_derivative<T: Real>(p: &CutoffParams<T>, t: T) -> Result<T> {
    check_time(t, p.t_end)?;
    let a = p.alpha.value();
    Ok(c_alpha_beta(a, p.beta) * p.t_end.powf(-a) * cutoff(t, p.t_end, p.beta - a))
}

/// Envelope of `|∂_t^j D^α_{t|T} ω_T^β|`: `C_{α,β}·(β−α)_j·T^{−α−j} ω_T^{β−α−j}`,
/// where `(x)_j` is the falling factorial.
pub fn cutoff_derivative_bound<T: Real>(p: &CutoffParams<T>, j: u32, t: T) -> Result<T> {
    if j > 2 {
        return Err(invalid("j", format!("must be 0, 1 or 2, got {j}")));
    }
    let a = p.alpha.value();
    let jf: T = lit(j as f64);
    if !(p.beta > a + jf) {
        return Err(invalid("beta", format!("must exceed alpha + j, got {}", p.beta)));
    }
    check_time(t, p.t_end)?;
    Ok(cutoff_bound_constant(a, p.beta, j)
        * p.t_end.powf(-a - jf)
        * cutoff(t, p.t_end, p.beta - a - jf))
}

/// `C_{α,β}·(β−α)(β−α−1)⋯` with `j` factors.
pub fn cutoff_bound_constant<T: Real>(alpha: T, beta: T, j: u32) -> T {
    (0..j).fold(c_alpha_beta(alpha, beta), |c, i| {
        c * (beta - alpha - lit(i as f64))
    })
}

/// Result of comparing a numerical `|∂_t^j ψ_T|` against its envelope.
#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub j: u32,
    pub nodes_checked: usize,
    pub max_ratio: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Differentiates `ψ_T` numerically on `mesh` and checks `|∂^j ψ_T| ≤ bound` at interior nodes.
///
/// A centred difference quotient equals `∂^j ψ_T` somewhere on its stencil, so each
/// quotient is compared with the envelope's supremum over the stencil, `bound(t_{k−1})`.
pub fn check_cutoff_derivative_bound<T: Real>(
    p: &CutoffParams<T>,
    j: u32,
    mesh: TimeMesh<T>,
) -> Result<BoundCheck> {
    if mesh.t_end() != p.t_end {
        return Err(Error::MeshMismatch("mesh end differs from cutoff T".into()));
    }
    let n = mesh.len();
    if n < 5 {
        return Err(Error::MeshTooCoarse { needed: 5, got: n });
    }
    let h = mesh.step();
    let psi: Vec<T> = mesh
        .nodes()
        .into_iter()
        .map(|t| closed_cutoff_derivative(p, t))
        .collect::<Result<_>>()?;
    let slack = 1e-9;
    let mut max_ratio = 0.0_f64;
    let mut holds = true;
    let mut checked = 0;
    for k in 1..n - 1 {
        let (num, at) = match j {
            0 => (psi[k], k),
            1 => ((psi[k + 1] - psi[k - 1]) / (lit::<T>(2.0) * h), k - 1),
            _ => (
                (psi[k + 1] - lit::<T>(2.0) * psi[k] + psi[k - 1]) / (h * h),
                k - 1,
            ),
        };
        let bound = to_f64(cutoff_derivative_bound(p, j, mesh.node(at))?);
        let num = to_f64(num).abs();
        if bound > 0.0 {
            max_ratio = max_ratio.max(num / bound);
        }
        holds &= num <= bound * (1.0 + slack) + f64::EPSILON;
        checked += 1;
    }
    Ok(BoundCheck {
        j,
        nodes_checked: checked,
        max_ratio,
        slack,
        holds,
    })
}

/// `‖D^α J^α f − f‖_∞` over interior nodes.
///
/// The outer `J^{1−α}` carries starting weights for `t^α`, `t^{1+α}`, the leading
/// terms of `J^α f` near `t = 0`.
pub fn verify_inversion<T: Real>(f: &SampledFn<T>, alpha: FracOrder<T>) -> Result<T> {
    let a = alpha.value();
    let j = rl_integral(f, alpha, Side::Left)?;
    let d = rl_derivative_corrected(&j, alpha, Side::Left, &[a, a + T::one()])?;
    let n = f.mesh.len();
    Ok((1..n - 1).fold(T::zero(), |m, k| m.max((d.values[k] - f.values[k]).abs())))
}

/// Trapezoid weights corrected at `t = 0` to be exact for `1, t, t^α, t^{1+α}`.
pub fn singular_trapezoid_weights<T: Real>(mesh: TimeMesh<T>, alpha: T) -> Result<Vec<T>> {
    let n = mesh.len();
    let exps = [T::zero(), T::one(), alpha, alpha + T::one()];
    let m = exps.len();
    if n < m + 1 {
        return Err(Error::MeshTooCoarse {
            needed: m + 1,
            got: n,
        });
    }
    // unit spacing; the correction scales with h like the weights themselves
    let mut w = vec![T::one(); n];
    w[0] = lit(0.5);
    w[n - 1] = lit(0.5);
    let last: T = from_usize(n - 1);
    let rhs: Vec<T> = exps
        .iter()
        .map(|&nu| {
            let exact = last.powf(nu + T::one()) / (nu + T::one());
            let approx = (0..n).fold(T::zero(), |s, k| {
                let t: T = from_usize(k);
                let v = if k == 0 && nu == T::zero() {
                    T::one()
                } else {
                    t.powf(nu)
                };
                s + w[k] * v
            });
            exact - approx
        })
        .collect();
    let vander: Vec<Vec<T>> = exps
        .iter()
        .map(|&nu| {
            (0..m)
                .map(|j| {
                    if j == 0 && nu == T::zero() {
                        T::one()
                    } else {
                        from_usize::<T>(j).powf(nu)
                    }
                })
                .collect()
        })
        .collect();
    let s = solve_dense(vander, rhs)?;
    for (wj, sj) in w.iter_mut().zip(s) {
        *wj += sj;
    }
    let h = mesh.step();
    Ok(w.into_iter().map(|x| x * h).collect())
}

/// `(∫ φ J^α_{0|t} ψ, ∫ ψ J^α_{t|T} φ)` over `[0, T]`.
pub fn verify_parts<T: Real>(
    phi: &SampledFn<T>,
    psi: &SampledFn<T>,
    alpha: FracOrder<T>,
) -> Result<(T, T)> {
    if phi.mesh != psi.mesh {
        return Err(Error::MeshMismatch("phi and psi live on different meshes".into()));
    }
    let jl = rl_integral(psi, alpha, Side::Left)?;
    let jr = rl_integral(phi, alpha, Side::Right)?;
    let w = singular_trapezoid_weights(phi.mesh, alpha.value())?;
    let n = w.len();
    let lhs = (0..n).fold(T::zero(), |s, k| s + w[k] * phi.values[k] * jl.values[k]);
    let rhs = (0..n).fold(T::zero(), |s, k| {
        s + w[n - 1 - k] * psi.values[k] * jr.values[k]
    });
    Ok((lhs, rhs))
}

fn check_gamma<T: Real>(gamma_: T) -> Result<FracOrder<T>> {
    if gamma_ > T::zero() && gamma_ < T::one() {
        FracOrder::new(T::one() - gamma_)
    } else {
        Err(invalid("gamma", format!("must lie in (0, 1), got {gamma_}")))
    }
}

/// Memory term `F(t) = ∫_0^t (t−s)^{−γ} |u(s)|^p ds = Γ(α) J^α |u|^p`, `α = 1 − γ`.
pub fn memory_convolve<T: Real>(history: &SampledFn<T>, gamma_: T, p: T) -> Result<SampledFn<T>> {
    let alpha = check_gamma(gamma_)?;
    if !(p >= T::one()) {
        return Err(invalid("p", format!("must be at least 1, got {p}")));
    }
    let g: Vec<T> = history.values.iter().map(|u| u.abs().powf(p)).collect();
    let w = ProductWeights::new(alpha, g.len());
    let ga = gamma(alpha.value());
    let out = w
        .apply_left(&g, history.mesh.step())
        .into_iter()
        .map(|v| v * ga)
        .collect();
    Ok(history.with_values(out))
}

/// Incremental memory term over many spatial points sharing one time mesh.
#[derive(Clone, Debug)]
pub struct MemoryKernel<T> {
    weights: Arc<ProductWeights<T>>,
    factor: T,
}

impl<T: Real> MemoryKernel<T> {
    pub fn new(weights: Arc<ProductWeights<T>>, h: T) -> Self {
        let factor = gamma(weights.alpha()) * weights.scale(h);
        Self { weights, factor }
    }

    /// `F(t_k, x)` for every point `x`, given `history[j] = |u(t_j, ·)|^p`, `j ≤ k`.
    pub fn evaluate(&self, k: usize, history: &[Vec<T>], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        if k == 0 {
            return;
        }
        for (j, g) in history.iter().enumerate().take(k + 1) {
            let w = self.weights.raw(k, j) * self.factor;
            for (o, &v) in out.iter_mut().zip(g) {
                *o += w * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::beta;
    use proptest::prelude::*;

    fn mesh(n: usize) -> TimeMesh<f64> {
        TimeMesh::new(1.0, n).unwrap()
    }

    fn order(a: f64) -> FracOrder<f64> {
        FracOrder::new(a).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(FracOrder::new(1.0_f64).is_err());
        assert!(FracOrder::new(0.0_f64).is_err());
        assert!(TimeMesh::new(1.0_f64, 1).is_err());
        let f = SampledFn::zeros(mesh(4));
        assert!(matches!(
            rl_derivative(&f, order(0.5), Side::Left),
            Err(Error::MeshTooCoarse { needed: 5, .. })
        ));
        assert!(SampledFn::new(mesh(3), vec![0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn mesh_nodes_hit_endpoints() {
        let m = TimeMesh::new(3.0_f64, 7).unwrap();
        let t = m.nodes();
        assert_eq!(t[0], 0.0);
        assert_eq!(t[6], 3.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn integral_of_zero_and_one() {
        let m = mesh(257);
        let z = rl_integral(&SampledFn::zeros(m), order(0.3), Side::Left).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let one = SampledFn::from_fn(m, |_| 1.0).unwrap();
        let j = rl_integral(&one, order(0.5), Side::Left).unwrap();
        for (t, v) in m.nodes().iter().zip(j.values()) {
            let exact = t.powf(0.5) / gamma(1.5);
            assert!((v - exact).abs() < 1e-13, "{t}: {v} vs {exact}");
        }
    }

    #[test]
    fn right_integral_of_cutoff() {
        let (a, b, t_end) = (0.4, 4.0, 1.5);
        let m = TimeMesh::new(t_end, 2049).unwrap();
        let f = SampledFn::from_fn(m, |t| cutoff(t, t_end, b)).unwrap();
        let j = rl_integral(&f, order(1.0 - a), Side::Right).unwrap();
        let c = gamma(1.0 + b) / gamma(b + 2.0 - a) * t_end.powf(1.0 - a);
        for (t, v) in m.nodes().iter().zip(j.values()) {
            let exact = c * cutoff(*t, t_end, b + 1.0 - a);
            assert!((v - exact).abs() < 1e-6, "{t}: {v} vs {exact}");
        }
    }

    #[test]
    fn derivative_of_one() {
        let m = mesh(2049);
        let one = SampledFn::from_fn(m, |_| 1.0).unwrap();
        let d = rl_derivative(&one, order(0.3), Side::Left).unwrap();
        let nodes = m.nodes();
        for k in (m.len() / 10)..m.len() - 1 {
            let exact = nodes[k].powf(-0.3) / gamma(0.7);
            assert!((d.values()[k] - exact).abs() < 1e-6 * exact);
        }
        let zero = rl_derivative(&SampledFn::zeros(m), order(0.3), Side::Left).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(cutoff(0.0, 2.0, 3.0), 1.0);
        assert_eq!(cutoff(2.0, 2.0, 3.0), 0.0);
        assert_eq!(cutoff(5.0, 2.0, 3.0), 0.0);
        assert!((cutoff(1.0_f64, 2.0, 2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn closed_derivative_examples() {
        let p = CutoffParams::new(1.0, 4.0, order(0.5)).unwrap();
        assert_eq!(closed_cutoff_derivative(&p, 1.0).unwrap(), 0.0);
        let v = closed_cutoff_derivative(&p, 0.0).unwrap();
        assert!((v - 24.0 / gamma(4.5)).abs() < 1e-12);
        assert!((v - 2.0634).abs() < 1e-4);
        assert!(closed_cutoff_derivative(&p, 1.5).is_err());
        assert!(CutoffParams::new(1.0, 2.4, order(0.5)).is_err());
    }

    #[test]
    fn printed_constant_ratio() {
        for &(a, b) in &[(0.25_f64, 3.0_f64), (0.5, 4.0), (0.75, 6.0)] {
            let r = c_alpha_beta_printed(a, b) / c_alpha_beta(a, b);
            assert!((r - (b - a) / (b + 2.0 - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_derivative_matches_quadrature() {
        let t_end = 2.0;
        let m = TimeMesh::new(t_end, 2048).unwrap();
        let p = CutoffParams::new(t_end, 4.0, order(0.5)).unwrap();
        let d = rl_derivative_richardson(|t| cutoff(t, t_end, 4.0), m, p.alpha, Side::Right).unwrap();
        for i in 1..=100 {
            let k = (i as f64 * (m.len() - 1) as f64 / 101.0).round() as usize;
            let exact = closed_cutoff_derivative(&p, m.node(k)).unwrap();
            assert!((d.values()[k] / exact - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn derivative_bounds() {
        let p = CutoffParams::new(2.0, 6.0, order(0.5)).unwrap();
        let t0 = closed_cutoff_derivative(&p, 0.7).unwrap();
        assert_eq!(cutoff_derivative_bound(&p, 0, 0.7).unwrap(), t0);
        assert_eq!(cutoff_derivative_bound(&p, 1, 2.0).unwrap(), 0.0);
        for j in 0..=2 {
            let c = check_cutoff_derivative_bound(&p, j, TimeMesh::new(2.0, 4001).unwrap()).unwrap();
            assert!(c.holds, "j = {j}: {c:?}");
            assert!(c.max_ratio > 0.99, "envelope should be tight: {c:?}");
        }
        let tight = CutoffParams::new(1.0, 2.6, order(0.5)).unwrap();
        assert!(cutoff_derivative_bound(&tight, 3, 0.1).is_err());
    }

    #[test]
    fn inversion_examples() {
        let m = mesh(4096);
        let zero = verify_inversion(&SampledFn::zeros(m), order(0.4)).unwrap();
        assert_eq!(zero, 0.0);
        let s = SampledFn::from_fn(m, f64::sin).unwrap();
        assert!(verify_inversion(&s, order(0.4)).unwrap() < 1e-4);
        let sq = SampledFn::from_fn(m, |t| t * t).unwrap();
        assert!(verify_inversion(&sq, order(0.7)).unwrap() < 1e-4);
    }

    #[test]
    fn parts_examples() {
        let m = mesh(1025);
        let one = SampledFn::from_fn(m, |_| 1.0).unwrap();
        let (l, r) = verify_parts(&one, &one, order(0.5)).unwrap();
        let exact = (2.0 / 3.0) / gamma(1.5);
        assert!((l - exact).abs() < 1e-12 && (r - exact).abs() < 1e-12);
        let (l, r) = verify_parts(&one, &SampledFn::zeros(m), order(0.5)).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let m = mesh(4096);
        let phi = SampledFn::from_fn(m, |t| t).unwrap();
        let psi = SampledFn::from_fn(m, |t| 1.0 - t).unwrap();
        let (l, r) = verify_parts(&phi, &psi, order(0.3)).unwrap();
        assert!((l - r).abs() / l.abs().max(1.0) < 1e-6);
        let other = SampledFn::zeros(mesh(100));
        assert!(verify_parts(&phi, &other, order(0.3)).is_err());
    }

    #[test]
    fn memory_examples() {
        let m = mesh(1025);
        let z = memory_convolve(&SampledFn::zeros(m), 0.5, 2.0).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let c = memory_convolve(&SampledFn::from_fn(m, |_| -2.0).unwrap(), 0.3, 1.5).unwrap();
        for (t, v) in m.nodes().iter().zip(c.values()) {
            let exact = 2.0_f64.powf(1.5) * t.powf(0.7) / 0.7;
            assert!((v - exact).abs() < 1e-12);
        }
        let lin = memory_convolve(&SampledFn::from_fn(m, |t| t).unwrap(), 0.5, 1.0).unwrap();
        for (t, v) in m.nodes().iter().zip(lin.values()) {
            let exact = beta(0.5, 2.0) * t.powf(1.5);
            assert!((v - exact).abs() < 1e-12);
        }
        assert!(memory_convolve(&lin, 1.0, 2.0).is_err());
    }

    #[test]
    fn kernel_matches_scalar_convolution() {
        let m = mesh(65);
        let u: Vec<f64> = m.nodes().iter().map(|t| (3.0 * t).sin()).collect();
        let reference = memory_convolve(&SampledFn::new(m, u.clone()).unwrap(), 0.4, 2.5).unwrap();
        let cache = WeightCache::new();
        let kern = MemoryKernel::new(cache.get(order(0.6), m.len()), m.step());
        let history: Vec<Vec<f64>> = u.iter().map(|v| vec![v.abs().powf(2.5); 3]).collect();
        let mut out = vec![0.0; 3];
        for k in 0..m.len() {
            kern.evaluate(k, &history, &mut out);
            assert!((out[1] - reference.values()[k]).abs() < 1e-13);
        }
        cache.get(order(0.6), m.len());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn single_precision_integral() {
        let m = TimeMesh::new(1.0_f32, 129).unwrap();
        let one = SampledFn::from_fn(m, |_| 1.0).unwrap();
        let j = rl_integral(&one, FracOrder::new(0.5_f32).unwrap(), Side::Left).unwrap();
        assert!((j.values()[128] - 1.0 / gamma(1.5_f32)).abs() < 1e-4);
    }

    #[test]
    fn semigroup_on_monomials() {
        let m = mesh(2049);
        let f = SampledFn::from_fn(m, |t| t * t).unwrap();
        let ab = rl_integral(&rl_integral(&f, order(0.3), Side::Left).unwrap(), order(0.4), Side::Left)
            .unwrap();
        for (t, v) in m.nodes().iter().zip(ab.values()) {
            let exact = 2.0 / gamma(3.7) * t.powf(2.7);
            assert!((v - exact).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn integral_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, al in 0.05..0.95f64) {
            let m = mesh(129);
            let f = SampledFn::from_fn(m, |t| (2.0 * t).cos()).unwrap();
            let g = SampledFn::from_fn(m, |t| t.exp()).unwrap();
            let comb = SampledFn::from_fn(m, |t| a * (2.0 * t).cos() + b * t.exp()).unwrap();
            for side in [Side::Left, Side::Right] {
                let jf = rl_integral(&f, order(al), side).unwrap();
                let jg = rl_integral(&g, order(al), side).unwrap();
                let jc = rl_integral(&comb, order(al), side).unwrap();
                for k in 0..129 {
                    let lin: f64 = a * jf.values()[k] + b * jg.values()[k];
                    prop_assert!((jc.values()[k] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
                }
            }
        }

        #[test]
        fn integral_preserves_positivity(al in 0.05..0.95f64, c in 0.0..5.0f64) {
            let m = mesh(65);
            let f = SampledFn::from_fn(m, |t| c * (1.0 + (7.0 * t).sin())).unwrap();
            let j = rl_integral(&f, order(al), Side::Left).unwrap();
            prop_assert!(j.values().iter().all(|&v| v >= 0.0));
        }
    }
}
