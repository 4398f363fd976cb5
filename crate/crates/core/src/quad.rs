//! Quadrature rules, least-squares line fits and a small dense solver.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = lit(-x);
        nodes[n - 1 - i] = lit(x);
        weights[i] = lit(w);
        weights[n - 1 - i] = lit(w);
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with an `n`-point Gauss–Legendre rule.
pub fn gauss_legendre_integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    rule: &(Vec<T>, Vec<T>),
) -> T {
    let half = (b - a) / lit(2.0);
    let mid = (a + b) / lit(2.0);
    rule.0
        .iter()
        .zip(&rule.1)
        .fold(T::zero(), |acc, (&x, &w)| acc + w * f(mid + half * x))
        * half
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: returns the Kronrod value and `|K15 - G7|`.
pub fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = (b - a) / lit(2.0);
    let mid = (a + b) / lit(2.0);
    let fc = f(mid);
    let mut k = fc * lit(GK_WEIGHTS[7]);
    let mut g = fc * lit(G_WEIGHTS[3]);
    for i in 0..7 {
        let dx = half * lit(GK_NODES[i]);
        let s = f(mid - dx) + f(mid + dx);
        k += s * lit(GK_WEIGHTS[i]);
        if i % 2 == 1 {
            g += s * lit(G_WEIGHTS[i / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Result of an adaptive quadrature.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
    pub panels: usize,
}

/// Globally adaptive GK15 on `[a, b]` split at `breaks`.
///
/// Fails with [`Error::QuadratureNonConvergence`] when the panel budget runs out
/// before `error <= max(abs_tol, rel_tol * |value|)`.
pub fn adaptive<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    breaks: &[T],
    abs_tol: T,
    rel_tol: T,
    max_panels: usize,
) -> Result<Quadrature<T>> {
    let mut panels: Vec<(T, T, T, T)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let value = panels.iter().fold(T::zero(), |s, p| s + p.2);
        let error = panels.iter().fold(T::zero(), |s, p| s + p.3);
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol {
            return Ok(Quadrature {
                value,
                error,
                panels: panels.len(),
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                estimate: crate::scalar::to_f64(error),
                tolerance: crate::scalar::to_f64(tol),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (a, b, _, _) = panels.swap_remove(worst);
        let m = (a + b) / lit(2.0);
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        panels.push((a, m, v1, e1));
        panels.push((m, b, v2, e2));
    }
}

/// Composite trapezoid for uniformly sampled values.
pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner = values[1..n - 1].iter().fold(T::zero(), |s, &v| s + v);
            h * (inner + (values[0] + values[n - 1]) / lit(2.0))
        }
    }
}

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

pub fn line_fit<T: Real>(xs: &[T], ys: &[T]) -> Result<LineFit<T>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::FitRejected(format!(
            "need at least two paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = from_usize::<T>(xs.len());
    let mx = xs.iter().fold(T::zero(), |s, &x| s + x) / n;
    let my = ys.iter().fold(T::zero(), |s, &y| s + y) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= T::zero() || !sxx.is_finite() {
        return Err(Error::FitRejected("abscissae are degenerate".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > T::zero() {
        sxy * sxy / (sxx * syy)
    } else {
        T::one()
    };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if a[piv][col].abs() <= T::min_positive_value() {
            return Err(Error::Domain("singular linear system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s = (row + 1..n).fold(b[row], |s, k| s - a[row][k] * x[k]);
        x[row] = s / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = gauss_legendre::<f64>(6);
        let v = gauss_legendre_integrate(|x| x.powi(10) + x.powi(3), -1.0, 1.0, &rule);
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
        let s: f64 = rule.1.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let q = adaptive(|x: f64| x.powf(-0.5), &[0.0, 1.0], 1e-10, 1e-10, 500).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn adaptive_reports_budget_exhaustion() {
        let r = adaptive(|x: f64| x.powf(-0.99), &[0.0, 1.0], 1e-14, 1e-14, 4);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }

    #[test]
    fn fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let fit = line_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_solve() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x: Vec<f64> = solve_dense(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }
}
