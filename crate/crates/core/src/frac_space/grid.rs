//! Periodic grids, complex fields, n-D FFTs and the field file formats.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Periodic box `[−L/2, L/2)^n` sampled with `N` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpaceGrid<T> {
    dim: usize,
    points_per_axis: usize,
    period: T,
}

impl<T: Real> SpaceGrid<T> {
    /// Requires `dim ∈ {1, 2, 3}`, `N` a power of two `≥ 8`, `L > 0`.
    pub fn new(dim: usize, points_per_axis: usize, period: T) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid("dim", format!("must be 1, 2 or 3, got {dim}")));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(invalid(
                "points_per_axis",
                format!("must be a power of two and at least 8, got {points_per_axis}"),
            ));
        }
        if !(period > T::zero()) || !period.is_finite() {
            return Err(invalid("period", format!("must be positive and finite, got {period}")));
        }
        Ok(Self {
            dim,
            points_per_axis,
            period,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn period(&self) -> T {
        self.period
    }

    /// Number of grid points, `N^n`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        self.period / from_usize(self.points_per_axis)
    }

    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> T {
        self.period.powi(self.dim as i32)
    }

    /// Multi-index of a flat row-major index (axis 0 slowest).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut idx = [0; 3];
        let mut rest = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rest % n;
            rest /= n;
        }
        idx
    }

    /// Coordinates `x_i = −L/2 + i h` of a flat index.
    pub fn point(&self, flat: usize) -> Vec<T> {
        let h = self.spacing();
        let half = self.period / lit(2.0);
        self.multi_index(flat)[..self.dim]
            .iter()
            .map(|&i| from_usize::<T>(i) * h - half)
            .collect()
    }

    /// Signed integer frequency of an axis index.
    pub fn frequency_index(&self, i: usize) -> i64 {
        let n = self.points_per_axis;
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// `ξ = 2πk/L` of a flat index.
    pub fn wavevector(&self, flat: usize) -> Vec<T> {
        let base = T::TAU() / self.period;
        self.multi_index(flat)[..self.dim]
            .iter()
            .map(|&i| base * lit(self.frequency_index(i) as f64))
            .collect()
    }

    /// `|ξ|²` at every flat index.
    pub fn wavenumbers_sq(&self) -> Vec<T> {
        (0..self.len())
            .map(|f| self.wavevector(f).iter().fold(T::zero(), |s, &k| s + k * k))
            .collect()
    }

    /// Largest `|ξ|` on the lattice.
    pub fn max_wavenumber(&self) -> T {
        let kmax = T::PI() * from_usize(self.points_per_axis) / self.period;
        kmax * lit::<T>(self.dim as f64).sqrt()
    }

    /// Flat indices in the outer shell where some coordinate satisfies `|x_a| ≥ 0.4 L`.
    pub fn boundary_shell(&self) -> Vec<usize> {
        let edge = self.period * lit(0.4);
        (0..self.len())
            .filter(|&f| self.point(f).iter().any(|x| x.abs() >= edge))
            .collect()
    }
}

/// Complex values on a [`SpaceGrid`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: SpaceGrid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: SpaceGrid<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::MeshMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("field has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpaceGrid<T>) -> Self {
        Self {
            grid,
            values: vec![Complex::new(T::zero(), T::zero()); grid.len()],
        }
    }

    /// Samples a real function at the grid points.
    pub fn from_real_fn(grid: SpaceGrid<T>, f: impl Fn(&[T]) -> T) -> Self {
        let values = (0..grid.len())
            .map(|i| Complex::new(f(&grid.point(i)), T::zero()))
            .collect();
        Self { grid, values }
    }

    pub fn from_complex_fn(grid: SpaceGrid<T>, f: impl Fn(&[T]) -> Complex<T>) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpaceGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<T> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == T::zero())
    }

    /// Discrete `∫ f ḡ dx`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        if self.grid != other.grid {
            return Err(Error::MeshMismatch("fields live on different grids".into()));
        }
        let s = self
            .values
            .iter()
            .zip(&other.values)
            .fold(Complex::new(T::zero(), T::zero()), |s, (a, b)| s + a * b.conj());
        Ok(s * self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> T {
        let s = self.values.iter().fold(T::zero(), |s, v| s + v.norm_sqr());
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    /// Discrete `∫ f dx`.
    pub fn integral(&self) -> Complex<T> {
        self.values
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |s, v| s + v)
            * self.grid.cell_volume()
    }

    /// Binary layout: `dim`, `points_per_axis` as u64 LE, `period` as f64 LE,
    /// then row-major `(re, im)` pairs as f64 LE.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim as u64).to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis as u64).to_le_bytes())?;
        w.write_all(&to_f64(self.grid.period).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&to_f64(v.re).to_le_bytes())?;
            w.write_all(&to_f64(v.im).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let dim = u64::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let n = u64::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let period = f64::from_le_bytes(b);
        let grid = SpaceGrid::new(dim, n, lit(period))?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b)?;
            let re = f64::from_le_bytes(b);
            r.read_exact(&mut b)?;
            let im = f64::from_le_bytes(b);
            values.push(Complex::new(lit(re), lit(im)));
        }
        Self::new(grid, values)
    }

    /// CSV `x,re,im` along axis 0 through the origin of the other axes.
    pub fn write_csv_slice<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.grid.points_per_axis;
        let stride = n.pow(self.grid.dim as u32 - 1);
        let centre = (0..self.grid.dim - 1).fold(0, |acc, _| acc * n + n / 2);
        writeln!(w, "x,re,im")?;
        for i in 0..n {
            let flat = i * stride + centre;
            let x = self.grid.point(flat)[0];
            let v = self.values[flat];
            writeln!(w, "{:?},{:?},{:?}", to_f64(x), to_f64(v.re), to_f64(v.im))?;
        }
        Ok(())
    }
}

/// Forward (unnormalised) and inverse (divided by `N^n`) n-D FFTs for one grid.
#[derive(Clone)]
pub struct SpectralPlan<T: Real> {
    grid: SpaceGrid<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    k2: Vec<T>,
}

impl<T: Real> std::fmt::Debug for SpectralPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).finish()
    }
}

impl<T: Real> SpectralPlan<T> {
    pub fn new(grid: SpaceGrid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k2: grid.wavenumbers_sq(),
        }
    }

    pub fn grid(&self) -> &SpaceGrid<T> {
        &self.grid
    }

    /// `|ξ|²` per flat index.
    pub fn wavenumbers_sq(&self) -> &[T] {
        &self.k2
    }

    fn transform(&self, data: &mut [Complex<T>], fft: &Arc<dyn Fft<T>>) {
        let n = self.grid.points_per_axis();
        let dim = self.grid.dim();
        let total = data.len();
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process(data);
                continue;
            }
            let block = stride * n;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (i, l) in line.iter_mut().enumerate() {
                        *l = data[base + i * stride];
                    }
                    fft.process(&mut line);
                    for (i, l) in line.iter().enumerate() {
                        data[base + i * stride] = *l;
                    }
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.inverse);
        let scale = from_usize::<T>(data.len()).recip();
        data.iter_mut().for_each(|v| *v = *v * scale);
    }

    /// Applies the Fourier multiplier `m(|ξ|²)` to a physical-space field.
    pub fn apply_multiplier(&self, f: &Field<T>, m: impl Fn(T) -> T) -> Result<Field<T>> {
        if f.grid != self.grid {
            return Err(Error::MeshMismatch("field grid differs from plan grid".into()));
        }
        let mut data = f.values.clone();
        self.forward(&mut data);
        for (v, &k2) in data.iter_mut().zip(&self.k2) {
            *v = *v * m(k2);
        }
        self.inverse(&mut data);
        if f.is_real() {
            let norm = f.sup_norm().max(T::min_positive_value());
            let cut = lit::<T>(1e-12) * norm;
            for v in data.iter_mut() {
                if v.im.abs() <= cut {
                    v.im = T::zero();
                }
            }
        }
        Ok(Field {
            grid: self.grid,
            values: data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(SpaceGrid::new(4, 16, 1.0_f64).is_err());
        assert!(SpaceGrid::new(1, 12, 1.0_f64).is_err());
        assert!(SpaceGrid::new(1, 4, 1.0_f64).is_err());
        assert!(SpaceGrid::new(1, 16, 0.0_f64).is_err());
        let g = SpaceGrid::new(2, 8, 4.0_f64).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.point(0), vec![-2.0, -2.0]);
        assert_eq!(g.point(9), vec![-1.5, -1.5]);
        assert_eq!(g.frequency_index(4), -4);
    }

    #[test]
    fn fft_round_trip_3d() {
        let g = SpaceGrid::new(3, 8, 2.0_f64).unwrap();
        let f = Field::from_real_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[2]);
        let plan = SpectralPlan::new(g);
        let mut d = f.values().to_vec();
        plan.forward(&mut d);
        plan.inverse(&mut d);
        for (a, b) in d.iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_mode_is_integral() {
        let g = SpaceGrid::new(2, 16, 3.0_f64).unwrap();
        let f = Field::from_real_fn(g, |x| 1.0 + (x[0] * std::f64::consts::TAU / 3.0).cos());
        let plan = SpectralPlan::new(g);
        let mut d = f.values().to_vec();
        plan.forward(&mut d);
        assert!((d[0] * g.cell_volume() - f.integral()).norm() < 1e-12);
        assert!((f.integral().re - 9.0).abs() < 1e-12);
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let g = SpaceGrid::new(2, 8, 5.0_f64).unwrap();
        let f = Field::from_complex_fn(g, |x| Complex::new(x[0], x[1] * 0.5));
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 16 * 64);
        assert_eq!(&buf[0..8], &2u64.to_le_bytes());
        let back = Field::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        let mut csv = Vec::new();
        f.write_csv_slice(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("x,re,im\n-2.5,-2.5,0.0\n"));
    }

    #[test]
    fn shell_covers_outer_ten_percent() {
        let g = SpaceGrid::new(1, 64, 10.0_f64).unwrap();
        let shell = g.boundary_shell();
        assert!(shell.iter().all(|&i| g.point(i)[0].abs() >= 4.0));
        assert_eq!(shell.len(), 13);
    }
}
