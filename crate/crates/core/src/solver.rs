//! Pseudospectral integration of
//! `u_tt − Δu_tt + Δ²u − Δu + (−Δ)^θ u_t = ∫_0^t (t−s)^{−γ}|u(s)|^p ds`
//! on a periodic box.
//!
//! Per mode `ξ` the scheme is
//! `(1+|ξ|²)(u⁺−2u+u⁻)/Δt² + |ξ|^{2θ}(u⁺−u⁻)/(2Δt) + (|ξ|⁴+|ξ|²)u = F̂`,
//! closed-form in `u⁺`.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::frac_space::{Bracket, Field, Gaussian, Profile, SpaceGrid, SpectralPlan};
use crate::frac_time::{FracOrder, MemoryKernel, ProductWeights, TimeMesh};
use crate::params::FracParams;
use crate::quad::line_fit;
use crate::scalar::{from_usize, lit, to_f64, Real};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SemiImplicitCentral,
}

/// Named initial profile; `u₁ = ε₀·profile`, `u₀ = u0_amplitude·profile`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialProfile<T> {
    /// `exp(−|x|²/(2w²))`.
    Gaussian { width: T },
    /// `⟨x⟩^{−q}`.
    Bracket { q: T },
    Zero,
}

impl<T: Real> InitialProfile<T> {
    pub fn value(&self, x: &[T]) -> T {
        match *self {
            Self::Gaussian { width } => Gaussian {
                amplitude: T::one(),
                width,
            }
            .value(x),
            Self::Bracket { q } => Bracket { q }.value(x),
            Self::Zero => T::zero(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Bracket { .. } => "bracket",
            Self::Zero => "zero",
        }
    }
}

/// Right-hand side of the equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    #[default]
    Memory,
    None,
}

/// Everything a run depends on.
///
/// Text form: one `key = value` per line, `#` starts a comment. Keys:
/// `n gamma theta p points period dt steps amplitude u0_amplitude profile
/// width q forcing threshold stride safety scheme`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig<T> {
    pub n: usize,
    pub gamma: T,
    pub theta: T,
    pub p: T,
    pub points_per_axis: usize,
    pub period: T,
    pub dt: T,
    pub steps: usize,
    pub scheme: Scheme,
    pub data_amplitude: T,
    pub u0_amplitude: T,
    pub initial_profile: InitialProfile<T>,
    pub forcing: Forcing,
    pub blowup_threshold: T,
    pub snapshot_stride: usize,
    pub safety: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            n: 1,
            gamma: lit(0.5),
            theta: lit(0.1),
            p: lit(2.0),
            points_per_axis: 64,
            period: lit(32.0),
            dt: lit(0.05),
            steps: 100,
            scheme: Scheme::SemiImplicitCentral,
            data_amplitude: lit(1e-3),
            u0_amplitude: T::zero(),
            initial_profile: InitialProfile::Gaussian { width: T::one() },
            forcing: Forcing::Memory,
            blowup_threshold: lit(1e3),
            snapshot_stride: 10,
            safety: lit(0.5),
        }
    }
}

fn parse_num<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl<T: Real> SolverConfig<T> {
    /// Parses the key-value text form on top of the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Sets one key; `width` and `q` also select the matching profile.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let real = |v: &str| parse_num::<f64>(key, v).map(lit::<T>);
        match key {
            "n" => self.n = parse_num(key, value)?,
            "gamma" => self.gamma = real(value)?,
            "theta" => self.theta = real(value)?,
            "p" => self.p = real(value)?,
            "points" => self.points_per_axis = parse_num(key, value)?,
            "period" => self.period = real(value)?,
            "dt" => self.dt = real(value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "amplitude" => self.data_amplitude = real(value)?,
            "u0_amplitude" => self.u0_amplitude = real(value)?,
            "threshold" => self.blowup_threshold = real(value)?,
            "stride" => self.snapshot_stride = parse_num(key, value)?,
            "safety" => self.safety = real(value)?,
            "profile" => {
                self.initial_profile = match value {
                    "gaussian" => InitialProfile::Gaussian { width: T::one() },
                    "bracket" => InitialProfile::Bracket {
                        q: from_usize::<T>(self.n) + T::one(),
                    },
                    "zero" => InitialProfile::Zero,
                    other => return Err(Error::Config(format!("unknown profile `{other}`"))),
                }
            }
            "width" => {
                self.initial_profile = InitialProfile::Gaussian {
                    width: real(value)?,
                }
            }
            "q" => self.initial_profile = InitialProfile::Bracket { q: real(value)? },
            "forcing" => {
                self.forcing = match value {
                    "memory" => Forcing::Memory,
                    "none" | "linear" => Forcing::None,
                    other => return Err(Error::Config(format!("unknown forcing `{other}`"))),
                }
            }
            "scheme" => {
                if value != "semi_implicit_central" {
                    return Err(Error::Config(format!("unknown scheme `{value}`")));
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Key-value text that parses back to `self`.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "gamma = {:?}", to_f64(self.gamma));
        let _ = writeln!(s, "theta = {:?}", to_f64(self.theta));
        let _ = writeln!(s, "p = {:?}", to_f64(self.p));
        let _ = writeln!(s, "points = {}", self.points_per_axis);
        let _ = writeln!(s, "period = {:?}", to_f64(self.period));
        let _ = writeln!(s, "dt = {:?}", to_f64(self.dt));
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "amplitude = {:?}", to_f64(self.data_amplitude));
        let _ = writeln!(s, "u0_amplitude = {:?}", to_f64(self.u0_amplitude));
        match self.initial_profile {
            InitialProfile::Gaussian { width } => {
                let _ = writeln!(s, "width = {:?}", to_f64(width));
            }
            InitialProfile::Bracket { q } => {
                let _ = writeln!(s, "q = {:?}", to_f64(q));
            }
            InitialProfile::Zero => {
                let _ = writeln!(s, "profile = zero");
            }
        }
        let forcing = match self.forcing {
            Forcing::Memory => "memory",
            Forcing::None => "none",
        };
        let _ = writeln!(s, "forcing = {forcing}");
        let _ = writeln!(s, "threshold = {:?}", to_f64(self.blowup_threshold));
        let _ = writeln!(s, "stride = {}", self.snapshot_stride);
        let _ = writeln!(s, "safety = {:?}", to_f64(self.safety));
        let _ = writeln!(s, "scheme = semi_implicit_central");
        s
    }

    pub fn params(&self) -> Result<FracParams<T>> {
        FracParams::new(self.n, self.gamma, self.theta, self.p)
    }

    pub fn grid(&self) -> Result<SpaceGrid<T>> {
        SpaceGrid::new(self.n, self.points_per_axis, self.period)
    }

    /// `None` for a zero-step run.
    pub fn mesh(&self) -> Result<Option<TimeMesh<T>>> {
        if self.steps == 0 {
            return Ok(None);
        }
        TimeMesh::new(self.dt * from_usize(self.steps), self.steps + 1).map(Some)
    }

    /// Largest admissible `Δt = 2·safety/|ξ|_max`.
    pub fn admissible_dt(&self) -> Result<T> {
        Ok(lit::<T>(2.0) * self.safety / self.grid()?.max_wavenumber())
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.grid()?;
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive and finite"));
        }
        if !(self.safety > T::zero() && self.safety <= T::one()) {
            return Err(invalid("safety", "must lie in (0, 1]"));
        }
        if self.snapshot_stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if !(self.blowup_threshold > T::zero()) {
            return Err(invalid("threshold", "must be positive"));
        }
        if let InitialProfile::Gaussian { width } = self.initial_profile {
            if !(width > T::zero()) {
                return Err(invalid("width", "must be positive"));
            }
        }
        if let InitialProfile::Bracket { q } = self.initial_profile {
            if !(q > T::zero()) {
                return Err(invalid("q", "must be positive"));
            }
        }
        let admissible = self.admissible_dt()?;
        if self.dt > admissible {
            return Err(Error::StabilityBudget {
                dt: to_f64(self.dt),
                admissible: to_f64(admissible),
            });
        }
        Ok(())
    }

    /// `(u₀, u₁)` sampled from the named profile.
    pub fn initial_data(&self) -> Result<(Field<T>, Field<T>)> {
        let grid = self.grid()?;
        let prof = self.initial_profile;
        let (a0, a1) = (self.u0_amplitude, self.data_amplitude);
        Ok((
            Field::from_real_fn(grid, |x| a0 * prof.value(x)),
            Field::from_real_fn(grid, |x| a1 * prof.value(x)),
        ))
    }
}

/// `(û, v̂ = û_t)` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState<T> {
    pub u_hat: Field<T>,
    pub v_hat: Field<T>,
    pub t: T,
}

/// Data summary produced by [`Solver::init`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitReport<T> {
    /// Zero mode of `û₁` times the cell volume, i.e. `Σ u₁ h^n`.
    pub integral_u1: T,
    pub sign_condition: bool,
}

/// Per-mode coefficients and the running three-level state.
#[derive(Clone, Debug)]
pub struct Solver<T: Real> {
    config: SolverConfig<T>,
    plan: SpectralPlan<T>,
    inertia: Vec<T>,
    stiffness: Vec<T>,
    damping: Vec<T>,
    lhs: Vec<T>,
    kernel: Option<MemoryKernel<T>>,
    history: Vec<Vec<T>>,
    u_prev: Vec<Complex<T>>,
    u_cur: Vec<Complex<T>>,
    u_next: Vec<Complex<T>>,
    phys_cur: Vec<T>,
    phys_next: Vec<T>,
    index: usize,
    report: InitReport<T>,
}

/// Damping multiplier `|ξ|^{2θ}`; identically 1 when `θ = 0`.
pub fn damping_multiplier<T: Real>(k2: T, theta: T) -> T {
    if theta == T::zero() {
        T::one()
    } else if k2 == T::zero() {
        T::zero()
    } else {
        k2.powf(theta)
    }
}

impl<T: Real> Solver<T> {
    /// Transforms the data, bootstraps `u(±Δt)` by a Taylor step with `F(0) = 0`.
    pub fn init(config: SolverConfig<T>, u0: &Field<T>, u1: &Field<T>) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        if *u0.grid() != grid || *u1.grid() != grid {
            return Err(Error::MeshMismatch("initial data grid differs from config grid".into()));
        }
        let plan = SpectralPlan::new(grid);
        let dt = config.dt;
        let two: T = lit(2.0);
        let k2 = plan.wavenumbers_sq().to_vec();
        let inertia: Vec<T> = k2.iter().map(|&k| T::one() + k).collect();
        let stiffness: Vec<T> = k2.iter().map(|&k| k * k + k).collect();
        let damping: Vec<T> = k2
            .iter()
            .map(|&k| damping_multiplier(k, config.theta))
            .collect();
        let lhs: Vec<T> = inertia
            .iter()
            .zip(&damping)
            .map(|(&a, &d)| a / (dt * dt) + d / (two * dt))
            .collect();

        let mut u0h = u0.values().to_vec();
        let mut u1h = u1.values().to_vec();
        plan.forward(&mut u0h);
        plan.forward(&mut u1h);
        let integral_u1 = u1h[0].re * grid.cell_volume();

        let half_dt2 = dt * dt / two;
        let mut u_prev = Vec::with_capacity(grid.len());
        let mut u_next = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let utt = (u1h[i] * (-damping[i]) - u0h[i] * stiffness[i]) / inertia[i];
            u_prev.push(u0h[i] - u1h[i] * dt + utt * half_dt2);
            u_next.push(u0h[i] + u1h[i] * dt + utt * half_dt2);
        }

        let kernel = match config.forcing {
            Forcing::Memory => {
                let alpha = FracOrder::new(T::one() - config.gamma)?;
                let weights = Arc::new(ProductWeights::new(alpha, config.steps + 2));
                Some(MemoryKernel::new(weights, dt))
            }
            Forcing::None => None,
        };
        let phys_cur = u0.real_parts();
        let phys_next = to_physical(&plan, &u_next);
        let mut solver = Self {
            config,
            plan,
            inertia,
            stiffness,
            damping,
            lhs,
            kernel,
            history: Vec::new(),
            u_prev,
            u_cur: u0h,
            u_next,
            phys_cur,
            phys_next,
            index: 0,
            report: InitReport {
                integral_u1,
                sign_condition: integral_u1 > T::zero(),
            },
        };
        if solver.kernel.is_some() {
            let p = solver.config.p;
            solver.history.push(abs_pow(&solver.phys_cur, p));
            solver.history.push(abs_pow(&solver.phys_next, p));
        }
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    pub fn init_report(&self) -> InitReport<T> {
        self.report
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> T {
        self.config.dt * from_usize(self.index)
    }

    /// Current state; `v̂` is the centred difference `(û^{k+1} − û^{k−1})/(2Δt)`.
    pub fn state(&self) -> FieldState<T> {
        let grid = *self.plan.grid();
        let inv = (lit::<T>(2.0) * self.config.dt).recip();
        let v: Vec<Complex<T>> = self
            .u_next
            .iter()
            .zip(&self.u_prev)
            .map(|(a, b)| (a - b) * inv)
            .collect();
        FieldState {
            u_hat: Field::new(grid, self.u_cur.clone()).unwrap_or_else(|_| Field::zeros(grid)),
            v_hat: Field::new(grid, v).unwrap_or_else(|_| Field::zeros(grid)),
            t: self.time(),
        }
    }

    /// Physical-space `u` at the current time.
    pub fn physical(&self) -> &[T] {
        &self.phys_cur
    }

    /// Stored `|u(t_j)|^p`, `j ≤ index + 1`.
    pub fn history(&self) -> &[Vec<T>] {
        &self.history
    }

    /// `F̂` at mesh index `k` from the stored history (zero without forcing).
    pub fn forcing_hat(&self, k: usize) -> Vec<Complex<T>> {
        let mut out = vec![T::zero(); self.plan.grid().len()];
        if let Some(kernel) = &self.kernel {
            kernel.evaluate(k, &self.history, &mut out);
        }
        let mut data: Vec<Complex<T>> = out.into_iter().map(|v| Complex::new(v, T::zero())).collect();
        self.plan.forward(&mut data);
        data
    }

    /// Advances one step. Fails with [`Error::NonFinite`] when the lookahead level overflows.
    pub fn step(&mut self) -> Result<FieldState<T>> {
        let k = self.index + 1;
        let fh = self.forcing_hat(k);
        let dt2 = self.config.dt * self.config.dt;
        let two: T = lit(2.0);
        let two_dt = two * self.config.dt;
        let mut new = Vec::with_capacity(self.u_cur.len());
        for i in 0..self.u_cur.len() {
            let (a, b, d) = (self.inertia[i], self.stiffness[i], self.damping[i]);
            let (uc, up) = (self.u_next[i], self.u_cur[i]);
            let rhs = fh[i] - uc * b + (uc * two - up) * (a / dt2) + up * (d / two_dt);
            new.push(rhs / self.lhs[i]);
        }
        let phys = to_physical(&self.plan, &new);
        if phys.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: to_f64(self.config.dt * from_usize(k + 1)),
            });
        }
        if self.kernel.is_some() {
            self.history.push(abs_pow(&phys, self.config.p));
        }
        self.u_prev = std::mem::replace(&mut self.u_cur, std::mem::replace(&mut self.u_next, new));
        self.phys_cur = std::mem::replace(&mut self.phys_next, phys);
        self.index += 1;
        Ok(self.state())
    }

    fn parseval_factor(&self) -> T {
        let g = self.plan.grid();
        g.cell_volume() / from_usize(g.len())
    }

    /// `E = ‖u_t‖² + ‖∇u_t‖² + ‖Δu‖² + ‖∇u‖²`.
    pub fn energy(&self, state: &FieldState<T>) -> T {
        let s = state
            .u_hat
            .values()
            .iter()
            .zip(state.v_hat.values())
            .enumerate()
            .fold(T::zero(), |s, (i, (u, v))| {
                s + self.inertia[i] * v.norm_sqr() + self.stiffness[i] * u.norm_sqr()
            });
        s * self.parseval_factor()
    }

    /// `‖(−Δ)^{θ/2} u_t‖²`.
    pub fn dissipation(&self, state: &FieldState<T>) -> T {
        let s = state
            .v_hat
            .values()
            .iter()
            .enumerate()
            .fold(T::zero(), |s, (i, v)| s + self.damping[i] * v.norm_sqr());
        s * self.parseval_factor()
    }

    fn diagnostics(&self, state: &FieldState<T>) -> Diagnostics<T> {
        let grid = self.plan.grid();
        let u = &self.phys_cur;
        let sup = u.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let l2 = (u.iter().fold(T::zero(), |s, v| s + *v * *v) * grid.cell_volume()).sqrt();
        let boundary = grid
            .boundary_shell()
            .into_iter()
            .fold(T::zero(), |m, i| m.max(u[i].abs()));
        Diagnostics {
            t: state.t,
            energy: self.energy(state),
            dissipation: self.dissipation(state),
            sup_norm: sup,
            l2_norm: l2,
            boundary_norm: boundary,
        }
    }
}

fn to_physical<T: Real>(plan: &SpectralPlan<T>, hat: &[Complex<T>]) -> Vec<T> {
    let mut data = hat.to_vec();
    plan.inverse(&mut data);
    data.into_iter().map(|c| c.re).collect()
}

fn abs_pow<T: Real>(u: &[T], p: T) -> Vec<T> {
    u.iter().map(|v| v.abs().powf(p)).collect()
}

/// Largest `|û(ξ) − conj(û(−ξ))|`; zero for the transform of a real field.
pub fn conjugate_symmetry_defect<T: Real>(f: &Field<T>) -> T {
    let g = f.grid();
    let n = g.points_per_axis();
    let dim = g.dim();
    let v = f.values();
    (0..g.len()).fold(T::zero(), |m, flat| {
        let idx = g.multi_index(flat);
        let mirror = (0..dim).fold(0, |acc, a| acc * n + (n - idx[a]) % n);
        m.max((v[flat] - v[mirror].conj()).norm())
    })
}

/// One row of the diagnostics CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics<T> {
    pub t: T,
    pub energy: T,
    pub dissipation: T,
    pub sup_norm: T,
    pub l2_norm: T,
    pub boundary_norm: T,
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Abort {
    pub t: f64,
    pub reason: String,
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub init: InitReport<T>,
    pub states: Vec<FieldState<T>>,
    pub diagnostics: Vec<Diagnostics<T>>,
    /// `|u(t_j)|^p` for every computed level (empty without forcing).
    pub history: Vec<Vec<T>>,
    pub abort: Option<Abort>,
}

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> Vec<T> {
        self.diagnostics.iter().map(|d| d.t).collect()
    }

    pub fn energies(&self) -> Vec<T> {
        self.diagnostics.iter().map(|d| d.energy).collect()
    }

    pub fn dissipation(&self) -> Vec<T> {
        self.diagnostics.iter().map(|d| d.dissipation).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,E,dissipation,sup_norm,L2_norm,boundary_norm")?;
        for d in &self.diagnostics {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?}",
                to_f64(d.t),
                to_f64(d.energy),
                to_f64(d.dissipation),
                to_f64(d.sup_norm),
                to_f64(d.l2_norm),
                to_f64(d.boundary_norm)
            )?;
        }
        Ok(())
    }
}

/// Init, step loop and diagnostics. Blow-up ends the run and is recorded in
/// [`Trajectory::abort`]; only configuration problems are errors.
pub fn run<T: Real>(config: &SolverConfig<T>) -> Result<Trajectory<T>> {
    let (u0, u1) = config.initial_data()?;
    run_with_data(config, &u0, &u1)
}

pub fn run_with_data<T: Real>(
    config: &SolverConfig<T>,
    u0: &Field<T>,
    u1: &Field<T>,
) -> Result<Trajectory<T>> {
    let mut solver = Solver::init(config.clone(), u0, u1)?;
    let stride = config.snapshot_stride;
    let mut state = solver.state();
    let mut traj = Trajectory {
        init: solver.init_report(),
        states: vec![state.clone()],
        diagnostics: vec![solver.diagnostics(&state)],
        history: Vec::new(),
        abort: None,
    };
    for k in 1..=config.steps {
        match solver.step() {
            Ok(s) => state = s,
            Err(Error::NonFinite { t }) => {
                traj.abort = Some(Abort {
                    t,
                    reason: "non-finite solution".into(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        let diag = solver.diagnostics(&state);
        traj.diagnostics.push(diag);
        if k % stride == 0 || k == config.steps {
            traj.states.push(state.clone());
        }
        if !(diag.sup_norm <= config.blowup_threshold) {
            traj.abort = Some(Abort {
                t: to_f64(diag.t),
                reason: "sup norm exceeded threshold".into(),
            });
            break;
        }
    }
    traj.history = std::mem::take(&mut solver.history);
    Ok(traj)
}

/// `r_k = (E_{k+1} − E_{k−1})/(2Δt) + 2‖(−Δ)^{θ/2}u_t(t_k)‖²` at interior nodes.
pub fn dissipation_residual<T: Real>(traj: &Trajectory<T>) -> Vec<T> {
    let d = &traj.diagnostics;
    if d.len() < 3 {
        return Vec::new();
    }
    (1..d.len() - 1)
        .map(|k| {
            let dt = d[k + 1].t - d[k - 1].t;
            (d[k + 1].energy - d[k - 1].energy) / dt + lit::<T>(2.0) * d[k].dissipation
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupReport<T> {
    pub triggered: bool,
    pub t_star: Option<T>,
    /// Slope of `ln‖u‖_∞` against `t` over the final decade of growth.
    pub growth_rate: T,
}

pub fn blowup_monitor<T: Real>(traj: &Trajectory<T>, threshold: T) -> BlowupReport<T> {
    let d = &traj.diagnostics;
    let hit = d
        .iter()
        .position(|r| !(r.sup_norm <= threshold) || !r.sup_norm.is_finite());
    let triggered = hit.is_some() || traj.abort.is_some();
    let t_star = match (hit, &traj.abort) {
        (Some(i), _) => Some(d[i].t),
        (None, Some(a)) => Some(lit(a.t)),
        (None, None) => None,
    };
    let end = hit.map(|i| i + 1).unwrap_or(d.len());
    let finite: Vec<&Diagnostics<T>> = d[..end]
        .iter()
        .filter(|r| r.sup_norm.is_finite() && r.sup_norm > T::zero())
        .collect();
    let growth_rate = finite
        .last()
        .map(|last| {
            let floor = last.sup_norm / lit(10.0);
            let start = finite
                .iter()
                .rposition(|r| r.sup_norm < floor)
                .map(|i| i + 1)
                .unwrap_or(0);
            let tail = &finite[start..];
            let ts: Vec<T> = tail.iter().map(|r| r.t).collect();
            let ys: Vec<T> = tail.iter().map(|r| r.sup_norm.ln()).collect();
            line_fit(&ts, &ys).map(|f| f.slope).unwrap_or(T::zero())
        })
        .unwrap_or(T::zero());
    BlowupReport {
        triggered,
        t_star,
        growth_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(theta: f64, dt: f64, steps: usize) -> SolverConfig<f64> {
        SolverConfig {
            theta,
            dt,
            steps,
            forcing: Forcing::None,
            snapshot_stride: 1,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn kv_roundtrip_and_errors() {
        let cfg = SolverConfig::<f64>::from_kv_str("n = 2\n# c\np = 1.5 # x\nq = 3\nforcing = none\n").unwrap();
        assert_eq!(cfg.n, 2);
        assert_eq!(cfg.p, 1.5);
        assert_eq!(cfg.initial_profile, InitialProfile::Bracket { q: 3.0 });
        assert_eq!(cfg.forcing, Forcing::None);
        let back = SolverConfig::<f64>::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(SolverConfig::<f64>::from_kv_str("bogus = 1").is_err());
        assert!(SolverConfig::<f64>::from_kv_str("dt 1").is_err());
        assert!(SolverConfig::<f64>::from_kv_str("p = abc").is_err());
    }

    #[test]
    fn stability_budget_enforced() {
        let cfg = SolverConfig::<f64> {
            dt: 0.2,
            ..SolverConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::StabilityBudget { .. })));
        assert!(SolverConfig::<f64>::default().validate().is_ok());
    }

    #[test]
    fn init_reports_sign_condition() {
        let cfg = SolverConfig::<f64>::default();
        let g = cfg.grid().unwrap();
        let z = Field::zeros(g);
        let s = Solver::init(cfg.clone(), &z, &z).unwrap();
        assert!(!s.init_report().sign_condition);
        assert_eq!(s.init_report().integral_u1, 0.0);

        let (u0, u1) = cfg.initial_data().unwrap();
        let s = Solver::init(cfg.clone(), &u0, &u1).unwrap();
        let direct: f64 = u1.real_parts().iter().sum();
        let zero_mode = s.state().u_hat.values()[0];
        assert!(s.init_report().sign_condition);
        // u0 = 0 so the zero mode of û is 0; the u₁ sum is reported instead
        assert_eq!(zero_mode.norm(), 0.0);
        assert!((s.init_report().integral_u1 - direct * g.cell_volume()).abs() < 1e-16);
        let exact = 1e-3 * (2.0 * std::f64::consts::PI).sqrt();
        assert!((s.init_report().integral_u1 - exact).abs() < 1e-10);

        let other = SpaceGrid::new(1, 32, 32.0).unwrap();
        assert!(Solver::init(cfg, &Field::zeros(other), &Field::zeros(other)).is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let cfg = SolverConfig::<f64> {
            initial_profile: InitialProfile::Zero,
            steps: 20,
            ..SolverConfig::default()
        };
        let traj = run(&cfg).unwrap();
        for d in &traj.diagnostics {
            assert_eq!(d.energy, 0.0);
            assert_eq!(d.sup_norm, 0.0);
        }
    }

    fn single_mode_error(dt: f64) -> f64 {
        // (1+ξ²)a'' + a' + ξ²(1+ξ²)a = 0
        let t_end = 2.0;
        let cfg = linear(0.0, dt, (t_end / dt).round() as usize);
        let g = cfg.grid().unwrap();
        let xi = 2.0 * std::f64::consts::PI * 3.0 / g.period();
        let u0 = Field::from_real_fn(g, |x| (xi * x[0]).cos());
        let u1 = Field::zeros(g);
        let traj = run_with_data(&cfg, &u0, &u1).unwrap();
        let a = 1.0 + xi * xi;
        let (re, im) = (-1.0 / (2.0 * a), (xi * xi - 1.0 / (4.0 * a * a)).sqrt());
        let exact = |t: f64| (re * t).exp() * ((im * t).cos() - re / im * (im * t).sin());
        let last = traj.states.last().unwrap();
        let mode = 3;
        let amp = last.u_hat.values()[mode].re / traj.states[0].u_hat.values()[mode].re;
        (amp - exact(last.t)).abs()
    }

    #[test]
    fn single_mode_matches_damped_oscillator() {
        let e1 = single_mode_error(0.02);
        let e2 = single_mode_error(0.01);
        let e3 = single_mode_error(0.005);
        assert!(e1 < 1e-3, "{e1}");
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!((o1 - 2.0).abs() < 0.2 && (o2 - 2.0).abs() < 0.2, "{o1} {o2}");
    }

    fn gaussian_data(cfg: &SolverConfig<f64>) -> (Field<f64>, Field<f64>) {
        let g = cfg.grid().unwrap();
        (
            Field::from_real_fn(g, |x| (-x[0] * x[0]).exp()),
            Field::from_real_fn(g, |x| 0.5 * (-(x[0] - 1.0).powi(2)).exp()),
        )
    }

    fn residual(theta: f64, dt: f64) -> (f64, f64, bool) {
        let cfg = linear(theta, dt, (5.0 / dt).round() as usize);
        let (u0, u1) = gaussian_data(&cfg);
        let traj = run_with_data(&cfg, &u0, &u1).unwrap();
        let e = traj.energies();
        let r = dissipation_residual(&traj);
        let rmax = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let emax = e.iter().fold(0.0_f64, |m, v| m.max(*v));
        let mono = e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10));
        (rmax, emax, mono)
    }

    #[test]
    fn energy_decays_and_residual_is_second_order() {
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| {
                let (r, _, mono) = residual(0.25, dt);
                assert!(mono);
                r
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "{order}");
        }
        let (r, e, _) = residual(0.25, 1e-3);
        assert!(r / e <= 1e-3, "{}", r / e);
    }

    #[test]
    fn theta_zero_limit_on_mean_free_data() {
        let g = SolverConfig::<f64>::default().grid().unwrap();
        let u0 = Field::from_real_fn(g, |x| x[0] * (-x[0] * x[0]).exp());
        let u1 = Field::zeros(g);
        let a = run_with_data(&linear(0.0, 0.01, 200), &u0, &u1).unwrap();
        let b = run_with_data(&linear(1e-15, 0.01, 200), &u0, &u1).unwrap();
        let (sa, sb) = (a.states.last().unwrap(), b.states.last().unwrap());
        for (x, y) in sa.u_hat.values().iter().zip(sb.u_hat.values()) {
            assert!((x - y).norm() < 1e-12, "{}", (x - y).norm());
        }
    }

    #[test]
    fn memory_term_on_uniform_state() {
        let cfg = SolverConfig::<f64> {
            steps: 6,
            dt: 0.05,
            p: 2.5,
            u0_amplitude: 0.3,
            initial_profile: InitialProfile::Zero,
            ..SolverConfig::default()
        };
        let g = cfg.grid().unwrap();
        let u0 = Field::from_real_fn(g, |_| 0.3);
        let u1 = Field::from_real_fn(g, |_| 0.1);
        let mut s = Solver::init(cfg.clone(), &u0, &u1).unwrap();
        for _ in 0..4 {
            s.step().unwrap();
        }
        let k = s.index() + 1;
        let mesh = TimeMesh::new(cfg.dt * k as f64, k + 1).unwrap();
        let scalar: Vec<f64> = s.history()[..=k].iter().map(|h| h[0].powf(1.0 / cfg.p)).collect();
        let series = crate::frac_time::SampledFn::new(mesh, scalar).unwrap();
        let reference = crate::frac_time::memory_convolve(&series, cfg.gamma, cfg.p).unwrap();
        let fh = s.forcing_hat(k);
        let lhs = fh[0].re * g.cell_volume();
        let rhs = reference.values()[k] * g.volume();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "{lhs} {rhs}");
    }

    #[test]
    fn conjugate_symmetry_is_preserved() {
        let cfg = SolverConfig::<f64> {
            n: 2,
            points_per_axis: 16,
            period: 8.0,
            steps: 5,
            p: 1.7,
            data_amplitude: 0.5,
            ..SolverConfig::default()
        };
        let (u0, u1) = cfg.initial_data().unwrap();
        let mut s = Solver::init(cfg, &u0, &u1).unwrap();
        for _ in 0..5 {
            let st = s.step().unwrap();
            assert!(conjugate_symmetry_defect(&st.u_hat) < 1e-12);
        }
    }

    #[test]
    fn snapshot_counting_and_determinism() {
        let mut cfg = linear(0.1, 0.05, 10);
        cfg.snapshot_stride = 3;
        let a = run(&cfg).unwrap();
        assert_eq!(a.states.len(), 10usize.div_ceil(3) + 1);
        let b = run(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        cfg.steps = 0;
        let z = run(&cfg).unwrap();
        assert_eq!(z.states.len(), 1);
        assert_eq!(z.diagnostics.len(), 1);
    }

    #[test]
    fn linear_run_never_triggers() {
        let cfg = SolverConfig::<f64> {
            forcing: Forcing::None,
            data_amplitude: 1.0,
            steps: 200,
            ..SolverConfig::default()
        };
        let traj = run(&cfg).unwrap();
        assert!(!blowup_monitor(&traj, cfg.blowup_threshold).triggered);
    }

    #[test]
    fn small_power_blows_up() {
        let cfg = SolverConfig::<f64> {
            p: 1.2,
            steps: 1200,
            ..SolverConfig::default()
        };
        let traj = run(&cfg).unwrap();
        let rep = blowup_monitor(&traj, cfg.blowup_threshold);
        assert!(rep.triggered);
        assert!(rep.growth_rate > 0.0);
        assert!(rep.t_star.unwrap() < 60.0);
    }
}
