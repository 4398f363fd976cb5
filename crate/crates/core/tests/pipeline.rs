use fracwave::exponents::{p_c, ExponentInputs as Inputs};
use fracwave::frac_space::{frac_laplacian_spectral, Field as GenericField, SpaceGrid as GenericGrid};
use fracwave::frac_time::{rl_integral, FracOrder as Order, SampledFn as Sampled, Side, TimeMesh as Mesh};
use fracwave::nonexistence_probe::{five_integrals, master_root, SpaceTimeSamples};
use fracwave::solver::{blowup_monitor, run, Forcing};
use fracwave::{FracParams, SolverConfig};

#[test]
fn single_precision_core() {
    let mesh = Mesh::<f32>::new(1.0, 257).unwrap();
    let one = Sampled::from_fn(mesh, |_| 1.0f32).unwrap();
    let j = rl_integral(&one, Order::new(0.5f32).unwrap(), Side::Left).unwrap();
    // J^{1/2} 1 = 2 sqrt(t/π)
    let exact = 2.0 / std::f32::consts::PI.sqrt();
    assert!((j.values()[256] - exact).abs() < 1e-5);

    let grid = GenericGrid::<f32>::new(1, 32, 8.0).unwrap();
    let k = 2.0 * std::f32::consts::PI / 8.0;
    let f = GenericField::from_real_fn(grid, |x| (k * x[0]).cos());
    let g = frac_laplacian_spectral(&f, 0.5f32).unwrap();
    for (a, b) in g.real_parts().iter().zip(f.real_parts()) {
        assert!((a - k * b).abs() < 1e-5);
    }
    assert!((p_c(&Inputs::<f32>::new(2, 0.5, 0.0, None).unwrap()) - 4.0).abs() < 1e-5);
}

#[test]
fn simulated_run_feeds_the_probe() {
    let cfg = SolverConfig {
        p: 1.4,
        steps: 60,
        snapshot_stride: 1,
        data_amplitude: 0.05,
        ..SolverConfig::default()
    };
    let traj = run(&cfg).unwrap();
    assert!(!blowup_monitor(&traj, cfg.blowup_threshold).triggered);
    let (quad, u) = SpaceTimeSamples::from_trajectory(&traj, cfg.dt, Some(16.0)).unwrap();
    assert_eq!(u.values.len(), 61);
    let params = cfg.params().unwrap();
    let beta = (params.alpha() + 2.0) * params.p_conj() + 0.5;
    let fi = five_integrals(&u, &quad, &params, 2.0, beta, 0.1).unwrap();
    assert!(fi.i_main > 0.0);
    assert!(fi.all_bounded());

    let unforced = SolverConfig {
        forcing: Forcing::None,
        ..cfg
    };
    let lin = run(&unforced).unwrap();
    assert!(lin.history.is_empty());
}

#[test]
fn master_root_agrees_with_exponent_module() {
    let params = FracParams::new(3, 0.6, 0.3, 2.0).unwrap();
    let pc = p_c(&Inputs::<f64>::new(params.n, params.gamma, params.theta, None).unwrap());
    let root = master_root(params.n, params.gamma, params.theta).unwrap().unwrap();
    assert!((root - pc).abs() < 1e-10);
}
