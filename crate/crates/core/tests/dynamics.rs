use num_complex::Complex64 as C64;

use diracsol::coupled_dynamics::{
    extract_scattering_data, hamiltonian, simulate, Integrator, ModulationSample, SimulationOptions, Trajectory,
};
use diracsol::experiments::{run_scattering, run_soliton_persistence, RunConfig};
use diracsol::field_grid::{GridSpec, Repr};
use diracsol::soliton_manifold::{soliton_momentum, soliton_state, SolitonParams};
use diracsol::spinor_algebra::ChargeDensity;
use diracsol::symplectic_geometry::PhaseState;

fn rho() -> ChargeDensity {
    ChargeDensity::default()
}

fn packet(grid: GridSpec) -> PhaseState {
    let a = [C64::new(0.4, 0.1), C64::new(-0.2, 0.3), C64::new(0.1, 0.0), C64::new(0.0, -0.3)];
    PhaseState::gaussian_bump(grid, [0.5, -0.3, 0.2], 1.4, [0.4, 0.0, -0.2], a, [0.2, 0.0, 0.0], [0.3, 0.1, 0.0])
}

fn run_to(y0: &PhaseState, dt: f64, t: f64) -> PhaseState {
    let opts = SimulationOptions { dt, t_final: t, track_every: 0.0, ..Default::default() };
    simulate(y0, &rho(), &opts, None).unwrap().final_state
}

fn gap(a: &PhaseState, b: &PhaseState) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b).unwrap();
    d.norm_e()
}

#[test]
fn charge_grows_at_most_linearly() {
    let grid = GridSpec::new(16.0, 16).unwrap();
    let y0 = packet(grid).to_fourier();
    let n0 = y0.psi.l2_norm();
    let c = 2.0 * rho().l2_norm();
    let mut integ = Integrator::new(rho(), grid, 0.05).unwrap();
    let mut y = y0.clone();
    for n in 1..=60 {
        integ.step(&mut y).unwrap();
        let t = n as f64 * 0.05;
        assert!(y.psi.l2_norm() <= n0 + c * t / 2.0, "t = {t}");
    }
}

#[test]
fn splitting_is_second_order() {
    let grid = GridSpec::new(16.0, 16).unwrap();
    let y0 = packet(grid);
    let reference = run_to(&y0, 0.0125, 1.0);
    let e1 = gap(&run_to(&y0, 0.1, 1.0), &reference);
    let e2 = gap(&run_to(&y0, 0.05, 1.0), &reference);
    // Against a dt/4 reference the ratio of errors is (1 − 1/16)/(1/4 − 1/16) = 5.
    let ratio = e1 / e2;
    assert!((4.0..6.0).contains(&ratio), "{e1:.3e} {e2:.3e} ratio {ratio:.2}");
}

#[test]
fn hamiltonian_drift_is_second_order() {
    let grid = GridSpec::new(16.0, 16).unwrap();
    let mut cfg = RunConfig::new(grid);
    cfg.initial.v = [0.3, 0.0, 0.0];
    cfg.initial.epsilon = 0.1;
    let (y0, _) = cfg.initial_state().unwrap();
    let h0 = hamiltonian(&y0, &rho()).unwrap();
    let drift = |dt: f64| {
        let mut integ = Integrator::new(rho(), grid, dt).unwrap();
        let mut y = y0.to_fourier();
        let mut worst: f64 = 0.0;
        for _ in 0..(2.0 / dt).round() as usize {
            integ.step(&mut y).unwrap();
            worst = worst.max(((hamiltonian(&y, &rho()).unwrap() - h0) / h0).abs());
        }
        worst
    };
    let (d1, d2) = (drift(0.1), drift(0.05));
    assert!(d1 > 0.0 && (3.0..5.5).contains(&(d1 / d2)), "{d1:.3e} {d2:.3e}");
}

#[test]
fn resting_soliton_keeps_particle_at_rest() {
    let grid = GridSpec::new(16.0, 32).unwrap();
    let y0 = soliton_state(&SolitonParams::new([0.0; 3], [0.0; 3]).unwrap(), &rho(), grid).unwrap();
    let opts = SimulationOptions { dt: 0.05, t_final: 2.0, track_every: 0.0, ..Default::default() };
    let traj = simulate(&y0, &rho(), &opts, None).unwrap();
    for (q, p) in traj.q.iter().zip(&traj.p) {
        assert!(q.iter().chain(p).all(|x| x.abs() < 1e-10), "{q:?} {p:?}");
    }
}

#[test]
fn free_relativistic_particle() {
    let grid = GridSpec::new(8.0, 8).unwrap();
    let none = ChargeDensity::new(0.0, 1.0, 1.0).unwrap();
    let y0 = PhaseState { psi: diracsol::field_grid::SpinorField::zeros(grid, Repr::Fourier), q: [1.0, 0.0, 0.0], p: [0.75, 0.0, 0.0] };
    assert!((hamiltonian(&y0, &none).unwrap() - 1.25).abs() < 1e-15);
    let opts = SimulationOptions { dt: 0.1, t_final: 3.0, track_every: 0.0, ..Default::default() };
    let traj = simulate(&y0, &none, &opts, None).unwrap();
    let q = traj.final_state.q;
    assert!((q[0] - 2.8).abs() < 1e-12 && q[1] == 0.0, "{q:?}");
}

#[test]
fn exact_soliton_is_tracked() {
    let grid = GridSpec::new(16.0, 32).unwrap();
    let sigma = SolitonParams::new([0.5, -0.25, 0.0], [0.3, 0.1, 0.0]).unwrap();
    let y0 = soliton_state(&sigma, &rho(), grid).unwrap();
    let opts = SimulationOptions { dt: 0.05, t_final: 2.0, track_every: 0.5, ..Default::default() };
    let traj = simulate(&y0, &rho(), &opts, Some(sigma)).unwrap();
    assert!(traj.tracking_lost.is_none());
    let floor = traj.modulation[1].z_norm;
    assert!(traj.modulation[0].z_norm < 1e-12 && floor < 1e-3);
    for m in &traj.modulation {
        for i in 0..3 {
            assert!((m.b[i] - sigma.b[i] - sigma.v[i] * m.t).abs() < 1e-6);
            assert!((m.v[i] - sigma.v[i]).abs() < 1e-6);
        }
        assert!(m.z_norm <= 10.0 * floor, "{} {}", m.z_norm, floor);
    }
    assert!(traj.modulation.windows(2).all(|w| w[1].majorant >= w[0].majorant && w[1].t > w[0].t));
}

#[test]
fn halving_dt_quarters_the_field_error() {
    let err = |dt: f64| {
        let mut cfg = RunConfig::new(GridSpec::new(16.0, 32).unwrap());
        cfg.initial.v = [0.3, 0.0, 0.0];
        cfg.run.dt = dt;
        cfg.run.t_final = 2.0;
        cfg.run.track_every = 1.0;
        cfg.run.snapshot_every = 1.0;
        run_soliton_persistence(&cfg).unwrap().0.max_field_error
    };
    let ratio = err(0.1) / err(0.05);
    assert!((3.5..4.5).contains(&ratio), "{ratio}");
}

#[test]
fn synthetic_trajectory_recovers_exponents() {
    let grid = GridSpec::new(8.0, 8).unwrap();
    let v = 0.3;
    let (b0, a) = (0.7, 0.2);
    let times: Vec<f64> = (0..=200).map(|i| 1.0 + 0.1 * i as f64).collect();
    let u = |t: f64| v + a * t.powf(-1.5);
    let q = times.iter().map(|&t| [b0 + v * t - 2.0 * a * t.powf(-0.5), 0.0, 0.0]).collect();
    let p = times.iter().map(|&t| soliton_momentum([u(t), 0.0, 0.0]).unwrap()).collect();
    let modulation = times
        .iter()
        .step_by(5)
        .map(|&t| ModulationSample {
            t,
            b: [0.0; 3],
            v: [v, 0.0, 0.0],
            z_norm: 0.3 * t.powf(-1.5),
            z_energy: 0.0,
            majorant: 0.0,
            hamiltonian: 1.0,
            iterations: 0,
        })
        .collect();
    let traj = Trajectory {
        times,
        q,
        p,
        modulation,
        snapshots: Vec::new(),
        tracking_lost: None,
        final_state: PhaseState::zero(grid, Repr::Fourier),
    };
    let data = extract_scattering_data(&traj, (5.0, 21.0)).unwrap();
    let vf = data.velocity_fit.unwrap();
    assert!((vf.exponent + 1.5).abs() < 0.02, "{vf:?}");
    assert!((data.z_fit.unwrap().exponent + 1.5).abs() < 1e-10);
}

#[test]
fn unperturbed_scattering_recovers_the_soliton() {
    let mut cfg = RunConfig::new(GridSpec::new(16.0, 32).unwrap());
    cfg.initial.b = [0.5, 0.0, 0.0];
    cfg.initial.v = [0.3, 0.0, 0.0];
    cfg.run.dt = 0.05;
    cfg.run.t_final = 2.0;
    cfg.run.track_every = 0.1;
    cfg.run.t_min = 0.5;
    let (report, _) = run_scattering(&cfg).unwrap();
    assert!((report.data.v_plus[0] - 0.3).abs() < 1e-4, "{:?}", report.data.v_plus);
    assert!((report.data.a_plus[0] - 0.5).abs() < 1e-4, "{:?}", report.data.a_plus);
    assert!((report.v_limit[0] - 0.3).abs() < 1e-6);
}
