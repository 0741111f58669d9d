//! Time integration of the coupled field–particle system
//! iψ̇ = (−iα·∇ + βm)ψ + ρ(· − q), q̇ = p/√(1 + p²), ṗ = Re⟨ψ, ∇ρ(· − q)⟩,
//! the Hamiltonian, and modulation tracking along trajectories.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{fit_power_law, FitResult};
use crate::field_grid::{dirac_symbol, sum_modes, weighted_norm_centered, GridSpec, Repr, SpinorField};
use crate::soliton_manifold::{charge_hat, dot3, force_on_charge, velocity_of_momentum, SolitonParams};
use crate::spinor_algebra::ChargeDensity;
use crate::symplectic_geometry::{project_to_manifold, PhaseState, ProjectionOptions};

/// Kick–drift–kick splitting with the field advanced exactly by W₀ during the
/// drift and the source integral −i∫W₀(dt − s)ρ(· − q(s))ds taken at the
/// midpoint. Per-mode propagator tables are cached for the fixed step.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub rho: ChargeDensity,
    pub grid: GridSpec,
    pub dt: f64,
    cos_full: Vec<f64>,
    sin_full: Vec<f64>,
    cos_half: Vec<f64>,
    sin_half: Vec<f64>,
    /// Force at the current state, reused as the first kick of the next step.
    cached_force: Option<([f64; 3], [f64; 3])>,
}

impl Integrator {
    pub fn new(rho: ChargeDensity, grid: GridSpec, dt: f64) -> Result<Self> {
        rho.validate()?;
        grid.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let m = rho.mass;
        let n = grid.len();
        let mut tabs = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let kd = grid.kd_table();
        let omegas = (0..n).map(|idx| {
            let (i, j, l) = (idx / (grid.n * grid.n), (idx / grid.n) % grid.n, idx % grid.n);
            (kd[i] * kd[i] + kd[j] * kd[j] + kd[l] * kd[l] + m * m).sqrt()
        });
        for (i, w) in omegas.enumerate() {
            let (s1, c1) = (w * dt).sin_cos();
            let (s2, c2) = (0.5 * w * dt).sin_cos();
            tabs[0][i] = c1;
            tabs[1][i] = s1 / w;
            tabs[2][i] = c2;
            tabs[3][i] = s2 / w;
        }
        let [cos_full, sin_full, cos_half, sin_half] = tabs;
        Ok(Integrator { rho, grid, dt, cos_full, sin_full, cos_half, sin_half, cached_force: None })
    }

    fn force(&self, psi: &SpinorField, q: [f64; 3]) -> Result<[f64; 3]> {
        force_on_charge(psi, &self.rho, q)
    }

    /// One step; the field must be in the Fourier representation.
    pub fn step(&mut self, y: &mut PhaseState) -> Result<()> {
        y.psi.require(Repr::Fourier)?;
        if *y.psi.grid() != self.grid {
            return Err(Error::GridMismatch("state grid differs from integrator grid".into()));
        }
        let dt = self.dt;
        let f0 = match self.cached_force {
            Some((q, f)) if q == y.q => f,
            _ => self.force(&y.psi, y.q)?,
        };
        let p_half: [f64; 3] = std::array::from_fn(|i| y.p[i] + 0.5 * dt * f0[i]);
        let u = velocity_of_momentum(p_half);
        let q_mid: [f64; 3] = std::array::from_fn(|i| y.q[i] + 0.5 * dt * u[i]);
        let m = self.rho.mass;
        let rho = self.rho;
        let (cf, sf, ch, sh) = (&self.cos_full, &self.sin_full, &self.cos_half, &self.sin_half);
        y.psi.map_modes(|mode, s| {
            let i = mode.idx;
            let hs = dirac_symbol(mode.k, m, s);
            let f = C64::new(0.0, -sf[i]);
            let mut out: [C64; 4] = std::array::from_fn(|a| s[a] * cf[i] + hs[a] * f);
            let rh = charge_hat(&mode, &rho);
            if rh != 0.0 {
                // −i dt W₀(dt/2)(e^{ik·q}ρ̂, 0, 0, 0)
                let src = [C64::from_polar(rh, dot3(mode.k, q_mid)), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
                let hsrc = dirac_symbol(mode.k, m, &src);
                let g = C64::new(0.0, -dt);
                let fh = C64::new(0.0, -sh[i]);
                for a in 0..4 {
                    out[a] += g * (src[a] * ch[i] + hsrc[a] * fh);
                }
            }
            *s = out;
        });
        let q_new: [f64; 3] = std::array::from_fn(|i| q_mid[i] + 0.5 * dt * u[i]);
        let f1 = self.force(&y.psi, q_new)?;
        let p_new: [f64; 3] = std::array::from_fn(|i| p_half[i] + 0.5 * dt * f1[i]);
        if !p_new.iter().chain(&q_new).all(|x| x.is_finite()) {
            return Err(Error::numerical(format!("non-finite particle state after step (p = {p_new:?})")));
        }
        y.q = q_new;
        y.p = p_new;
        self.cached_force = Some((q_new, f1));
        Ok(())
    }
}

/// 𝓗 = ½Re⟨ψ, (−iα·∇ + βm)ψ⟩ + Re⟨ψ, ρ(· − q)⟩ + √(1 + p²).
pub fn hamiltonian(y: &PhaseState, rho: &ChargeDensity) -> Result<f64> {
    let psi = y.psi.to_fourier();
    let grid = *psi.grid();
    let m = rho.mass;
    let q = y.q;
    let s = sum_modes::<2, _>(&grid, |mode| {
        let v = psi.at(mode.idx);
        let h = dirac_symbol(mode.k, m, &v);
        let kin: f64 = (0..4).map(|a| (v[a].conj() * h[a]).re).sum();
        let rh = charge_hat(&mode, rho);
        let int = if rh == 0.0 { 0.0 } else { (v[0].conj() * C64::from_polar(rh, dot3(mode.k, q))).re };
        [kin, int]
    });
    let dv = grid.mode_volume();
    Ok(0.5 * s[0] * dv + s[1] * dv + (1.0 + dot3(y.p, y.p)).sqrt())
}

/// ‖Z‖_{−ν} = ‖Ψ‖_{−ν} + |Q| + |P| with the weight centered at `center`.
pub fn transversal_norm(z: &PhaseState, nu: f64, center: [f64; 3]) -> Result<f64> {
    let pos = z.psi.to_position();
    Ok(weighted_norm_centered(&pos, -nu, center)? + dot3(z.q, z.q).sqrt() + dot3(z.p, z.p).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Projection onto the manifold every this many time units (0 disables
    /// tracking).
    pub track_every: f64,
    /// Field snapshots every this many time units (0 disables them).
    pub snapshot_every: f64,
    pub nu: f64,
    pub projection: ProjectionOptions,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            dt: 0.02,
            t_final: 10.0,
            track_every: 0.25,
            snapshot_every: 0.0,
            nu: 3.0,
            projection: ProjectionOptions::default(),
        }
    }
}

impl SimulationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid("dt must be positive and T non-negative"));
        }
        if self.track_every < 0.0 || self.snapshot_every < 0.0 || self.nu < 0.0 {
            return Err(Error::invalid("sampling strides and ν must be non-negative"));
        }
        Ok(())
    }

    fn stride(&self, every: f64) -> Option<usize> {
        (every > 0.0).then(|| ((every / self.dt).round() as usize).max(1))
    }
}

/// One projection along the trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModulationSample {
    pub t: f64,
    pub b: [f64; 3],
    pub v: [f64; 3],
    /// ‖Z‖_{−ν}, weight centered at b(t).
    pub z_norm: f64,
    pub z_energy: f64,
    /// sup_{s ≤ t}(1 + s)^{3/2}‖Z(s)‖_{−ν} over the samples so far.
    pub majorant: f64,
    pub hamiltonian: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub q: Vec<[f64; 3]>,
    pub p: Vec<[f64; 3]>,
    pub modulation: Vec<ModulationSample>,
    pub snapshots: Vec<(f64, PhaseState)>,
    /// Set when the projection failed; tracking stops from that time on.
    pub tracking_lost: Option<(f64, String)>,
    pub final_state: PhaseState,
}

impl Trajectory {
    pub fn qdot(&self) -> Vec<[f64; 3]> {
        self.p.iter().map(|&p| velocity_of_momentum(p)).collect()
    }
}

/// Integrates from `y0` to `opts.t_final`. With tracking enabled the state is
/// projected every `track_every` time units, warm-started from the previous σ
/// (initially `guess`, or (q₀, v(p₀))).
pub fn simulate(
    y0: &PhaseState,
    rho: &ChargeDensity,
    opts: &SimulationOptions,
    guess: Option<SolitonParams>,
) -> Result<Trajectory> {
    opts.validate()?;
    let grid = *y0.psi.grid();
    let mut integ = Integrator::new(*rho, grid, opts.dt)?;
    let mut y = y0.to_fourier();
    let steps = (opts.t_final / opts.dt).round() as usize;
    let track = opts.stride(opts.track_every);
    let snap = opts.stride(opts.snapshot_every);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        p: Vec::with_capacity(steps + 1),
        modulation: Vec::new(),
        snapshots: Vec::new(),
        tracking_lost: None,
        final_state: y.clone(),
    };
    let mut sigma = match guess {
        Some(s) => s,
        None => SolitonParams::new(y.q, velocity_of_momentum(y.p))?,
    };
    let mut majorant: f64 = 0.0;
    for n in 0..=steps {
        let t = n as f64 * opts.dt;
        if n > 0 {
            integ.step(&mut y)?;
        }
        traj.times.push(t);
        traj.q.push(y.q);
        traj.p.push(y.p);
        if let Some(s) = snap {
            if n % s == 0 {
                traj.snapshots.push((t, y.clone()));
            }
        }
        if let Some(s) = track {
            if n % s == 0 && traj.tracking_lost.is_none() {
                match project_to_manifold(&y, &sigma, rho, &opts.projection) {
                    Ok(pr) => {
                        sigma = pr.sigma;
                        let z_norm = transversal_norm(&pr.z, opts.nu, sigma.b)?;
                        majorant = majorant.max((1.0 + t).powf(1.5) * z_norm);
                        traj.modulation.push(ModulationSample {
                            t,
                            b: sigma.b,
                            v: sigma.v,
                            z_norm,
                            z_energy: pr.z.norm_e(),
                            majorant,
                            hamiltonian: hamiltonian(&y, rho)?,
                            iterations: pr.iterations,
                        });
                    }
                    Err(e) => traj.tracking_lost = Some((t, e.to_string())),
                }
            }
        }
    }
    traj.final_state = y;
    Ok(traj)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatteringData {
    /// Mean of q̇ over the tail t ≥ t_min.
    pub v_plus: [f64; 3],
    /// Intercept of the least-squares line through q(t) − v₊t on the tail.
    pub a_plus: [f64; 3],
    /// Power-law fit of |q̇ − v∞| along v̂₊, v∞ co-fitted.
    pub velocity_fit: Option<FitResult>,
    /// Power-law fit of ‖Z(t)‖_{−ν} on the tail.
    pub z_fit: Option<FitResult>,
}

/// Tail statistics of a trajectory over `window` = (t_min, t_max).
pub fn extract_scattering_data(traj: &Trajectory, window: (f64, f64)) -> Result<ScatteringData> {
    let (t_min, t_max) = window;
    let idx: Vec<usize> =
        (0..traj.times.len()).filter(|&i| traj.times[i] >= t_min && traj.times[i] <= t_max).collect();
    if idx.len() < 10 {
        return Err(Error::invalid(format!("only {} samples in [{t_min}, {t_max}]", idx.len())));
    }
    let qd = traj.qdot();
    let n = idx.len() as f64;
    let v_plus: [f64; 3] = std::array::from_fn(|a| idx.iter().map(|&i| qd[i][a]).sum::<f64>() / n);
    let tm = idx.iter().map(|&i| traj.times[i]).sum::<f64>() / n;
    let a_plus: [f64; 3] = std::array::from_fn(|a| {
        let r: Vec<f64> = idx.iter().map(|&i| traj.q[i][a] - v_plus[a] * traj.times[i]).collect();
        let rm = r.iter().sum::<f64>() / n;
        let sxy: f64 = idx.iter().zip(&r).map(|(&i, y)| (traj.times[i] - tm) * (y - rm)).sum();
        let sxx: f64 = idx.iter().map(|&i| (traj.times[i] - tm).powi(2)).sum();
        rm - sxy / sxx * tm
    });
    let s = dot3(v_plus, v_plus).sqrt();
    let dir = if s > 1e-12 { v_plus.map(|x| x / s) } else { [1.0, 0.0, 0.0] };
    let ts: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| dot3(qd[i], dir)).collect();
    let velocity_fit = fit_decay_to_limit(&ts, &ys).ok();
    let zs: Vec<(f64, f64)> =
        traj.modulation.iter().filter(|m| m.t >= t_min && m.t <= t_max && m.t > 0.0).map(|m| (m.t, m.z_norm)).collect();
    let z_fit = if zs.len() >= 10 { fit_power_law(&zs, window).ok() } else { None };
    Ok(ScatteringData { v_plus, a_plus, velocity_fit, z_fit })
}

/// Fits y(t) = c + A·t^α by choosing c so that log|y − c| is closest to a line
/// in log t; c is searched beyond the data range on the side the series
/// approaches: a coarse scan of the offset on a log scale, then golden-section
/// refinement of the unexplained variance.
pub fn fit_decay_to_limit(t: &[f64], y: &[f64]) -> Result<FitResult> {
    if t.len() != y.len() || t.len() < 10 {
        return Err(Error::invalid("need at least 10 samples"));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::numerical("series is constant; no decay to fit"));
    }
    let first = y[0];
    let last = y[y.len() - 1];
    let below = last < first;
    let t_lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_hi = t.iter().cloned().fold(0.0, f64::max);
    let fit_at = |ld: f64| -> Result<(FitResult, f64)> {
        let d = ld.exp();
        let c = if below { lo - d } else { hi + d };
        let pts: Vec<(f64, f64)> = t.iter().zip(y).map(|(&t, &y)| (t, (y - c).abs())).collect();
        let fit = fit_power_law(&pts, (t_lo, t_hi))?;
        // Unexplained fraction of the variance of log|y − c|.
        let logs: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64;
        let frac = fit.rms_residual.powi(2) / var;
        Ok((fit, frac))
    };
    let (a0, b0) = ((range * 1e-9).ln(), (range * 1e3).ln());
    let scan = 240;
    let mut best = (a0, f64::INFINITY);
    for i in 0..=scan {
        let ld = a0 + (b0 - a0) * i as f64 / scan as f64;
        let f = fit_at(ld)?.1;
        if f < best.1 {
            best = (ld, f);
        }
    }
    let h = (b0 - a0) / scan as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = fit_at(c)?.1;
    let mut fd = fit_at(d)?.1;
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = fit_at(c)?.1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = fit_at(d)?.1;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    Ok(fit_at(0.5 * (a + b))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton_manifold::soliton_state;

    #[test]
    fn hamiltonian_of_bare_particle() {
        let grid = GridSpec::new(8.0, 8).unwrap();
        let rho = ChargeDensity::default();
        let mut y = PhaseState::zero(grid, Repr::Fourier);
        assert!((hamiltonian(&y, &rho).unwrap() - 1.0).abs() < 1e-15);
        y.p = [0.75, 0.0, 0.0];
        assert!((hamiltonian(&y, &rho).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn free_particle_when_uncoupled() {
        let grid = GridSpec::new(8.0, 8).unwrap();
        let rho = ChargeDensity::new(0.0, 1.0, 1.0).unwrap();
        let mut y = PhaseState::zero(grid, Repr::Fourier);
        y.p = [0.75, 0.0, 0.0];
        let mut it = Integrator::new(rho, grid, 0.05).unwrap();
        for _ in 0..100 {
            it.step(&mut y).unwrap();
        }
        assert!((y.q[0] - 0.6 * 5.0).abs() < 1e-12);
        assert_eq!(y.p, [0.75, 0.0, 0.0]);
        assert_eq!(y.psi.l2_norm(), 0.0);
    }

    #[test]
    fn resting_soliton_is_stationary() {
        let grid = GridSpec::new(16.0, 32).unwrap();
        let rho = ChargeDensity::default();
        let s = SolitonParams::new([0.0; 3], [0.0; 3]).unwrap();
        let mut y = soliton_state(&s, &rho, grid).unwrap();
        let y0 = y.clone();
        let mut it = Integrator::new(rho, grid, 0.02).unwrap();
        for _ in 0..50 {
            it.step(&mut y).unwrap();
        }
        assert!(y.p.iter().all(|x| x.abs() < 1e-12));
        assert!(y.q.iter().all(|x| x.abs() < 1e-12));
        assert!(y.psi.distance(&y0.psi).unwrap() < 1e-3 * y0.psi.l2_norm());
    }

    #[test]
    fn decay_fit_recovers_synthetic_exponent() {
        let t: Vec<f64> = (0..200).map(|i| 5.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.3 + t.powf(-1.5)).collect();
        let f = fit_decay_to_limit(&t, &y).unwrap();
        assert!((f.exponent + 1.5).abs() < 0.02, "{f:?}");
    }
}
