//! Experiment harness: run configuration, power-law fits, the free-decay,
//! soliton-persistence and scattering experiments, and run-directory output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupled_dynamics::{extract_scattering_data, simulate, ScatteringData, SimulationOptions, Trajectory};
use crate::error::{Error, Result};
use crate::field_grid::{free_propagate, moving_frame_propagate, weighted_norm, GridSpec, Repr, SpinorField};
use crate::soliton_manifold::{soliton_field, soliton_state, tangent_basis_at, SolitonParams};
use crate::spinor_algebra::{ChargeDensity, Spinor};
use crate::symplectic_geometry::{symplectic_complement, PhaseState, ProjectionOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Persistence,
    Scattering,
    Decay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub kind: ExperimentKind,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub nu: f64,
    pub track_every: f64,
    pub snapshot_every: f64,
    /// Start of the fit window.
    pub t_min: f64,
    pub projection_tol: f64,
    pub projection_max_iter: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            kind: ExperimentKind::Simulate,
            dt: 0.02,
            t_final: 10.0,
            nu: 3.0,
            track_every: 0.25,
            snapshot_every: 0.0,
            t_min: 2.0,
            projection_tol: 1e-10,
            projection_max_iter: 40,
        }
    }
}

/// Soliton S(b, v) plus ε times the symplectically projected Gaussian bump
/// (a·e^{−|x−c|²/2w²}, 0, δp); the spinor a is drawn from the run seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialData {
    pub b: [f64; 3],
    pub v: [f64; 3],
    pub epsilon: f64,
    pub bump_width: f64,
    pub bump_center: [f64; 3],
    pub delta_p: [f64; 3],
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData { b: [0.0; 3], v: [0.0; 3], epsilon: 0.0, bump_width: 1.5, bump_center: [0.0; 3], delta_p: [0.0; 3] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecaySection {
    pub v: [f64; 3],
    /// Width of the Gaussian packet Φ.
    pub width: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection { v: [0.0; 3], width: 1.5, t_start: 5.0, t_end: 25.0, samples: 41 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub rho: ChargeDensity,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(grid: GridSpec) -> Self {
        RunConfig {
            grid,
            rho: ChargeDensity::default(),
            run: RunSection::default(),
            initial: InitialData::default(),
            decay: DecaySection::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.rho.validate()?;
        self.simulation_options().validate()?;
        crate::error::check_velocity(self.initial.v)?;
        crate::error::check_velocity(self.decay.v)?;
        let d = &self.decay;
        if !(d.width > 0.0 && d.t_end > d.t_start && d.t_start >= 0.0 && d.samples >= 10) {
            return Err(Error::Config("decay needs width > 0, 0 ≤ t_start < t_end and ≥ 10 samples".into()));
        }
        if !(self.initial.bump_width > 0.0) || !self.initial.epsilon.is_finite() {
            return Err(Error::Config("initial.bump_width must be positive and epsilon finite".into()));
        }
        Ok(())
    }

    /// Parses TOML, or JSON (a run manifest, whose `config` entry is used).
    pub fn from_str_any(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(text)?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_str_any(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        SimulationOptions {
            dt: self.run.dt,
            t_final: self.run.t_final,
            track_every: self.run.track_every,
            snapshot_every: self.run.snapshot_every,
            nu: self.run.nu,
            projection: ProjectionOptions { tol: self.run.projection_tol, max_iter: self.run.projection_max_iter },
        }
    }

    /// [t_min, min(T, L/2 − R)] with R = 4·max(σ, bump width) the radius
    /// outside which the initial perturbation is negligible.
    pub fn fit_window(&self) -> (f64, f64) {
        let r = 4.0 * self.rho.sigma.max(self.initial.bump_width);
        (self.run.t_min, self.run.t_final.min(validity_time(&self.grid, r)))
    }

    /// Initial state per the `initial` section, and the σ it was built from.
    pub fn initial_state(&self) -> Result<(PhaseState, SolitonParams)> {
        let ini = &self.initial;
        let sigma = SolitonParams::new(ini.b, ini.v)?;
        let mut y = soliton_state(&sigma, &self.rho, self.grid)?;
        if ini.epsilon != 0.0 {
            let z = perturbation(self, &sigma)?;
            y.axpy(ini.epsilon, &z)?;
        }
        Ok((y, sigma))
    }
}

/// Unit-amplitude bump direction, symplectically orthogonal to the tangent
/// space at σ.
fn perturbation(cfg: &RunConfig, sigma: &SolitonParams) -> Result<PhaseState> {
    let ini = &cfg.initial;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a: Spinor = std::array::from_fn(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let n = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    a = a.map(|z| z / n);
    let c: [f64; 3] = std::array::from_fn(|i| sigma.b[i] + ini.bump_center[i]);
    let bump = PhaseState::gaussian_bump(cfg.grid, c, ini.bump_width, [0.0; 3], a, [0.0; 3], ini.delta_p);
    let basis = tangent_basis_at(sigma, &cfg.rho, cfg.grid)?;
    symplectic_complement(&bump, &basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub rms_residual: f64,
    pub samples: usize,
}

/// Least squares of log value against log t over the samples in `window`.
pub fn fit_power_law(series: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect();
    if pts.len() < 10 {
        return Err(Error::invalid(format!("fit window holds {} samples, need ≥ 10", pts.len())));
    }
    if pts.iter().any(|&(t, y)| !(t > 0.0) || !(y > 0.0)) {
        return Err(Error::invalid("power-law fit needs positive times and values"));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit window spans a single time"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    Ok(FitResult { exponent: slope, intercept, window: (t0, t1), rms_residual: rms, samples: pts.len() })
}

/// Latest time at which outgoing waves from a source of radius `r_support`
/// centered in the box have not wrapped around: L/2 − r_support.
pub fn validity_time(grid: &GridSpec, r_support: f64) -> f64 {
    0.5 * grid.l - r_support
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub v: [f64; 3],
    pub nu: f64,
    pub series: Vec<(f64, f64)>,
    pub fit: FitResult,
    /// max_t |‖W_v(t)Φ‖₀ − ‖Φ‖₀| / ‖Φ‖₀.
    pub charge_drift: f64,
}

/// ‖W_v(t)Φ‖_{−ν} for a centered Gaussian spinor packet, fitted on
/// [t_start, t_end].
pub fn run_free_decay(cfg: &RunConfig) -> Result<DecayReport> {
    cfg.validate()?;
    let d = &cfg.decay;
    let nu = cfg.run.nu;
    let grid = cfg.grid;
    if d.t_end > validity_time(&grid, 4.0 * d.width) + 1e-12 {
        return Err(Error::invalid(format!(
            "window end {} exceeds the validity time {:.2} of the box",
            d.t_end,
            validity_time(&grid, 4.0 * d.width)
        )));
    }
    let w = d.width;
    let phi = SpinorField::from_position_fn(grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let g = (-r2 / (2.0 * w * w)).exp();
        [C64::new(g, 0.0), C64::new(0.0, 0.5 * g), C64::new(0.3 * g, 0.0), C64::new(0.0, 0.0)]
    })
    .to_fourier();
    let n0 = phi.l2_norm();
    let mut series = Vec::with_capacity(d.samples);
    let mut charge_drift: f64 = 0.0;
    for i in 0..d.samples {
        let t = d.t_start + (d.t_end - d.t_start) * i as f64 / (d.samples - 1) as f64;
        let psi = moving_frame_propagate(&phi, t, d.v, cfg.rho.mass)?;
        charge_drift = charge_drift.max((psi.l2_norm() - n0).abs() / n0);
        series.push((t, weighted_norm(&psi.to_position(), -nu)?));
    }
    let fit = fit_power_law(&series, (d.t_start, d.t_end))?;
    Ok(DecayReport { v: d.v, nu, series, fit, charge_drift })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub v: [f64; 3],
    pub t_final: f64,
    /// max_t ‖ψ(t) − ψ_v(· − b − vt)‖₀ / ‖ψ_v‖₀.
    pub max_field_error: f64,
    /// |v(T) − v| from the projection at the final time.
    pub final_velocity_drift: f64,
    pub max_velocity_drift: f64,
    /// max_t |q(t) − b − vt|.
    pub max_position_drift: f64,
    pub max_z_norm: f64,
    pub initial_z_norm: f64,
    pub max_relative_energy_drift: f64,
}

/// Exact soliton data S(b, v) evolved to T; field error against the exactly
/// translated soliton, modulation drift.
pub fn run_soliton_persistence(cfg: &RunConfig) -> Result<(PersistenceReport, Trajectory)> {
    cfg.validate()?;
    let sigma = SolitonParams::new(cfg.initial.b, cfg.initial.v)?;
    let y0 = soliton_state(&sigma, &cfg.rho, cfg.grid)?;
    let mut opts = cfg.simulation_options();
    if opts.snapshot_every == 0.0 {
        opts.snapshot_every = (opts.t_final / 10.0).max(opts.dt);
    }
    let traj = simulate(&y0, &cfg.rho, &opts, Some(sigma))?;
    let psi_v = soliton_field(sigma.v, &cfg.rho, cfg.grid)?;
    let norm = psi_v.l2_norm();
    let mut max_field_error: f64 = 0.0;
    for (t, y) in &traj.snapshots {
        let mut exact = psi_v.clone();
        exact.translate(std::array::from_fn(|i| sigma.b[i] + sigma.v[i] * t))?;
        max_field_error = max_field_error.max(y.psi.to_fourier().distance(&exact)? / norm);
    }
    let vdrift = |v: [f64; 3]| (0..3).map(|i| (v[i] - sigma.v[i]).powi(2)).sum::<f64>().sqrt();
    let max_velocity_drift = traj.modulation.iter().map(|m| vdrift(m.v)).fold(0.0, f64::max);
    let final_velocity_drift = traj.modulation.last().map(|m| vdrift(m.v)).unwrap_or(f64::NAN);
    let max_position_drift = traj
        .times
        .iter()
        .zip(&traj.q)
        .map(|(t, q)| (0..3).map(|i| (q[i] - sigma.b[i] - sigma.v[i] * t).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let max_z_norm = traj.modulation.iter().map(|m| m.z_norm).fold(0.0, f64::max);
    let initial_z_norm = traj.modulation.first().map(|m| m.z_norm).unwrap_or(f64::NAN);
    let h0 = traj.modulation.first().map(|m| m.hamiltonian).unwrap_or(f64::NAN);
    let max_relative_energy_drift =
        traj.modulation.iter().map(|m| ((m.hamiltonian - h0) / h0).abs()).fold(0.0, f64::max);
    let report = PersistenceReport {
        v: sigma.v,
        t_final: opts.t_final,
        max_field_error,
        final_velocity_drift,
        max_velocity_drift,
        max_position_drift,
        max_z_norm,
        initial_z_norm,
        max_relative_energy_drift,
    };
    Ok((report, traj))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub data: ScatteringData,
    /// Mean modulation velocity over the last quarter of the tracked samples.
    pub v_limit: [f64; 3],
    /// (t, |v(t) − v_limit|) along the tracked samples.
    pub velocity_gap: Vec<(f64, f64)>,
    /// (t, ‖Z(t)‖_{−ν}).
    pub z_series: Vec<(f64, f64)>,
    /// (T', ‖φ₊(T') − φ₊(T'/2)‖₀) at the snapshot times T'.
    pub cauchy: Vec<(f64, f64)>,
    pub tracking_lost: Option<(f64, String)>,
    pub hamiltonian_drift: f64,
    pub fit_window: (f64, f64),
}

impl ScatteringReport {
    /// Mean |v(t) − v_limit| over each quarter of the tracked samples.
    pub fn velocity_gap_quarters(&self) -> [f64; 4] {
        let n = self.velocity_gap.len();
        std::array::from_fn(|q| {
            let part = &self.velocity_gap[q * n / 4..((q + 1) * n / 4).max(q * n / 4 + 1).min(n)];
            part.iter().map(|x| x.1).sum::<f64>() / part.len() as f64
        })
    }

    /// Cauchy difference at the final snapshot and at the snapshot nearest T/2.
    pub fn cauchy_endpoints(&self) -> Option<(f64, f64)> {
        let last = *self.cauchy.last()?;
        let half = self
            .cauchy
            .iter()
            .min_by(|a, b| (a.0 - 0.5 * last.0).abs().partial_cmp(&(b.0 - 0.5 * last.0).abs()).unwrap())?;
        Some((half.1, last.1))
    }
}

/// Perturbed soliton run with tracking; v₊, a₊, the ‖Z‖_{−ν} fit and the φ₊
/// Cauchy differences.
pub fn run_scattering(cfg: &RunConfig) -> Result<(ScatteringReport, Trajectory)> {
    cfg.validate()?;
    let (y0, sigma) = cfg.initial_state()?;
    let mut opts = cfg.simulation_options();
    if opts.track_every == 0.0 {
        return Err(Error::invalid("scattering runs need tracking (run.track_every > 0)"));
    }
    if opts.snapshot_every == 0.0 {
        opts.snapshot_every = (opts.t_final / 8.0).max(opts.dt);
    }
    let traj = simulate(&y0, &cfg.rho, &opts, Some(sigma))?;
    let data = extract_scattering_data(&traj, cfg.fit_window())?;
    let tracked = &traj.modulation;
    if tracked.len() < 8 {
        return Err(Error::numerical("too few tracked samples for a scattering report"));
    }
    let tail = &tracked[tracked.len() * 3 / 4..];
    let v_limit: [f64; 3] = std::array::from_fn(|i| tail.iter().map(|m| m.v[i]).sum::<f64>() / tail.len() as f64);
    let velocity_gap = tracked
        .iter()
        .map(|m| (m.t, (0..3).map(|i| (m.v[i] - v_limit[i]).powi(2)).sum::<f64>().sqrt()))
        .collect();
    let z_series = tracked.iter().map(|m| (m.t, m.z_norm)).collect();
    let cauchy = cauchy_differences(cfg, &traj, v_limit)?;
    let h0 = tracked[0].hamiltonian;
    let hamiltonian_drift = tracked.iter().map(|m| ((m.hamiltonian - h0) / h0).abs()).fold(0.0, f64::max);
    Ok((
        ScatteringReport {
            data,
            v_limit,
            velocity_gap,
            z_series,
            cauchy,
            tracking_lost: traj.tracking_lost.clone(),
            hamiltonian_drift,
            fit_window: cfg.fit_window(),
        },
        traj,
    ))
}

/// φ₊(T) = W₀(−T)(ψ(T) − ψ_{v₊}(· − b(T))), with b(T) from the tracked
/// modulation; compared between each snapshot time T and the snapshot nearest T/2.
fn cauchy_differences(cfg: &RunConfig, traj: &Trajectory, v_plus: [f64; 3]) -> Result<Vec<(f64, f64)>> {
    let psi_v = soliton_field(v_plus, &cfg.rho, cfg.grid)?;
    let b_at = |t: f64| -> Option<[f64; 3]> {
        traj.modulation.iter().min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap()).map(|m| m.b)
    };
    let phi_plus = |t: f64, y: &PhaseState| -> Result<SpinorField> {
        let mut sol = psi_v.clone();
        sol.translate(b_at(t).unwrap_or(y.q))?;
        let mut r = y.psi.to_fourier();
        r.axpy(C64::new(-1.0, 0.0), &sol)?;
        Ok(free_propagate(&r, -t, cfg.rho.mass))
    };
    let snaps = &traj.snapshots;
    let mut out = Vec::new();
    for (t, y) in snaps.iter().filter(|(t, _)| *t > 0.0) {
        let half = snaps
            .iter()
            .min_by(|a, b| (a.0 - 0.5 * t).abs().partial_cmp(&(b.0 - 0.5 * t).abs()).unwrap())
            .unwrap();
        if half.0 <= 0.0 || half.0 >= *t {
            continue;
        }
        let d = phi_plus(*t, y)?.distance(&phi_plus(half.0, &half.1)?)?;
        out.push((*t, d));
    }
    Ok(out)
}

/// Everything written to `manifest.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub snapshot_layout: Option<String>,
    pub report: Option<serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            program: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            seed: config.seed,
            outputs: Vec::new(),
            snapshot_layout: None,
            report: None,
        }
    }
}

pub const SNAPSHOT_LAYOUT: &str = "position representation; little-endian f64; per grid point the pairs \
(Re, Im) of spinor components 0..3 (64 bytes); points in row-major order (i, j, k), k fastest; \
coordinate of index i is (i - N/2)·L/N";

pub const PARTICLE_CSV_HEADER: &str = "t,q1,q2,q3,p1,p2,p3,b1,b2,b3,v1,v2,v3,Znorm,majorant";

/// particle.csv: one row per step; modulation columns are empty between
/// tracking samples.
pub fn particle_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.times.len() * 160);
    s.push_str(PARTICLE_CSV_HEADER);
    s.push('\n');
    let mut mi = 0;
    for (n, &t) in traj.times.iter().enumerate() {
        let (q, p) = (traj.q[n], traj.p[n]);
        let _ = write!(s, "{t:.10e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", q[0], q[1], q[2], p[0], p[1], p[2]);
        if mi < traj.modulation.len() && (traj.modulation[mi].t - t).abs() < 1e-9 {
            let m = &traj.modulation[mi];
            let _ = write!(
                s,
                ",{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                m.b[0], m.b[1], m.b[2], m.v[0], m.v[1], m.v[2], m.z_norm, m.majorant
            );
            mi += 1;
        } else {
            s.push_str(",,,,,,,,");
        }
        s.push('\n');
    }
    s
}

pub fn series_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for (a, b) in rows {
        let _ = writeln!(s, "{a:.10e},{b:.17e}");
    }
    s
}

/// Writes a trajectory run directory: manifest.json, particle.csv and the
/// field snapshots (snapshot_NNNNN.bin).
pub fn write_run_dir(dir: &Path, manifest: &mut Manifest, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("particle.csv"), particle_csv(traj))?;
    manifest.outputs.push("particle.csv".into());
    if !traj.snapshots.is_empty() {
        manifest.snapshot_layout = Some(SNAPSHOT_LAYOUT.into());
        let mut index = String::from("file,t\n");
        for (n, (t, y)) in traj.snapshots.iter().enumerate() {
            let name = format!("snapshot_{n:05}.bin");
            fs::write(dir.join(&name), y.psi.to_le_bytes())?;
            let _ = writeln!(index, "{name},{t:.10e}");
            manifest.outputs.push(name);
        }
        fs::write(dir.join("snapshots.csv"), index)?;
        manifest.outputs.push("snapshots.csv".into());
    }
    write_manifest(dir, manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path, grid: GridSpec) -> Result<SpinorField> {
    SpinorField::from_le_bytes(grid, &fs::read(path)?)
}

/// Saved phase state: JSON with grid, q, p and the field as a snapshot file
/// next to it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub grid: GridSpec,
    pub rho: ChargeDensity,
    pub q: [f64; 3],
    pub p: [f64; 3],
    pub field: PathBuf,
}

pub fn save_state(path: &Path, y: &PhaseState, rho: &ChargeDensity) -> Result<()> {
    let field = path.with_extension("bin");
    fs::write(&field, y.psi.to_le_bytes())?;
    let sf = StateFile {
        grid: *y.psi.grid(),
        rho: *rho,
        q: y.q,
        p: y.p,
        field: PathBuf::from(field.file_name().unwrap()),
    };
    fs::write(path, serde_json::to_string_pretty(&sf)?)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<(PhaseState, ChargeDensity)> {
    let sf: StateFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    sf.grid.validate()?;
    sf.rho.validate()?;
    let field_path = path.parent().unwrap_or(Path::new(".")).join(&sf.field);
    let psi = read_snapshot(&field_path, sf.grid)?;
    debug_assert_eq!(psi.repr(), Repr::Position);
    Ok((PhaseState { psi, q: sf.q, p: sf.p }, sf.rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (1..=40).map(|i| (i as f64, (i as f64).powf(-1.5))).collect();
        let f = fit_power_law(&s, (1.0, 40.0)).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-12 && f.rms_residual < 1e-12);
        let c: Vec<(f64, f64)> = (1..=40).map(|i| (i as f64, 3.0)).collect();
        assert!(fit_power_law(&c, (1.0, 40.0)).unwrap().exponent.abs() < 1e-12);
    }

    #[test]
    fn wobbly_power_law() {
        let s: Vec<(f64, f64)> =
            (0..400).map(|i| 1.0 + 0.1 * i as f64).map(|t| (t, t.powf(-1.5) * (1.0 + 0.1 * t.sin()))).collect();
        let f = fit_power_law(&s, (1.0, 41.0)).unwrap();
        assert!((f.exponent + 1.5).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn fit_rejects_bad_series() {
        let s: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 1.0)).collect();
        assert!(fit_power_law(&s, (0.0, 10.0)).is_err());
        let z: Vec<(f64, f64)> = (1..=20).map(|i| (i as f64, 0.0)).collect();
        assert!(fit_power_law(&z, (0.0, 30.0)).is_err());
    }

    #[test]
    fn config_round_trip() {
        let mut cfg = RunConfig::new(GridSpec::new(16.0, 32).unwrap());
        cfg.run.kind = ExperimentKind::Scattering;
        cfg.initial.v = [0.3, 0.0, 0.0];
        cfg.seed = 9;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_str_any(&text).unwrap(), cfg);
        let m = Manifest::new("scatter", &cfg);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(RunConfig::from_str_any(&json).unwrap(), cfg);
        let minimal = "[grid]\nL = 16.0\nN = 32\n";
        assert_eq!(RunConfig::from_str_any(minimal).unwrap().run.dt, 0.02);
        assert!(RunConfig::from_str_any("[grid]\nL = 16.0\nN = 30\n").is_err());
    }
}
