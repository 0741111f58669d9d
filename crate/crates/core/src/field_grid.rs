//! Periodic grid, spinor fields with paired position/Fourier representations,
//! weighted norms and the free / moving-frame Dirac propagators.
//!
//! Fourier coefficients are stored with the continuous normalization
//! f̂(k) = (2π)^{-3/2}∫e^{ik·x}f(x)dx, so ∂ⱼ ↔ −ikⱼ and closed-form transforms
//! such as ρ̂ can be written onto the grid directly. The Nyquist wavenumber is
//! treated as zero in every multiplier; band-limited data (vanishing at the
//! Nyquist planes) is then transformed consistently by all operators.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_velocity, Error, Result};
use crate::spinor_algebra::Spinor;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Box side length.
    #[serde(rename = "L")]
    pub l: f64,
    /// Points per axis.
    #[serde(rename = "N")]
    pub n: usize,
}

impl GridSpec {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        let g = GridSpec { l, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::invalid("grid.L must be positive"));
        }
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(Error::invalid("grid.N must be a power of two >= 4"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.l
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }

    pub fn mode_volume(&self) -> f64 {
        self.dk().powi(3)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Coordinate of grid index i along one axis; the origin sits at i = N/2.
    pub fn coord(&self, i: usize) -> f64 {
        self.dx() * (i as f64 - (self.n / 2) as f64)
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        [self.coord(idx / (n * n)), self.coord((idx / n) % n), self.coord(idx % n)]
    }

    /// Signed wavenumber of array index i (FFT ordering).
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i < self.n / 2 { i as i64 } else { i as i64 - self.n as i64 };
        m as f64 * self.dk()
    }

    /// Wavenumbers used in multipliers: the Nyquist index maps to 0.
    pub fn kd_table(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| if i == self.n / 2 { 0.0 } else { self.wavenumber(i) })
            .collect()
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    pub fn max_wavenumber(&self) -> f64 {
        PI * self.n as f64 / self.l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr {
    Position,
    Fourier,
}

/// Per-mode data handed to mode closures.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub idx: usize,
    pub k: [f64; 3],
    /// False on the Nyquist planes.
    pub resolved: bool,
}

impl Mode {
    pub fn k2(&self) -> f64 {
        self.k[0] * self.k[0] + self.k[1] * self.k[1] + self.k[2] * self.k[2]
    }
}

/// Visits every mode of `grid` in storage order, one i-plane per task.
pub fn par_planes<T, F>(grid: &GridSpec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[f64]) -> T + Sync,
{
    let kd = grid.kd_table();
    (0..grid.n).into_par_iter().map(|i| f(i, &kd)).collect()
}

fn plane_modes<'a>(grid: &'a GridSpec, kd: &'a [f64], i: usize) -> impl Iterator<Item = Mode> + 'a {
    let n = grid.n;
    let ny = n / 2;
    let ki = kd[i];
    (0..n).flat_map(move |j| {
        (0..n).map(move |k| Mode {
            idx: (i * n + j) * n + k,
            k: [ki, kd[j], kd[k]],
            resolved: i != ny && j != ny && k != ny,
        })
    })
}

/// Sums a per-mode vector-valued quantity; deterministic irrespective of the
/// thread count (per-plane partial sums are combined in plane order).
pub fn sum_modes<const K: usize, F>(grid: &GridSpec, f: F) -> [f64; K]
where
    F: Fn(Mode) -> [f64; K] + Sync,
{
    let parts = par_planes(grid, |i, kd| {
        let mut acc = [0.0; K];
        for mode in plane_modes(grid, kd, i) {
            let v = f(mode);
            for a in 0..K {
                acc[a] += v[a];
            }
        }
        acc
    });
    let mut total = [0.0; K];
    for p in parts {
        for a in 0..K {
            total[a] += p[a];
        }
    }
    total
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Unnormalized 3D DFT in place over a row-major n³ array.
fn fft3(data: &mut [C64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
    // Last axis: contiguous rows.
    fft.process_with_scratch(data, &mut scratch);
    let mut batch = vec![ZERO; n * n];
    // Middle axis, one i-plane at a time.
    for i in 0..n {
        let plane = &mut data[i * n * n..(i + 1) * n * n];
        for j in 0..n {
            for k in 0..n {
                batch[k * n + j] = plane[j * n + k];
            }
        }
        fft.process_with_scratch(&mut batch, &mut scratch);
        for j in 0..n {
            for k in 0..n {
                plane[j * n + k] = batch[k * n + j];
            }
        }
    }
    // First axis, one j-slab at a time.
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                batch[k * n + i] = data[(i * n + j) * n + k];
            }
        }
        fft.process_with_scratch(&mut batch, &mut scratch);
        for i in 0..n {
            for k in 0..n {
                data[(i * n + j) * n + k] = batch[k * n + i];
            }
        }
    }
}

fn parity_sign(grid: &GridSpec, idx: usize) -> f64 {
    let n = grid.n;
    let s = idx / (n * n) + (idx / n) % n + idx % n;
    if s.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Complex 4-spinor field on a periodic grid, stored component-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    repr: Repr,
    comps: [Vec<C64>; 4],
}

impl SpinorField {
    pub fn zeros(grid: GridSpec, repr: Repr) -> Self {
        let n = grid.len();
        SpinorField { grid, repr, comps: std::array::from_fn(|_| vec![ZERO; n]) }
    }

    pub fn from_components(grid: GridSpec, repr: Repr, comps: [Vec<C64>; 4]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch("component length differs from N³".into()));
        }
        Ok(SpinorField { grid, repr, comps })
    }

    /// Samples a position-space function at the grid points.
    pub fn from_position_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn([f64; 3]) -> Spinor + Sync,
    {
        let mut out = SpinorField::zeros(grid, Repr::Position);
        out.map_points(|x, s| *s = f(x));
        out
    }

    /// Fills Fourier coefficients from a mode function.
    pub fn from_fourier_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(Mode) -> Spinor + Sync,
    {
        let mut out = SpinorField::zeros(grid, Repr::Fourier);
        out.map_modes(|m, s| *s = f(m));
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn components(&self) -> &[Vec<C64>; 4] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Vec<C64>; 4] {
        &mut self.comps
    }

    pub fn at(&self, idx: usize) -> Spinor {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx], self.comps[3][idx]]
    }

    pub fn set(&mut self, idx: usize, s: Spinor) {
        for a in 0..4 {
            self.comps[a][idx] = s[a];
        }
    }

    fn map_planes<F>(&mut self, f: F)
    where
        F: Fn(usize, &[f64], [&mut [C64]; 4]) + Sync,
    {
        let n2 = self.grid.n * self.grid.n;
        let kd = self.grid.kd_table();
        let [a, b, c, d] = &mut self.comps;
        (a.par_chunks_mut(n2), b.par_chunks_mut(n2), c.par_chunks_mut(n2), d.par_chunks_mut(n2))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, (pa, pb, pc, pd))| f(i, &kd, [pa, pb, pc, pd]));
    }

    /// Applies `f` to every Fourier mode in place.
    pub fn map_modes<F>(&mut self, f: F)
    where
        F: Fn(Mode, &mut Spinor) + Sync,
    {
        let grid = self.grid;
        let n2 = grid.n * grid.n;
        self.map_planes(|i, kd, p| {
            for mode in plane_modes(&grid, kd, i) {
                let local = mode.idx - i * n2;
                let mut s = [p[0][local], p[1][local], p[2][local], p[3][local]];
                f(mode, &mut s);
                for a in 0..4 {
                    p[a][local] = s[a];
                }
            }
        });
    }

    /// Applies `f` to every grid point in place, with its coordinates.
    pub fn map_points<F>(&mut self, f: F)
    where
        F: Fn([f64; 3], &mut Spinor) + Sync,
    {
        let grid = self.grid;
        let n = grid.n;
        self.map_planes(|i, _, p| {
            let xi = grid.coord(i);
            for j in 0..n {
                let xj = grid.coord(j);
                for k in 0..n {
                    let local = j * n + k;
                    let mut s = [p[0][local], p[1][local], p[2][local], p[3][local]];
                    f([xi, xj, grid.coord(k)], &mut s);
                    for a in 0..4 {
                        p[a][local] = s[a];
                    }
                }
            }
        });
    }

    pub fn to_fourier(&self) -> SpinorField {
        let mut out = self.clone();
        out.make_fourier();
        out
    }

    pub fn to_position(&self) -> SpinorField {
        let mut out = self.clone();
        out.make_position();
        out
    }

    pub fn make_fourier(&mut self) {
        if self.repr == Repr::Fourier {
            return;
        }
        let (_, inv) = plans(self.grid.n);
        let n = self.grid.n;
        let scale = self.grid.cell_volume() / (2.0 * PI).powf(1.5);
        let grid = self.grid;
        self.comps.par_iter_mut().for_each(|c| {
            fft3(c, n, &inv);
            for (idx, z) in c.iter_mut().enumerate() {
                *z *= scale * parity_sign(&grid, idx);
            }
        });
        self.repr = Repr::Fourier;
    }

    pub fn make_position(&mut self) {
        if self.repr == Repr::Position {
            return;
        }
        let (fwd, _) = plans(self.grid.n);
        let n = self.grid.n;
        let scale = self.grid.mode_volume() / (2.0 * PI).powf(1.5);
        let grid = self.grid;
        self.comps.par_iter_mut().for_each(|c| {
            for (idx, z) in c.iter_mut().enumerate() {
                *z *= scale * parity_sign(&grid, idx);
            }
            fft3(c, n, &fwd);
        });
        self.repr = Repr::Position;
    }

    fn measure(&self) -> f64 {
        match self.repr {
            Repr::Position => self.grid.cell_volume(),
            Repr::Fourier => self.grid.mode_volume(),
        }
    }

    /// L² norm, valid in either representation.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|z| z.norm_sqr()).sum();
        (s * self.measure()).sqrt()
    }

    fn check_compatible(&self, other: &SpinorField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        if self.repr != other.repr {
            return Err(Error::GridMismatch("representations differ".into()));
        }
        Ok(())
    }

    /// ⟨self, other⟩ = ∫ conj(self)·other, in the shared representation.
    pub fn inner(&self, other: &SpinorField) -> Result<C64> {
        self.check_compatible(other)?;
        let mut s = ZERO;
        for a in 0..4 {
            for (x, y) in self.comps[a].iter().zip(&other.comps[a]) {
                s += x.conj() * y;
            }
        }
        Ok(s * self.measure())
    }

    pub fn axpy(&mut self, alpha: C64, x: &SpinorField) -> Result<()> {
        self.check_compatible(x)?;
        for a in 0..4 {
            for (y, xv) in self.comps[a].iter_mut().zip(&x.comps[a]) {
                *y += alpha * xv;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: C64) {
        for c in self.comps.iter_mut() {
            for z in c.iter_mut() {
                *z *= alpha;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &SpinorField) -> Result<f64> {
        self.check_compatible(other)?;
        let mut m: f64 = 0.0;
        for a in 0..4 {
            for (x, y) in self.comps[a].iter().zip(&other.comps[a]) {
                m = m.max((x - y).norm());
            }
        }
        Ok(m)
    }

    /// L² norm of self − other.
    pub fn distance(&self, other: &SpinorField) -> Result<f64> {
        self.check_compatible(other)?;
        let mut s = 0.0;
        for a in 0..4 {
            for (x, y) in self.comps[a].iter().zip(&other.comps[a]) {
                s += (x - y).norm_sqr();
            }
        }
        Ok((s * self.measure()).sqrt())
    }

    /// Spectral derivative ∂ⱼ (Fourier representation in and out).
    pub fn derivative(&self, axis: usize) -> Result<SpinorField> {
        self.require(Repr::Fourier)?;
        let mut out = self.clone();
        out.map_modes(|m, s| {
            let f = C64::new(0.0, -m.k[axis]);
            for z in s.iter_mut() {
                *z *= f;
            }
        });
        Ok(out)
    }

    /// f(x) ↦ f(x − a), as the phase e^{ik·a}.
    pub fn translate(&mut self, a: [f64; 3]) -> Result<()> {
        self.require(Repr::Fourier)?;
        self.map_modes(|m, s| {
            let ph = C64::from_polar(1.0, m.k[0] * a[0] + m.k[1] * a[1] + m.k[2] * a[2]);
            for z in s.iter_mut() {
                *z *= ph;
            }
        });
        Ok(())
    }

    pub fn require(&self, repr: Repr) -> Result<()> {
        if self.repr != repr {
            return Err(Error::invalid(format!("field must be in {repr:?} representation")));
        }
        Ok(())
    }

    /// Raw snapshot: little-endian f64, per grid point (Re ψ₀, Im ψ₀, …, Re ψ₃, Im ψ₃),
    /// points in row-major order (last axis fastest). Position representation.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let pos = self.to_position();
        let mut out = Vec::with_capacity(self.grid.len() * 64);
        for idx in 0..self.grid.len() {
            for a in 0..4 {
                out.extend_from_slice(&pos.comps[a][idx].re.to_le_bytes());
                out.extend_from_slice(&pos.comps[a][idx].im.to_le_bytes());
            }
        }
        out
    }

    pub fn from_le_bytes(grid: GridSpec, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != grid.len() * 64 {
            return Err(Error::GridMismatch(format!(
                "snapshot has {} bytes, grid needs {}",
                bytes.len(),
                grid.len() * 64
            )));
        }
        let mut f = SpinorField::zeros(grid, Repr::Position);
        let read = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        for idx in 0..grid.len() {
            for a in 0..4 {
                let o = idx * 64 + a * 16;
                f.comps[a][idx] = C64::new(read(o), read(o + 8));
            }
        }
        Ok(f)
    }
}

/// Action of the free Dirac symbol h(k) = −α·k + βm, the Fourier image of −iα·∇ + βm.
#[inline]
pub fn dirac_symbol(k: [f64; 3], m: f64, s: &Spinor) -> Spinor {
    // σ·k acting on a 2-spinor.
    let sk = |u0: C64, u1: C64| -> (C64, C64) {
        let kp = C64::new(k[0], k[1]);
        let km = C64::new(k[0], -k[1]);
        (u0 * k[2] + km * u1, kp * u0 - u1 * k[2])
    };
    let (a0, a1) = sk(s[2], s[3]);
    let (b0, b1) = sk(s[0], s[1]);
    [s[0] * m - a0, s[1] * m - a1, -b0 - s[2] * m, -b1 - s[3] * m]
}

/// Per-mode W₀(t) = exp(−it h(k)) = cos(ωt) − i sin(ωt) h(k)/ω.
#[inline]
pub fn free_mode(k: [f64; 3], m: f64, t: f64, s: &Spinor) -> Spinor {
    let w = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + m * m).sqrt();
    let (sn, cs) = (w * t).sin_cos();
    let hs = dirac_symbol(k, m, s);
    let f = C64::new(0.0, -sn / w);
    std::array::from_fn(|a| s[a] * cs + hs[a] * f)
}

/// W₀(t)ψ. Accepts either representation and returns the same one.
pub fn free_propagate(psi: &SpinorField, t: f64, m: f64) -> SpinorField {
    let repr = psi.repr();
    let mut out = psi.to_fourier();
    out.map_modes(|mode, s| *s = free_mode(mode.k, m, t, s));
    if repr == Repr::Position {
        out.make_position();
    }
    out
}

/// W_v(t)ψ: free flow followed by f(x) ↦ f(x + vt).
pub fn moving_frame_propagate(psi: &SpinorField, t: f64, v: [f64; 3], m: f64) -> Result<SpinorField> {
    check_velocity(v)?;
    let repr = psi.repr();
    let mut out = psi.to_fourier();
    out.map_modes(|mode, s| {
        let ph = C64::from_polar(1.0, -t * (mode.k[0] * v[0] + mode.k[1] * v[1] + mode.k[2] * v[2]));
        let w = free_mode(mode.k, m, t, s);
        *s = w.map(|z| z * ph);
    });
    if repr == Repr::Position {
        out.make_position();
    }
    Ok(out)
}

/// Minimal-image distance on the periodic box.
pub fn periodic_distance(grid: &GridSpec, x: [f64; 3], c: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        let mut d = x[a] - c[a];
        d -= grid.l * (d / grid.l).round();
        s += d * d;
    }
    s.sqrt()
}

/// ‖(1 + |x − c|)^ν ψ‖_{L²} by cell quadrature, distances taken periodically.
pub fn weighted_norm_centered(psi: &SpinorField, nu: f64, center: [f64; 3]) -> Result<f64> {
    psi.require(Repr::Position)?;
    let grid = *psi.grid();
    let n = grid.n;
    let comps = psi.components();
    let parts: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let idx = grid.index(i, j, k);
                    let x = [grid.coord(i), grid.coord(j), grid.coord(k)];
                    let w = (1.0 + periodic_distance(&grid, x, center)).powf(2.0 * nu);
                    let s: f64 = (0..4).map(|a| comps[a][idx].norm_sqr()).sum();
                    acc += w * s;
                }
            }
            acc
        })
        .collect();
    Ok((parts.iter().sum::<f64>() * grid.cell_volume()).sqrt())
}

/// ‖ψ‖_ν with the weight centered at the origin.
pub fn weighted_norm(psi: &SpinorField, nu: f64) -> Result<f64> {
    weighted_norm_centered(psi, nu, [0.0; 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_packet(grid: GridSpec, c: [f64; 3], w: f64) -> SpinorField {
        SpinorField::from_position_fn(grid, |x| {
            let r2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
            let g = (-r2 / (2.0 * w * w)).exp();
            [C64::new(g, 0.0), C64::new(0.0, 0.5 * g), C64::new(0.2 * g, 0.0), ZERO]
        })
    }

    #[test]
    fn round_trip_and_parseval() {
        let grid = GridSpec::new(12.0, 16).unwrap();
        let f = gaussian_packet(grid, [0.3, -0.2, 0.5], 1.1);
        let h = f.to_fourier();
        assert!((f.l2_norm() - h.l2_norm()).abs() < 1e-12 * f.l2_norm());
        let back = h.to_position();
        assert!(back.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn transform_matches_continuous_convention() {
        // A resolved Gaussian's grid transform equals its continuous transform.
        let grid = GridSpec::new(20.0, 32).unwrap();
        let w: f64 = 1.0;
        let f = SpinorField::from_position_fn(grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            [C64::new((-r2 / (2.0 * w * w)).exp(), 0.0), ZERO, ZERO, ZERO]
        })
        .to_fourier();
        let mut worst: f64 = 0.0;
        for idx in [0usize, 1, 5, grid.index(1, 2, 3), grid.index(31, 30, 2)] {
            let n = grid.n;
            let k = [
                grid.wavenumber(idx / (n * n)),
                grid.wavenumber((idx / n) % n),
                grid.wavenumber(idx % n),
            ];
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let want = w.powi(3) * (-0.5 * w * w * k2).exp();
            worst = worst.max((f.at(idx)[0] - want).norm());
        }
        assert!(worst < 1e-13, "{worst}");
    }

    #[test]
    fn derivative_of_gaussian() {
        let grid = GridSpec::new(16.0, 32).unwrap();
        let f = gaussian_packet(grid, [0.0; 3], 1.0);
        let d = f.to_fourier().derivative(1).unwrap().to_position();
        let want = SpinorField::from_position_fn(grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let g = -x[1] * (-r2 / 2.0).exp();
            [C64::new(g, 0.0), C64::new(0.0, 0.5 * g), C64::new(0.2 * g, 0.0), ZERO]
        });
        assert!(d.max_abs_diff(&want).unwrap() < 1e-8);
    }

    #[test]
    fn symbol_squares_to_dispersion() {
        let k = [0.3, -1.2, 0.7];
        let m = 1.3;
        let s: Spinor = [C64::new(0.1, 0.2), C64::new(-0.4, 0.0), C64::new(0.0, 1.0), C64::new(0.5, -0.5)];
        let hh = dirac_symbol(k, m, &dirac_symbol(k, m, &s));
        let w2 = k.iter().map(|a| a * a).sum::<f64>() + m * m;
        for a in 0..4 {
            assert!((hh[a] - s[a] * w2).norm() < 1e-14);
        }
    }

    #[test]
    fn symbol_matches_matrix_form() {
        use crate::spinor_algebra::{build_dirac_matrices, mat_vec};
        let d = build_dirac_matrices();
        let k = [0.4, 0.9, -0.3];
        let m = 0.7;
        let s: Spinor = [C64::new(0.3, 0.1), C64::new(0.0, -0.4), C64::new(1.0, 0.0), C64::new(0.2, 0.2)];
        let a1 = mat_vec(&d.alpha1, &s);
        let a2 = mat_vec(&d.alpha2, &s);
        let a3 = mat_vec(&d.alpha3, &s);
        let b = mat_vec(&d.beta, &s);
        let h = dirac_symbol(k, m, &s);
        for i in 0..4 {
            let want = -(a1[i] * k[0] + a2[i] * k[1] + a3[i] * k[2]) + b[i] * m;
            assert!((h[i] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_spinor_picks_up_rest_phase() {
        let grid = GridSpec::new(8.0, 8).unwrap();
        let f = SpinorField::from_position_fn(grid, |_| [C64::new(1.0, 0.0), ZERO, ZERO, ZERO]);
        let t = 0.7;
        let g = free_propagate(&f, t, 1.0);
        let want = C64::from_polar(1.0, -t);
        assert!((g.at(grid.index(3, 4, 5))[0] - want).norm() < 1e-12);
        assert!(g.at(7)[2].norm() < 1e-12);
    }

    #[test]
    fn moving_frame_is_shifted_free_flow() {
        let grid = GridSpec::new(20.0, 32).unwrap();
        let f = gaussian_packet(grid, [0.0; 3], 1.2);
        let v = [0.5, 0.0, 0.0];
        let t = 2.5;
        let a = moving_frame_propagate(&f, t, v, 1.0).unwrap();
        let mut b = free_propagate(&f, t, 1.0).to_fourier();
        b.translate([-v[0] * t, 0.0, 0.0]).unwrap();
        b.make_position();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
        // Oracle: a shift by a whole number of cells is an index permutation.
        let w = free_propagate(&f, t, 1.0);
        let shift = (v[0] * t / grid.dx()).round() as usize;
        assert!((v[0] * t - shift as f64 * grid.dx()).abs() < 1e-12);
        let n = grid.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let src = grid.index((i + shift) % n, j, k);
                    let dst = grid.index(i, j, k);
                    for c in 0..4 {
                        worst = worst.max((a.components()[c][dst] - w.components()[c][src]).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
        assert!(moving_frame_propagate(&f, t, [1.0, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn point_mass_weighted_norm() {
        let grid = GridSpec::new(10.0, 8).unwrap();
        let mut f = SpinorField::zeros(grid, Repr::Position);
        let idx = grid.index(6, 4, 3);
        f.set(idx, [C64::new(2.0, 0.0), ZERO, ZERO, ZERO]);
        let x0 = grid.point(idx);
        let r = (x0[0] * x0[0] + x0[1] * x0[1] + x0[2] * x0[2]).sqrt();
        let nu = 3.0;
        let want = 2.0 * (1.0 + r).powf(nu) * grid.cell_volume().sqrt();
        assert!((weighted_norm(&f, nu).unwrap() - want).abs() < 1e-12 * want);
        assert!((weighted_norm(&f, 0.0).unwrap() - f.l2_norm()).abs() < 1e-14);
        assert_eq!(weighted_norm(&SpinorField::zeros(grid, Repr::Position), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let grid = GridSpec::new(6.0, 4).unwrap();
        let f = gaussian_packet(grid, [0.1, 0.2, 0.3], 0.9);
        let bytes = f.to_le_bytes();
        assert_eq!(bytes.len(), 64 * 64);
        let g = SpinorField::from_le_bytes(grid, &bytes).unwrap();
        assert_eq!(g, f);
        // First point, component 0 real part leads the record.
        assert_eq!(f64::from_le_bytes(bytes[0..8].try_into().unwrap()), f.at(0)[0].re);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(10.0, 12).is_err());
        assert!(GridSpec::new(-1.0, 16).is_err());
        let g = GridSpec::new(10.0, 16).unwrap();
        assert_eq!(g.kd_table()[8], 0.0);
        assert!((g.wavenumber(15) + g.dk()).abs() < 1e-15);
    }
}
