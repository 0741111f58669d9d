//! Solitons ψ_v, soliton states S(σ) and the tangent basis τ₁…τ₆, built in
//! k-space from ψ̂_v(k) = (v·k + α·k − βm)ρ̂(k) / (k² + m² − (v·k)²).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_velocity, Result};
use crate::field_grid::{dirac_symbol, GridSpec, Mode, Repr, SpinorField};
use crate::quadrature::gauss_legendre;
use crate::spinor_algebra::{ChargeDensity, Spinor};
use crate::symplectic_geometry::PhaseState;

const ZERO: C64 = C64::new(0.0, 0.0);

/// σ = (b, v): a point of the solitary manifold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub b: [f64; 3],
    pub v: [f64; 3],
}

impl SolitonParams {
    pub fn new(b: [f64; 3], v: [f64; 3]) -> Result<Self> {
        check_velocity(v)?;
        Ok(SolitonParams { b, v })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.b[0], self.b[1], self.b[2], self.v[0], self.v[1], self.v[2]]
    }

    pub fn from_array(s: [f64; 6]) -> Self {
        SolitonParams { b: [s[0], s[1], s[2]], v: [s[3], s[4], s[5]] }
    }
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn gamma(v: [f64; 3]) -> f64 {
    1.0 / (1.0 - dot3(v, v)).sqrt()
}

/// p_v = γv.
pub fn soliton_momentum(v: [f64; 3]) -> Result<[f64; 3]> {
    check_velocity(v)?;
    let g = gamma(v);
    Ok(v.map(|x| g * x))
}

/// v(p) = p/√(1+p²).
pub fn velocity_of_momentum(p: [f64; 3]) -> [f64; 3] {
    let s = (1.0 + dot3(p, p)).sqrt();
    p.map(|x| x / s)
}

/// Column j is ∂_{vⱼ}p_v = γeⱼ + γ³vⱼv.
pub fn dp_dv(v: [f64; 3]) -> [[f64; 3]; 3] {
    let g = gamma(v);
    let g3 = g * g * g;
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = g3 * v[i] * v[j] + if i == j { g } else { 0.0 };
        }
    }
    m
}

/// d2[l][j][i] = ∂_{v_l}∂_{vⱼ}(p_v)ᵢ.
pub fn d2p_dv2(v: [f64; 3]) -> [[[f64; 3]; 3]; 3] {
    let g = gamma(v);
    let g3 = g * g * g;
    let g5 = g3 * g * g;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut out = [[[0.0; 3]; 3]; 3];
    for l in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                out[l][j][i] = g3 * (v[l] * d(i, j) + v[j] * d(i, l) + d(j, l) * v[i])
                    + 3.0 * g5 * v[j] * v[l] * v[i];
            }
        }
    }
    out
}

/// ρ̂₁ on the grid's mode set; zero on the Nyquist planes.
pub fn charge_hat(mode: &Mode, rho: &ChargeDensity) -> f64 {
    if mode.resolved {
        rho.rho1_hat_k2(mode.k2())
    } else {
        0.0
    }
}

/// ψ̂_v and its first and second v-derivatives at one wavevector.
#[derive(Clone, Copy, Debug)]
pub struct SolitonJet {
    pub psi: Spinor,
    pub d1: [Spinor; 3],
    /// d2[l][j] = ∂_{v_l}∂_{vⱼ}ψ̂_v.
    pub d2: [[Spinor; 3]; 3],
}

fn numerator(k: [f64; 3], vk: f64, m: f64, rh: f64) -> Spinor {
    [
        C64::new((vk - m) * rh, 0.0),
        ZERO,
        C64::new(k[2] * rh, 0.0),
        C64::new(k[0] * rh, k[1] * rh),
    ]
}

pub fn soliton_mode(k: [f64; 3], rh: f64, v: [f64; 3], m: f64) -> Spinor {
    let vk = dot3(v, k);
    let d = dot3(k, k) + m * m - vk * vk;
    numerator(k, vk, m, rh).map(|z| z / d)
}

pub fn soliton_jet(k: [f64; 3], rh: f64, v: [f64; 3], m: f64, second: bool) -> SolitonJet {
    let vk = dot3(v, k);
    let d = dot3(k, k) + m * m - vk * vk;
    let psi = numerator(k, vk, m, rh).map(|z| z / d);
    let mut d1 = [[ZERO; 4]; 3];
    for j in 0..3 {
        for a in 0..4 {
            d1[j][a] = psi[a] * (2.0 * k[j] * vk / d);
        }
        d1[j][0] += k[j] * rh / d;
    }
    let mut d2 = [[[ZERO; 4]; 3]; 3];
    if second {
        for l in 0..3 {
            for j in 0..3 {
                let kk = k[j] * k[l];
                for a in 0..4 {
                    d2[l][j][a] = psi[a] * (2.0 * kk / d + 4.0 * kk * vk * vk / (d * d))
                        + d1[l][a] * (2.0 * k[j] * vk / d);
                }
                d2[l][j][0] += 2.0 * kk * vk * rh / (d * d);
            }
        }
    }
    SolitonJet { psi, d1, d2 }
}

/// ψ_v on the grid, in the Fourier representation.
pub fn soliton_field(v: [f64; 3], rho: &ChargeDensity, grid: GridSpec) -> Result<SpinorField> {
    check_velocity(v)?;
    let m = rho.mass;
    Ok(SpinorField::from_fourier_fn(grid, |mode| soliton_mode(mode.k, charge_hat(&mode, rho), v, m)))
}

/// S(σ) = (ψ_v(· − b), b, p_v).
pub fn soliton_state(sigma: &SolitonParams, rho: &ChargeDensity, grid: GridSpec) -> Result<PhaseState> {
    let mut psi = soliton_field(sigma.v, rho, grid)?;
    psi.translate(sigma.b)?;
    Ok(PhaseState { psi, q: sigma.b, p: soliton_momentum(sigma.v)? })
}

/// τ₁…τ₆ at σ; with b = 0 these are the moving-frame tangent vectors.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    pub sigma: SolitonParams,
    pub tau: [PhaseState; 6],
}

pub fn tangent_basis_at(sigma: &SolitonParams, rho: &ChargeDensity, grid: GridSpec) -> Result<TangentBasis> {
    check_velocity(sigma.v)?;
    let m = rho.mass;
    let v = sigma.v;
    let b = sigma.b;
    let fields: [SpinorField; 6] = std::array::from_fn(|t| {
        SpinorField::from_fourier_fn(grid, |mode| {
            let rh = charge_hat(&mode, rho);
            if rh == 0.0 {
                return [ZERO; 4];
            }
            let jet = soliton_jet(mode.k, rh, v, m, false);
            let ph = C64::from_polar(1.0, dot3(mode.k, b));
            if t < 3 {
                let f = C64::new(0.0, mode.k[t]) * ph;
                jet.psi.map(|z| z * f)
            } else {
                jet.d1[t - 3].map(|z| z * ph)
            }
        })
    });
    let dp = dp_dv(v);
    let mut taus = fields.into_iter().enumerate().map(|(t, psi)| {
        let mut q = [0.0; 3];
        let mut p = [0.0; 3];
        if t < 3 {
            q[t] = 1.0;
        } else {
            for i in 0..3 {
                p[i] = dp[i][t - 3];
            }
        }
        PhaseState { psi, q, p }
    });
    let tau = std::array::from_fn(|_| taus.next().unwrap());
    Ok(TangentBasis { sigma: *sigma, tau })
}

/// Tangent vectors in the moving coordinate (b = 0).
pub fn tangent_basis(v: [f64; 3], rho: &ChargeDensity, grid: GridSpec) -> Result<TangentBasis> {
    tangent_basis_at(&SolitonParams::new([0.0; 3], v)?, rho, grid)
}

/// ρ₁ sampled at the grid points and transformed, (ρ̂₁, 0, 0, 0). Unlike the
/// closed-form ρ̂ used to build ψ_v, this carries the grid's aliasing error.
pub fn sampled_charge(rho: &ChargeDensity, grid: GridSpec) -> SpinorField {
    SpinorField::from_position_fn(grid, |x| [C64::new(rho.rho1(x), 0.0), ZERO, ZERO, ZERO]).to_fourier()
}

/// Relative residual ‖(−v·k + α·k − βm)ψ̂ − ρ̂_s‖/‖ρ̂_s‖ of the stationary
/// equation −iv·∇ψ = (−iα·∇ + βm)ψ + ρ, with ρ̂_s the sampled charge.
pub fn stationary_residual(psi_v: &SpinorField, v: [f64; 3], rho: &ChargeDensity) -> Result<f64> {
    psi_v.require(Repr::Fourier)?;
    let grid = *psi_v.grid();
    let m = rho.mass;
    let mut r = psi_v.clone();
    r.map_modes(|mode, s| {
        let h = dirac_symbol(mode.k, m, s);
        let vk = dot3(v, mode.k);
        *s = std::array::from_fn(|a| -s[a] * vk - h[a]);
    });
    let charge = sampled_charge(rho, grid);
    Ok(r.distance(&charge)? / charge.l2_norm())
}

/// Re⟨ψ, ∇ρ⟩ with ψ in the Fourier representation and ρ centered at the origin.
pub fn force_on_charge(psi: &SpinorField, rho: &ChargeDensity, q: [f64; 3]) -> Result<[f64; 3]> {
    psi.require(Repr::Fourier)?;
    let grid = *psi.grid();
    let c = psi.components();
    let f = crate::field_grid::sum_modes::<3, _>(&grid, |mode| {
        let rh = charge_hat(&mode, rho);
        if rh == 0.0 {
            return [0.0; 3];
        }
        // conj(ψ̂₀)·(−ikⱼ)e^{ik·q}ρ̂
        let z = c[0][mode.idx].conj() * C64::from_polar(rh, dot3(mode.k, q)) * C64::new(0.0, -1.0);
        [(z * mode.k[0]).re, (z * mode.k[1]).re, (z * mode.k[2]).re]
    });
    let w = grid.mode_volume();
    Ok(f.map(|x| x * w))
}

/// ψ_v(x) from the position-space representation
/// ψ_v = i(v·∇ + α·∇ + iβm)∫γe^{−m|z̃|}/(4π|z̃|)ρ(x − z)dz, z̃ = (γz_∥, z_⊥),
/// by direct quadrature in the stretched coordinate. Used as a spot check of
/// the Fourier construction; v must lie along e₁.
pub fn soliton_by_kernel(x: [f64; 3], v1: f64, rho: &ChargeDensity, radial_nodes: usize) -> Result<Spinor> {
    check_velocity([v1, 0.0, 0.0])?;
    let g = gamma([v1, 0.0, 0.0]);
    let m = rho.mass;
    let (ct, wt) = gauss_legendre(48);
    let nphi = 64;
    let (rx, rw) = gauss_legendre(radial_nodes);
    // r ∈ [0, R] split into panels for the e^{−mr} weight.
    let r_max = 40.0 / m + 10.0 * rho.sigma;
    let panels = 16;
    let mut acc = [ZERO; 4];
    for pnl in 0..panels {
        let a = r_max * pnl as f64 / panels as f64;
        let b = r_max * (pnl + 1) as f64 / panels as f64;
        for (xi, wi) in rx.iter().zip(&rw) {
            let r = 0.5 * (a + b) + 0.5 * (b - a) * xi;
            let wr = 0.5 * (b - a) * wi * r * (-m * r).exp() / (4.0 * std::f64::consts::PI);
            for (c, w_c) in ct.iter().zip(&wt) {
                let s = (1.0 - c * c).sqrt();
                for ip in 0..nphi {
                    let phi = 2.0 * std::f64::consts::PI * ip as f64 / nphi as f64;
                    let u = [r * c, r * s * phi.cos(), r * s * phi.sin()];
                    let y = [x[0] - u[0] / g, x[1] - u[1], x[2] - u[2]];
                    let r1 = rho.rho1(y);
                    let gr = rho.grad_rho1(y);
                    let f = [C64::new(v1 * gr[0], m * r1), ZERO, C64::new(gr[2], 0.0), C64::new(gr[0], gr[1])];
                    let w = wr * w_c * 2.0 * std::f64::consts::PI / nphi as f64;
                    for a2 in 0..4 {
                        acc[a2] += f[a2] * w;
                    }
                }
            }
        }
    }
    Ok(acc.map(|z| z * C64::new(0.0, 1.0)))
}
