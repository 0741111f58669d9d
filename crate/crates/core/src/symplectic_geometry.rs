//! Phase-space states, the symplectic form Ω, the matrix Ω(v) and the
//! symplectic orthogonal projection onto the solitary manifold.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_velocity, Error, Result};
use crate::field_grid::{sum_modes, GridSpec, Repr, SpinorField};
use crate::quadrature::QuadSpec;
use crate::soliton_manifold::{
    charge_hat, d2p_dv2, dot3, dp_dv, gamma, soliton_jet, soliton_momentum, tangent_basis_at, SolitonParams,
    TangentBasis,
};
use crate::spinor_algebra::{ChargeDensity, Spinor};

/// Y = (ψ, q, p) with ψ = ψ₁ + iψ₂.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub psi: SpinorField,
    pub q: [f64; 3],
    pub p: [f64; 3],
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

impl PhaseState {
    pub fn zero(grid: GridSpec, repr: Repr) -> Self {
        PhaseState { psi: SpinorField::zeros(grid, repr), q: [0.0; 3], p: [0.0; 3] }
    }

    /// ‖Y‖_ℰ = ‖ψ‖₀ + |q| + |p|.
    pub fn norm_e(&self) -> f64 {
        self.psi.l2_norm() + norm3(self.q) + norm3(self.p)
    }

    /// (ψ₁, ψ₂) = (Re ψ, Im ψ) as real-valued position-space fields.
    pub fn real_parts(&self) -> (SpinorField, SpinorField) {
        let pos = self.psi.to_position();
        let mut re = pos.clone();
        let mut im = pos;
        re.map_points(|_, s| *s = s.map(|z| C64::new(z.re, 0.0)));
        im.map_points(|_, s| *s = s.map(|z| C64::new(z.im, 0.0)));
        (re, im)
    }

    /// Rebuilds ψ = ψ₁ + iψ₂ from two real position-space fields.
    pub fn from_real_parts(psi1: &SpinorField, psi2: &SpinorField, q: [f64; 3], p: [f64; 3]) -> Result<Self> {
        let mut psi = psi1.to_position();
        psi.axpy(C64::new(0.0, 1.0), &psi2.to_position())?;
        Ok(PhaseState { psi, q, p })
    }

    /// ψ(x) = a·exp(−|x − c|²/(2w²) + ik₀·x) in position space.
    pub fn gaussian_bump(grid: GridSpec, center: [f64; 3], width: f64, k0: [f64; 3], a: Spinor, q: [f64; 3], p: [f64; 3]) -> Self {
        let psi = SpinorField::from_position_fn(grid, |x| {
            let r2: f64 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum();
            let z = C64::new(-r2 / (2.0 * width * width), dot3(k0, x)).exp();
            a.map(|c| c * z)
        });
        PhaseState { psi, q, p }
    }

    pub fn to_fourier(&self) -> Self {
        PhaseState { psi: self.psi.to_fourier(), q: self.q, p: self.p }
    }

    pub fn axpy(&mut self, a: f64, x: &PhaseState) -> Result<()> {
        if x.psi.repr() == self.psi.repr() {
            self.psi.axpy(C64::new(a, 0.0), &x.psi)?;
        } else {
            let conv = match self.psi.repr() {
                Repr::Fourier => x.psi.to_fourier(),
                Repr::Position => x.psi.to_position(),
            };
            self.psi.axpy(C64::new(a, 0.0), &conv)?;
        }
        for i in 0..3 {
            self.q[i] += a * x.q[i];
            self.p[i] += a * x.p[i];
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.psi.scale(C64::new(a, 0.0));
        self.q = self.q.map(|x| a * x);
        self.p = self.p.map(|x| a * x);
    }

    /// T_aY = (ψ(· − a), q + a, p).
    pub fn translated(&self, a: [f64; 3]) -> Result<Self> {
        let mut psi = self.psi.to_fourier();
        psi.translate(a)?;
        if self.psi.repr() == Repr::Position {
            psi.make_position();
        }
        Ok(PhaseState { psi, q: [self.q[0] + a[0], self.q[1] + a[1], self.q[2] + a[2]], p: self.p })
    }
}

/// Ω(Y¹, Y²) = ⟨ψ₁¹,ψ₂²⟩ − ⟨ψ₂¹,ψ₁²⟩ + q¹·p² − p¹·q².
pub fn omega(y1: &PhaseState, y2: &PhaseState) -> Result<f64> {
    let field = if y1.psi.repr() == y2.psi.repr() {
        y1.psi.inner(&y2.psi)?.im
    } else {
        y1.psi.to_fourier().inner(&y2.psi.to_fourier())?.im
    };
    Ok(field + dot3(y1.q, y2.p) - dot3(y1.p, y2.q))
}

/// Ω⁺(v) = K + γE + γ³v⊗v together with the full 6×6 matrix
/// Ω(v)_{ab} = Ω(τ_a, τ_b) = [[0, Ω⁺], [−Ω⁺, 0]].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaMatrix {
    pub v: [f64; 3],
    pub k: [[f64; 3]; 3],
    pub block: [[f64; 3]; 3],
    pub full: [[f64; 6]; 6],
    /// Quadrature error estimate for the entries of K.
    pub error: f64,
}

impl OmegaMatrix {
    pub fn eigenvalues(&self) -> [f64; 3] {
        let m = Matrix3::from_fn(|i, j| self.block[i][j]);
        let e = SymmetricEigen::new(m).eigenvalues;
        let mut out = [e[0], e[1], e[2]];
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

/// K_{jl} = ∫ kⱼkₗℬ(k)(k² + m² + 3(v·k)²)/(k² + m² − (v·k)²)³ dk.
pub fn matrix_k(v: [f64; 3], rho: &ChargeDensity, quad: &QuadSpec) -> Result<([[f64; 3]; 3], f64)> {
    check_velocity(v)?;
    quad.validate()?;
    let m2 = rho.mass * rho.mass;
    let est = quad.integrate(|k| {
        let k2 = dot3(k, k);
        let vk = dot3(v, k);
        let d = k2 + m2 - vk * vk;
        let w = rho.wiener_b_k2(k2) * (k2 + m2 + 3.0 * vk * vk) / (d * d * d);
        [k[0] * k[0] * w, k[1] * k[1] * w, k[2] * k[2] * w, k[0] * k[1] * w, k[0] * k[2] * w, k[1] * k[2] * w]
    });
    let s = est.value;
    let kmat = [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]];
    if est.error > quad.abs_tol {
        return Err(Error::Quadrature { error: est.error, tol: quad.abs_tol });
    }
    Ok((kmat, est.error))
}

pub fn omega_plus(v: [f64; 3], rho: &ChargeDensity, quad: &QuadSpec) -> Result<OmegaMatrix> {
    let (k, error) = matrix_k(v, rho, quad)?;
    let g = gamma(v);
    let g3 = g * g * g;
    let mut block = [[0.0; 3]; 3];
    let mut full = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            block[i][j] = k[i][j] + g3 * v[i] * v[j] + if i == j { g } else { 0.0 };
            full[i][j + 3] = block[i][j];
            full[i + 3][j] = -block[i][j];
        }
    }
    Ok(OmegaMatrix { v, k, block, full, error })
}

/// Ω(τ_a, τ_b) from grid inner products of the tangent basis.
pub fn omega_grid_matrix(basis: &TangentBasis) -> Result<[[f64; 6]; 6]> {
    let mut out = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in (a + 1)..6 {
            let w = omega(&basis.tau[a], &basis.tau[b])?;
            out[a][b] = w;
            out[b][a] = -w;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaComparison {
    pub grid: [[f64; 6]; 6],
    pub closed: [[f64; 6]; 6],
    pub max_abs_diff: f64,
    /// max_abs_diff relative to the largest closed-form entry.
    pub max_rel_diff: f64,
    /// Largest |Ω_ab + Ω_ba| of the grid matrix.
    pub antisymmetry: f64,
}

pub fn omega_vs_direct(
    v: [f64; 3],
    rho: &ChargeDensity,
    grid: GridSpec,
    quad: &QuadSpec,
) -> Result<OmegaComparison> {
    let basis = tangent_basis_at(&SolitonParams::new([0.0; 3], v)?, rho, grid)?;
    let mut g = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            g[a][b] = omega(&basis.tau[a], &basis.tau[b])?;
        }
    }
    let closed = omega_plus(v, rho, quad)?.full;
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut anti: f64 = 0.0;
    for a in 0..6 {
        for b in 0..6 {
            diff = diff.max((g[a][b] - closed[a][b]).abs());
            scale = scale.max(closed[a][b].abs());
            anti = anti.max((g[a][b] + g[b][a]).abs());
        }
    }
    Ok(OmegaComparison { grid: g, closed, max_abs_diff: diff, max_rel_diff: diff / scale, antisymmetry: anti })
}

/// Removes the tangent components of `z` so that Ω(z', τⱼ) = 0 for all j:
/// z' = z − Σₗ aₗτₗ with Σₗ aₗΩ(τₗ, τⱼ) = Ω(z, τⱼ).
pub fn symplectic_complement(z: &PhaseState, basis: &TangentBasis) -> Result<PhaseState> {
    let zf = z.to_fourier();
    let mut m = Matrix6::zeros();
    let mut r = Vector6::zeros();
    for j in 0..6 {
        r[j] = omega(&zf, &basis.tau[j])?;
        for l in 0..6 {
            m[(j, l)] = omega(&basis.tau[l], &basis.tau[j])?;
        }
    }
    let a = m.lu().solve(&r).ok_or_else(|| Error::numerical("Ω(τ, τ) is singular"))?;
    let mut out = zf;
    for l in 0..6 {
        out.axpy(-a[l], &basis.tau[l])?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// Residual tolerance, multiplied by max(1, ‖Z‖_ℰ).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { tol: 1e-10, max_iter: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub sigma: SolitonParams,
    pub z: PhaseState,
    /// Ω(Z, τⱼ(σ)), j = 1..6.
    pub residuals: [f64; 6],
    pub iterations: usize,
    /// max |Rⱼ| before each Newton step and after the last.
    pub history: Vec<f64>,
}

struct NewtonSystem {
    r: [f64; 6],
    jac: [[f64; 6]; 6],
}

/// Residuals Rⱼ(σ) = Ω(Y − S(σ), τⱼ(σ)) and the exact Jacobian
/// ∂Rⱼ/∂σₗ = −Ω(τₗ, τⱼ) + Ω(Y − S(σ), ∂ₗτⱼ), in one pass over the modes.
fn newton_system(y: &PhaseState, sigma: &SolitonParams, rho: &ChargeDensity) -> Result<NewtonSystem> {
    let grid = *y.psi.grid();
    let yc = y.psi.components();
    let v = sigma.v;
    let b = sigma.b;
    let m = rho.mass;
    // Layout: 6 residual sums, 36 Ω(τₗ,τⱼ) sums, 36 Ω(Z,∂ₗτⱼ) sums.
    let sums = sum_modes::<78, _>(&grid, |mode| {
        let mut out = [0.0; 78];
        let rh = charge_hat(&mode, rho);
        let yk = [yc[0][mode.idx], yc[1][mode.idx], yc[2][mode.idx], yc[3][mode.idx]];
        if rh == 0.0 {
            return out;
        }
        let jet = soliton_jet(mode.k, rh, v, m, true);
        let ph = C64::from_polar(1.0, dot3(mode.k, b));
        let s = jet.psi.map(|z| z * ph);
        let z: [C64; 4] = std::array::from_fn(|a| yk[a] - s[a]);
        let ik = mode.k.map(|x| C64::new(0.0, x));
        let mut tau = [[C64::new(0.0, 0.0); 4]; 6];
        for j in 0..3 {
            tau[j] = s.map(|c| c * ik[j]);
            tau[j + 3] = jet.d1[j].map(|c| c * ph);
        }
        let im_dot = |x: &[C64; 4], w: &[C64; 4]| -> f64 { (0..4).map(|a| (x[a].conj() * w[a]).im).sum() };
        for j in 0..6 {
            out[j] = im_dot(&z, &tau[j]);
            for l in 0..6 {
                out[6 + 6 * j + l] = im_dot(&tau[l], &tau[j]);
                let dtau: [C64; 4] = match (j < 3, l < 3) {
                    (true, true) => tau[j].map(|c| c * ik[l]),
                    (true, false) => jet.d1[l - 3].map(|c| c * ph * ik[j]),
                    (false, true) => tau[j].map(|c| c * ik[l]),
                    (false, false) => jet.d2[l - 3][j - 3].map(|c| c * ph),
                };
                out[42 + 6 * j + l] = im_dot(&z, &dtau);
            }
        }
        out
    });
    let w = grid.mode_volume();
    let dp = dp_dv(v);
    let d2p = d2p_dv2(v);
    let pv = soliton_momentum(v)?;
    let zq: [f64; 3] = std::array::from_fn(|i| y.q[i] - b[i]);
    let zp: [f64; 3] = std::array::from_fn(|i| y.p[i] - pv[i]);
    let tq = |j: usize| -> [f64; 3] { std::array::from_fn(|i| if j < 3 && i == j { 1.0 } else { 0.0 }) };
    let tp = |j: usize| -> [f64; 3] { std::array::from_fn(|i| if j >= 3 { dp[i][j - 3] } else { 0.0 }) };
    let mut r = [0.0; 6];
    let mut jac = [[0.0; 6]; 6];
    for j in 0..6 {
        r[j] = w * sums[j] + dot3(zq, tp(j)) - dot3(zp, tq(j));
        for l in 0..6 {
            let om_lj = w * sums[6 + 6 * j + l] + dot3(tq(l), tp(j)) - dot3(tp(l), tq(j));
            let mut om_z_dtau = w * sums[42 + 6 * j + l];
            if j >= 3 && l >= 3 {
                om_z_dtau += dot3(zq, d2p[l - 3][j - 3]);
            }
            jac[j][l] = -om_lj + om_z_dtau;
        }
    }
    Ok(NewtonSystem { r, jac })
}

fn max_abs(r: &[f64; 6]) -> f64 {
    r.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Finds σ with Ω(Y − S(σ), τⱼ(σ)) = 0, j = 1..6, by damped Newton iteration
/// from `guess`.
pub fn project_to_manifold(
    y: &PhaseState,
    guess: &SolitonParams,
    rho: &ChargeDensity,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    check_velocity(guess.v)?;
    let y = y.to_fourier();
    let grid = *y.psi.grid();
    let mut sigma = *guess;
    let mut sys = newton_system(&y, &sigma, rho)?;
    let mut history = vec![max_abs(&sys.r)];
    let mut iterations = 0;
    let finish = |sigma: SolitonParams, iterations: usize, history: Vec<f64>| -> Result<Projection> {
        let s = crate::soliton_manifold::soliton_state(&sigma, rho, grid)?;
        let mut z = y.clone();
        z.axpy(-1.0, &s)?;
        let basis = tangent_basis_at(&sigma, rho, grid)?;
        let mut residuals = [0.0; 6];
        for j in 0..6 {
            residuals[j] = omega(&z, &basis.tau[j])?;
        }
        Ok(Projection { sigma, z, residuals, iterations, history })
    };
    loop {
        let res = max_abs(&sys.r);
        // ‖Z‖_ℰ is only needed for the scaled tolerance; a cheap upper bound
        // follows from the residual field norm at the current σ.
        let znorm = {
            let s = crate::soliton_manifold::soliton_state(&sigma, rho, grid)?;
            let mut z = y.clone();
            z.axpy(-1.0, &s)?;
            z.norm_e()
        };
        if res <= opts.tol * znorm.max(1.0) {
            return finish(sigma, iterations, history);
        }
        if iterations >= opts.max_iter {
            return Err(Error::ProjectionFailed { iterations, residual: res });
        }
        let jm = Matrix6::from_fn(|i, j| sys.jac[i][j]);
        let rv = Vector6::from_fn(|i, _| -sys.r[i]);
        let step = jm.lu().solve(&rv).ok_or_else(|| Error::numerical("singular projection Jacobian"))?;
        let mut t = 1.0;
        let base = sigma.as_array();
        let mut accepted = false;
        for _ in 0..30 {
            let trial: [f64; 6] = std::array::from_fn(|i| base[i] + t * step[i]);
            let cand = SolitonParams::from_array(trial);
            if dot3(cand.v, cand.v) < 1.0 {
                let cs = newton_system(&y, &cand, rho)?;
                if max_abs(&cs.r) < res || t < 1e-6 {
                    sigma = cand;
                    sys = cs;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        history.push(max_abs(&sys.r));
        if !accepted {
            return Err(Error::ProjectionFailed { iterations, residual: res });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton_manifold::{soliton_state, tangent_basis};

    fn grid() -> GridSpec {
        GridSpec::new(16.0, 16).unwrap()
    }

    #[test]
    fn omega_is_antisymmetric_and_particle_only_when_field_free() {
        let g = grid();
        let a = PhaseState { psi: SpinorField::zeros(g, Repr::Fourier), q: [1.0, 2.0, 3.0], p: [0.5, -1.0, 0.0] };
        let b = PhaseState { psi: SpinorField::zeros(g, Repr::Fourier), q: [0.0, 1.0, 0.0], p: [2.0, 0.0, 1.0] };
        let want = dot3(a.q, b.p) - dot3(a.p, b.q);
        assert!((omega(&a, &b).unwrap() - want).abs() < 1e-15);
        assert!((omega(&a, &b).unwrap() + omega(&b, &a).unwrap()).abs() < 1e-15);
        assert_eq!(omega(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn real_parts_round_trip() {
        let rho = ChargeDensity::default();
        let s = soliton_state(&SolitonParams::new([0.5, 0.0, 0.0], [0.3, 0.1, 0.0]).unwrap(), &rho, grid()).unwrap();
        let (a, b) = s.real_parts();
        let back = PhaseState::from_real_parts(&a, &b, s.q, s.p).unwrap();
        assert!(back.psi.max_abs_diff(&s.psi.to_position()).unwrap() < 1e-15);
    }

    #[test]
    fn translation_block_vanishes() {
        let rho = ChargeDensity::default();
        let basis = tangent_basis([0.4, 0.0, 0.0], &rho, grid()).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                assert!(omega(&basis.tau[j], &basis.tau[l]).unwrap().abs() < 1e-12);
                assert!(omega(&basis.tau[j + 3], &basis.tau[l + 3]).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn omega_plus_at_rest_is_isotropic() {
        let rho = ChargeDensity::default();
        let q = QuadSpec { k_max: 8.0, nodes: 64, abs_tol: 1e-6 };
        let om = omega_plus([0.0; 3], &rho, &q).unwrap();
        assert!((om.k[0][0] - om.k[1][1]).abs() < 1e-12);
        assert!((om.k[0][0] - om.k[2][2]).abs() < 1e-12);
        assert!(om.k[0][1].abs() < 1e-14);
        assert!(om.min_eigenvalue() > 1.0);
    }

    #[test]
    fn complement_is_orthogonal() {
        let rho = ChargeDensity::default();
        let g = grid();
        let basis = tangent_basis([0.3, 0.0, 0.0], &rho, g).unwrap();
        let bump = SpinorField::from_position_fn(g, |x| {
            let r2 = dot3(x, x);
            let e = (-(r2) / 2.0).exp();
            [C64::new(e, 0.0), C64::new(0.0, 0.3 * e), C64::new(0.1 * e * x[0], 0.0), C64::new(0.0, 0.0)]
        });
        let z = PhaseState { psi: bump, q: [0.1, 0.0, -0.2], p: [0.0, 0.3, 0.0] };
        let zc = symplectic_complement(&z, &basis).unwrap();
        for j in 0..6 {
            assert!(omega(&zc, &basis.tau[j]).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn fixed_point_projection() {
        let rho = ChargeDensity::default();
        let sigma = SolitonParams::new([0.3, -0.1, 0.2], [0.2, 0.1, 0.0]).unwrap();
        let y = soliton_state(&sigma, &rho, grid()).unwrap();
        let pr = project_to_manifold(&y, &sigma, &rho, &ProjectionOptions::default()).unwrap();
        assert_eq!(pr.iterations, 0);
        assert!(pr.z.norm_e() < 1e-14);
    }
}
