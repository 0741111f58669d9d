//! Linearization at a soliton: the operator A_{v,w}, the Green function g_λ,
//! the matrices L, H(λ), F(ω), M(λ) and the block structure of M⁻¹(iω), and
//! the function Φ(λ) behind the symplectic orthogonality conditions.
//!
//! Matrix objects live in the frame where v = (|v|, 0, 0); [`Frame`] maps them
//! back to a general velocity.

use nalgebra::Matrix6;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_velocity, Error, Result};
use crate::field_grid::{dirac_symbol, sum_modes, GridSpec, SpinorField};
use crate::quadrature::{adaptive_gk, Estimate, QuadSpec};
use crate::soliton_manifold::{charge_hat, dot3, gamma, soliton_field};
use crate::spinor_algebra::{ChargeDensity, Mat4, Spinor};
use crate::symplectic_geometry::PhaseState;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);
const PI: f64 = std::f64::consts::PI;

pub type CMat3 = [[C64; 3]; 3];

/// B_v = γ⁻¹(E − v⊗v).
pub fn b_v(v: [f64; 3]) -> [[f64; 3]; 3] {
    let g = gamma(v);
    std::array::from_fn(|i| std::array::from_fn(|j| ((if i == j { 1.0 } else { 0.0 }) - v[i] * v[j]) / g))
}

/// B_v⁻¹ = γ(E + γ²v⊗v).
pub fn b_v_inv(v: [f64; 3]) -> [[f64; 3]; 3] {
    let g = gamma(v);
    std::array::from_fn(|i| std::array::from_fn(|j| g * ((if i == j { 1.0 } else { 0.0 }) + g * g * v[i] * v[j])))
}

/// Branch point μ = m√(1 − v²) of H.
pub fn mu(speed: f64, m: f64) -> f64 {
    m * (1.0 - speed * speed).sqrt()
}

/// Rotation R with R·v = (|v|, 0, 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub r: [[f64; 3]; 3],
    pub speed: f64,
}

impl Frame {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        check_velocity(v)?;
        let s = dot3(v, v).sqrt();
        if s == 0.0 {
            return Ok(Frame { r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], speed: 0.0 });
        }
        let e1 = v.map(|x| x / s);
        // Pick the coordinate axis least aligned with e1 to seed e2.
        let mut seed = [0.0; 3];
        let amin = (0..3).min_by(|&a, &b| e1[a].abs().partial_cmp(&e1[b].abs()).unwrap()).unwrap();
        seed[amin] = 1.0;
        let d = dot3(seed, e1);
        let mut e2: [f64; 3] = std::array::from_fn(|i| seed[i] - d * e1[i]);
        let n2 = dot3(e2, e2).sqrt();
        e2 = e2.map(|x| x / n2);
        let e3 = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]];
        Ok(Frame { r: [e1, e2, e3], speed: s })
    }

    pub fn to_frame(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| dot3(self.r[i], x))
    }

    /// Rᵀ X R: a frame matrix expressed in lab coordinates.
    pub fn matrix_to_lab(&self, x: &CMat3) -> CMat3 {
        let r = &self.r;
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut s = ZERO;
                for a in 0..3 {
                    for b in 0..3 {
                        s += x[a][b] * (r[a][i] * r[b][j]);
                    }
                }
                s
            })
        })
    }
}

/// A_{v,w} acting on states written in the moving coordinate y:
/// Ψ̇ = (−α·∇ − iβm + w·∇)Ψ + iQ·∇ρ, Q̇ = B_vP, Ṗ = Re⟨Ψ,∇ρ⟩ + Re⟨∇ψ_v, Q·∇ρ⟩.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub v: [f64; 3],
    pub w: [f64; 3],
    pub rho: ChargeDensity,
    pub grid: GridSpec,
    psi_v: SpinorField,
}

impl LinearizedOperator {
    pub fn new(v: [f64; 3], w: [f64; 3], rho: ChargeDensity, grid: GridSpec) -> Result<Self> {
        check_velocity(v)?;
        check_velocity(w)?;
        let psi_v = soliton_field(v, &rho, grid)?;
        Ok(LinearizedOperator { v, w, rho, grid, psi_v })
    }

    pub fn apply(&self, z: &PhaseState) -> Result<PhaseState> {
        if *z.psi.grid() != self.grid {
            return Err(Error::GridMismatch("state grid differs from operator grid".into()));
        }
        let zf = z.to_fourier();
        let m = self.rho.mass;
        let w = self.w;
        let q = zf.q;
        let rho = self.rho;
        let mut field = zf.psi.clone();
        field.map_modes(|mode, s| {
            let h = dirac_symbol(mode.k, m, s);
            let wk = dot3(w, mode.k);
            let mut out: Spinor = std::array::from_fn(|a| -I * (h[a] + s[a] * wk));
            out[0] += dot3(q, mode.k) * charge_hat(&mode, &rho);
            *s = out;
        });
        let zc = zf.psi.components();
        let sc = self.psi_v.components();
        let pd = sum_modes::<3, _>(&self.grid, |mode| {
            let rh = charge_hat(&mode, &rho);
            if rh == 0.0 {
                return [0.0; 3];
            }
            let qk = dot3(q, mode.k);
            // conj(Ψ̂₀)(−ikᵢρ̂) + conj(−ikᵢψ̂_v₀)(−i(Q·k)ρ̂)
            let a = zc[0][mode.idx].conj() * (-I * rh);
            let b = sc[0][mode.idx].conj() * (qk * rh);
            std::array::from_fn(|i| (a * mode.k[i] + b * mode.k[i]).re)
        });
        let dv = self.grid.mode_volume();
        let bv = b_v(self.v);
        let qdot = std::array::from_fn(|i| dot3(bv[i], zf.p));
        Ok(PhaseState { psi: field, q: qdot, p: pd.map(|x| x * dv) })
    }
}

/// g_λ(y) = γe^{−κ|ỹ|−κ₁ỹ₁}/(4π|ỹ|), ỹ = (γy₁, y₂, y₃), κ² = γ²(λ² + μ²),
/// κ₁ = γ|v|λ: the kernel of the operator with symbol 1/(k² + m² + (i|v|k₁ + λ)²),
/// frame v = (|v|, 0, 0), principal branch Re κ > 0.
pub fn g_lambda(y: [f64; 3], lambda: C64, speed: f64, m: f64) -> Result<C64> {
    check_velocity([speed, 0.0, 0.0])?;
    if lambda.re < 0.0 {
        return Err(Error::invalid("g_lambda needs Re λ ≥ 0"));
    }
    let g = gamma([speed, 0.0, 0.0]);
    let yt = [g * y[0], y[1], y[2]];
    let r = dot3(yt, yt).sqrt();
    if r == 0.0 {
        return Err(Error::invalid("g_lambda is singular at y = 0"));
    }
    let mu = mu(speed, m);
    let mut kappa = (C64::new(g * g, 0.0) * (lambda * lambda + mu * mu)).sqrt();
    if kappa.re < 0.0 {
        kappa = -kappa;
    }
    let kappa1 = lambda * (g * speed);
    Ok((-(kappa * r) - kappa1 * yt[0]).exp() * (g / (4.0 * PI * r)))
}

/// Fourier symbol blocks (Ĝ¹¹, Ĝ¹²) of the Green operator (D̂ − λ)⁻¹ for the
/// real form (Ψ₁, Ψ₂); Ĝ²¹ = −Ĝ¹², Ĝ²² = Ĝ¹¹.
pub fn green_symbol(k: [f64; 3], lambda: C64, v: [f64; 3], m: f64) -> (Mat4, Mat4) {
    let vk = dot3(v, k);
    let s = I * vk + lambda;
    let d = C64::new(dot3(k, k) + m * m, 0.0) + s * s;
    let mut c = [[ZERO; 4]; 4];
    let mut b = [[ZERO; 4]; 4];
    for a in 0..4 {
        c[a][a] = -s;
    }
    // −iα₁k₁ − iα₃k₃, with α₁ = [[0,σ₁],[σ₁,0]], α₃ = [[0,σ₃],[σ₃,0]].
    let off = |c: &mut Mat4, r: usize, col: usize, z: C64| {
        c[r][col] += z;
        c[col][r] += z;
    };
    off(&mut c, 0, 3, -I * k[0]);
    off(&mut c, 1, 2, -I * k[0]);
    off(&mut c, 0, 2, -I * k[2]);
    off(&mut c, 1, 3, I * k[2]);
    // βm − α₂k₂, α₂ = [[0,σ₂],[σ₂,0]], σ₂ = [[0,−i],[i,0]].
    b[0][0] = C64::new(m, 0.0);
    b[1][1] = C64::new(m, 0.0);
    b[2][2] = C64::new(-m, 0.0);
    b[3][3] = C64::new(-m, 0.0);
    b[0][3] = I * k[1];
    b[1][2] = -I * k[1];
    b[2][1] = I * k[1];
    b[3][0] = -I * k[1];
    let g11 = c.map(|row| row.map(|z| z / d));
    let g12 = b.map(|row| row.map(|z| -z / d));
    (g11, g12)
}

/// λ-derivative of (Ĝ¹¹, Ĝ¹²) at λ = 0.
pub fn green_symbol_dlambda0(k: [f64; 3], v: [f64; 3], m: f64) -> (Mat4, Mat4) {
    let (g11, g12) = green_symbol(k, ZERO, v, m);
    let vk = dot3(v, k);
    let d0 = dot3(k, k) + m * m - vk * vk;
    let f = -2.0 * I * vk / d0;
    let d11 = std::array::from_fn(|r| {
        std::array::from_fn(|c| g11[r][c] * f - if r == c { C64::new(1.0 / d0, 0.0) } else { ZERO })
    });
    let d12 = g12.map(|row| row.map(|z| z * f));
    (d11, d12)
}

/// Where H is evaluated: at λ with Re λ > 0 (or on the imaginary axis inside
/// the gap |Im λ| < μ), or at the boundary value iω + 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectralPoint {
    Lambda(C64),
    Boundary(f64),
}

impl SpectralPoint {
    pub fn lambda(&self) -> C64 {
        match *self {
            SpectralPoint::Lambda(l) => l,
            SpectralPoint::Boundary(w) => C64::new(0.0, w),
        }
    }
}

/// Cut-aware engine for the diagonal of H: cylindrical coordinates around k₁,
/// the transverse integral in u = |k_⊥|² with the pole subtracted and its
/// logarithm taken on the side fixed by the +0 prescription.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutQuad {
    /// Radius of the k-ball integrated over.
    pub k_cut: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl CutQuad {
    pub fn for_width(sigma: f64) -> Self {
        CutQuad { k_cut: 8.0 / sigma, abs_tol: 1e-11, rel_tol: 1e-11, max_intervals: 400 }
    }
}

fn log_side(z: C64, side: f64) -> C64 {
    if z.im == 0.0 && z.re < 0.0 {
        C64::new((-z.re).ln(), PI * side)
    } else {
        z.ln()
    }
}

impl CutQuad {
    /// [∫₀^U ℬ(k₁²+u)/(u+a)du, ∫₀^U uℬ(k₁²+u)/(u+a)du], U = k_cut² − k₁².
    fn transverse(&self, k1: f64, a: C64, side: f64, rho: &ChargeDensity) -> [C64; 2] {
        let u_max = self.k_cut * self.k_cut - k1 * k1;
        if u_max <= 0.0 {
            return [ZERO; 2];
        }
        let g = |u: f64| -> [f64; 2] {
            let b = rho.wiener_b_k2(k1 * k1 + u);
            [b, u * b]
        };
        let p = (-a.re).clamp(0.0, u_max);
        let gp = g(p);
        let est = adaptive_gk(
            |u| {
                let gu = g(u);
                let den = C64::new(u, 0.0) + a;
                [(gu[0] - gp[0]) / den, (gu[1] - gp[1]) / den]
            },
            0.0,
            u_max,
            &[p],
            self.abs_tol * 1e-2,
            self.rel_tol * 1e-1,
            self.max_intervals,
        );
        let lg = log_side(C64::new(u_max, 0.0) + a, side) - log_side(a, side);
        [est.value[0] + lg * gp[0], est.value[1] + lg * gp[1]]
    }

    /// Diagonal of H at the given point, frame v = (speed, 0, 0).
    pub fn h_diag(&self, point: SpectralPoint, speed: f64, rho: &ChargeDensity) -> Estimate<[C64; 3]> {
        let m2 = rho.mass * rho.mass;
        let lambda = point.lambda();
        let boundary = matches!(point, SpectralPoint::Boundary(_));
        let om = lambda.im;
        // a(k₁) = k₁² + m² − (|v|k₁ − iλ)²; its real part vanishes where the
        // transverse pole enters u = 0.
        let a_of = |k1: f64| -> C64 {
            let t = C64::new(speed * k1, 0.0) - I * lambda;
            C64::new(k1 * k1 + m2, 0.0) - t * t
        };
        let mut bps = vec![0.0];
        let (qa, qb, qc) = (1.0 - speed * speed, -2.0 * speed * om, m2 - om * om + lambda.re * lambda.re);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            bps.push((-qb - sq) / (2.0 * qa));
            bps.push((-qb + sq) / (2.0 * qa));
        }
        let est = adaptive_gk(
            |k1| {
                let a = a_of(k1);
                let side = if boundary { (speed * k1 + om).signum() } else { a.im.signum() };
                let a = if boundary { C64::new(a.re, 0.0) } else { a };
                let t = self.transverse(k1, a, side, rho);
                [t[0] * (PI * k1 * k1), t[1] * (0.5 * PI)]
            },
            -self.k_cut,
            self.k_cut,
            &bps,
            self.abs_tol,
            self.rel_tol,
            self.max_intervals,
        );
        Estimate { value: [est.value[0], est.value[1], est.value[1]], error: est.error }
    }
}

/// H(λ)_{il} = ∫kᵢkₗℬ(k)/(k² + m² − (|v|k₁ − iλ)²)dk on the tensor trapezoid
/// rule; full 3×3 matrix, valid off the cut only.
pub fn matrix_h_tensor(lambda: C64, speed: f64, rho: &ChargeDensity, quad: &QuadSpec) -> Result<Estimate<CMat3>> {
    check_velocity([speed, 0.0, 0.0])?;
    let muv = mu(speed, rho.mass);
    if lambda.re <= 0.0 && lambda.im.abs() >= muv {
        return Err(Error::invalid(format!(
            "λ = {lambda} lies on the cut |ω| ≥ μ = {muv:.6}; use the boundary-value engine"
        )));
    }
    let m2 = rho.mass * rho.mass;
    let est = quad.integrate::<12, _>(|k| {
        let t = C64::new(speed * k[0], 0.0) - I * lambda;
        let den = C64::new(dot3(k, k) + m2, 0.0) - t * t;
        let f = rho.wiener_b_k2(dot3(k, k)) / den;
        let e = [k[0] * k[0], k[1] * k[1], k[2] * k[2], k[0] * k[1], k[0] * k[2], k[1] * k[2]];
        std::array::from_fn(|n| if n < 6 { (f * e[n]).re } else { (f * e[n - 6]).im })
    });
    let s = est.value;
    let c = |n: usize| C64::new(s[n], s[n + 6]);
    let h = [[c(0), c(3), c(4)], [c(3), c(1), c(5)], [c(4), c(5), c(2)]];
    Ok(Estimate { value: h, error: est.error })
}

/// L = H(0), full matrix on the tensor rule.
pub fn matrix_l(speed: f64, rho: &ChargeDensity, quad: &QuadSpec) -> Result<Estimate<[[f64; 3]; 3]>> {
    let h = matrix_h_tensor(ZERO, speed, rho, quad)?;
    Ok(Estimate { value: h.value.map(|r| r.map(|z| z.re)), error: h.error })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralMatrixSet {
    pub speed: f64,
    pub bv: [[f64; 3]; 3],
    pub l: [[f64; 3]; 3],
    pub mu: f64,
    pub l_error: f64,
}

/// Per-ω quantities of the determinant study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetSample {
    pub omega: f64,
    pub h_diag: [C64; 3],
    pub f_diag: [C64; 3],
    pub det_direct: C64,
    pub det_factorized: C64,
    pub h_error: f64,
}

/// Evaluation context for the spectral matrices at fixed |v|.
#[derive(Clone, Debug)]
pub struct SpectralContext {
    pub speed: f64,
    pub rho: ChargeDensity,
    pub tensor: QuadSpec,
    pub cut: CutQuad,
    l_diag: [f64; 3],
}

fn cmat6(m: &[[C64; 6]; 6]) -> Matrix6<C64> {
    Matrix6::from_fn(|i, j| m[i][j])
}

impl SpectralContext {
    pub fn new(speed: f64, rho: ChargeDensity, tensor: QuadSpec, cut: CutQuad) -> Result<Self> {
        check_velocity([speed, 0.0, 0.0])?;
        if speed < 0.0 {
            return Err(Error::invalid("speed is |v| and must be non-negative"));
        }
        rho.validate()?;
        tensor.validate()?;
        let l = cut.h_diag(SpectralPoint::Lambda(ZERO), speed, &rho);
        let l_diag = l.value.map(|z| z.re);
        Ok(SpectralContext { speed, rho, tensor, cut, l_diag })
    }

    pub fn with_defaults(speed: f64, rho: ChargeDensity) -> Result<Self> {
        Self::new(speed, rho, QuadSpec::for_width(rho.sigma), CutQuad::for_width(rho.sigma))
    }

    pub fn v(&self) -> [f64; 3] {
        [self.speed, 0.0, 0.0]
    }

    pub fn gamma(&self) -> f64 {
        gamma(self.v())
    }

    pub fn mu(&self) -> f64 {
        mu(self.speed, self.rho.mass)
    }

    /// Diagonal of L from the cut-aware engine (the one used for F and M).
    pub fn l_diag(&self) -> [f64; 3] {
        self.l_diag
    }

    pub fn matrices(&self) -> Result<SpectralMatrixSet> {
        let l = matrix_l(self.speed, &self.rho, &self.tensor)?;
        Ok(SpectralMatrixSet { speed: self.speed, bv: b_v(self.v()), l: l.value, mu: self.mu(), l_error: l.error })
    }

    pub fn h_diag(&self, point: SpectralPoint) -> Estimate<[C64; 3]> {
        self.cut.h_diag(point, self.speed, &self.rho)
    }

    /// F_jj(ω) = −L_jj + H_jj(iω + 0).
    pub fn f_diag(&self, omega: f64) -> [C64; 3] {
        let h = self.h_diag(SpectralPoint::Boundary(omega)).value;
        std::array::from_fn(|j| h[j] - self.l_diag[j])
    }

    /// M(λ) = [[λE, −B_v], [L − H(λ), λE]].
    pub fn matrix_m(&self, point: SpectralPoint) -> [[C64; 6]; 6] {
        let h = self.h_diag(point).value;
        self.assemble_m(point.lambda(), &h)
    }

    fn assemble_m(&self, lambda: C64, h: &[C64; 3]) -> [[C64; 6]; 6] {
        let bv = b_v(self.v());
        let mut m = [[ZERO; 6]; 6];
        for i in 0..3 {
            m[i][i] = lambda;
            m[i + 3][i + 3] = lambda;
            for j in 0..3 {
                m[i][j + 3] = C64::new(-bv[i][j], 0.0);
            }
            m[i + 3][i] = C64::new(self.l_diag[i], 0.0) - h[i];
        }
        m
    }

    /// det M(iω + 0) both ways: LU of the assembled matrix and
    /// −∏ⱼ(ω² + F_jj(ω)/γ^{aⱼ}), a₁ = 3, a₂ = a₃ = 1.
    pub fn det_sample(&self, omega: f64) -> DetSample {
        let h = self.h_diag(SpectralPoint::Boundary(omega));
        let m = self.assemble_m(C64::new(0.0, omega), &h.value);
        let det_direct = cmat6(&m).determinant();
        let f: [C64; 3] = std::array::from_fn(|j| h.value[j] - self.l_diag[j]);
        let det_factorized = det_m_factorized(omega, &f, self.gamma());
        DetSample { omega, h_diag: h.value, f_diag: f, det_direct, det_factorized, h_error: h.error }
    }

    /// F(0), F′(0) and F″(0) per component for |ω| < μ on the tensor rule, F″ by
    /// a Richardson-extrapolated second difference and by the closed-form
    /// integrand 2∫k_j²ℬ(k² + m² + 3(|v|k₁)²)/(k² + m² − (|v|k₁)²)³.
    pub fn f_checks(&self) -> Result<FChecks> {
        let h0 = self.mu() * 0.05;
        let f_at = |w: f64| -> Result<[f64; 3]> {
            let hm = matrix_h_tensor(C64::new(0.0, w), self.speed, &self.rho, &self.tensor)?.value;
            let l = matrix_h_tensor(ZERO, self.speed, &self.rho, &self.tensor)?.value;
            Ok(std::array::from_fn(|j| (hm[j][j] - l[j][j]).re))
        };
        let f0 = f_at(0.0)?;
        let (fp, fm) = (f_at(h0)?, f_at(-h0)?);
        let (fp2, fm2) = (f_at(0.5 * h0)?, f_at(-0.5 * h0)?);
        let d1: [f64; 3] = std::array::from_fn(|j| (fp[j] - fm[j]) / (2.0 * h0));
        let s_h: [f64; 3] = std::array::from_fn(|j| (fp[j] - 2.0 * f0[j] + fm[j]) / (h0 * h0));
        let s_h2: [f64; 3] = std::array::from_fn(|j| (fp2[j] - 2.0 * f0[j] + fm2[j]) / (0.25 * h0 * h0));
        let d2: [f64; 3] = std::array::from_fn(|j| (4.0 * s_h2[j] - s_h[j]) / 3.0);
        let m2 = self.rho.mass * self.rho.mass;
        let s = self.speed;
        let closed = self.tensor.integrate(|k| {
            let k2 = dot3(k, k);
            let d = k2 + m2 - s * s * k[0] * k[0];
            let w = 2.0 * self.rho.wiener_b_k2(k2) * (k2 + m2 + 3.0 * s * s * k[0] * k[0]) / (d * d * d);
            [k[0] * k[0] * w, k[1] * k[1] * w, k[2] * k[2] * w]
        });
        let scale = self.l_diag.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        Ok(FChecks { f0, f1: d1, f2_fd: d2, f2_closed: closed.value, closed_error: closed.error, scale, step: h0 })
    }

    /// Blocks of M⁻¹(iω + 0) scaled as 𝓜₁₁ = ωM₁₁, 𝓜₁₂ = ω²M₁₂, 𝓜₂₁ = M₂₁,
    /// 𝓜₂₂ = ωM₂₂, with the relation residuals.
    pub fn minv_blocks(&self, omega: f64) -> Result<MinvBlocks> {
        let sample = self.det_sample(omega);
        let g = self.gamma();
        if omega.abs() < 1e-6 {
            return Ok(minv_factorized(omega, &sample.f_diag, g, self.v(), true));
        }
        let h = sample.h_diag;
        let m = self.assemble_m(C64::new(0.0, omega), &h);
        let inv = cmat6(&m).try_inverse().ok_or_else(|| Error::numerical("M(iω) is singular"))?;
        let blk = |r0: usize, c0: usize, s: C64| -> CMat3 {
            std::array::from_fn(|i| std::array::from_fn(|j| inv[(r0 + i, c0 + j)] * s))
        };
        let w = C64::new(omega, 0.0);
        let mut out = MinvBlocks {
            omega,
            m11: blk(0, 0, w),
            m12: blk(0, 3, w * w),
            m21: blk(3, 0, C64::new(1.0, 0.0)),
            m22: blk(3, 3, w),
            rel_22_11: 0.0,
            rel_11_12: 0.0,
            factorized_gap: 0.0,
        };
        out.fill_relations(self.v());
        let fac = minv_factorized(omega, &sample.f_diag, g, self.v(), false);
        out.factorized_gap = [(&out.m11, &fac.m11), (&out.m12, &fac.m12), (&out.m21, &fac.m21), (&out.m22, &fac.m22)]
            .iter()
            .map(|(a, b)| max_diff3(a, b))
            .fold(0.0, f64::max);
        Ok(out)
    }

    /// f₁₁(0) = F″₁₁(0)/2 and the ω → 0 value −iγ³/(γ³ + f₁₁(0)) of 𝓜₁₁.
    pub fn m11_limit(&self) -> Result<(f64, C64)> {
        let fc = self.f_checks()?;
        let f11 = 0.5 * fc.f2_closed[0];
        let g3 = self.gamma().powi(3);
        Ok((f11, C64::new(0.0, -g3 / (g3 + f11))))
    }
}

/// −∏ⱼ(ω² + F_jj/γ^{aⱼ}).
pub fn det_m_factorized(omega: f64, f: &[C64; 3], g: f64) -> C64 {
    let pw = [g.powi(3), g, g];
    let mut p = C64::new(-1.0, 0.0);
    for j in 0..3 {
        p *= f[j] / pw[j] + omega * omega;
    }
    p
}

fn max_diff3(a: &CMat3, b: &CMat3) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            d = d.max((a[i][j] - b[i][j]).norm());
        }
    }
    d
}

/// Closed-form diagonal blocks with F_jj = ω²f_jj. With `at_zero` the entries
/// are read off at ω = 0 using f_jj supplied through `f`.
fn minv_factorized(omega: f64, f: &[C64; 3], g: f64, v: [f64; 3], at_zero: bool) -> MinvBlocks {
    let pw = [g.powi(3), g, g];
    let mut m11 = [[ZERO; 3]; 3];
    let mut m12 = [[ZERO; 3]; 3];
    let mut m21 = [[ZERO; 3]; 3];
    for j in 0..3 {
        let fj = if at_zero { f[j] } else { f[j] / (omega * omega) };
        let den = fj + pw[j];
        m11[j][j] = -I * pw[j] / den;
        m12[j][j] = -1.0 / den;
        m21[j][j] = -(fj * pw[j]) / den;
    }
    let mut out = MinvBlocks {
        omega,
        m11,
        m12,
        m21,
        m22: m11,
        rel_22_11: 0.0,
        rel_11_12: 0.0,
        factorized_gap: 0.0,
    };
    out.fill_relations(v);
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinvBlocks {
    pub omega: f64,
    pub m11: CMat3,
    pub m12: CMat3,
    pub m21: CMat3,
    pub m22: CMat3,
    /// max |𝓜₂₂ − 𝓜₁₁|.
    pub rel_22_11: f64,
    /// max |𝓜₁₁ − i𝓜₁₂B_v⁻¹|.
    pub rel_11_12: f64,
    /// Largest deviation from the factorized closed forms.
    pub factorized_gap: f64,
}

impl MinvBlocks {
    fn fill_relations(&mut self, v: [f64; 3]) {
        let binv = b_v_inv(v);
        self.rel_22_11 = max_diff3(&self.m22, &self.m11);
        let rhs: CMat3 = std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..3).map(|l| I * self.m12[i][l] * binv[l][j]).sum())
        });
        self.rel_11_12 = max_diff3(&self.m11, &rhs);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FChecks {
    pub f0: [f64; 3],
    pub f1: [f64; 3],
    pub f2_fd: [f64; 3],
    pub f2_closed: [f64; 3],
    pub closed_error: f64,
    /// max |L_jj|, the natural scale for F.
    pub scale: f64,
    pub step: f64,
}

/// Extrapolates H(ε + iω) over ε ∈ {1e−2, 1e−3, 1e−4} linearly to ε = 0.
pub fn h_extrapolated(ctx: &SpectralContext, omega: f64) -> [C64; 3] {
    let eps = [1e-2, 1e-3, 1e-4];
    let vals: Vec<[C64; 3]> =
        eps.iter().map(|&e| ctx.h_diag(SpectralPoint::Lambda(C64::new(e, omega))).value).collect();
    // Least-squares line through the three points, evaluated at 0.
    let n = eps.len() as f64;
    let sx: f64 = eps.iter().sum();
    let sxx: f64 = eps.iter().map(|x| x * x).sum();
    std::array::from_fn(|j| {
        let sy: C64 = vals.iter().map(|v| v[j]).sum();
        let sxy: C64 = eps.iter().zip(&vals).map(|(x, v)| v[j] * *x).sum();
        let slope = (sxy * n - sy * sx) / (n * sxx - sx * sx);
        (sy - slope * sx) / n
    })
}

/// Φ(λ)ᵢ = ⟨Ψ̃₁(Ψ₀), ∂ᵢρ₁⟩ with Ψ̃₁(Ψ₀) = −Ĝ¹¹Ψ̂₀₁ − Ĝ¹²Ψ̂₀₂, and Φ′(0) from the
/// closed-form λ-derivative of Ĝ. Ψ₀ = Ψ₀₁ + iΨ₀₂ in any representation.
pub fn phi_lambda(psi0: &SpinorField, lambda: C64, v: [f64; 3], rho: &ChargeDensity) -> Result<[C64; 3]> {
    phi_generic(psi0, v, rho, |k| green_symbol(k, lambda, v, rho.mass))
}

pub fn phi_prime_zero(psi0: &SpinorField, v: [f64; 3], rho: &ChargeDensity) -> Result<[C64; 3]> {
    phi_generic(psi0, v, rho, |k| green_symbol_dlambda0(k, v, rho.mass))
}

fn phi_generic<F>(psi0: &SpinorField, v: [f64; 3], rho: &ChargeDensity, kernel: F) -> Result<[C64; 3]>
where
    F: Fn([f64; 3]) -> (Mat4, Mat4) + Sync,
{
    check_velocity(v)?;
    let state = PhaseState { psi: psi0.clone(), q: [0.0; 3], p: [0.0; 3] };
    let (re, im) = state.real_parts();
    let (a, b) = (re.to_fourier(), im.to_fourier());
    let grid = *psi0.grid();
    let ac = a.components();
    let bc = b.components();
    let s = sum_modes::<6, _>(&grid, |mode| {
        let rh = charge_hat(&mode, rho);
        if rh == 0.0 {
            return [0.0; 6];
        }
        let (g11, g12) = kernel(mode.k);
        let mut row = ZERO;
        for c in 0..4 {
            row += g11[0][c] * ac[c][mode.idx] + g12[0][c] * bc[c][mode.idx];
        }
        // −(Ĝ¹¹Ψ̂₀₁ + Ĝ¹²Ψ̂₀₂)₀ · conj(−ikᵢρ̂₁)
        let z = -row * (I * rh);
        [z.re * mode.k[0], z.im * mode.k[0], z.re * mode.k[1], z.im * mode.k[1], z.re * mode.k[2], z.im * mode.k[2]]
    });
    let dv = grid.mode_volume();
    Ok(std::array::from_fn(|i| C64::new(s[2 * i], s[2 * i + 1]) * dv))
}

/// Residuals (P₀ + Φ(0), B_v⁻¹Q₀ + Φ′(0)) for a state Z₀ in the moving frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthogonalityResidual {
    pub first: [f64; 3],
    pub second: [f64; 3],
    /// Largest imaginary part met in Φ(0), Φ′(0) (zero for exact arithmetic).
    pub imag: f64,
}

impl OrthogonalityResidual {
    pub fn max_abs(&self) -> f64 {
        self.first.iter().chain(&self.second).fold(0.0, |a, x| a.max(x.abs()))
    }
}

pub fn orthogonality_check(z0: &PhaseState, v: [f64; 3], rho: &ChargeDensity) -> Result<OrthogonalityResidual> {
    let phi0 = phi_lambda(&z0.psi, ZERO, v, rho)?;
    let phi1 = phi_prime_zero(&z0.psi, v, rho)?;
    let binv = b_v_inv(v);
    let first = std::array::from_fn(|j| z0.p[j] + phi0[j].re);
    let second = std::array::from_fn(|j| dot3(binv[j], z0.q) + phi1[j].re);
    let imag = phi0.iter().chain(&phi1).fold(0.0f64, |a, z| a.max(z.im.abs()));
    Ok(OrthogonalityResidual { first, second, imag })
}

/// Least-squares slope of log ‖M⁻¹(iω) + iI/ω‖ against log ω.
pub fn large_omega_exponent(ctx: &SpectralContext, omegas: &[f64]) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &w in omegas {
        let m = ctx.matrix_m(SpectralPoint::Boundary(w));
        let inv = cmat6(&m).try_inverse().ok_or_else(|| Error::numerical("M(iω) is singular"))?;
        let d0 = Matrix6::<C64>::identity() * C64::new(0.0, -1.0 / w);
        let r = (inv - d0).norm();
        xs.push(w.ln());
        ys.push(r.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// L and H as 3×3 matrices for a general velocity: frame values rotated back.
pub fn matrix_l_general(v: [f64; 3], rho: &ChargeDensity, quad: &QuadSpec) -> Result<[[f64; 3]; 3]> {
    let frame = Frame::new(v)?;
    let l = matrix_l(frame.speed, rho, quad)?.value;
    let lc: CMat3 = l.map(|r| r.map(|x| C64::new(x, 0.0)));
    Ok(frame.matrix_to_lab(&lc).map(|r| r.map(|z| z.re)))
}

/// ‖H(λ)‖ / ‖L‖ in the max-entry norm (decay as Re λ → ∞).
pub fn h_to_l_ratio(lambda: C64, speed: f64, rho: &ChargeDensity, quad: &QuadSpec) -> Result<f64> {
    let h = matrix_h_tensor(lambda, speed, rho, quad)?.value;
    let l = matrix_l(speed, rho, quad)?.value;
    let hn = h.iter().flatten().fold(0.0f64, |a, z| a.max(z.norm()));
    let ln = l.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(hn / ln)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinor_algebra::{build_dirac_matrices, mat_vec};

    #[test]
    fn bv_example() {
        let b = b_v([0.6, 0.0, 0.0]);
        assert!((b[0][0] - 0.512).abs() < 1e-15);
        assert!((b[1][1] - 0.8).abs() < 1e-15);
        assert!((b[2][2] - 0.8).abs() < 1e-15);
        assert!((mu(0.6, 1.0) - 0.8).abs() < 1e-15);
        let bi = b_v_inv([0.3, -0.2, 0.5]);
        let bb = b_v([0.3, -0.2, 0.5]);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|l| bb[i][l] * bi[l][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn green_symbol_inverts_real_form() {
        // D̂ − λ = [[a, b], [−b, a]], a = iα₁k₁ + iα₃k₃ − iv·k − λ, b = βm − α₂k₂.
        let d = build_dirac_matrices();
        let k = [0.4, -0.7, 1.1];
        let v = [0.3, 0.2, -0.1];
        let m = 1.2;
        let lambda = C64::new(0.3, 0.8);
        let (g11, g12) = green_symbol(k, lambda, v, m);
        let vk = dot3(v, k);
        let x: Spinor = [C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(1.0, 0.0), C64::new(0.0, -0.7)];
        let y: Spinor = [C64::new(0.1, 0.0), C64::new(0.4, 0.2), C64::new(-0.3, 0.3), C64::new(0.6, 0.0)];
        let apply_a = |s: &Spinor| -> Spinor {
            let a1 = mat_vec(&d.alpha1, s);
            let a3 = mat_vec(&d.alpha3, s);
            std::array::from_fn(|i| I * (a1[i] * k[0] + a3[i] * k[2]) - s[i] * (I * vk + lambda))
        };
        let apply_b = |s: &Spinor| -> Spinor {
            let b = mat_vec(&d.beta, s);
            let a2 = mat_vec(&d.alpha2, s);
            std::array::from_fn(|i| b[i] * m - a2[i] * k[1])
        };
        // (f₁, f₂) = (D̂ − λ)(x, y)
        let (ax, by, bx, ay) = (apply_a(&x), apply_b(&y), apply_b(&x), apply_a(&y));
        let f1: Spinor = std::array::from_fn(|i| ax[i] + by[i]);
        let f2: Spinor = std::array::from_fn(|i| -bx[i] + ay[i]);
        let mv = |m: &Mat4, s: &Spinor| mat_vec(m, s);
        let (p, q, r, s) = (mv(&g11, &f1), mv(&g12, &f2), mv(&g12, &f1), mv(&g11, &f2));
        for i in 0..4 {
            assert!((p[i] + q[i] - x[i]).norm() < 1e-13);
            assert!((-r[i] + s[i] - y[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn green_derivative_matches_difference() {
        let k = [0.5, 0.2, -0.9];
        let v = [0.4, 0.0, 0.1];
        let h = 1e-6;
        let (a11, a12) = green_symbol(k, C64::new(h, 0.0), v, 1.0);
        let (b11, b12) = green_symbol(k, C64::new(-h, 0.0), v, 1.0);
        let (d11, d12) = green_symbol_dlambda0(k, v, 1.0);
        for r in 0..4 {
            for c in 0..4 {
                assert!(((a11[r][c] - b11[r][c]) / (2.0 * h) - d11[r][c]).norm() < 1e-8);
                assert!(((a12[r][c] - b12[r][c]) / (2.0 * h) - d12[r][c]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn g_lambda_at_rest() {
        let y = [0.3, -0.4, 1.2];
        let lam = 0.7;
        let r = dot3(y, y).sqrt();
        let want = (-(lam * lam + 1.0f64).sqrt() * r).exp() / (4.0 * PI * r);
        let got = g_lambda(y, C64::new(lam, 0.0), 0.0, 1.0).unwrap();
        assert!((got - want).norm() < 1e-15);
        assert!(g_lambda([0.0; 3], C64::new(1.0, 0.0), 0.2, 1.0).is_err());
    }

    #[test]
    fn frame_rotation() {
        let v = [0.2, -0.3, 0.4];
        let f = Frame::new(v).unwrap();
        let w = f.to_frame(v);
        assert!((w[0] - dot3(v, v).sqrt()).abs() < 1e-15);
        assert!(w[1].abs() < 1e-15 && w[2].abs() < 1e-15);
    }

    #[test]
    fn cut_engine_isotropic_at_rest() {
        let rho = ChargeDensity::default();
        let cut = CutQuad::for_width(1.0);
        let h = cut.h_diag(SpectralPoint::Lambda(ZERO), 0.0, &rho);
        assert!((h.value[0] - h.value[1]).norm() < 1e-9 * h.value[0].norm(), "{:?}", h.value);
    }

    #[test]
    fn cut_engine_matches_tensor_off_cut() {
        let rho = ChargeDensity::default();
        let cut = CutQuad::for_width(1.0);
        let quad = QuadSpec { k_max: 8.0, nodes: 160, abs_tol: 1e-6 };
        for (lam, s) in [(C64::new(0.0, 0.3), 0.6), (C64::new(0.4, 1.3), 0.3), (C64::new(0.0, 0.0), 0.8)] {
            let a = cut.h_diag(SpectralPoint::Lambda(lam), s, &rho).value;
            let b = matrix_h_tensor(lam, s, &rho, &quad).unwrap().value;
            for j in 0..3 {
                assert!((a[j] - b[j][j]).norm() < 1e-8, "{lam} {s} {j}: {} vs {}", a[j], b[j][j]);
            }
        }
    }
}
