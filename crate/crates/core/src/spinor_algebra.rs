//! Dirac matrices in the standard representation and the Gaussian charge model.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat4 = [[C64; 4]; 4];
pub type Spinor = [C64; 4];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// α₁, α₂, α₃ and β = α₀, each Hermitian with {αⱼ, αₖ} = 2δⱼₖ.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracMatrices {
    pub alpha1: Mat4,
    pub alpha2: Mat4,
    pub alpha3: Mat4,
    pub beta: Mat4,
}

fn block_offdiag(s: [[C64; 2]; 2]) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    for r in 0..2 {
        for c in 0..2 {
            m[r][c + 2] = s[r][c];
            m[r + 2][c] = s[r][c];
        }
    }
    m
}

pub fn build_dirac_matrices() -> DiracMatrices {
    let sigma1 = [[ZERO, ONE], [ONE, ZERO]];
    let sigma2 = [[ZERO, -I], [I, ZERO]];
    let sigma3 = [[ONE, ZERO], [ZERO, -ONE]];
    let mut beta = [[ZERO; 4]; 4];
    beta[0][0] = ONE;
    beta[1][1] = ONE;
    beta[2][2] = -ONE;
    beta[3][3] = -ONE;
    DiracMatrices {
        alpha1: block_offdiag(sigma1),
        alpha2: block_offdiag(sigma2),
        alpha3: block_offdiag(sigma3),
        beta,
    }
}

impl DiracMatrices {
    /// The four matrices ordered as (β, α₁, α₂, α₃).
    pub fn all(&self) -> [&Mat4; 4] {
        [&self.beta, &self.alpha1, &self.alpha2, &self.alpha3]
    }

    /// Largest entry of {αⱼ, αₖ} − 2δⱼₖI over all 16 ordered pairs.
    pub fn anticommutator_defect(&self) -> f64 {
        let all = self.all();
        let mut worst: f64 = 0.0;
        for (j, a) in all.iter().enumerate() {
            for (k, b) in all.iter().enumerate() {
                let s = mat_add(&mat_mul(a, b), &mat_mul(b, a));
                let target = if j == k { 2.0 } else { 0.0 };
                for r in 0..4 {
                    for c in 0..4 {
                        let t = if r == c { target } else { 0.0 };
                        worst = worst.max((s[r][c] - t).norm());
                    }
                }
            }
        }
        worst
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in self.all() {
            for r in 0..4 {
                for c in 0..4 {
                    worst = worst.max((m[r][c] - m[c][r].conj()).norm());
                }
            }
        }
        worst
    }
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = (0..4).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn mat_add(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[r][c] + b[r][c];
        }
    }
    out
}

pub fn mat_vec(a: &Mat4, x: &Spinor) -> Spinor {
    let mut out = [ZERO; 4];
    for r in 0..4 {
        out[r] = (0..4).map(|k| a[r][k] * x[k]).sum();
    }
    out
}

/// Returns (βψ·α₁ψ, βψ·α₃ψ, α̃₂ψ·ψ) for a real spinor, with α̃₂ = −iα₂ the
/// real antisymmetric companion of α₂. All three vanish identically.
pub fn real_orthogonality(psi: [f64; 4]) -> [f64; 3] {
    let d = build_dirac_matrices();
    let x: Spinor = psi.map(|a| C64::new(a, 0.0));
    let dot = |u: &Spinor, w: &Spinor| -> C64 { (0..4).map(|i| u[i] * w[i]).sum() };
    let bx = mat_vec(&d.beta, &x);
    let r1 = dot(&bx, &mat_vec(&d.alpha1, &x));
    let r3 = dot(&bx, &mat_vec(&d.alpha3, &x));
    let r2 = dot(&mat_vec(&d.alpha2, &x), &x) * (-I);
    [r1.re, r3.re, r2.re]
}

/// Gaussian charge ρ(x) = (ρ₁(x), 0, 0, 0), ρ₁(x) = A·exp(−|x|²/2σ²), coupled to
/// a Dirac field of mass m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeDensity {
    pub amplitude: f64,
    pub sigma: f64,
    pub mass: f64,
}

impl Default for ChargeDensity {
    fn default() -> Self {
        ChargeDensity { amplitude: 1.0, sigma: 1.0, mass: 1.0 }
    }
}

impl ChargeDensity {
    pub fn new(amplitude: f64, sigma: f64, mass: f64) -> Result<Self> {
        let rho = ChargeDensity { amplitude, sigma, mass };
        rho.validate()?;
        Ok(rho)
    }

    pub fn validate(&self) -> Result<()> {
        // A = 0 is allowed: it decouples field and particle.
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("rho.amplitude must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("rho.sigma must be positive"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid("rho.mass must be positive"));
        }
        Ok(())
    }

    pub fn rho1(&self, x: [f64; 3]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        self.amplitude * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// ∂ⱼρ₁ at x.
    pub fn grad_rho1(&self, x: [f64; 3]) -> [f64; 3] {
        let s2 = self.sigma * self.sigma;
        let r = self.rho1(x);
        [-x[0] / s2 * r, -x[1] / s2 * r, -x[2] / s2 * r]
    }

    /// ρ̂₁(k) = (2π)^{-3/2}∫e^{ik·x}ρ₁(x)dx = Aσ³exp(−σ²|k|²/2), a function of |k|².
    pub fn rho1_hat_k2(&self, k2: f64) -> f64 {
        self.amplitude * self.sigma.powi(3) * (-0.5 * self.sigma * self.sigma * k2).exp()
    }

    pub fn rho1_hat(&self, k: [f64; 3]) -> f64 {
        self.rho1_hat_k2(k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
    }

    /// ℬ as a function of |k|².
    pub fn wiener_b_k2(&self, k2: f64) -> f64 {
        let r = self.rho1_hat_k2(k2);
        self.mass * r * r
    }

    /// ∫|ρ|²dx = A²π^{3/2}σ³.
    pub fn l2_norm(&self) -> f64 {
        (self.amplitude * self.amplitude * std::f64::consts::PI.powf(1.5) * self.sigma.powi(3)).sqrt()
    }
}

/// ℬ(k) = m·βρ̂(k)·ρ̂(k) = m·ρ̂₁(k)² for the single-component model.
pub fn wiener_b(k: [f64; 3], rho: &ChargeDensity) -> f64 {
    rho.wiener_b_k2(k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_is_standard() {
        let d = build_dirac_matrices();
        let diag: Vec<f64> = (0..4).map(|i| d.beta[i][i].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(d.anticommutator_defect(), 0.0);
        assert_eq!(d.hermiticity_defect(), 0.0);
    }

    #[test]
    fn alpha1_squares_to_identity() {
        let d = build_dirac_matrices();
        let sq = mat_mul(&d.alpha1, &d.alpha1);
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { ONE } else { ZERO };
                assert_eq!(sq[r][c], want);
            }
        }
        let ac = mat_add(&mat_mul(&d.alpha1, &d.alpha2), &mat_mul(&d.alpha2, &d.alpha1));
        assert!(ac.iter().flatten().all(|z| *z == ZERO));
    }

    #[test]
    fn orthogonality_examples() {
        assert_eq!(real_orthogonality([1.0, 0.0, 0.0, 0.0]), [0.0; 3]);
        assert_eq!(real_orthogonality([1.0, 1.0, 1.0, 1.0]), [0.0; 3]);
    }

    #[test]
    fn rho_hat_matches_direct_quadrature() {
        // Independent oracle: separable Riemann sum of the defining integral.
        let rho = ChargeDensity::new(1.3, 0.8, 1.0).unwrap();
        let k = [0.7, -0.4, 1.1];
        let h = 0.05;
        let n = 400;
        let mut prod = C64::new(1.0, 0.0);
        for kj in k {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                let x = (i as f64 - n as f64 / 2.0) * h;
                s += C64::new(0.0, kj * x).exp() * (-x * x / (2.0 * rho.sigma * rho.sigma)).exp();
            }
            prod *= s * h / (2.0 * std::f64::consts::PI).sqrt();
        }
        let want = prod * rho.amplitude;
        assert!((want.re - rho.rho1_hat(k)).abs() < 1e-12);
        assert!(want.im.abs() < 1e-12);
    }

    #[test]
    fn wiener_at_origin() {
        let rho = ChargeDensity::new(2.0, 1.0, 1.5).unwrap();
        assert!((wiener_b([0.0; 3], &rho) - 1.5 * 4.0).abs() < 1e-14);
        assert_eq!(wiener_b([0.3, 0.1, -2.0], &rho), wiener_b([-0.3, -0.1, 2.0], &rho));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ChargeDensity::new(1.0, 0.0, 1.0).is_err());
        assert!(ChargeDensity::new(1.0, 1.0, -1.0).is_err());
    }
}
