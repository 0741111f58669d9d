//! Shared k-space quadrature: a tensor-product trapezoid rule on a cube and an
//! adaptive Gauss–Kronrod rule for one-dimensional complex integrands.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A value together with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

/// Tensor-product trapezoid rule on [−k_max, k_max]³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub k_max: f64,
    pub nodes: usize,
    /// Absolute tolerance the error estimate is compared against.
    pub abs_tol: f64,
}

impl QuadSpec {
    /// k_max = 8/σ with 96 nodes per axis.
    pub fn for_width(sigma: f64) -> Self {
        QuadSpec { k_max: 8.0 / sigma, nodes: 96, abs_tol: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_max > 0.0 && self.k_max.is_finite()) || self.nodes < 8 {
            return Err(Error::invalid("quadrature needs k_max > 0 and at least 8 nodes"));
        }
        Ok(())
    }

    fn axis(&self, nodes: usize) -> (Vec<f64>, Vec<f64>) {
        let h = 2.0 * self.k_max / (nodes - 1) as f64;
        let x: Vec<f64> = (0..nodes).map(|i| -self.k_max + h * i as f64).collect();
        let mut w = vec![h; nodes];
        w[0] *= 0.5;
        w[nodes - 1] *= 0.5;
        (x, w)
    }

    fn sum_with<const K: usize, F>(&self, nodes: usize, f: &F) -> [f64; K]
    where
        F: Fn([f64; 3]) -> [f64; K] + Sync,
    {
        let (x, w) = self.axis(nodes);
        let parts: Vec<[f64; K]> = (0..nodes)
            .into_par_iter()
            .map(|i| {
                let mut acc = [0.0; K];
                for j in 0..nodes {
                    for l in 0..nodes {
                        let wt = w[i] * w[j] * w[l];
                        let v = f([x[i], x[j], x[l]]);
                        for a in 0..K {
                            acc[a] += wt * v[a];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = [0.0; K];
        for p in parts {
            for a in 0..K {
                total[a] += p[a];
            }
        }
        total
    }

    /// Integrates a vector-valued function; the error estimate is the largest
    /// componentwise difference to the rule with three quarters of the nodes.
    pub fn integrate<const K: usize, F>(&self, f: F) -> Estimate<[f64; K]>
    where
        F: Fn([f64; 3]) -> [f64; K] + Sync,
    {
        let fine = self.sum_with(self.nodes, &f);
        let coarse = self.sum_with(3 * self.nodes / 4, &f);
        let error = (0..K).map(|a| (fine[a] - coarse[a]).abs()).fold(0.0, f64::max);
        Estimate { value: fine, error }
    }

    /// As `integrate`, without the coarse companion rule.
    pub fn integrate_fast<const K: usize, F>(&self, f: F) -> [f64; K]
    where
        F: Fn([f64; 3]) -> [f64; K] + Sync,
    {
        self.sum_with(self.nodes, &f)
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<const K: usize, F>(f: &mut F, a: f64, b: f64) -> ([C64; K], f64)
where
    F: FnMut(f64) -> [C64; K],
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc.map(|z| z * WGK[7]);
    let mut gauss = fc.map(|z| z * WG[3]);
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for q in 0..K {
            let s = f1[q] + f2[q];
            kron[q] += s * WGK[j];
            if j % 2 == 1 {
                gauss[q] += s * WG[j / 2];
            }
        }
    }
    let mut err: f64 = 0.0;
    for q in 0..K {
        kron[q] *= h;
        gauss[q] *= h;
        err = err.max((kron[q] - gauss[q]).norm());
    }
    (kron, err)
}

/// Adaptive Gauss–Kronrod (7/15) integration over [a, b] with optional interior
/// breakpoints. Subdivides the worst interval until the summed error estimate
/// meets max(abs_tol, rel_tol·|I|) or `max_intervals` is reached.
pub fn adaptive_gk<const K: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Estimate<[C64; K]>
where
    F: FnMut(f64) -> [C64; K],
{
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.extend(inner);
    cuts.push(b);
    cuts.dedup();
    let mut intervals: Vec<(f64, f64, [C64; K], f64)> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let mut total = [C64::new(0.0, 0.0); K];
        let mut err = 0.0;
        for iv in &intervals {
            for q in 0..K {
                total[q] += iv.2[q];
            }
            err += iv.3;
        }
        let scale = total.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err <= abs_tol.max(rel_tol * scale) || intervals.len() >= max_intervals {
            return Estimate { value: total, error: err };
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Estimate { value: total, error: err };
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_gaussian_moment() {
        let q = QuadSpec { k_max: 8.0, nodes: 64, abs_tol: 1e-8 };
        let r = q.integrate(|k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            [(-k2).exp(), k[0] * k[0] * (-k2).exp()]
        });
        let pi32 = std::f64::consts::PI.powf(1.5);
        assert!((r.value[0] - pi32).abs() < 1e-12);
        assert!((r.value[1] - 0.5 * pi32).abs() < 1e-12);
        assert!(r.error < 1e-8);
    }

    #[test]
    fn adaptive_handles_log_singularity() {
        // ∫₀¹ ln x dx = −1, with an interior breakpoint.
        let r = adaptive_gk(|x| [C64::new(x.ln(), 0.0)], 0.0, 1.0, &[0.5], 1e-12, 1e-12, 200);
        assert!((r.value[0].re + 1.0).abs() < 1e-11);
    }
}
