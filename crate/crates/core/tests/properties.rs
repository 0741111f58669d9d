use num_complex::Complex64 as C64;
use proptest::prelude::*;

use diracsol::experiments::fit_power_law;
use diracsol::field_grid::{dirac_symbol, free_propagate, GridSpec};
use diracsol::spinor_algebra::real_orthogonality;
use diracsol::symplectic_geometry::{omega, PhaseState};

fn coord() -> impl Strategy<Value = f64> {
    -1.0f64..1.0
}

fn spinor() -> impl Strategy<Value = [C64; 4]> {
    prop::array::uniform4((coord(), coord()).prop_map(|(a, b)| C64::new(a, b)))
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(coord())
}

fn state(grid: GridSpec) -> impl Strategy<Value = PhaseState> {
    (spinor(), vec3(), vec3(), vec3(), vec3(), 0.8f64..2.0).prop_map(move |(a, c, k0, q, p, w)| {
        PhaseState::gaussian_bump(grid, c, w, k0, a, q, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_spinors_are_orthogonal(psi in prop::array::uniform4(-10.0f64..10.0)) {
        let n2: f64 = psi.iter().map(|x| x * x).sum();
        for r in real_orthogonality(psi) {
            prop_assert!(r.abs() <= 1e-15 * n2.max(1.0));
        }
    }

    /// (−α·k + βm)² = (k² + m²)·1 follows from the anticommutation relations.
    #[test]
    fn symbol_squares_to_dispersion(k in prop::array::uniform3(-20.0f64..20.0), m in 0.1f64..3.0, s in spinor()) {
        let twice = dirac_symbol(k, m, &dirac_symbol(k, m, &s));
        let w2 = k.iter().map(|x| x * x).sum::<f64>() + m * m;
        for i in 0..4 {
            prop_assert!((twice[i] - s[i] * w2).norm() <= 1e-13 * w2);
        }
    }

    #[test]
    fn free_flow_is_reversible(y in state(GridSpec::new(10.0, 8).unwrap()), t in -20.0f64..20.0) {
        let psi = y.psi.to_fourier();
        let back = free_propagate(&free_propagate(&psi, t, 1.0), -t, 1.0);
        prop_assert!(back.distance(&psi).unwrap() <= 1e-11 * psi.l2_norm().max(1.0));
    }

    #[test]
    fn omega_is_antisymmetric(a in state(GridSpec::new(10.0, 8).unwrap()), b in state(GridSpec::new(10.0, 8).unwrap())) {
        let ab = omega(&a, &b).unwrap();
        let ba = omega(&b, &a).unwrap();
        prop_assert!((ab + ba).abs() <= 1e-12 * ab.abs().max(1.0));
        prop_assert!(omega(&a, &a).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn fit_recovers_power_and_ignores_scale(p in -3.0f64..1.0, c in 1e-3f64..1e3, t0 in 0.5f64..5.0) {
        let series: Vec<(f64, f64)> = (0..40).map(|i| {
            let t = t0 * (1.0 + 0.1 * i as f64);
            (t, c * t.powf(p))
        }).collect();
        let window = (series[0].0, series[39].0);
        let fit = fit_power_law(&series, window).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
        prop_assert!(fit.rms_residual < 1e-10);
        let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, y)| (t, 7.0 * y)).collect();
        prop_assert!((fit_power_law(&scaled, window).unwrap().exponent - fit.exponent).abs() < 1e-10);
    }
}
