use diracsol::field_grid::GridSpec;
use diracsol::soliton_manifold::{soliton_by_kernel, soliton_field};
use diracsol::spinor_algebra::ChargeDensity;

/// The Fourier-built soliton against direct quadrature of its position-space
/// kernel representation at a few grid points.
#[test]
fn fourier_soliton_matches_kernel_quadrature() {
    let rho = ChargeDensity::default();
    let grid = GridSpec::new(24.0, 64).unwrap();
    for v1 in [0.0, 0.5] {
        let psi = soliton_field([v1, 0.0, 0.0], &rho, grid).unwrap().to_position();
        let scale = (0..grid.len()).map(|i| psi.at(i).iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
        for (i, j, k) in [(32, 32, 32), (35, 30, 33), (28, 34, 36), (40, 32, 29)] {
            let idx = grid.index(i, j, k);
            let want = soliton_by_kernel(grid.point(idx), v1, &rho, 24).unwrap();
            let got = psi.at(idx);
            for a in 0..4 {
                let err = (got[a] - want[a]).norm() / scale;
                assert!(err < 1e-6, "v = {v1}, point {:?}, component {a}: {} vs {}", grid.point(idx), got[a], want[a]);
            }
        }
    }
}
