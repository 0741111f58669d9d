use std::ptr;

use diracsol_ffi::*;

const RHO: DsCharge = DsCharge { amplitude: 1.0, sigma: 1.0, mass: 1.0 };

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { ds_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn moving_soliton_round_trip() {
    let b = [0.0; 3];
    let v = [0.3, 0.0, 0.0];
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(ds_simulation_new_soliton(16.0, 16, RHO, b.as_ptr(), v.as_ptr(), &mut sim), DsStatus::Ok);
        let mut h0 = 0.0;
        assert_eq!(ds_simulation_hamiltonian(sim, &mut h0), DsStatus::Ok);
        assert_eq!(ds_simulation_step(sim, 0.02, 25), DsStatus::Ok);
        let (mut t, mut q, mut p) = (0.0, [0.0; 3], [0.0; 3]);
        assert_eq!(ds_simulation_particle(sim, &mut t, q.as_mut_ptr(), p.as_mut_ptr()), DsStatus::Ok);
        assert!((t - 0.5).abs() < 1e-12);
        assert!((q[0] - 0.15).abs() < 1e-6, "{q:?}");
        let mut h1 = 0.0;
        ds_simulation_hamiltonian(sim, &mut h1);
        assert!(((h1 - h0) / h0).abs() < 1e-8);
        let (mut sigma, mut zn) = ([0.0; 6], 0.0);
        assert_eq!(ds_simulation_project(sim, 3.0, sigma.as_mut_ptr(), &mut zn), DsStatus::Ok);
        assert!((sigma[3] - 0.3).abs() < 1e-6 && zn < 1e-3, "{sigma:?} {zn}");
        ds_simulation_free(sim);
    }
}

#[test]
fn errors_are_reported() {
    let b = [0.0; 3];
    let fast = [1.2, 0.0, 0.0];
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(ds_simulation_new_soliton(16.0, 16, RHO, b.as_ptr(), fast.as_ptr(), &mut sim), DsStatus::Invalid);
        assert!(last_error().contains("|v|"));
        assert!(sim.is_null());
        assert_eq!(ds_simulation_new_soliton(16.0, 15, RHO, b.as_ptr(), b.as_ptr(), &mut sim), DsStatus::Invalid);
        assert_eq!(ds_simulation_new_soliton(16.0, 16, RHO, ptr::null(), b.as_ptr(), &mut sim), DsStatus::NullPointer);
        assert_eq!(ds_simulation_step(ptr::null_mut(), 0.1, 1), DsStatus::NullPointer);
        let bad = DsCharge { sigma: -1.0, ..RHO };
        let mut sp = ptr::null_mut();
        assert_eq!(ds_spectral_new(0.5, bad, &mut sp), DsStatus::Invalid);
        ds_simulation_free(ptr::null_mut());
        ds_spectral_free(ptr::null_mut());
    }
}

#[test]
fn spectral_determinant() {
    let mut sp = ptr::null_mut();
    unsafe {
        assert_eq!(ds_spectral_new(0.6, RHO, &mut sp), DsStatus::Ok);
        let mut mu = 0.0;
        ds_spectral_mu(sp, &mut mu);
        assert!((mu - 0.8).abs() < 1e-15);
        let (mut d, mut f) = ([0.0; 2], [0.0; 2]);
        assert_eq!(ds_spectral_det(sp, 1.3, d.as_mut_ptr(), f.as_mut_ptr()), DsStatus::Ok);
        let rel = ((d[0] - f[0]).powi(2) + (d[1] - f[1]).powi(2)).sqrt() / d[0].hypot(d[1]);
        assert!(rel < 1e-10, "{d:?} {f:?}");
        assert_eq!(ds_spectral_det(sp, f64::NAN, d.as_mut_ptr(), f.as_mut_ptr()), DsStatus::Invalid);
        ds_spectral_free(sp);
    }
}

#[test]
fn header_lists_the_entry_points() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/diracsol.h")).unwrap();
    for f in ["ds_simulation_new_soliton", "ds_simulation_step", "ds_spectral_det", "ds_last_error", "DS_STATUS_PANIC"] {
        assert!(h.contains(f), "{f}");
    }
}
