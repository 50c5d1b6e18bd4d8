use std::ffi::{CStr, CString};
use std::ptr;

use chiral_pinem::farfield::{far_field, DetectorModel};
use chiral_pinem::grid::Grid2D;
use chiral_pinem::nearfield::{synthesize_beta, HoleGeometry, InteriorProfile};
use chiral_pinem::optics::{IncidentLight, MaterialStack};
use chiral_pinem::pinem::{build_sidebands, energy_filtered_map, Channels, IncidentWavefunction};
use chiral_pinem::bessel::sideband_truncation;
use chiral_pinem_ffi::*;
use num_complex::Complex64;

fn small_params() -> CpBetaParams {
    let mut p = std::mem::MaybeUninit::<CpBetaParams>::uninit();
    assert_eq!(unsafe { cp_beta_params_default(p.as_mut_ptr()) }, CpStatus::Ok);
    let mut p = unsafe { p.assume_init() };
    p.nx = 64;
    p.ny = 64;
    p.half_width_x = 1e-6;
    p.half_width_y = 1e-6;
    p
}

fn beta(p: &CpBetaParams) -> *mut CpBeta {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { cp_beta_synthesize(p, &mut b) }, CpStatus::Ok);
    b
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cp_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn synthesis_matches_the_library() {
    let p = small_params();
    let b = beta(&p);
    let mut vals = vec![0.0; 2 * 64 * 64];
    assert_eq!(unsafe { cp_beta_copy_values(b, vals.as_mut_ptr(), vals.len()) }, CpStatus::Ok);

    let grid = Grid2D::new(64, 64, 1e-6, 1e-6).unwrap();
    let direct = synthesize_beta(
        HoleGeometry::new(0.4e-6, (0.0, 0.0)).unwrap(),
        grid,
        &IncidentLight::default(),
        &MaterialStack::default(),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.5, 0.0),
        InteriorProfile::RimMatched,
    )
    .unwrap();
    for (pair, v) in vals.chunks_exact(2).zip(direct.values.iter()) {
        assert_eq!((pair[0], pair[1]), (v.re, v.im));
    }

    let mut sb = ptr::null_mut();
    assert_eq!(unsafe { cp_sidebands_build(b, 0.85e-6, 0.0, 0.0, 0, &mut sb) }, CpStatus::Ok);
    let psi = IncidentWavefunction::gaussian(grid, 0.85e-6, (0.0, 0.0)).unwrap();
    let l = sideband_truncation(direct.max_abs());
    assert_eq!(unsafe { cp_sidebands_l_max(sb) }, l);
    let set = build_sidebands(&psi, &direct, l).unwrap();
    let mut map = vec![0.0; 64 * 64];
    assert_eq!(
        unsafe { cp_energy_filtered_map(sb, CpChannels::Inelastic, map.as_mut_ptr(), map.len()) },
        CpStatus::Ok
    );
    let want = energy_filtered_map(&set, &Channels::Inelastic);
    assert!(map.iter().zip(want.iter()).all(|(a, b)| a == b));

    let mut det = std::mem::MaybeUninit::<CpDetector>::uninit();
    assert_eq!(unsafe { cp_detector_default(det.as_mut_ptr()) }, CpStatus::Ok);
    let det = unsafe { det.assume_init() };
    let mut ff = ptr::null_mut();
    assert_eq!(unsafe { cp_far_field(sb, &det, 0.4e-6, 0.0, 0.0, &mut ff) }, CpStatus::Ok);
    let (mut nkx, mut nky) = (0, 0);
    assert_eq!(unsafe { cp_far_field_dims(ff, &mut nkx, &mut nky) }, CpStatus::Ok);
    assert_eq!((nkx, nky), (128, 128));
    let reference = far_field(&set, &DetectorModel::default(), &HoleGeometry::new(0.4e-6, (0.0, 0.0)).unwrap()).unwrap();
    let mut inten = vec![0.0; nkx * nky];
    assert_eq!(
        unsafe { cp_far_field_copy_intensity(ff, 1, inten.as_mut_ptr(), inten.len()) },
        CpStatus::Ok
    );
    assert!(inten.iter().zip(reference.intensity.iter()).all(|(a, b)| a == b));
    let (mut kx, mut ky) = (vec![0.0; nkx], vec![0.0; nky]);
    assert_eq!(
        unsafe { cp_far_field_axes(ff, kx.as_mut_ptr(), nkx, ky.as_mut_ptr(), nky) },
        CpStatus::Ok
    );
    assert_eq!(kx, reference.kx);
    assert_eq!(unsafe { cp_far_field_inelastic_fraction(ff) }, reference.inelastic_fraction);

    unsafe {
        cp_far_field_free(ff);
        cp_sidebands_free(sb);
        cp_beta_free(b);
    }
}

#[test]
fn analysis_entry_points() {
    let b = beta(&small_params());
    let (mut q, mut res) = (0, 1.0);
    assert_eq!(unsafe { cp_topological_charge(b, 0.3e-6, &mut q, &mut res) }, CpStatus::Ok);
    assert_eq!(q, 1);
    assert!(res < 1e-6);
    let mut h = 0.0;
    assert_eq!(unsafe { cp_helicity(b, 0.1e-6, 0.35e-6, &mut h) }, CpStatus::Ok);
    assert!((h - 1.0).abs() < 1e-9);

    // σ = −1 flips both
    let mut p = small_params();
    (p.a_plus_re, p.a_minus_re) = (0.0, 1.0);
    let m = beta(&p);
    assert_eq!(unsafe { cp_topological_charge(m, 0.3e-6, &mut q, &mut res) }, CpStatus::Ok);
    assert_eq!(q, -1);
    assert_eq!(unsafe { cp_helicity(m, 0.1e-6, 0.35e-6, &mut h) }, CpStatus::Ok);
    assert!((h + 1.0).abs() < 1e-9);
    unsafe {
        cp_beta_free(b);
        cp_beta_free(m);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { cp_beta_synthesize(ptr::null(), &mut b) }, CpStatus::NullPointer);
    assert!(last_error().contains("null"));

    let mut p = small_params();
    p.photon_ev = -1.0;
    assert_eq!(unsafe { cp_beta_synthesize(&p, &mut b) }, CpStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert!(b.is_null());

    let mut p = small_params();
    p.nx = 17;
    assert_eq!(unsafe { cp_beta_synthesize(&p, &mut b) }, CpStatus::InvalidArgument);

    let mut p = small_params();
    (p.a_plus_re, p.a_minus_re) = (0.0, 0.0);
    assert_eq!(unsafe { cp_beta_synthesize(&p, &mut b) }, CpStatus::InvalidArgument);

    let good = beta(&small_params());
    let mut small = [0.0; 4];
    assert_eq!(
        unsafe { cp_beta_copy_values(good, small.as_mut_ptr(), small.len()) },
        CpStatus::BufferTooSmall
    );
    assert!(last_error().contains("8192"));

    // success clears the message
    let (mut nx, mut ny) = (0, 0);
    assert_eq!(unsafe { cp_beta_dims(good, &mut nx, &mut ny) }, CpStatus::Ok);
    assert_eq!(last_error(), "");

    let mut mu = 0.0;
    assert_eq!(
        unsafe { cp_proton_moment(1, -1.0, 0.84e-15, CpDensityProfile::Exponential, &mut mu, ptr::null_mut()) },
        CpStatus::InvalidArgument
    );
    unsafe {
        cp_beta_free(good);
        cp_beta_free(ptr::null_mut());
        cp_sidebands_free(ptr::null_mut());
        cp_far_field_free(ptr::null_mut());
    }
}

#[test]
fn beta_file_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = CString::new(tmp.path().join("b.bin").to_str().unwrap()).unwrap();
    let b = beta(&small_params());
    assert_eq!(unsafe { cp_beta_write(b, path.as_ptr()) }, CpStatus::Ok);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cp_beta_read(path.as_ptr(), &mut r) }, CpStatus::Ok);
    let (mut x, mut y) = (vec![0.0; 8192], vec![0.0; 8192]);
    unsafe {
        assert_eq!(cp_beta_copy_values(b, x.as_mut_ptr(), x.len()), CpStatus::Ok);
        assert_eq!(cp_beta_copy_values(r, y.as_mut_ptr(), y.len()), CpStatus::Ok);
    }
    assert_eq!(x, y);

    let mut w = ptr::null_mut();
    assert_eq!(
        unsafe { cp_beta_from_values(64, 64, 1e-6, 1e-6, x.as_ptr(), &mut w) },
        CpStatus::Ok
    );
    let mut z = vec![0.0; 8192];
    assert_eq!(unsafe { cp_beta_copy_values(w, z.as_mut_ptr(), z.len()) }, CpStatus::Ok);
    assert_eq!(x, z);

    let junk = tmp.path().join("junk.bin");
    std::fs::write(&junk, b"BETAjunk").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    let mut j = ptr::null_mut();
    assert_eq!(unsafe { cp_beta_read(junk.as_ptr(), &mut j) }, CpStatus::Format);
    let missing = CString::new(tmp.path().join("none.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cp_beta_read(missing.as_ptr(), &mut j) }, CpStatus::Io);
    unsafe {
        cp_beta_free(b);
        cp_beta_free(r);
        cp_beta_free(w);
    }
}

#[test]
fn proton_moment_matches_orbital_value() {
    for l in [-2, 0, 1, 3] {
        let (mut mu, mut defect) = (f64::NAN, f64::NAN);
        assert_eq!(
            unsafe { cp_proton_moment(l, 5.0 * 0.84e-15, 0.84e-15, CpDensityProfile::Gaussian, &mut mu, &mut defect) },
            CpStatus::Ok
        );
        assert!((mu - l as f64).abs() < 1e-5 * (l.abs().max(1) as f64), "l={l}: {mu}");
        assert!(defect < 1e-3);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(cp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
