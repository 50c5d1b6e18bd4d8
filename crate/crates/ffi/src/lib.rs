//! C ABI over `chiral_pinem`.
//!
//! Objects are opaque handles created by `cp_*_new`/`cp_*_build`-style calls and
//! released with the matching `cp_*_free`. Every fallible call returns a
//! [`CpStatus`]; on failure the message is available from [`cp_last_error`] on
//! the same thread. Grids are row-major with `x` fastest; complex arrays are
//! interleaved `(re, im)` doubles. All lengths are in metres, energies in eV.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use chiral_pinem::analysis::{helicity_of_field, topological_charge};
use chiral_pinem::bessel::sideband_truncation;
use chiral_pinem::farfield::{far_field, DetectorModel, FarFieldMap};
use chiral_pinem::grid::{Grid2D, RealField};
use chiral_pinem::io::{read_beta_file, write_beta_file};
use chiral_pinem::nearfield::{synthesize_beta, HoleGeometry, InteractionField, InteriorProfile};
use chiral_pinem::optics::{IncidentLight, MaterialStack, PolarizationState};
use chiral_pinem::pinem::{build_sidebands, energy_filtered_map, Channels, IncidentWavefunction, SidebandSet};
use chiral_pinem::proton::{magnetic_moment, DensityProfile, OamWavefunction, ProtonModel, QuadratureParams};
use chiral_pinem::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Pole = 4,
    Numerical = 5,
    Format = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpInteriorProfile {
    RimMatched = 0,
    SppWavenumber = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpChannels {
    All = 0,
    Inelastic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpDensityProfile {
    Exponential = 0,
    Gaussian = 1,
    Point = 2,
}

/// Inputs of a single-pulse `β` synthesis. Fill with [`cp_beta_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpBetaParams {
    pub nx: usize,
    pub ny: usize,
    pub half_width_x: f64,
    pub half_width_y: f64,
    pub hole_radius: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub photon_ev: f64,
    pub eps_metal_re: f64,
    pub eps_metal_im: f64,
    pub eps_dielectric: f64,
    /// Intensity propagation length; 0 keeps the dispersion damping.
    pub spp_decay_length: f64,
    /// Circular amplitudes; normalised on use.
    pub a_plus_re: f64,
    pub a_plus_im: f64,
    pub a_minus_re: f64,
    pub a_minus_im: f64,
    pub a_re: f64,
    pub a_im: f64,
    pub b_re: f64,
    pub b_im: f64,
    pub interior_profile: CpInteriorProfile,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpDetector {
    /// 1/m.
    pub broadening_sigma: f64,
    pub aperture_radius: f64,
    pub transmissivity: f64,
    pub padding: usize,
    pub channels: CpChannels,
}

/// Opaque interaction field.
pub struct CpBeta(InteractionField);

/// Opaque sideband set.
pub struct CpSidebands(SidebandSet);

/// Opaque far-field map.
pub struct CpFarField(FarFieldMap);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CpStatus {
    match e {
        Error::Domain(_) | Error::Config { .. } => CpStatus::InvalidArgument,
        Error::Shape(_) => CpStatus::ShapeMismatch,
        Error::Pole => CpStatus::Pole,
        Error::Format(_) => CpStatus::Format,
        Error::Io(_) => CpStatus::Io,
        Error::AtDelay { source, .. } => status_of(source),
        _ => CpStatus::Numerical,
    }
}

struct Fail(CpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CpStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and the last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CpStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {m}"));
            CpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null("output buffer"));
    }
    if len < need {
        return Err(Fail(
            CpStatus::BufferTooSmall,
            format!("buffer holds {len} doubles, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CpStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn store<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(v)) };
    Ok(())
}

fn copy_real(field: &RealField, out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(field.iter()) {
        *o = *v;
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults: 256² grid of half-width 2 µm, 0.4 µm hole, 1.57 eV, Ag/Si₃N₄
/// stand-in permittivities, σ = +1, `A = 0`, `B = 0.5`.
///
/// # Safety
/// `out` must point to writable memory for one `CpBetaParams`.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_params_default(out: *mut CpBetaParams) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("params"));
        }
        let stack = MaterialStack::default();
        *out = CpBetaParams {
            nx: 256,
            ny: 256,
            half_width_x: 2e-6,
            half_width_y: 2e-6,
            hole_radius: 0.4e-6,
            center_x: 0.0,
            center_y: 0.0,
            photon_ev: 1.57,
            eps_metal_re: stack.eps_metal.re,
            eps_metal_im: stack.eps_metal.im,
            eps_dielectric: stack.eps_dielectric,
            spp_decay_length: stack.spp_decay_length.unwrap_or(0.0),
            a_plus_re: 1.0,
            a_plus_im: 0.0,
            a_minus_re: 0.0,
            a_minus_im: 0.0,
            a_re: 0.0,
            a_im: 0.0,
            b_re: 0.5,
            b_im: 0.0,
            interior_profile: CpInteriorProfile::RimMatched,
        };
        Ok(())
    })
}

/// # Safety
/// `params` must be valid; `out` must be writable. On success `*out` owns a
/// handle to be released with [`cp_beta_free`].
#[no_mangle]
pub unsafe extern "C" fn cp_beta_synthesize(params: *const CpBetaParams, out: *mut *mut CpBeta) -> CpStatus {
    guard(|| {
        let p = borrow(params, "params")?;
        let grid = Grid2D::new(p.nx, p.ny, p.half_width_x, p.half_width_y)?;
        let hole = HoleGeometry::new(p.hole_radius, (p.center_x, p.center_y))?;
        let pol = PolarizationState::normalized(
            Complex64::new(p.a_plus_re, p.a_plus_im),
            Complex64::new(p.a_minus_re, p.a_minus_im),
        )?;
        let base = IncidentLight::default();
        let light = IncidentLight::new(
            p.photon_ev,
            base.field_amplitude(),
            pol,
            base.incidence_angle_delta(),
            base.sample_tilt_alpha(),
        )?;
        let stack = MaterialStack {
            eps_metal: Complex64::new(p.eps_metal_re, p.eps_metal_im),
            eps_dielectric: p.eps_dielectric,
            spp_decay_length: (p.spp_decay_length > 0.0).then_some(p.spp_decay_length),
        };
        let profile = match p.interior_profile {
            CpInteriorProfile::RimMatched => InteriorProfile::RimMatched,
            CpInteriorProfile::SppWavenumber => InteriorProfile::SppWavenumber,
        };
        let beta = synthesize_beta(
            hole,
            grid,
            &light,
            &stack,
            Complex64::new(p.a_re, p.a_im),
            Complex64::new(p.b_re, p.b_im),
            profile,
        )?;
        store(out, CpBeta(beta))
    })
}

/// Wraps caller data: `values` holds `2·nx·ny` interleaved doubles.
///
/// # Safety
/// `values` must be readable for `2·nx·ny` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_from_values(
    nx: usize,
    ny: usize,
    half_width_x: f64,
    half_width_y: f64,
    values: *const f64,
    out: *mut *mut CpBeta,
) -> CpStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let grid = Grid2D::new(nx, ny, half_width_x, half_width_y)?;
        let raw = std::slice::from_raw_parts(values, 2 * nx * ny);
        let data: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let arr = ndarray::Array2::from_shape_vec((ny, nx), data)
            .map_err(|e| Fail(CpStatus::ShapeMismatch, e.to_string()))?;
        store(out, CpBeta(InteractionField::from_values(grid, arr)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_read(path: *const c_char, out: *mut *mut CpBeta) -> CpStatus {
    guard(|| {
        let p = path_arg(path)?;
        store(out, CpBeta(read_beta_file(&p)?))
    })
}

/// # Safety
/// `beta` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_write(beta: *const CpBeta, path: *const c_char) -> CpStatus {
    guard(|| {
        let b = borrow(beta, "beta")?;
        write_beta_file(&path_arg(path)?, &b.0)?;
        Ok(())
    })
}

/// # Safety
/// `beta` must be a live handle; `nx` and `ny` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_dims(beta: *const CpBeta, nx: *mut usize, ny: *mut usize) -> CpStatus {
    guard(|| {
        let b = borrow(beta, "beta")?;
        if nx.is_null() || ny.is_null() {
            return Err(null("dimension output"));
        }
        *nx = b.0.grid.nx();
        *ny = b.0.grid.ny();
        Ok(())
    })
}

/// Copies `β` as `2·nx·ny` interleaved doubles.
///
/// # Safety
/// `beta` must be a live handle; `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_copy_values(beta: *const CpBeta, out: *mut f64, len: usize) -> CpStatus {
    guard(|| {
        let b = borrow(beta, "beta")?;
        let dst = out_slice(out, len, 2 * b.0.values.len())?;
        for (pair, v) in dst.chunks_exact_mut(2).zip(b.0.values.iter()) {
            pair[0] = v.re;
            pair[1] = v.im;
        }
        Ok(())
    })
}

/// # Safety
/// `beta` must be a live handle; `charge` and `residual` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_topological_charge(
    beta: *const CpBeta,
    loop_radius: f64,
    charge: *mut i32,
    residual: *mut f64,
) -> CpStatus {
    guard(|| {
        let b = borrow(beta, "beta")?;
        if charge.is_null() || residual.is_null() {
            return Err(null("charge output"));
        }
        let t = topological_charge(&b.0.values, &b.0.grid, loop_radius)?;
        *charge = t.charge;
        *residual = t.residual;
        Ok(())
    })
}

/// `(P₊₁ − P₋₁)/(P₊₁ + P₋₁)` of `β` over the annulus `[inner, outer]`.
///
/// # Safety
/// `beta` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_helicity(beta: *const CpBeta, inner: f64, outer: f64, out: *mut f64) -> CpStatus {
    guard(|| {
        let b = borrow(beta, "beta")?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = helicity_of_field(&b.0, inner, outer)?;
        Ok(())
    })
}

/// # Safety
/// `beta` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_beta_free(beta: *mut CpBeta) {
    if !beta.is_null() {
        drop(Box::from_raw(beta));
    }
}

/// Builds `ψ_ℓ` for `|ℓ| ≤ l_max` (0 selects the truncation rule) from a
/// Gaussian incident wave of waist `coherence` centred on `(center_x,
/// center_y)`; `coherence ≤ 0` selects a uniform wave.
///
/// # Safety
/// `beta` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_sidebands_build(
    beta: *const CpBeta,
    coherence: f64,
    center_x: f64,
    center_y: f64,
    l_max: usize,
    out: *mut *mut CpSidebands,
) -> CpStatus {
    guard(|| {
        let b = borrow(beta, "beta")?;
        let psi = if coherence > 0.0 {
            IncidentWavefunction::gaussian(b.0.grid, coherence, (center_x, center_y))?
        } else {
            IncidentWavefunction::uniform(b.0.grid)
        };
        let l = if l_max == 0 {
            sideband_truncation(b.0.max_abs())
        } else {
            l_max
        };
        store(out, CpSidebands(build_sidebands(&psi, &b.0, l)?))
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_sidebands_l_max(s: *const CpSidebands) -> usize {
    s.as_ref().map_or(0, |s| s.0.l_max())
}

/// `Σ |ψ_ℓ|²` over the selected channels, `nx·ny` doubles.
///
/// # Safety
/// `s` must be a live handle; `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_energy_filtered_map(
    s: *const CpSidebands,
    channels: CpChannels,
    out: *mut f64,
    len: usize,
) -> CpStatus {
    guard(|| {
        let s = borrow(s, "sidebands")?;
        let ch = match channels {
            CpChannels::All => Channels::All,
            CpChannels::Inelastic => Channels::Inelastic,
        };
        let (ny, nx) = s.0.grid.shape();
        let dst = out_slice(out, len, nx * ny)?;
        copy_real(&energy_filtered_map(&s.0, &ch), dst);
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_sidebands_free(s: *mut CpSidebands) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Detector defaults: σ = 0.35 µm⁻¹, 7.5 µm aperture, T = 0.013, padding 2,
/// inelastic channels.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_detector_default(out: *mut CpDetector) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("detector"));
        }
        let d = DetectorModel::default();
        *out = CpDetector {
            broadening_sigma: d.broadening_sigma,
            aperture_radius: d.aperture_radius,
            transmissivity: d.transmissivity,
            padding: d.padding,
            channels: CpChannels::Inelastic,
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle, `detector` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_far_field(
    s: *const CpSidebands,
    detector: *const CpDetector,
    hole_radius: f64,
    center_x: f64,
    center_y: f64,
    out: *mut *mut CpFarField,
) -> CpStatus {
    guard(|| {
        let s = borrow(s, "sidebands")?;
        let d = borrow(detector, "detector")?;
        let det = DetectorModel {
            broadening_sigma: d.broadening_sigma,
            aperture_radius: d.aperture_radius,
            transmissivity: d.transmissivity,
            padding: d.padding,
            channels: match d.channels {
                CpChannels::All => Channels::All,
                CpChannels::Inelastic => Channels::Inelastic,
            },
        };
        let hole = HoleGeometry::new(hole_radius, (center_x, center_y))?;
        store(out, CpFarField(far_field(&s.0, &det, &hole)?))
    })
}

/// # Safety
/// `f` must be a live handle; `nkx` and `nky` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_far_field_dims(f: *const CpFarField, nkx: *mut usize, nky: *mut usize) -> CpStatus {
    guard(|| {
        let f = borrow(f, "far field")?;
        if nkx.is_null() || nky.is_null() {
            return Err(null("dimension output"));
        }
        *nkx = f.0.kx.len();
        *nky = f.0.ky.len();
        Ok(())
    })
}

/// Copies the broadened (`broadened != 0`) or raw intensity, `nkx·nky` doubles,
/// `k = 0` at `(nky/2, nkx/2)`.
///
/// # Safety
/// `f` must be a live handle; `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_far_field_copy_intensity(
    f: *const CpFarField,
    broadened: i32,
    out: *mut f64,
    len: usize,
) -> CpStatus {
    guard(|| {
        let f = borrow(f, "far field")?;
        let src = if broadened != 0 { &f.0.intensity } else { &f.0.unbroadened };
        let dst = out_slice(out, len, src.len())?;
        copy_real(src, dst);
        Ok(())
    })
}

/// Momentum axes in 1/m.
///
/// # Safety
/// `f` must be a live handle; `kx` writable for `nkx`, `ky` for `nky` doubles.
#[no_mangle]
pub unsafe extern "C" fn cp_far_field_axes(
    f: *const CpFarField,
    kx: *mut f64,
    nkx: usize,
    ky: *mut f64,
    nky: usize,
) -> CpStatus {
    guard(|| {
        let f = borrow(f, "far field")?;
        out_slice(kx, nkx, f.0.kx.len())?.copy_from_slice(&f.0.kx);
        out_slice(ky, nky, f.0.ky.len())?.copy_from_slice(&f.0.ky);
        Ok(())
    })
}

/// Inelastic share of the intensity passed by the detector mask.
///
/// # Safety
/// `f` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_far_field_inelastic_fraction(f: *const CpFarField) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.0.inelastic_fraction)
}

/// # Safety
/// `f` must be null or a handle from this library; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cp_far_field_free(f: *mut CpFarField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Orbital magnetic moment of a proton in an OAM state, default quadrature.
///
/// # Safety
/// `mu_over_mu_n` and `defect` must be writable (`defect` may be null).
#[no_mangle]
pub unsafe extern "C" fn cp_proton_moment(
    l: i32,
    waist: f64,
    rms_radius: f64,
    profile: CpDensityProfile,
    mu_over_mu_n: *mut f64,
    defect: *mut f64,
) -> CpStatus {
    guard(|| {
        if mu_over_mu_n.is_null() {
            return Err(null("output"));
        }
        let model = ProtonModel {
            rms_charge_radius: rms_radius,
            density_profile: match profile {
                CpDensityProfile::Exponential => DensityProfile::Exponential,
                CpDensityProfile::Gaussian => DensityProfile::Gaussian,
                CpDensityProfile::Point => DensityProfile::Point,
            },
            ..ProtonModel::default()
        };
        model.validate()?;
        let r = magnetic_moment(&model, &OamWavefunction::new(l, waist)?, &QuadratureParams::default())?;
        *mu_over_mu_n = r.mu_over_mu_n;
        if !defect.is_null() {
            *defect = r.convergence_defect;
        }
        Ok(())
    })
}
