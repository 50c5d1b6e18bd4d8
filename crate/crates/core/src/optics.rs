//! Physical constants, electron and light descriptions, SPP dispersion.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const PROTON_MASS: f64 = 1.672_621_923_69e-27;
/// Electron rest energy in eV.
pub const ELECTRON_REST_ENERGY_EV: f64 = 510_998.95;
/// ħ in eV·s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;

/// Relativistic speed of an electron with the given kinetic energy (eV).
pub fn derive_electron_velocity(kinetic_energy_ev: f64) -> Result<f64> {
    if !(kinetic_energy_ev > 0.0) || !kinetic_energy_ev.is_finite() {
        return Err(Error::domain(format!(
            "electron kinetic energy must be positive and finite, got {kinetic_energy_ev} eV"
        )));
    }
    let inv_gamma = ELECTRON_REST_ENERGY_EV / (ELECTRON_REST_ENERGY_EV + kinetic_energy_ev);
    // 1 - γ⁻² written as (1-γ⁻¹)(1+γ⁻¹) to keep precision at low energy
    let beta_sq = (1.0 - inv_gamma) * (1.0 + inv_gamma);
    Ok(SPEED_OF_LIGHT * beta_sq.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronBeam {
    kinetic_energy_ev: f64,
    velocity: f64,
    transverse_coherence: f64,
}

impl ElectronBeam {
    pub fn new(kinetic_energy_ev: f64, transverse_coherence: f64) -> Result<Self> {
        let velocity = derive_electron_velocity(kinetic_energy_ev)?;
        if !(transverse_coherence > 0.0) {
            return Err(Error::domain("transverse coherence must be positive"));
        }
        Ok(Self {
            kinetic_energy_ev,
            velocity,
            transverse_coherence,
        })
    }

    pub fn kinetic_energy_ev(&self) -> f64 {
        self.kinetic_energy_ev
    }

    /// m/s.
    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// 1/e² intensity radius of the transverse envelope, metres.
    pub fn transverse_coherence(&self) -> f64 {
        self.transverse_coherence
    }
}

impl Default for ElectronBeam {
    fn default() -> Self {
        Self::new(200e3, 0.85e-6).expect("default beam is valid")
    }
}

/// Circular decomposition of a transverse polarization state.
///
/// `a_plus` weights the σ = +1 channel, which launches a plasmon winding as
/// `e^{+iφ}`; `a_minus` weights σ = −1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationState {
    a_plus: Complex64,
    a_minus: Complex64,
}

const NORM_TOLERANCE: f64 = 1e-9;

impl PolarizationState {
    /// Requires `|a_plus|² + |a_minus|² = 1`.
    pub fn new(a_plus: Complex64, a_minus: Complex64) -> Result<Self> {
        let norm = a_plus.norm_sqr() + a_minus.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE || !norm.is_finite() {
            return Err(Error::domain(format!(
                "polarization not normalized: |a+|² + |a-|² = {norm}"
            )));
        }
        Ok(Self { a_plus, a_minus })
    }

    /// Normalises an arbitrary non-zero pair.
    pub fn normalized(a_plus: Complex64, a_minus: Complex64) -> Result<Self> {
        let norm = (a_plus.norm_sqr() + a_minus.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::domain("polarization amplitudes are zero"));
        }
        Ok(Self {
            a_plus: a_plus / norm,
            a_minus: a_minus / norm,
        })
    }

    /// Pure circular state, `sigma = ±1`.
    pub fn circular(sigma: i32) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        if sigma >= 0 {
            Self {
                a_plus: one,
                a_minus: zero,
            }
        } else {
            Self {
                a_plus: zero,
                a_minus: one,
            }
        }
    }

    /// Linear polarization along angle `theta` from x̂.
    pub fn linear(theta: f64) -> Self {
        jones_to_circular(Complex64::new(theta.cos(), 0.0), Complex64::new(theta.sin(), 0.0))
            .expect("unit Jones vector")
    }

    pub fn a_plus(&self) -> Complex64 {
        self.a_plus
    }

    pub fn a_minus(&self) -> Complex64 {
        self.a_minus
    }

    /// Amplitude of channel `sigma` (±1).
    pub fn weight(&self, sigma: i32) -> Complex64 {
        if sigma >= 0 {
            self.a_plus
        } else {
            self.a_minus
        }
    }

    /// Mirror-image state (`a_plus ↔ a_minus`).
    pub fn swapped(&self) -> Self {
        Self {
            a_plus: self.a_minus,
            a_minus: self.a_plus,
        }
    }

    /// Physically rotates the polarization ellipse by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            a_plus: self.a_plus * Complex64::from_polar(1.0, -theta),
            a_minus: self.a_minus * Complex64::from_polar(1.0, theta),
        }
    }

    /// Normalised circular Stokes parameter `|a+|² − |a−|²`.
    pub fn s3(&self) -> f64 {
        self.a_plus.norm_sqr() - self.a_minus.norm_sqr()
    }
}

/// Converts a Jones vector to circular amplitudes, `a± = (jx ∓ i·jy)/√2`, normalised.
pub fn jones_to_circular(jones_x: Complex64, jones_y: Complex64) -> Result<PolarizationState> {
    if jones_x.norm_sqr() + jones_y.norm_sqr() == 0.0 {
        return Err(Error::domain("zero Jones vector"));
    }
    let i = Complex64::i();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    PolarizationState::normalized((jones_x - i * jones_y) * s, (jones_x + i * jones_y) * s)
}

/// Quasi-monochromatic drive light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentLight {
    photon_energy_ev: f64,
    angular_frequency: f64,
    vacuum_wavelength: f64,
    field_amplitude: f64,
    polarization: PolarizationState,
    incidence_angle_delta: f64,
    sample_tilt_alpha: f64,
}

impl IncidentLight {
    /// Angles in radians, field amplitude in V/m.
    pub fn new(
        photon_energy_ev: f64,
        field_amplitude: f64,
        polarization: PolarizationState,
        incidence_angle_delta: f64,
        sample_tilt_alpha: f64,
    ) -> Result<Self> {
        if !(photon_energy_ev > 0.0) || !photon_energy_ev.is_finite() {
            return Err(Error::domain("photon energy must be positive"));
        }
        if !(field_amplitude >= 0.0) {
            return Err(Error::domain("field amplitude must be non-negative"));
        }
        let angular_frequency = photon_energy_ev / HBAR_EV_S;
        Ok(Self {
            photon_energy_ev,
            angular_frequency,
            vacuum_wavelength: 2.0 * PI * SPEED_OF_LIGHT / angular_frequency,
            field_amplitude,
            polarization,
            incidence_angle_delta,
            sample_tilt_alpha,
        })
    }

    pub fn with_polarization(&self, polarization: PolarizationState) -> Self {
        Self {
            polarization,
            ..*self
        }
    }

    pub fn photon_energy_ev(&self) -> f64 {
        self.photon_energy_ev
    }

    /// rad/s.
    pub fn angular_frequency(&self) -> f64 {
        self.angular_frequency
    }

    pub fn vacuum_wavelength(&self) -> f64 {
        self.vacuum_wavelength
    }

    pub fn free_space_wavenumber(&self) -> f64 {
        self.angular_frequency / SPEED_OF_LIGHT
    }

    pub fn optical_period(&self) -> f64 {
        2.0 * PI / self.angular_frequency
    }

    pub fn field_amplitude(&self) -> f64 {
        self.field_amplitude
    }

    pub fn polarization(&self) -> PolarizationState {
        self.polarization
    }

    pub fn incidence_angle_delta(&self) -> f64 {
        self.incidence_angle_delta
    }

    pub fn sample_tilt_alpha(&self) -> f64 {
        self.sample_tilt_alpha
    }
}

impl Default for IncidentLight {
    fn default() -> Self {
        let delta = 4.5_f64.to_radians();
        Self::new(1.57, 8e7, PolarizationState::circular(1), delta, delta)
            .expect("default light is valid")
    }
}

/// Metal/dielectric interface carrying the SPP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialStack {
    pub eps_metal: Complex64,
    pub eps_dielectric: f64,
    /// Intensity 1/e propagation length override, metres.
    pub spp_decay_length: Option<f64>,
}

impl Default for MaterialStack {
    /// Ag on Si₃N₄ near 790 nm; stand-in optical constants.
    fn default() -> Self {
        Self {
            eps_metal: Complex64::new(-29.0, 0.3),
            eps_dielectric: 4.0,
            spp_decay_length: Some(10e-6),
        }
    }
}

/// `k_SPP = (ω/c)·sqrt(ε_m ε_d / (ε_m + ε_d))`, principal root (Re ≥ 0).
pub fn derive_spp_wavevector(light: &IncidentLight, stack: &MaterialStack) -> Result<Complex64> {
    let eps_m = stack.eps_metal;
    let eps_d = stack.eps_dielectric;
    if !(eps_d > 0.0) {
        return Err(Error::domain("dielectric permittivity must be positive"));
    }
    let denom = eps_m + eps_d;
    if denom.norm() <= f64::EPSILON * eps_m.norm().max(eps_d) {
        return Err(Error::Pole);
    }
    if !(eps_m.re < -eps_d) {
        return Err(Error::domain(format!(
            "no bound SPP: Re(eps_metal) = {} must be below -eps_dielectric = {}",
            eps_m.re, -eps_d
        )));
    }
    Ok(light.free_space_wavenumber() * (eps_m * eps_d / denom).sqrt())
}

/// Dispersion wavevector with the propagation-length override applied:
/// `Im k = 1/(2 L)` when `spp_decay_length = Some(L)`.
pub fn effective_spp_wavevector(light: &IncidentLight, stack: &MaterialStack) -> Result<Complex64> {
    let k = derive_spp_wavevector(light, stack)?;
    match stack.spp_decay_length {
        Some(l) if l > 0.0 && l.is_finite() => Ok(Complex64::new(k.re, 0.5 / l)),
        Some(l) => Err(Error::domain(format!("spp decay length must be positive, got {l}"))),
        None => Ok(k),
    }
}
