//! Analytic near field `β(x, y)` of a circular nanohole in a plasmonic film.
//!
//! Outside the hole the electron sees the reflected-light reference `A` plus a
//! cylindrical SPP launched at the rim,
//!
//! ```text
//! β = A + B · Σ_σ a_σ e^{ik(R−a)} sqrt(a/R) e^{iσφ}          (R ≥ a)
//! β = C · Σ_σ a_σ J₁(qR) e^{iσφ},   C = B / J₁(qa)            (R < a)
//! ```
//!
//! so the SPP term is continuous on the whole rim. The interior radial
//! wavenumber `q` is set by [`InteriorProfile`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, J1_FIRST_MAX};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid2D};
use crate::optics::{effective_spp_wavevector, IncidentLight, MaterialStack, PolarizationState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleGeometry {
    pub radius: f64,
    pub center: (f64, f64),
}

impl HoleGeometry {
    pub fn new(radius: f64, center: (f64, f64)) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::domain(format!("hole radius must be positive, got {radius}")));
        }
        Ok(Self { radius, center })
    }
}

impl Default for HoleGeometry {
    fn default() -> Self {
        Self {
            radius: 0.4e-6,
            center: (0.0, 0.0),
        }
    }
}

/// Radial profile of the near field inside the hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteriorProfile {
    /// `J₁(qR)` with the first maximum of `J₁` on the rim, `q = j'₁,₁/a`.
    #[default]
    RimMatched,
    /// `J₁(Re(k_SPP)·R)`.
    SppWavenumber,
}

/// Named choices of the reference amplitude `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePreset {
    /// Reflected light interferes with the SPP, `|A| = |B| / b_over_a`.
    Holography { b_over_a: f64 },
    /// Light interaction cancelled by the sample tilt, `A = 0`.
    VortexDetection,
    Custom { a: Complex64 },
}

/// Reference amplitude `A` for a preset, given the SPP launch amplitude `B`.
///
/// The holography preset uses a real positive `A`; the tilt angle is not mapped
/// to `A` by any film-optics model.
pub fn reference_amplitude(preset: ReferencePreset, b: Complex64) -> Result<Complex64> {
    match preset {
        ReferencePreset::VortexDetection => Ok(Complex64::new(0.0, 0.0)),
        ReferencePreset::Custom { a } => Ok(a),
        ReferencePreset::Holography { b_over_a } => {
            if !(b_over_a > 0.0) || !b_over_a.is_finite() {
                return Err(Error::domain("holography |B/A| must be positive"));
            }
            Ok(Complex64::new(b.norm() / b_over_a, 0.0))
        }
    }
}

/// Peak-to-trough visibility of two-wave interference with amplitude ratio `r`.
pub fn fringe_visibility(ratio: f64) -> f64 {
    2.0 * ratio / (1.0 + ratio * ratio)
}

/// Everything needed to evaluate `β` at an arbitrary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaModel {
    pub geometry: HoleGeometry,
    pub polarization: PolarizationState,
    pub a: Complex64,
    pub b: Complex64,
    pub k_spp: Complex64,
    pub profile: InteriorProfile,
    interior_q: f64,
    interior_scale: Complex64,
}

impl BetaModel {
    pub fn new(
        geometry: HoleGeometry,
        light: &IncidentLight,
        stack: &MaterialStack,
        a: Complex64,
        b: Complex64,
        profile: InteriorProfile,
    ) -> Result<Self> {
        let pol = light.polarization();
        PolarizationState::new(pol.a_plus(), pol.a_minus())?;
        let k_spp = effective_spp_wavevector(light, stack)?;
        let interior_q = match profile {
            InteriorProfile::RimMatched => J1_FIRST_MAX / geometry.radius,
            InteriorProfile::SppWavenumber => k_spp.re,
        };
        let rim = bessel_j(1, interior_q * geometry.radius);
        if rim.abs() < 1e-6 {
            return Err(Error::domain(format!(
                "hole radius sits on a zero of J1 (J1(q·a) = {rim:e}); rim continuity is singular"
            )));
        }
        Ok(Self {
            geometry,
            polarization: pol,
            a,
            b,
            k_spp,
            profile,
            interior_q,
            interior_scale: b / rim,
        })
    }

    /// Same model with another polarization and the amplitudes `A`, `B` scaled.
    pub fn rescaled(&self, polarization: PolarizationState, factor: Complex64) -> Self {
        Self {
            polarization,
            a: self.a * factor,
            b: self.b * factor,
            interior_scale: self.interior_scale * factor,
            ..*self
        }
    }

    pub fn interior_wavenumber(&self) -> f64 {
        self.interior_q
    }

    /// `C = B / J₁(q a)`.
    pub fn interior_amplitude(&self) -> Complex64 {
        self.interior_scale
    }

    /// `β` at physical `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let dx = x - self.geometry.center.0;
        let dy = y - self.geometry.center.1;
        let r = dx.hypot(dy);
        let a = self.geometry.radius;
        if r == 0.0 {
            // J₁(0) = 0; A is applied only outside the hole.
            return Complex64::new(0.0, 0.0);
        }
        // e^{±iφ} = (dx ± i dy)/R
        let e_plus = Complex64::new(dx / r, dy / r);
        let e_minus = e_plus.conj();
        let angular = self.polarization.a_plus() * e_plus + self.polarization.a_minus() * e_minus;
        if r < a {
            self.interior_scale * angular * bessel_j(1, self.interior_q * r)
        } else {
            let i = Complex64::i();
            let spp = (i * self.k_spp * (r - a)).exp() * (a / r).sqrt();
            self.a + self.b * angular * spp
        }
    }
}

/// Complex interaction strength on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionField {
    pub grid: Grid2D,
    pub values: ComplexField,
    /// `None` for fields imported from a file.
    pub model: Option<BetaModel>,
}

impl InteractionField {
    pub fn from_values(grid: Grid2D, values: ComplexField) -> Result<Self> {
        grid.check_field(&values, "interaction field")?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::domain("interaction field contains non-finite values"));
        }
        Ok(Self {
            grid,
            values,
            model: None,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    /// `|β|`.
    pub fn modulus(&self) -> crate::grid::RealField {
        self.values.mapv(|v| v.norm())
    }

    /// `arg β`, with the phase of exact zeros set to 0.
    pub fn phase(&self) -> crate::grid::RealField {
        self.values.mapv(|v| if v.norm_sqr() == 0.0 { 0.0 } else { v.arg() })
    }
}

/// Synthesises `β` for a single pulse.
pub fn synthesize_beta(
    geom: HoleGeometry,
    grid: Grid2D,
    light: &IncidentLight,
    stack: &MaterialStack,
    a: Complex64,
    b: Complex64,
    profile: InteriorProfile,
) -> Result<InteractionField> {
    let half_x = grid.extent_x();
    let half_y = grid.extent_y();
    if half_x < 2.0 * geom.radius || half_y < 2.0 * geom.radius {
        return Err(Error::domain(format!(
            "grid half-width ({half_x:e}, {half_y:e}) m must be at least twice the hole radius {:e} m",
            geom.radius
        )));
    }
    let model = BetaModel::new(geom, light, stack, a, b, profile)?;
    Ok(field_from_model(grid, model))
}

pub fn field_from_model(grid: Grid2D, model: BetaModel) -> InteractionField {
    let values = grid.map(|x, y| model.eval(x, y));
    InteractionField {
        grid,
        values,
        model: Some(model),
    }
}

/// Weighting of the second-pulse cross term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// Pure phasor addition, `w ≡ 1`.
    #[default]
    Monochromatic,
    /// `w(Δt) = exp(−4 ln2 · Δt² / (2 τ²))`, the amplitude overlap of two
    /// Gaussian pulses with intensity FWHM `τ`.
    GaussianOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    pub pol_1: PolarizationState,
    pub pol_2: PolarizationState,
    pub rel_amplitude_2: f64,
    /// Seconds.
    pub delay: f64,
    /// Seconds.
    pub envelope_fwhm: f64,
    pub envelope: EnvelopeMode,
}

impl PulsePair {
    pub fn validate(&self) -> Result<()> {
        if !(self.envelope_fwhm > 0.0) {
            return Err(Error::domain("envelope FWHM must be positive"));
        }
        if !self.rel_amplitude_2.is_finite() || self.rel_amplitude_2 < 0.0 {
            return Err(Error::domain("second pulse amplitude must be finite and non-negative"));
        }
        if !self.delay.is_finite() {
            return Err(Error::domain("delay must be finite"));
        }
        Ok(())
    }

    pub fn envelope_weight(&self) -> f64 {
        match self.envelope {
            EnvelopeMode::Monochromatic => 1.0,
            EnvelopeMode::GaussianOverlap => {
                let t = self.delay / self.envelope_fwhm;
                (-4.0 * 2f64.ln() * t * t / 2.0).exp()
            }
        }
    }
}

/// `β_total = β₁ + w(Δt)·β₂·e^{iωΔt}`, with `β₂` the first pulse's model
/// re-driven by `pol_2` and scaled by `rel_amplitude_2`.
pub fn superpose_two_pulses(
    field_1: &InteractionField,
    pulse: &PulsePair,
    light: &IncidentLight,
) -> Result<InteractionField> {
    pulse.validate()?;
    let model = field_1.model.ok_or_else(|| {
        Error::shape("two-pulse superposition needs a synthesized field (imported grids carry no model)")
    })?;
    let phase = Complex64::from_polar(1.0, light.angular_frequency() * pulse.delay);
    let factor = phase * (pulse.rel_amplitude_2 * pulse.envelope_weight());
    let second = model.rescaled(pulse.pol_2, factor);
    let grid = field_1.grid;
    let mut values = grid.map(|x, y| second.eval(x, y));
    grid.check_field(&field_1.values, "first pulse field")?;
    values.zip_mut_with(&field_1.values, |v, b1| *v += *b1);
    Ok(InteractionField {
        grid,
        values,
        model: None,
    })
}

/// Phase of a two-pulse delay within the optical cycle, in `[0, 2π)`.
pub fn delay_phase(light: &IncidentLight, delay: f64) -> f64 {
    (light.angular_frequency() * delay).rem_euclid(2.0 * PI)
}
