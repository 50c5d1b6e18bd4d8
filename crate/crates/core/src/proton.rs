//! Semi-classical magnetic moment of an OAM-carrying proton.
//!
//! The charge current is the internal charge density convolved with the
//! probability current of a Laguerre-Gauss ring,
//! `j = e ρ ⊛ J`, `J(S) = (ħ l / m_p) |ψ(S)|² φ̂ / S`, and
//! `μ_z = ½ ∫ (R × j)_z d²R` per unit length along the beam. The current is
//! uniform along `z`, so only the `z`-projection of `ρ` enters.
//!
//! The transverse convolution is evaluated in polar coordinates: both factors
//! are axisymmetric, so `j` is azimuthal and only needs sampling on one ray.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{ELEMENTARY_CHARGE, HBAR, PROTON_MASS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityProfile {
    /// `ρ ∝ exp(−r/a)`, `a = rms/√12`.
    #[default]
    Exponential,
    /// `ρ ∝ exp(−r²/2s²)`, `s = rms/√3`.
    Gaussian,
    /// Point charge.
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtonModel {
    pub mass: f64,
    pub charge: f64,
    pub rms_charge_radius: f64,
    pub density_profile: DensityProfile,
}

impl Default for ProtonModel {
    fn default() -> Self {
        Self {
            mass: PROTON_MASS,
            charge: ELEMENTARY_CHARGE,
            rms_charge_radius: 0.84e-15,
            density_profile: DensityProfile::Exponential,
        }
    }
}

impl ProtonModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.charge != 0.0) {
            return Err(Error::domain("proton mass and charge must be non-zero"));
        }
        let point = self.density_profile == DensityProfile::Point;
        if !point && !(self.rms_charge_radius > 0.0 && self.rms_charge_radius.is_finite()) {
            return Err(Error::domain("rms charge radius must be positive"));
        }
        Ok(())
    }

    /// `e ħ / 2 m`, J/T.
    pub fn nuclear_magneton(&self) -> f64 {
        self.charge * HBAR / (2.0 * self.mass)
    }

    /// Length scale of the density (`a` or `s`); 0 for a point charge.
    pub fn density_scale(&self) -> f64 {
        match self.density_profile {
            DensityProfile::Exponential => self.rms_charge_radius / 12f64.sqrt(),
            DensityProfile::Gaussian => self.rms_charge_radius / 3f64.sqrt(),
            DensityProfile::Point => 0.0,
        }
    }

    /// Projected density `∫ρ dz` at transverse radius `r`, normalised to 1 in 2D.
    pub fn projected_density(&self, r: f64) -> f64 {
        let s = self.density_scale();
        match self.density_profile {
            DensityProfile::Exponential => {
                if r == 0.0 {
                    1.0 / (4.0 * PI * s * s)
                } else {
                    r * bessel_k1(r / s) / (4.0 * PI * s * s * s)
                }
            }
            DensityProfile::Gaussian => (-0.5 * (r / s).powi(2)).exp() / (2.0 * PI * s * s),
            DensityProfile::Point => 0.0,
        }
    }

    /// Radius beyond which the projected density is negligible (< e⁻³⁵ of its peak).
    fn density_cutoff(&self) -> f64 {
        let s = self.density_scale();
        match self.density_profile {
            DensityProfile::Exponential => 40.0 * s,
            DensityProfile::Gaussian => 9.0 * s,
            DensityProfile::Point => 0.0,
        }
    }
}

/// Modified Bessel `K₁(x)` for `x > 0` from `∫₀^∞ e^{−x cosh t} cosh t dt`.
///
/// The integrand is smooth and doubly-exponentially decaying, so the
/// trapezoid rule converges geometrically.
pub fn bessel_k1(x: f64) -> f64 {
    assert!(x > 0.0);
    let h = 0.02;
    let mut sum = 0.5 * (-x).exp();
    let mut t: f64 = h;
    loop {
        let c = t.cosh();
        let term = (-x * c).exp() * c;
        sum += term;
        if x * c > 745.0 || (term < 1e-18 * sum && t > 1.0) {
            break;
        }
        t += h;
    }
    sum * h
}

/// Lowest-order Laguerre-Gauss ring `|ψ|² ∝ R^{2|l|} exp(−2R²/w²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OamWavefunction {
    pub l: i32,
    pub waist: f64,
}

impl OamWavefunction {
    pub fn new(l: i32, waist: f64) -> Result<Self> {
        if !(waist > 0.0) || !waist.is_finite() {
            return Err(Error::domain("waist must be positive"));
        }
        Ok(Self { l, waist })
    }

    /// `|ψ(R)|²`, unit norm in 2D.
    pub fn density(&self, r: f64) -> f64 {
        let n = self.l.unsigned_abs() as i32;
        let w2 = self.waist * self.waist;
        let norm = PI * (0.5 * w2).powi(n + 1) * factorial(n as u32);
        r.powi(2 * n) * (-2.0 * r * r / w2).exp() / norm
    }

    /// `|ψ(S)|²/S²`, finite at `S = 0` for `l ≠ 0`.
    fn density_over_r2(&self, r2: f64) -> f64 {
        let n = self.l.unsigned_abs() as i32;
        let w2 = self.waist * self.waist;
        let norm = PI * (0.5 * w2).powi(n + 1) * factorial(n as u32);
        r2.powi(n - 1) * (-2.0 * r2 / w2).exp() / norm
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureParams {
    /// Radial nodes per smallest length scale.
    pub points_per_scale: usize,
    /// Minimum azimuthal nodes of the convolution angle.
    pub angular_points: usize,
    /// Cap on nodes per radial axis.
    pub max_points: usize,
    /// Largest accepted relative change between a run and its doubled-resolution
    /// rerun.
    pub tolerance: f64,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            points_per_scale: 12,
            angular_points: 64,
            max_points: 6000,
            tolerance: 1e-3,
        }
    }
}

impl QuadratureParams {
    fn doubled(&self) -> Self {
        Self {
            points_per_scale: 2 * self.points_per_scale,
            angular_points: 2 * self.angular_points,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    /// `μ_z / μ_N` at the doubled resolution.
    pub mu_over_mu_n: f64,
    /// `μ_z` in J/T.
    pub mu: f64,
    /// Relative change from the base to the doubled resolution.
    pub convergence_defect: f64,
    pub radial_points: usize,
    pub density_points: usize,
    pub angular_points: usize,
}

/// Composite Simpson weights on `n` (even) intervals of width `h`.
fn simpson(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = h / 3.0
            * if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
    }
    w
}

fn even_intervals(span: f64, step: f64) -> usize {
    let n = (span / step).ceil().max(2.0) as usize;
    n + n % 2
}

/// `μ_z / μ_N` for `|l|` at one resolution, plus node counts.
fn reduced_moment(model: &ProtonModel, wf: &OamWavefunction, q: &QuadratureParams) -> Result<(f64, usize, usize, usize)> {
    let n_abs = wf.l.unsigned_abs() as f64;
    let w = wf.waist;
    let ring_extent = w * ((0.5 * n_abs).sqrt() + 5.5);
    let pps = q.points_per_scale as f64;

    if model.density_profile == DensityProfile::Point {
        // ∫ R · (|ψ|²/R) · 2πR dR
        let n = even_intervals(ring_extent, w / pps);
        if n > q.max_points {
            return Err(Error::Resolution(format!("{n} radial nodes exceed the cap {}", q.max_points)));
        }
        let h = ring_extent / n as f64;
        let wts = simpson(n, h);
        let v: f64 = (0..=n)
            .map(|i| {
                let r = i as f64 * h;
                wts[i] * wf.density(r) * 2.0 * PI * r
            })
            .sum();
        return Ok((v, n + 1, 0, 0));
    }

    let a = model.density_scale();
    let rp_max = model.density_cutoff();
    let r_max = ring_extent + rp_max;
    let small = a.min(w);
    let n_rp = even_intervals(rp_max, small / pps);
    let n_r = even_intervals(r_max, w.hypot(a) / pps);
    if n_rp > q.max_points || n_r > q.max_points {
        return Err(Error::Resolution(format!(
            "quadrature needs {n_r} x {n_rp} radial nodes, cap is {}",
            q.max_points
        )));
    }
    let h_rp = rp_max / n_rp as f64;
    let h_r = r_max / n_r as f64;
    let w_rp = simpson(n_rp, h_rp);
    let w_r = simpson(n_r, h_r);
    let rho: Vec<f64> = (0..=n_rp).map(|k| model.projected_density(k as f64 * h_rp)).collect();
    let rho_floor = 1e-300_f64.max(1e-40 * rho.iter().cloned().fold(0.0, f64::max));
    let w2 = w * w;
    let resolution = q.points_per_scale as f64 / 12.0;

    // j_φ(R)/(e ħ l/m) at R on the x axis:
    // ∫ ρ(R') R'dR' ∫ dθ g(|S|) S_x,  S = (R − R'cosθ, −R' sinθ), g = |ψ|²/S².
    // The θ integrand is even and periodic, so a half-range trapezoid is
    // spectrally accurate; its width in θ scales as 1/sqrt(z), z = 4RR'/w².
    let rows: Vec<(f64, usize)> = (0..=n_r)
        .into_par_iter()
        .map(|i| {
            let r = i as f64 * h_r;
            let mut acc = 0.0;
            let mut max_nodes = 0;
            for k in 1..=n_rp {
                if rho[k] < rho_floor {
                    continue;
                }
                let rp = k as f64 * h_rp;
                let z = 4.0 * r * rp / w2;
                let half = ((q.angular_points as f64 / 2.0).max(resolution * (6.0 * z.sqrt() + 12.0) + n_abs)).ceil() as usize;
                max_nodes = max_nodes.max(2 * half);
                let step = PI / half as f64;
                let (sd, cd) = step.sin_cos();
                let (mut c, mut s) = (1.0_f64, 0.0_f64);
                let mut ang = 0.0;
                for j in 0..=half {
                    let sx = r - rp * c;
                    let sy = rp * s;
                    let f = wf.density_over_r2(sx * sx + sy * sy) * sx;
                    ang += if j == 0 || j == half { 0.5 * f } else { f };
                    let nc = c * cd - s * sd;
                    s = s * cd + c * sd;
                    c = nc;
                }
                acc += w_rp[k] * rho[k] * rp * ang * 2.0 * step;
            }
            (acc, max_nodes)
        })
        .collect();
    let n_theta = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let mu: f64 = (0..=n_r)
        .map(|i| {
            let r = i as f64 * h_r;
            w_r[i] * r * rows[i].0 * 2.0 * PI * r
        })
        .sum();
    Ok((mu, n_r + 1, n_rp + 1, n_theta))
}

/// `μ_z` of the convolved current, with a doubled-resolution convergence check.
pub fn magnetic_moment(model: &ProtonModel, wf: &OamWavefunction, quadrature: &QuadratureParams) -> Result<MomentResult> {
    model.validate()?;
    if !(wf.waist > 0.0) {
        return Err(Error::domain("waist must be positive"));
    }
    let mu_n = model.nuclear_magneton();
    if wf.l == 0 {
        return Ok(MomentResult {
            mu_over_mu_n: 0.0,
            mu: 0.0,
            convergence_defect: 0.0,
            radial_points: 0,
            density_points: 0,
            angular_points: 0,
        });
    }
    let sign = wf.l.signum() as f64;
    let n_abs = wf.l.unsigned_abs() as f64;
    let (coarse, ..) = reduced_moment(model, wf, quadrature)?;
    let (fine, nr, nrp, nth) = reduced_moment(model, wf, &quadrature.doubled())?;
    let defect = ((fine - coarse) / fine).abs();
    if !(defect < quadrature.tolerance) {
        return Err(Error::Resolution(format!(
            "doubling the quadrature changed μ by {:.3e} (tolerance {:.1e})",
            defect, quadrature.tolerance
        )));
    }
    let reduced = sign * n_abs * fine;
    Ok(MomentResult {
        mu_over_mu_n: reduced,
        mu: reduced * mu_n,
        convergence_defect: defect,
        radial_points: nr,
        density_points: nrp,
        angular_points: nth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub waist: f64,
    pub waist_over_rms: f64,
    pub result: MomentResult,
}

pub fn moment_vs_waist_sweep(
    model: &ProtonModel,
    l: i32,
    waists: &[f64],
    quadrature: &QuadratureParams,
) -> Result<Vec<SweepPoint>> {
    if waists.is_empty() {
        return Err(Error::domain("empty waist list"));
    }
    if waists.windows(2).any(|w| !(w[1] > w[0])) || !(waists[0] > 0.0) {
        return Err(Error::domain("waists must be positive and increasing"));
    }
    waists
        .iter()
        .map(|&w| {
            let wf = OamWavefunction::new(l, w)?;
            Ok(SweepPoint {
                waist: w,
                waist_over_rms: w / model.rms_charge_radius,
                result: magnetic_moment(model, &wf, quadrature)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_reference_values() {
        // Abramowitz & Stegun table 9.8: e^x K1(x)
        assert!((bessel_k1(1.0) - 0.601_907_230_197_234_6).abs() < 1e-12);
        assert!((bessel_k1(0.1) - 9.853_844_780_870_606).abs() < 1e-10);
        assert!((bessel_k1(5.0) * 5f64.exp() - 0.600_273_858_788_312_4).abs() < 1e-12);
    }

    #[test]
    fn densities_are_normalized() {
        for profile in [DensityProfile::Exponential, DensityProfile::Gaussian] {
            let m = ProtonModel {
                density_profile: profile,
                ..ProtonModel::default()
            };
            let rc = m.density_cutoff();
            let n = 20000;
            let h = rc / n as f64;
            let w = simpson(n, h);
            let s: f64 = (0..=n).map(|i| w[i] * m.projected_density(i as f64 * h) * 2.0 * PI * i as f64 * h).sum();
            assert!((s - 1.0).abs() < 1e-8, "{profile:?}: {s}");
        }
        let wf = OamWavefunction::new(3, 2e-15).unwrap();
        let n = 4000;
        let h = 20e-15 / n as f64;
        let w = simpson(n, h);
        let s: f64 = (0..=n).map(|i| w[i] * wf.density(i as f64 * h) * 2.0 * PI * i as f64 * h).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn point_particle_is_exact() {
        let m = ProtonModel {
            density_profile: DensityProfile::Point,
            ..ProtonModel::default()
        };
        for l in [1, 2, -3] {
            let r = magnetic_moment(&m, &OamWavefunction::new(l, 1e-15).unwrap(), &QuadratureParams::default()).unwrap();
            assert!((r.mu_over_mu_n - l as f64).abs() < 1e-5, "{l}: {}", r.mu_over_mu_n);
        }
    }

    #[test]
    fn antisymmetric_and_zero() {
        let m = ProtonModel::default();
        let q = QuadratureParams::default();
        let w = 2.0 * m.rms_charge_radius;
        let p = magnetic_moment(&m, &OamWavefunction::new(1, w).unwrap(), &q).unwrap();
        let n = magnetic_moment(&m, &OamWavefunction::new(-1, w).unwrap(), &q).unwrap();
        assert_eq!(p.mu_over_mu_n, -n.mu_over_mu_n);
        assert_eq!(magnetic_moment(&m, &OamWavefunction::new(0, w).unwrap(), &q).unwrap().mu_over_mu_n, 0.0);
    }

    #[test]
    fn scale_collapse() {
        let q = QuadratureParams::default();
        let a = ProtonModel::default();
        let b = ProtonModel {
            rms_charge_radius: 3.0 * a.rms_charge_radius,
            ..a
        };
        let ra = magnetic_moment(&a, &OamWavefunction::new(2, 3.0 * a.rms_charge_radius).unwrap(), &q).unwrap();
        let rb = magnetic_moment(&b, &OamWavefunction::new(2, 3.0 * b.rms_charge_radius).unwrap(), &q).unwrap();
        assert!((ra.mu_over_mu_n - rb.mu_over_mu_n).abs() < 1e-9);
    }

    #[test]
    fn resolution_cap_is_reported() {
        let q = QuadratureParams {
            max_points: 50,
            ..QuadratureParams::default()
        };
        let m = ProtonModel::default();
        let r = magnetic_moment(&m, &OamWavefunction::new(1, 100.0 * m.rms_charge_radius).unwrap(), &q);
        assert!(matches!(r, Err(Error::Resolution(_))));
    }

    #[test]
    fn sweep_validates_order() {
        let m = ProtonModel::default();
        let q = QuadratureParams::default();
        assert!(moment_vs_waist_sweep(&m, 1, &[2e-15, 1e-15], &q).is_err());
        let s = moment_vs_waist_sweep(&m, 0, &[1e-15, 2e-15], &q).unwrap();
        assert!(s.iter().all(|p| p.result.mu_over_mu_n == 0.0));
    }
}
