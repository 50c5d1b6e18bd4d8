//! Observables: OAM spectra, topological charge, helicity, fringe period,
//! oscillation fits and delay scans.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bessel::sideband_truncation;
use crate::error::{Error, Result};
use crate::grid::{bilinear, ComplexField, Grid2D, RealField};
use crate::nearfield::{superpose_two_pulses, EnvelopeMode, InteractionField, PulsePair};
use crate::optics::{IncidentLight, PolarizationState};
use crate::pinem::{build_sidebands, depletion_map, energy_filtered_map, Channels, IncidentWavefunction};

/// Azimuthal samples per circle.
pub const AZIMUTHAL_SAMPLES: usize = 512;
/// Loop modulus threshold relative to the field maximum.
pub const LOOP_THRESHOLD: f64 = 1e-3;

/// Anything that can be evaluated at a physical point.
pub trait FieldSampler: Sync {
    fn sample(&self, x: f64, y: f64) -> Option<Complex64>;
}

/// Bilinear sampling of a gridded field.
pub struct GridSampler<'a> {
    pub field: &'a ComplexField,
    pub grid: &'a Grid2D,
}

impl FieldSampler for GridSampler<'_> {
    fn sample(&self, x: f64, y: f64) -> Option<Complex64> {
        bilinear(self.field, self.grid, x, y)
    }
}

/// Exact sampling of an analytic field.
pub struct FnSampler<F>(pub F);

impl<F: Fn(f64, f64) -> Complex64 + Sync> FieldSampler for FnSampler<F> {
    fn sample(&self, x: f64, y: f64) -> Option<Complex64> {
        Some((self.0)(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialWeight {
    /// `inner ≤ R ≤ outer`, metres.
    Annulus { inner: f64, outer: f64 },
    /// `0 ≤ R ≤` largest circle on the grid.
    Full,
}

impl RadialWeight {
    /// Radii `k·dr` inside the range, `dr = min(dx, dy)`.
    pub fn radii(&self, grid: &Grid2D) -> Result<Vec<f64>> {
        let dr = grid.dx().min(grid.dy());
        let r_cap = grid.max_inscribed_radius();
        let (lo, hi) = match *self {
            RadialWeight::Full => (0.0, r_cap),
            RadialWeight::Annulus { inner, outer } => {
                if !(inner >= 0.0 && outer > inner) {
                    return Err(Error::domain(format!("annulus [{inner:e}, {outer:e}] m is empty")));
                }
                if outer > r_cap {
                    return Err(Error::domain(format!(
                        "annulus outer radius {outer:e} m exceeds the grid ({r_cap:e} m)"
                    )));
                }
                (inner, outer)
            }
        };
        let k0 = (lo / dr).ceil() as usize;
        let k1 = (hi / dr + 1e-9).floor() as usize;
        let radii: Vec<f64> = (k0..=k1).map(|k| k as f64 * dr).collect();
        if radii.len() < 2 {
            return Err(Error::domain("radial range holds fewer than two sample radii"));
        }
        Ok(radii)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OamSpectrum {
    /// Normalised powers `P_m`, `Σ P_m = 1`.
    pub coefficients: BTreeMap<i32, f64>,
    /// Unnormalised `Σ_m ∫|c_m|² R dR`.
    pub total_power: f64,
    pub radii: Vec<f64>,
}

impl OamSpectrum {
    pub fn power(&self, m: i32) -> f64 {
        self.coefficients.get(&m).copied().unwrap_or(0.0)
    }

    /// Order with the largest power.
    pub fn dominant(&self) -> i32 {
        self.coefficients
            .iter()
            .fold((0, f64::MIN), |acc, (&m, &p)| if p > acc.1 { (m, p) } else { acc })
            .0
    }
}

/// `P_m ∝ ∫ |c_m(R)|² R dR`, `c_m(R) = (1/2π)∮ f(R, φ) e^{−imφ} dφ`, about `center`.
pub fn oam_spectrum_sampled<S: FieldSampler>(sampler: &S, center: (f64, f64), radii: &[f64]) -> Result<OamSpectrum> {
    if radii.len() < 2 {
        return Err(Error::domain("need at least two radii"));
    }
    let n = AZIMUTHAL_SAMPLES;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let trig: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / n as f64;
            (phi.cos(), phi.sin())
        })
        .collect();
    let rings: Vec<Vec<f64>> = radii
        .par_iter()
        .map(|&r| -> Result<Vec<f64>> {
            let mut buf: Vec<Complex64> = trig
                .iter()
                .map(|&(c, s)| {
                    sampler
                        .sample(center.0 + r * c, center.1 + r * s)
                        .ok_or_else(|| Error::domain(format!("circle of radius {r:e} m leaves the grid")))
                })
                .collect::<Result<_>>()?;
            fft.process(&mut buf);
            let norm = 1.0 / n as f64;
            Ok(buf.iter().map(|c| (c * norm).norm_sqr()).collect())
        })
        .collect::<Result<_>>()?;

    // trapezoid in R of |c_m|²·R
    let mut power = vec![0.0; n];
    for w in 0..radii.len() - 1 {
        let h = 0.5 * (radii[w + 1] - radii[w]);
        for (m, p) in power.iter_mut().enumerate() {
            *p += h * (rings[w][m] * radii[w] + rings[w + 1][m] * radii[w + 1]);
        }
    }
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("field is zero on every sampled circle"));
    }
    let coefficients = power
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let m = if k < n / 2 { k as i32 } else { k as i32 - n as i32 };
            (m, p / total)
        })
        .collect();
    Ok(OamSpectrum {
        coefficients,
        total_power: total,
        radii: radii.to_vec(),
    })
}

/// OAM spectrum of a gridded field about the grid origin.
pub fn oam_spectrum(field: &ComplexField, grid: &Grid2D, weight: RadialWeight) -> Result<OamSpectrum> {
    grid.check_field(field, "field")?;
    if field.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::domain("field is identically zero"));
    }
    let radii = weight.radii(grid)?;
    oam_spectrum_sampled(&GridSampler { field, grid }, (0.0, 0.0), &radii)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologicalCharge {
    pub charge: i32,
    /// Accumulated phase / 2π before rounding.
    pub winding: f64,
    /// `|winding − charge|`.
    pub residual: f64,
}

/// Winding number of the phase on a circle of radius `loop_radius` about the origin.
pub fn topological_charge(field: &ComplexField, grid: &Grid2D, loop_radius: f64) -> Result<TopologicalCharge> {
    grid.check_field(field, "field")?;
    let peak = field.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let sampler = GridSampler { field, grid };
    topological_charge_sampled(&sampler, (0.0, 0.0), loop_radius, LOOP_THRESHOLD * peak)
}

pub fn topological_charge_sampled<S: FieldSampler>(
    sampler: &S,
    center: (f64, f64),
    loop_radius: f64,
    floor: f64,
) -> Result<TopologicalCharge> {
    if !(loop_radius > 0.0) {
        return Err(Error::domain("loop radius must be positive"));
    }
    let n = AZIMUTHAL_SAMPLES;
    let mut phases = Vec::with_capacity(n);
    for j in 0..n {
        let phi = 2.0 * PI * j as f64 / n as f64;
        let v = sampler
            .sample(center.0 + loop_radius * phi.cos(), center.1 + loop_radius * phi.sin())
            .ok_or_else(|| Error::domain(format!("loop of radius {loop_radius:e} m leaves the grid")))?;
        if !(v.norm() > floor) {
            return Err(Error::UnreliableLoop(format!(
                "|field| = {:e} at φ = {phi:.4} is below the threshold {floor:e}",
                v.norm()
            )));
        }
        phases.push(v.arg());
    }
    let mut total = 0.0;
    for j in 0..n {
        let d = phases[(j + 1) % n] - phases[j];
        total += d - 2.0 * PI * (d / (2.0 * PI)).round();
    }
    let winding = total / (2.0 * PI);
    let charge = winding.round() as i32;
    Ok(TopologicalCharge {
        charge,
        winding,
        residual: (winding - charge as f64).abs(),
    })
}

/// `h = (P₊₁ − P₋₁)/(P₊₁ + P₋₁)` of `β` over an annulus.
pub fn helicity_of_field(beta: &InteractionField, inner: f64, outer: f64) -> Result<f64> {
    let s = oam_spectrum(&beta.values, &beta.grid, RadialWeight::Annulus { inner, outer })
        .map_err(|e| match e {
            Error::Domain(msg) if msg.contains("zero") => Error::DegenerateHelicity,
            other => other,
        })?;
    helicity_from_spectrum(&s)
}

pub fn helicity_from_spectrum(s: &OamSpectrum) -> Result<f64> {
    let (p, m) = (s.power(1), s.power(-1));
    if !(p + m > 1e-14) {
        return Err(Error::DegenerateHelicity);
    }
    Ok((p - m) / (p + m))
}

/// Ray from a centre point used to sample fringes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialCut {
    pub angle: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub center: (f64, f64),
}

/// Median spacing of successive maxima of `map` along `cut`, sampled every
/// `min(dx, dy)` with parabolic sub-sample refinement.
pub fn fringe_period(map: &RealField, grid: &Grid2D, cut: &RadialCut) -> Result<f64> {
    grid.check_field(map, "intensity map")?;
    if !(cut.r_max > cut.r_min && cut.r_min >= 0.0) {
        return Err(Error::domain("radial cut is empty"));
    }
    let ds = grid.dx().min(grid.dy());
    let n = ((cut.r_max - cut.r_min) / ds).floor() as usize + 1;
    let (c, s) = (cut.angle.cos(), cut.angle.sin());
    let samples: Vec<f64> = (0..n)
        .map(|k| {
            let r = cut.r_min + k as f64 * ds;
            bilinear(map, grid, cut.center.0 + r * c, cut.center.1 + r * s)
                .ok_or_else(|| Error::domain(format!("radial cut leaves the grid at r = {r:e} m")))
        })
        .collect::<Result<_>>()?;
    let peaks = refined_maxima(&samples);
    if peaks.len() < 3 {
        return Err(Error::InsufficientFringes { found: peaks.len() });
    }
    let mut gaps: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) * ds).collect();
    Ok(median(&mut gaps))
}

/// Interior local maxima with sub-sample positions (in sample units).
pub fn refined_maxima(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..v.len().saturating_sub(1) {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            let denom = v[i - 1] - 2.0 * v[i] + v[i + 1];
            let shift = if denom < 0.0 { 0.5 * (v[i - 1] - v[i + 1]) / denom } else { 0.0 };
            out.push(i as f64 + shift.clamp(-0.5, 0.5));
        }
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `y ≈ a cos ωt + b sin ωt + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationFit {
    pub period: f64,
    pub amplitude: f64,
    /// `y ≈ amplitude·cos(ωt − phase) + offset`.
    pub phase: f64,
    pub offset: f64,
    pub rms_residual: f64,
}

fn linear_fit(t: &[f64], y: &[f64], omega: f64) -> Option<([f64; 3], f64)> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let row = [(omega * ti).cos(), (omega * ti).sin(), 1.0];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let x = solve3(ata, aty)?;
    let sse: f64 = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let r = yi - x[0] * (omega * ti).cos() - x[1] * (omega * ti).sin() - x[2];
            r * r
        })
        .sum();
    Some((x, sse))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least-squares sinusoid with period searched in `[period_min, period_max]`.
pub fn fit_oscillation(t: &[f64], y: &[f64], period_min: f64, period_max: f64) -> Result<OscillationFit> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::domain("oscillation fit needs at least four (t, y) pairs"));
    }
    if !(period_min > 0.0 && period_max > period_min) {
        return Err(Error::domain("invalid period search range"));
    }
    let (w_lo, w_hi) = (2.0 * PI / period_max, 2.0 * PI / period_min);
    let sse = |w: f64| linear_fit(t, y, w).map_or(f64::INFINITY, |r| r.1);
    let steps = 4000;
    let mut best = (w_lo, f64::INFINITY);
    for k in 0..=steps {
        let w = w_lo + (w_hi - w_lo) * k as f64 / steps as f64;
        let e = sse(w);
        if e < best.1 {
            best = (w, e);
        }
    }
    // golden-section refinement within one grid step
    let h = (w_hi - w_lo) / steps as f64;
    let (mut a, mut b) = ((best.0 - h).max(w_lo), (best.0 + h).min(w_hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sse(d);
        }
    }
    let omega = 0.5 * (a + b);
    let (x, e) = linear_fit(t, y, omega).ok_or_else(|| Error::Resolution("singular oscillation fit".into()))?;
    Ok(OscillationFit {
        period: 2.0 * PI / omega,
        amplitude: x[0].hypot(x[1]),
        phase: x[1].atan2(x[0]),
        offset: x[2],
        rms_residual: (e / t.len() as f64).sqrt(),
    })
}

/// Linearly interpolated zero crossings of `y(t)`.
pub fn zero_crossings(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..t.len().saturating_sub(1) {
        let (a, b) = (y[i], y[i + 1]);
        if a == 0.0 {
            if i == 0 || y[i - 1].signum() != b.signum() && y[i - 1] != 0.0 {
                out.push(t[i]);
            }
        } else if a * b < 0.0 {
            out.push(t[i] + (t[i + 1] - t[i]) * a / (a - b));
        }
    }
    out
}

/// Number of sign changes in each complete cycle `[t₀ + kT, t₀ + (k+1)T)`.
pub fn sign_changes_per_cycle(t: &[f64], y: &[f64], period: f64) -> Vec<usize> {
    if t.is_empty() || !(period > 0.0) {
        return Vec::new();
    }
    let t0 = t[0];
    let cycles = ((t[t.len() - 1] - t0) / period).floor() as usize;
    let crossings = zero_crossings(t, y);
    (0..cycles)
        .map(|k| {
            let (lo, hi) = (t0 + k as f64 * period, t0 + (k + 1) as f64 * period);
            crossings.iter().filter(|&&c| c >= lo && c < hi).count()
        })
        .collect()
}

/// Inputs for a two-pulse delay scan.
#[derive(Debug, Clone)]
pub struct ScanSetup {
    /// First-pulse field; must carry its synthesis model.
    pub field_1: InteractionField,
    pub light: IncidentLight,
    pub pol_2: PolarizationState,
    pub rel_amplitude_2: f64,
    pub envelope_fwhm: f64,
    pub envelope: EnvelopeMode,
    pub psi_inc: IncidentWavefunction,
    pub channels: Channels,
    /// Helicity annulus `(inner, outer)`, metres.
    pub helicity_annulus: (f64, f64),
    pub fringe_cut: RadialCut,
    /// Retain every energy-filtered map.
    pub keep_maps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    /// Seconds.
    pub delay: f64,
    /// `None` when `β` has no `m = ±1` weight on the annulus.
    pub helicity: Option<f64>,
    /// Metres; `None` when fewer than three fringes are found.
    pub fringe_period: Option<f64>,
    /// `Σ I·dA` of the energy-filtered map.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayScan {
    pub points: Vec<DelayPoint>,
    pub maps: Option<Vec<RealField>>,
}

impl DelayScan {
    pub fn delays(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delay).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.intensity).collect()
    }

    /// Helicity series, failing if any delay lacks one.
    pub fn helicities(&self) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                p.helicity.ok_or(Error::AtDelay {
                    delay_fs: p.delay * 1e15,
                    source: Box::new(Error::DegenerateHelicity),
                })
            })
            .collect()
    }
}

fn scan_point(setup: &ScanSetup, delay: f64) -> Result<(DelayPoint, RealField)> {
    let pulse = PulsePair {
        pol_1: setup.light.polarization(),
        pol_2: setup.pol_2,
        rel_amplitude_2: setup.rel_amplitude_2,
        delay,
        envelope_fwhm: setup.envelope_fwhm,
        envelope: setup.envelope,
    };
    let beta = superpose_two_pulses(&setup.field_1, &pulse, &setup.light)?;
    let l_max = sideband_truncation(beta.max_abs());
    let sidebands = build_sidebands(&setup.psi_inc, &beta, l_max)?;
    let map = energy_filtered_map(&sidebands, &setup.channels);
    let intensity = map.sum() * beta.grid.pixel_area();
    let (inner, outer) = setup.helicity_annulus;
    let helicity = match helicity_of_field(&beta, inner, outer) {
        Ok(h) => Some(h),
        Err(Error::DegenerateHelicity) => None,
        Err(e) => return Err(e),
    };
    let fringe = match fringe_period(&depletion_map(&beta), &beta.grid, &setup.fringe_cut) {
        Ok(p) => Some(p),
        Err(Error::InsufficientFringes { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok((
        DelayPoint {
            delay,
            helicity,
            fringe_period: fringe,
            intensity,
        },
        map,
    ))
}

/// Evaluates every delay independently (in parallel) and returns them in input
/// order. The first failing delay, in input order, is reported.
pub fn run_delay_scan(setup: &ScanSetup, delays: &[f64]) -> Result<DelayScan> {
    if delays.is_empty() {
        return Err(Error::domain("no delays"));
    }
    if delays.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("delays must be strictly increasing"));
    }
    let results: Vec<Result<(DelayPoint, RealField)>> = delays.par_iter().map(|&d| scan_point(setup, d)).collect();
    let mut points = Vec::with_capacity(delays.len());
    let mut maps = Vec::new();
    for (r, &d) in results.into_iter().zip(delays) {
        let (p, m) = r.map_err(|e| Error::AtDelay {
            delay_fs: d * 1e15,
            source: Box::new(e),
        })?;
        points.push(p);
        if setup.keep_maps {
            maps.push(m);
        }
    }
    Ok(DelayScan {
        points,
        maps: setup.keep_maps.then_some(maps),
    })
}

/// `delay_k = start + k·step` for every `delay_k ≤ end` (with a 1e-9 step slack).
pub fn delay_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::domain("delay step must be positive"));
    }
    if !(end >= start) {
        return Err(Error::domain("delay end precedes start"));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}
