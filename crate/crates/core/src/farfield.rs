//! Momentum-space intensity of the sideband wavefunctions.
//!
//! `Ψ_ℓ(k) = Σ_pixels ψ_ℓ(x) e^{−ik·x} dA` on a zero-padded grid, with the
//! transverse momentum axis `k = 2π/distance`. The pixel at the array centre
//! `(Nx/2, Ny/2)` is `k = 0`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid2D, RealField};
use crate::nearfield::HoleGeometry;
use crate::pinem::{Channels, IncidentWavefunction, SidebandSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Gaussian σ of the momentum broadening, 1/m.
    pub broadening_sigma: f64,
    /// Radius of the selecting aperture projected to the sample plane, m.
    pub aperture_radius: f64,
    /// Intensity transmissivity of the continuous film outside the hole.
    pub transmissivity: f64,
    /// Linear zero-padding factor applied before the transform.
    pub padding: usize,
    pub channels: Channels,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            broadening_sigma: 0.35e6,
            aperture_radius: 7.5e-6,
            transmissivity: 0.013,
            padding: 2,
            channels: Channels::Inelastic,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("broadening_sigma", self.broadening_sigma),
            ("aperture_radius", self.aperture_radius),
            ("transmissivity", self.transmissivity),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.transmissivity > 1.0 {
            return Err(Error::domain("film transmissivity cannot exceed 1"));
        }
        if self.padding < 1 {
            return Err(Error::domain("padding factor must be at least 1"));
        }
        Ok(())
    }

    /// Real-space amplitude transmission at distance `r` from the hole axis.
    pub fn transmission(&self, hole: &HoleGeometry, x: f64, y: f64) -> f64 {
        let r = (x - hole.center.0).hypot(y - hole.center.1);
        if r < hole.radius {
            1.0
        } else if r <= self.aperture_radius {
            self.transmissivity.sqrt()
        } else {
            0.0
        }
    }
}

/// Momentum-space map.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldMap {
    /// 1/m, length `Nx`; `kx[Nx/2] = 0`.
    pub kx: Vec<f64>,
    /// 1/m, length `Ny`; `ky[Ny/2] = 0`.
    pub ky: Vec<f64>,
    /// Broadened `I_F`, shape `(Ny, Nx)`.
    pub intensity: RealField,
    /// `I_F` before broadening.
    pub unbroadened: RealField,
    /// `Ψ_ℓ` for each included order when requested.
    pub channels: Option<Vec<(i32, ComplexField)>>,
    /// Share of the transmitted electron norm carried by `ℓ ≠ 0`.
    pub inelastic_fraction: f64,
    pub broadening_sigma: f64,
}

impl FarFieldMap {
    pub fn dkx(&self) -> f64 {
        self.kx[1] - self.kx[0]
    }

    pub fn dky(&self) -> f64 {
        self.ky[1] - self.ky[0]
    }

    pub fn center(&self) -> (usize, usize) {
        (self.ky.len() / 2, self.kx.len() / 2)
    }

    pub fn max(&self) -> f64 {
        self.intensity.iter().cloned().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.intensity.sum() * self.dkx() * self.dky()
    }

    /// `I_F(0)/max I_F` of the broadened map.
    pub fn center_contrast(&self) -> f64 {
        let m = self.max();
        if m == 0.0 {
            return 0.0;
        }
        self.intensity[self.center()] / m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileAxis {
    /// Along `k_x` at `k_y = 0`.
    Horizontal,
    /// Along `k_y` at `k_x = 0`.
    Vertical,
}

/// 2D transform on a padded `(ny, nx)` grid with the origin at index 0.
struct Fft2 {
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    nx: usize,
    ny: usize,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows: planner.plan_fft_forward(nx),
            cols: planner.plan_fft_forward(ny),
            nx,
            ny,
        }
    }

    fn forward(&self, data: &mut Array2<Complex64>) {
        debug_assert_eq!(data.dim(), (self.ny, self.nx));
        data.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
            self.rows.process(row.as_slice_mut().expect("row-major"));
        });
        let mut t = data.t().as_standard_layout().into_owned();
        t.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut col| {
            self.cols.process(col.as_slice_mut().expect("row-major"));
        });
        data.assign(&t.t());
    }
}

fn axis(n: usize, dk: f64) -> Vec<f64> {
    (0..n).map(|j| (j as f64 - (n / 2) as f64) * dk).collect()
}

/// Transforms one real-space field sampled on `grid` (origin at `(nx/2, ny/2)`)
/// and returns the centred `Ψ(k)`.
fn transform(fft: &Fft2, grid: &Grid2D, field: ArrayView2<'_, Complex64>, mask: &RealField) -> ComplexField {
    let (ny, nx) = grid.shape();
    let (big_ny, big_nx) = (fft.ny, fft.nx);
    let mut padded = Array2::<Complex64>::zeros((big_ny, big_nx));
    let da = grid.pixel_area();
    for iy in 0..ny {
        let py = (iy as isize - (ny / 2) as isize).rem_euclid(big_ny as isize) as usize;
        for ix in 0..nx {
            let px = (ix as isize - (nx / 2) as isize).rem_euclid(big_nx as isize) as usize;
            padded[[py, px]] = field[[iy, ix]] * (mask[[iy, ix]] * da);
        }
    }
    fft.forward(&mut padded);
    let mut out = Array2::<Complex64>::zeros((big_ny, big_nx));
    for qy in 0..big_ny {
        let jy = (qy + big_ny / 2) % big_ny;
        for qx in 0..big_nx {
            out[[jy, (qx + big_nx / 2) % big_nx]] = padded[[qy, qx]];
        }
    }
    out
}

/// Scatter-form 1D Gaussian blur: every source sample spreads a kernel
/// normalised over the in-range targets, so the sum is preserved exactly.
fn blur_axis(data: &mut RealField, sigma_px: f64, along: Axis) {
    if sigma_px <= 0.0 {
        return;
    }
    let radius = (5.0 * sigma_px).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-0.5 * (d as f64 / sigma_px).powi(2)).exp())
        .collect();
    let n = data.len_of(along) as isize;
    let mut lanes: Vec<Vec<f64>> = data.lanes(along).into_iter().map(|l| l.to_vec()).collect();
    lanes.par_iter_mut().for_each(|lane| {
        let mut out = vec![0.0; lane.len()];
        for (i, &v) in lane.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let i = i as isize;
            let lo = (i - radius).max(0);
            let hi = (i + radius).min(n - 1);
            let z: f64 = (lo..=hi).map(|j| kernel[(j - i + radius) as usize]).sum();
            let s = v / z;
            for j in lo..=hi {
                out[j as usize] += s * kernel[(j - i + radius) as usize];
            }
        }
        *lane = out;
    });
    for (mut dst, src) in data.lanes_mut(along).into_iter().zip(lanes) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s;
        }
    }
}

/// Circular Gaussian convolution with standard deviation `sigma` (1/m).
pub fn broaden(intensity: &RealField, dkx: f64, dky: f64, sigma: f64) -> RealField {
    let mut out = intensity.clone();
    blur_axis(&mut out, sigma / dkx, Axis(1));
    blur_axis(&mut out, sigma / dky, Axis(0));
    out
}

fn transmission_mask(grid: &Grid2D, detector: &DetectorModel, hole: &HoleGeometry) -> RealField {
    grid.map(|x, y| detector.transmission(hole, x, y))
}

fn far_field_impl(
    sidebands: &SidebandSet,
    detector: &DetectorModel,
    hole: &HoleGeometry,
    keep: bool,
) -> Result<FarFieldMap> {
    detector.validate()?;
    let grid = sidebands.grid;
    let mask = transmission_mask(&grid, detector, hole);
    let big_nx = grid.nx() * detector.padding;
    let big_ny = grid.ny() * detector.padding;
    let fft = Fft2::new(big_nx, big_ny);
    let dkx = 2.0 * PI / (big_nx as f64 * grid.dx());
    let dky = 2.0 * PI / (big_ny as f64 * grid.dy());

    let norms: Vec<(i32, f64)> = sidebands
        .orders()
        .map(|l| {
            let n: f64 = sidebands
                .channel(l)
                .iter()
                .zip(mask.iter())
                .map(|(v, m)| v.norm_sqr() * m * m)
                .sum();
            (l, n)
        })
        .collect();
    let total: f64 = norms.iter().map(|p| p.1).sum();
    let inelastic: f64 = norms.iter().filter(|p| p.0 != 0).map(|p| p.1).sum();

    let selected: Vec<i32> = norms
        .iter()
        .filter(|(l, n)| detector.channels.includes(*l) && *n > 0.0)
        .map(|p| p.0)
        .collect();
    let fields: Vec<(i32, ComplexField)> = selected
        .par_iter()
        .map(|&l| (l, transform(&fft, &grid, sidebands.channel(l), &mask)))
        .collect();

    // summed in ascending ℓ so the result does not depend on scheduling
    let mut unbroadened = RealField::zeros((big_ny, big_nx));
    for (_, f) in &fields {
        ndarray::Zip::from(&mut unbroadened).and(f).for_each(|o, v| *o += v.norm_sqr());
    }
    let intensity = broaden(&unbroadened, dkx, dky, detector.broadening_sigma);
    Ok(FarFieldMap {
        kx: axis(big_nx, dkx),
        ky: axis(big_ny, dky),
        intensity,
        unbroadened,
        channels: keep.then_some(fields),
        inelastic_fraction: if total > 0.0 { inelastic / total } else { 0.0 },
        broadening_sigma: detector.broadening_sigma,
    })
}

/// `I_F = Σ_ℓ |Ψ_ℓ|²` over `detector.channels`, after the aperture and film
/// mask, then broadened.
pub fn far_field(sidebands: &SidebandSet, detector: &DetectorModel, hole: &HoleGeometry) -> Result<FarFieldMap> {
    far_field_impl(sidebands, detector, hole, false)
}

/// As [`far_field`], also returning every `Ψ_ℓ`.
pub fn far_field_with_channels(
    sidebands: &SidebandSet,
    detector: &DetectorModel,
    hole: &HoleGeometry,
) -> Result<FarFieldMap> {
    far_field_impl(sidebands, detector, hole, true)
}

/// Far field of `ψ_inc·e^{ilφ}` inside the hole and `ψ_inc·sqrt(T)` on the film.
pub fn spiral_phase_plate_reference(
    l: i32,
    hole: &HoleGeometry,
    psi_inc: &IncidentWavefunction,
    detector: &DetectorModel,
) -> Result<FarFieldMap> {
    detector.validate()?;
    let grid = psi_inc.grid;
    let plate = grid.map(|x, y| {
        let (dx, dy) = (x - hole.center.0, y - hole.center.1);
        let r = dx.hypot(dy);
        if r >= hole.radius {
            return Complex64::new(1.0, 0.0);
        }
        if l == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let u = Complex64::new(dx / r, dy / r);
        if l > 0 {
            u.powi(l)
        } else {
            u.conj().powi(-l)
        }
    });
    let mask = transmission_mask(&grid, detector, hole);
    let field = &psi_inc.values * &plate;
    let big_nx = grid.nx() * detector.padding;
    let big_ny = grid.ny() * detector.padding;
    let fft = Fft2::new(big_nx, big_ny);
    let dkx = 2.0 * PI / (big_nx as f64 * grid.dx());
    let dky = 2.0 * PI / (big_ny as f64 * grid.dy());
    let psi = transform(&fft, &grid, field.view(), &mask);
    let unbroadened = psi.mapv(|v| v.norm_sqr());
    let intensity = broaden(&unbroadened, dkx, dky, detector.broadening_sigma);
    Ok(FarFieldMap {
        kx: axis(big_nx, dkx),
        ky: axis(big_ny, dky),
        intensity,
        unbroadened,
        channels: Some(vec![(l, psi)]),
        inelastic_fraction: 0.0,
        broadening_sigma: detector.broadening_sigma,
    })
}

/// Intensity through `k = 0` along `axis`, with its momentum coordinates.
pub fn line_profile(map: &FarFieldMap, axis: ProfileAxis) -> (Vec<f64>, Vec<f64>) {
    let (cy, cx) = map.center();
    match axis {
        ProfileAxis::Horizontal => (map.kx.clone(), map.intensity.row(cy).to_vec()),
        ProfileAxis::Vertical => (map.ky.clone(), map.intensity.column(cx).to_vec()),
    }
}

/// Local maxima reaching at least `min_rel_height` of the profile maximum.
pub fn count_peaks(profile: &[f64], min_rel_height: f64) -> usize {
    let peak = profile.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 || profile.len() < 3 {
        return 0;
    }
    let floor = min_rel_height * peak;
    let mut count = 0;
    let mut i = 1;
    while i + 1 < profile.len() {
        let v = profile[i];
        if v >= floor && v > profile[i - 1] {
            // walk across flat tops
            let mut j = i;
            while j + 1 < profile.len() && profile[j + 1] == v {
                j += 1;
            }
            if j + 1 < profile.len() && profile[j + 1] < v {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    count
}

/// Azimuthally averaged intensity in rings of width `min(dkx, dky)`; returns
/// the mean `|k|` and mean intensity of each non-empty ring.
pub fn radial_profile(map: &FarFieldMap) -> (Vec<f64>, Vec<f64>) {
    let dk = map.dkx().min(map.dky());
    let n_bins = (map.kx.last().unwrap().abs().min(map.ky.last().unwrap().abs()) / dk) as usize;
    let mut sum_k = vec![0.0; n_bins];
    let mut sum_i = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (iy, &ky) in map.ky.iter().enumerate() {
        for (ix, &kx) in map.kx.iter().enumerate() {
            let k = kx.hypot(ky);
            let b = (k / dk + 0.5) as usize;
            if b < n_bins {
                sum_k[b] += k;
                sum_i[b] += map.intensity[[iy, ix]];
                count[b] += 1;
            }
        }
    }
    let mut ks = Vec::new();
    let mut is = Vec::new();
    for b in 0..n_bins {
        if count[b] > 0 {
            ks.push(sum_k[b] / count[b] as f64);
            is.push(sum_i[b] / count[b] as f64);
        }
    }
    (ks, is)
}

/// Radius of the brightest ring of the radial profile, refined by a parabola
/// through the maximum and its two neighbours.
pub fn peak_radius(map: &FarFieldMap) -> f64 {
    let (k, v) = radial_profile(map);
    let i = v
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0;
    if i == 0 || i + 1 >= v.len() {
        return k[i];
    }
    let (x0, x1, x2) = (k[i - 1], k[i], k[i + 1]);
    let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
    // vertex of the interpolating parabola through three unevenly spaced points
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curv = (d1 - d0) / (x2 - x0);
    if curv >= 0.0 {
        return x1;
    }
    let vertex = 0.5 * (x0 + x1) - d0 / (2.0 * curv);
    vertex.clamp(x0, x2)
}
