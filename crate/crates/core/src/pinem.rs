//! Inelastic sideband model: `ψ_ℓ = ψ_inc · J_ℓ(2|β|) · e^{iℓ arg(−β)}`.

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j_orders_into;
use crate::error::{Error, Result};
use crate::grid::{bilinear, ComplexField, Grid2D, RealField};
use crate::nearfield::InteractionField;

/// Transverse electron wavefunction before the interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentWavefunction {
    pub grid: Grid2D,
    pub values: ComplexField,
}

impl IncidentWavefunction {
    /// Real Gaussian with `|ψ|² ∝ exp(−2R²/w²)`, normalised so that
    /// `Σ|ψ|²·dA = 1` on the grid.
    pub fn gaussian(grid: Grid2D, waist: f64, center: (f64, f64)) -> Result<Self> {
        if !(waist > 0.0) || !waist.is_finite() {
            return Err(Error::domain("coherence width must be positive"));
        }
        let inv_w2 = 1.0 / (waist * waist);
        let values = grid.map(|x, y| {
            let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
            Complex64::new((-r2 * inv_w2).exp(), 0.0)
        });
        Self::normalized(grid, values)
    }

    /// Constant amplitude over the whole grid (plane-wave illumination).
    pub fn uniform(grid: Grid2D) -> Self {
        let v = (1.0 / (grid.pixel_area() * (grid.nx() * grid.ny()) as f64)).sqrt();
        Self {
            grid,
            values: Array2::from_elem(grid.shape(), Complex64::new(v, 0.0)),
        }
    }

    pub fn normalized(grid: Grid2D, mut values: ComplexField) -> Result<Self> {
        grid.check_field(&values, "incident wavefunction")?;
        let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.pixel_area();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::domain("incident wavefunction has zero or non-finite norm"));
        }
        let s = 1.0 / norm.sqrt();
        values.mapv_inplace(|v| v * s);
        Ok(Self { grid, values })
    }

    pub fn intensity(&self) -> RealField {
        self.values.mapv(|v| v.norm_sqr())
    }
}

/// Which sideband orders an image integrates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channels {
    All,
    /// Every `ℓ ≠ 0`.
    #[default]
    Inelastic,
    Orders(Vec<i32>),
}

impl Channels {
    pub fn includes(&self, l: i32) -> bool {
        match self {
            Channels::All => true,
            Channels::Inelastic => l != 0,
            Channels::Orders(v) => v.contains(&l),
        }
    }
}

/// Sideband wavefunctions `ψ_ℓ` for `ℓ ∈ [−l_max, l_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SidebandSet {
    pub grid: Grid2D,
    l_max: usize,
    /// Shape `(2 l_max + 1, ny, nx)`; plane `ℓ + l_max` holds `ψ_ℓ`.
    fields: Array3<Complex64>,
}

impl SidebandSet {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn orders(&self) -> impl Iterator<Item = i32> + '_ {
        let l = self.l_max as i32;
        -l..=l
    }

    /// `ψ_ℓ`; panics when `|ℓ| > l_max`.
    pub fn channel(&self, l: i32) -> ArrayView2<'_, Complex64> {
        assert!(l.unsigned_abs() as usize <= self.l_max, "order {l} beyond l_max {}", self.l_max);
        self.fields.index_axis(Axis(0), (l + self.l_max as i32) as usize)
    }

    pub fn try_channel(&self, l: i32) -> Option<ArrayView2<'_, Complex64>> {
        (l.unsigned_abs() as usize <= self.l_max).then(|| self.channel(l))
    }

    /// `Σ_pixels |ψ_ℓ|²·dA`.
    pub fn channel_norm(&self, l: i32) -> f64 {
        self.channel(l).iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.pixel_area()
    }

    /// `Σ_ℓ Σ_pixels |ψ_ℓ|²·dA`.
    pub fn total_norm(&self) -> f64 {
        self.orders().map(|l| self.channel_norm(l)).sum()
    }
}

/// Builds `ψ_ℓ` on the grid of `beta`.
///
/// Pixels with `β = 0` get `ψ₀ = ψ_inc` and `ψ_{ℓ≠0} = 0`, so the undefined
/// phase is never evaluated.
pub fn build_sidebands(
    psi_inc: &IncidentWavefunction,
    beta: &InteractionField,
    l_max: usize,
) -> Result<SidebandSet> {
    if l_max < 1 {
        return Err(Error::domain("l_max must be at least 1"));
    }
    psi_inc.grid.ensure_same(&beta.grid, "incident wavefunction vs interaction field")?;
    psi_inc.grid.check_field(&psi_inc.values, "incident wavefunction")?;
    beta.grid.check_field(&beta.values, "interaction field")?;
    let (ny, nx) = beta.grid.shape();
    let n_orders = 2 * l_max + 1;
    let mut fields = Array3::<Complex64>::zeros((n_orders, ny, nx));
    let zero = Complex64::new(0.0, 0.0);
    Zip::from(fields.lanes_mut(Axis(0)))
        .and(&psi_inc.values)
        .and(&beta.values)
        .par_for_each(|mut lane, &psi, &b| {
            let modulus = b.norm();
            if modulus == 0.0 {
                lane.fill(zero);
                lane[l_max] = psi;
                return;
            }
            let mut j = [0.0f64; 64];
            let mut heap;
            let js: &mut [f64] = if l_max < 64 {
                &mut j[..=l_max]
            } else {
                heap = vec![0.0; l_max + 1];
                &mut heap
            };
            bessel_j_orders_into(2.0 * modulus, js);
            let u = -b / modulus;
            let uc = u.conj();
            lane[l_max] = psi * js[0];
            let mut up = Complex64::new(1.0, 0.0);
            let mut dn = Complex64::new(1.0, 0.0);
            for l in 1..=l_max {
                up *= u;
                dn *= uc;
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                lane[l_max + l] = psi * up * js[l];
                lane[l_max - l] = psi * dn * (sign * js[l]);
            }
        });
    Ok(SidebandSet {
        grid: beta.grid,
        l_max,
        fields,
    })
}

/// `I(x, y) = Σ_{ℓ ∈ channels} |ψ_ℓ|²`.
pub fn energy_filtered_map(sidebands: &SidebandSet, channels: &Channels) -> RealField {
    let mut out = RealField::zeros(sidebands.grid.shape());
    for l in sidebands.orders().filter(|&l| channels.includes(l)) {
        Zip::from(&mut out)
            .and(&sidebands.channel(l))
            .par_for_each(|o, v| *o += v.norm_sqr());
    }
    out
}

/// `|ψ_inc|²·(1 − J₀(2|β|)²)`, the all-`ℓ≠0` map without truncation.
pub fn energy_filtered_closed_form(psi_inc: &IncidentWavefunction, beta: &InteractionField) -> Result<RealField> {
    psi_inc.grid.ensure_same(&beta.grid, "incident wavefunction vs interaction field")?;
    let mut out = RealField::zeros(beta.grid.shape());
    Zip::from(&mut out)
        .and(&psi_inc.values)
        .and(&beta.values)
        .par_for_each(|o, psi, b| *o = psi.norm_sqr() * one_minus_j0_sq(2.0 * b.norm()));
    Ok(out)
}

/// Zero-loss depletion `1 − J₀(2|β|)²`, independent of the electron envelope.
pub fn depletion_map(beta: &InteractionField) -> RealField {
    let mut out = RealField::zeros(beta.grid.shape());
    Zip::from(&mut out)
        .and(&beta.values)
        .par_for_each(|o, b| *o = one_minus_j0_sq(2.0 * b.norm()));
    out
}

fn one_minus_j0_sq(u: f64) -> f64 {
    let mut j = [0.0; 1];
    bessel_j_orders_into(u, &mut j);
    // (1 − J₀)(1 + J₀) keeps relative precision when J₀ ≈ 1
    (1.0 - j[0]) * (1.0 + j[0])
}

/// Straight cut through the hole centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineCut {
    /// Direction from x̂, radians.
    pub angle: f64,
    /// Metres on each side of the centre.
    pub half_length: f64,
    pub center: (f64, f64),
}

/// `M(s, ℓ) = |ψ_ℓ(x(s), y(s))|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceEnergyMap {
    /// Signed position along the cut, metres; contains 0 exactly.
    pub positions: Vec<f64>,
    pub orders: Vec<i32>,
    /// Shape `(positions, orders)`.
    pub values: Array2<f64>,
}

impl SpaceEnergyMap {
    pub fn column(&self, l: i32) -> Option<ndarray::ArrayView1<'_, f64>> {
        let k = self.orders.iter().position(|&o| o == l)?;
        Some(self.values.column(k))
    }

    /// Distance from the centre to the first sample, on the positive side, where
    /// `M(s, ℓ)` reaches half of its maximum over the cut.
    pub fn dark_region_halfwidth(&self, l: i32) -> Option<f64> {
        let col = self.column(l)?;
        let peak = col.iter().cloned().fold(0.0_f64, f64::max);
        if peak <= 0.0 {
            return None;
        }
        let c = self.positions.iter().position(|&s| s == 0.0)?;
        (c..self.positions.len())
            .find(|&i| col[i] >= 0.5 * peak)
            .map(|i| self.positions[i])
    }
}

/// Samples every sideband intensity along `cut`, bilinearly, with step
/// `min(dx, dy)`.
pub fn space_energy_map(sidebands: &SidebandSet, cut: &LineCut) -> Result<SpaceEnergyMap> {
    let grid = &sidebands.grid;
    if !(cut.half_length > 0.0) {
        return Err(Error::domain("cut half-length must be positive"));
    }
    let (c, s) = (cut.angle.cos(), cut.angle.sin());
    for sign in [-1.0, 1.0] {
        let (x, y) = (cut.center.0 + sign * cut.half_length * c, cut.center.1 + sign * cut.half_length * s);
        if !grid.contains(x, y) {
            return Err(Error::domain(format!(
                "cut endpoint ({x:e}, {y:e}) m lies outside the grid"
            )));
        }
    }
    let step = grid.dx().min(grid.dy());
    let n = (cut.half_length / step).floor() as i64;
    let positions: Vec<f64> = (-n..=n).map(|k| k as f64 * step).collect();
    let orders: Vec<i32> = sidebands.orders().collect();
    let mut values = Array2::<f64>::zeros((positions.len(), orders.len()));
    Zip::from(values.axis_iter_mut(Axis(1)))
        .and(&ndarray::ArrayView1::from(&orders))
        .par_for_each(|mut col, &l| {
            let intensity = sidebands.channel(l).mapv(|v| v.norm_sqr());
            for (i, &p) in positions.iter().enumerate() {
                let (x, y) = (cut.center.0 + p * c, cut.center.1 + p * s);
                col[i] = bilinear(&intensity, grid, x, y).unwrap_or(0.0);
            }
        });
    Ok(SpaceEnergyMap {
        positions,
        orders,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::{bessel_j, sideband_truncation, J0_FIRST_ZERO};

    fn grid() -> Grid2D {
        Grid2D::square(64, 2e-6).unwrap()
    }

    fn uniform_beta(g: Grid2D, b: Complex64) -> InteractionField {
        InteractionField::from_values(g, Array2::from_elem(g.shape(), b)).unwrap()
    }

    fn chiral_beta(g: Grid2D, sigma: f64, amp: f64) -> InteractionField {
        let v = g.map(|x, y| {
            let r = x.hypot(y);
            if r == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(x / r, sigma * y / r) * amp * (1.0 - (-r * r / 0.2e-12).exp())
            }
        });
        InteractionField::from_values(g, v).unwrap()
    }

    #[test]
    fn gaussian_is_normalized() {
        let g = grid();
        let psi = IncidentWavefunction::gaussian(g, 0.85e-6, (0.0, 0.0)).unwrap();
        let n: f64 = psi.intensity().sum() * g.pixel_area();
        assert!((n - 1.0).abs() < 1e-12);
        let u = IncidentWavefunction::uniform(g);
        assert!((u.intensity().sum() * g.pixel_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_passes_through() {
        let g = grid();
        let psi = IncidentWavefunction::gaussian(g, 0.85e-6, (0.0, 0.0)).unwrap();
        let s = build_sidebands(&psi, &uniform_beta(g, Complex64::new(0.0, 0.0)), 3).unwrap();
        assert_eq!(s.channel(0), psi.values.view());
        for l in [-3, -1, 1, 2, 3] {
            assert!(s.channel(l).iter().all(|v| v.norm() == 0.0));
        }
        assert!(energy_filtered_map(&s, &Channels::Inelastic).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_half_beta_first_sideband() {
        let g = grid();
        let psi = IncidentWavefunction::uniform(g);
        let s = build_sidebands(&psi, &uniform_beta(g, Complex64::new(0.3, 0.4)), 8).unwrap();
        // J₁(1)² from the power series, 0.19364451...
        let j1 = 0.440_050_585_744_933_5_f64;
        for (p, v) in psi.values.iter().zip(s.channel(1).iter()) {
            assert!((v.norm_sqr() / p.norm_sqr() - j1 * j1).abs() < 1e-14);
        }
    }

    #[test]
    fn complete_depletion_at_first_j0_zero() {
        let g = grid();
        let psi = IncidentWavefunction::gaussian(g, 0.85e-6, (0.0, 0.0)).unwrap();
        let beta = uniform_beta(g, Complex64::new(0.0, J0_FIRST_ZERO / 2.0));
        let closed = energy_filtered_closed_form(&psi, &beta).unwrap();
        for (c, p) in closed.iter().zip(psi.intensity().iter()) {
            assert!((c - p).abs() <= 1e-15 * p.max(1e-300) + 1e-30);
        }
        assert!(depletion_map(&beta).iter().all(|&d| (d - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sideband_sum_matches_closed_form() {
        let g = grid();
        let psi = IncidentWavefunction::gaussian(g, 0.85e-6, (0.0, 0.0)).unwrap();
        let beta = chiral_beta(g, 1.0, 1.2);
        let s = build_sidebands(&psi, &beta, sideband_truncation(beta.max_abs())).unwrap();
        let a = energy_filtered_map(&s, &Channels::Inelastic);
        let b = energy_filtered_closed_form(&psi, &beta).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-9 * y.abs() + 1e-300);
        }
        assert!((s.total_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gauge_and_conjugation() {
        let g = grid();
        let psi = IncidentWavefunction::gaussian(g, 0.85e-6, (0.0, 0.0)).unwrap();
        let beta = chiral_beta(g, 1.0, 0.8);
        let theta = 0.77;
        let rot = Complex64::from_polar(1.0, theta);
        let rotated = InteractionField::from_values(g, beta.values.mapv(|v| v * rot)).unwrap();
        let conj = InteractionField::from_values(g, beta.values.mapv(|v| v.conj())).unwrap();
        let s0 = build_sidebands(&psi, &beta, 6).unwrap();
        let s1 = build_sidebands(&psi, &rotated, 6).unwrap();
        let s2 = build_sidebands(&psi, &conj, 6).unwrap();
        let tol = 1e-14 * psi.values.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        for l in -6..=6 {
            let phase = Complex64::from_polar(1.0, l as f64 * theta);
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            let mirror = s0.channel(-l);
            for ((a, b), (c, m)) in s0.channel(l).iter().zip(s1.channel(l).iter()).zip(s2.channel(l).iter().zip(mirror.iter())) {
                assert!((*a * phase - *b).norm() < tol);
                // real ψ_inc: ψ_ℓ[β*] = ψ_ℓ[β]* = (−1)^ℓ ψ_{−ℓ}[β]
                assert!((a.conj() - *c).norm() < tol);
                assert!((*m * sign - *c).norm() < tol);
                assert!((m.norm() - c.norm()).abs() < tol);
            }
        }
        let m0 = energy_filtered_map(&s0, &Channels::Inelastic);
        let m2 = energy_filtered_map(&s2, &Channels::Inelastic);
        for (a, b) in m0.iter().zip(m2.iter()) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn phase_convention_matches_formula() {
        let g = grid();
        let psi = IncidentWavefunction::uniform(g);
        let b = Complex64::new(-0.2, 0.5);
        let s = build_sidebands(&psi, &uniform_beta(g, b), 4).unwrap();
        let p = psi.values[[0, 0]];
        for l in -4..=4 {
            let expected = p * bessel_j(l, 2.0 * b.norm()) * Complex64::from_polar(1.0, l as f64 * (-b).arg());
            assert!((s.channel(l)[[3, 5]] - expected).norm() < 1e-14 * p.norm());
        }
    }

    #[test]
    fn errors() {
        let g = grid();
        let psi = IncidentWavefunction::uniform(g);
        let beta = uniform_beta(g, Complex64::new(0.1, 0.0));
        assert!(build_sidebands(&psi, &beta, 0).is_err());
        let other = uniform_beta(Grid2D::square(32, 2e-6).unwrap(), Complex64::new(0.1, 0.0));
        assert!(matches!(build_sidebands(&psi, &other, 2), Err(Error::Shape(_))));
        let s = build_sidebands(&psi, &beta, 2).unwrap();
        let far = LineCut { angle: 0.0, half_length: 3e-6, center: (0.0, 0.0) };
        assert!(space_energy_map(&s, &far).is_err());
    }

    #[test]
    fn space_energy_dark_region_widens() {
        let g = Grid2D::square(128, 2e-6).unwrap();
        let psi = IncidentWavefunction::uniform(g);
        let beta = chiral_beta(g, 1.0, 0.9);
        let s = build_sidebands(&psi, &beta, 8).unwrap();
        let cut = LineCut { angle: 0.3, half_length: 1.5e-6, center: (0.0, 0.0) };
        let m = space_energy_map(&s, &cut).unwrap();
        let c = m.positions.iter().position(|&p| p == 0.0).unwrap();
        for l in [-3, -2, -1, 1, 2, 3] {
            assert_eq!(m.column(l).unwrap()[c], 0.0);
        }
        let mut last = 0.0;
        for l in 1..=4 {
            let w = m.dark_region_halfwidth(l).unwrap();
            assert!(w >= last, "ℓ={l}: {w} < {last}");
            last = w;
        }
        for l in 1..=4 {
            let (a, b) = (m.column(l).unwrap(), m.column(-l).unwrap());
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn channel_selection() {
        assert!(Channels::All.includes(0));
        assert!(!Channels::Inelastic.includes(0));
        assert!(Channels::Orders(vec![1, -2]).includes(-2));
        assert!(!Channels::Orders(vec![1, -2]).includes(2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn unitarity_per_pixel(re in -3.0..3.0f64, im in -3.0..3.0f64) {
                let b = Complex64::new(re, im);
                prop_assume!(b.norm() <= 3.0);
                let g = Grid2D::square(16, 1e-6).unwrap();
                let psi = IncidentWavefunction::uniform(g);
                let s = build_sidebands(&psi, &uniform_beta(g, b), sideband_truncation(b.norm())).unwrap();
                let p = psi.values[[0, 0]].norm_sqr();
                let total: f64 = s.orders().map(|l| s.channel(l)[[2, 3]].norm_sqr()).sum();
                prop_assert!((total / p - 1.0).abs() < 1e-9);
            }
        }
    }
}
