//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chiral_pinem::analysis::{
    delay_grid, fit_oscillation, oam_spectrum, run_delay_scan, sign_changes_per_cycle, topological_charge,
    RadialCut, RadialWeight, ScanSetup,
};
use chiral_pinem::bessel::{bessel_j_orders, sideband_truncation};
use chiral_pinem::farfield::{
    count_peaks, far_field, far_field_with_channels, line_profile, peak_radius, spiral_phase_plate_reference,
    DetectorModel, ProfileAxis,
};
use chiral_pinem::grid::Grid2D;
use chiral_pinem::nearfield::{
    reference_amplitude, synthesize_beta, EnvelopeMode, HoleGeometry, InteractionField, InteriorProfile,
    ReferencePreset,
};
use chiral_pinem::optics::{effective_spp_wavevector, IncidentLight, MaterialStack, PolarizationState};
use chiral_pinem::pinem::{
    build_sidebands, energy_filtered_closed_form, energy_filtered_map, Channels, IncidentWavefunction,
};
use chiral_pinem::proton::{magnetic_moment, OamWavefunction, ProtonModel, QuadratureParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// `Re k_SPP` and `2π/Re k_SPP` for ε_m = −29 + 0.3i, ε_d = 4, 1.57 eV,
/// evaluated independently with ħc = 197.3269804 eV·nm.
const K_SPP_RE_ORACLE: f64 = 1.713_831_057_930_666e7;
const LAMBDA_SPP_ORACLE: f64 = 3.666_163_755_233_905e-7;

const B: f64 = 0.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn hole() -> HoleGeometry {
    HoleGeometry::new(0.4e-6, (0.0, 0.0)).unwrap()
}

fn light(pol: PolarizationState) -> IncidentLight {
    IncidentLight::default().with_polarization(pol)
}

fn beta(grid: Grid2D, pol: PolarizationState, preset: ReferencePreset) -> InteractionField {
    let b = Complex64::new(B, 0.0);
    let a = reference_amplitude(preset, b).unwrap();
    synthesize_beta(
        hole(),
        grid,
        &light(pol),
        &MaterialStack::default(),
        a,
        b,
        InteriorProfile::RimMatched,
    )
    .unwrap()
}

fn psi(grid: Grid2D) -> IncidentWavefunction {
    IncidentWavefunction::gaussian(grid, 0.85e-6, (0.0, 0.0)).unwrap()
}

fn elliptical() -> PolarizationState {
    let chi = PI / 8.0;
    chiral_pinem::optics::jones_to_circular(Complex64::new(chi.cos(), 0.0), Complex64::new(0.0, chi.sin())).unwrap()
}

fn c1_unitarity() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<Complex64> = (0..10_000)
        .map(|_| {
            let r = 3.0 * rng.random::<f64>().sqrt();
            Complex64::from_polar(r, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    // per value, with that value's truncation
    let mut worst_scalar = 0.0f64;
    for v in &values {
        let l_max = sideband_truncation(v.norm());
        let j = bessel_j_orders(2.0 * v.norm(), l_max);
        let s = j[0] * j[0] + 2.0 * j[1..].iter().map(|x| x * x).sum::<f64>();
        worst_scalar = worst_scalar.max((s - 1.0).abs());
    }
    // the same values as a 100×100 field through the sideband builder
    let grid = Grid2D::square(100, 1e-6).unwrap();
    let field = ndarray::Array2::from_shape_vec((100, 100), values.clone()).unwrap();
    let beta = InteractionField::from_values(grid, field).unwrap();
    let uniform = IncidentWavefunction::uniform(grid);
    let s = build_sidebands(&uniform, &beta, sideband_truncation(beta.max_abs())).unwrap();
    let total = energy_filtered_map(&s, &Channels::All);
    let norm = uniform.intensity();
    let worst_field = total
        .iter()
        .zip(norm.iter())
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_scalar < 1e-9 && worst_field < 1e-9 && secs < 1.0,
        format!("max |Σ J_l² − 1| = {worst_scalar:.2e} (scalar), {worst_field:.2e} (sidebands); {secs:.3} s"),
    )
}

fn c2_oam_transfer() -> Outcome {
    let t = Instant::now();
    let grid = Grid2D::square(512, 2e-6).unwrap();
    let p = psi(grid);
    let mut worst = 1.0f64;
    let mut parts = Vec::new();
    for sigma in [1, -1] {
        let b = beta(grid, PolarizationState::circular(sigma), ReferencePreset::VortexDetection);
        let s = build_sidebands(&p, &b, sideband_truncation(b.max_abs())).unwrap();
        for l in 1..=3 {
            let spec = oam_spectrum(&s.channel(l).to_owned(), &grid, RadialWeight::Full).unwrap();
            let pw = spec.power(l * sigma);
            worst = worst.min(pw);
            parts.push(format!("psi_{l}: P_{}={pw:.6}", l * sigma));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst > 0.99 && secs < 10.0, format!("{} ; {secs:.2} s on 512²", parts.join(" ")))
}

fn c3_vortex_core() -> Outcome {
    let grid = Grid2D::square(256, 2e-6).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for sigma in [1, -1] {
        let b = beta(grid, PolarizationState::circular(sigma), ReferencePreset::VortexDetection);
        let tc = topological_charge(&b.values, &grid, 0.3e-6).unwrap();
        ok &= tc.charge == sigma && tc.residual < 0.02;
        parts.push(format!("σ={sigma:+}: m={:+} residual={:.1e}", tc.charge, tc.residual));
    }
    outcome(ok, parts.join("; "))
}

fn c4_far_field_morphology() -> Outcome {
    let grid = Grid2D::square(256, 2e-6).unwrap();
    let p = psi(grid);
    let h = hole();

    let b = beta(grid, PolarizationState::circular(1), ReferencePreset::VortexDetection);
    let s = build_sidebands(&p, &b, sideband_truncation(b.max_abs())).unwrap();
    let interior_only = DetectorModel {
        transmissivity: 0.0,
        ..DetectorModel::default()
    };
    let m = far_field(&s, &interior_only, &h).unwrap();
    let umax = m.unbroadened.iter().cloned().fold(0.0, f64::max);
    let null = m.unbroadened[m.center()] / umax;

    let m = far_field(&s, &DetectorModel::default(), &h).unwrap();
    let dip = m.center_contrast();

    let b = beta(grid, PolarizationState::linear(0.0), ReferencePreset::VortexDetection);
    let s = build_sidebands(&p, &b, sideband_truncation(b.max_abs())).unwrap();
    let m = far_field(&s, &DetectorModel::default(), &h).unwrap();
    let (_, ih) = line_profile(&m, ProfileAxis::Horizontal);
    let (_, iv) = line_profile(&m, ProfileAxis::Vertical);
    let (nh, nv) = (count_peaks(&ih, 0.1), count_peaks(&iv, 0.1));
    let (lobes, across) = if nh >= nv { (&ih, nv) } else { (&iv, nh) };
    let lobe_max = lobes.iter().cloned().fold(0.0, f64::max);
    let centre_rel = lobes[lobes.len() / 2] / lobe_max;
    let two_lobes = nh.max(nv) == 2 && across == 1 && centre_rel < 0.5;

    outcome(
        null < 1e-6 && dip < 0.3 && two_lobes,
        format!(
            "interior-only I(0)/max = {null:.1e}; broadened I(0)/max = {dip:.3}; linear: peaks h={nh} v={nv}, \
             centre/lobe = {centre_rel:.3}"
        ),
    )
}

fn c5_phase_plate() -> Outcome {
    let grid = Grid2D::square(256, 2e-6).unwrap();
    let p = psi(grid);
    let det = DetectorModel::default();
    let b = beta(grid, PolarizationState::circular(1), ReferencePreset::VortexDetection);
    let s = build_sidebands(&p, &b, sideband_truncation(b.max_abs())).unwrap();
    let chiral = peak_radius(&far_field(&s, &det, &hole()).unwrap());
    let plate = peak_radius(&spiral_phase_plate_reference(1, &hole(), &p, &det).unwrap());
    let ratio = chiral / plate;
    outcome(
        (ratio - 1.0).abs() < 0.15,
        format!(
            "peak radius {:.3} vs {:.3} 1/um, ratio {ratio:.4}",
            chiral * 1e-6,
            plate * 1e-6
        ),
    )
}

fn c6_fringe_period() -> Outcome {
    let grid = Grid2D::square(256, 2e-6).unwrap();
    let l = IncidentLight::default();
    let k = effective_spp_wavevector(&l, &MaterialStack::default()).unwrap();
    let k_ok = (k.re / K_SPP_RE_ORACLE - 1.0).abs() < 1e-8;
    let b = beta(
        grid,
        PolarizationState::circular(1),
        ReferencePreset::Holography { b_over_a: 1.0 },
    );
    let intensity = b.values.mapv(|v| v.norm_sqr());
    let cut = RadialCut {
        angle: 0.0,
        r_min: 0.5e-6,
        r_max: 1.9e-6,
        center: (0.0, 0.0),
    };
    let period = chiral_pinem::analysis::fringe_period(&intensity, &grid, &cut).unwrap();
    let err = (period - LAMBDA_SPP_ORACLE).abs();
    outcome(
        k_ok && err <= grid.dx(),
        format!(
            "Re k_SPP = {:.6e}/m (oracle {K_SPP_RE_ORACLE:.6e}); fringe period {:.2} nm vs {:.2} nm, |Δ| = {:.2} nm, \
             pixel {:.2} nm",
            k.re,
            period * 1e9,
            LAMBDA_SPP_ORACLE * 1e9,
            err * 1e9,
            grid.dx() * 1e9
        ),
    )
}

fn scan_setup(pol_2_rotation: f64) -> ScanSetup {
    let grid = Grid2D::square(256, 2e-6).unwrap();
    let pol = elliptical();
    ScanSetup {
        field_1: beta(grid, pol, ReferencePreset::VortexDetection),
        light: light(pol),
        pol_2: pol.rotated(pol_2_rotation),
        rel_amplitude_2: 1.0,
        envelope_fwhm: 55e-15,
        envelope: EnvelopeMode::Monochromatic,
        psi_inc: psi(grid),
        channels: Channels::Inelastic,
        helicity_annulus: (0.1e-6, 0.35e-6),
        fringe_cut: RadialCut {
            angle: 0.0,
            r_min: 0.5e-6,
            r_max: 1.9e-6,
            center: (0.0, 0.0),
        },
        keep_maps: false,
    }
}

fn c7_attosecond_control() -> Outcome {
    let t = Instant::now();
    let delays = delay_grid(0.0, 8e-15, 334e-18).unwrap();
    let t_fs: Vec<f64> = delays.iter().map(|d| d * 1e15).collect();

    let par = run_delay_scan(&scan_setup(0.0), &delays).unwrap();
    let fit = fit_oscillation(&t_fs, &par.intensities(), 1.5, 4.0).unwrap();
    let period_ok = (fit.period / 2.67 - 1.0).abs() < 0.02;

    let perp = run_delay_scan(&scan_setup(PI / 2.0), &delays).unwrap();
    let h = perp.helicities().unwrap();
    let hfit = fit_oscillation(&t_fs, &h, 1.5, 4.0).unwrap();
    let changes = sign_changes_per_cycle(&t_fs, &h, hfit.period);
    let sign_ok = !changes.is_empty() && changes.iter().all(|&c| c == 2);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        delays.len() == 24 && period_ok && sign_ok && secs < 120.0,
        format!(
            "{} delays; parallel fitted period {:.4} fs (target 2.67 ± 2%); perpendicular helicity period {:.4} fs, \
             sign changes per cycle {changes:?}; {secs:.1} s",
            delays.len(),
            fit.period,
            hfit.period
        ),
    )
}

fn c8_parseval() -> Outcome {
    let grid = Grid2D::square(256, 2e-6).unwrap();
    let p = psi(grid);
    let h = hole();
    let b = beta(grid, elliptical(), ReferencePreset::Holography { b_over_a: 1.0 });
    let s = build_sidebands(&p, &b, sideband_truncation(b.max_abs())).unwrap();
    let det = DetectorModel {
        channels: Channels::All,
        ..DetectorModel::default()
    };
    let m = far_field_with_channels(&s, &det, &h).unwrap();
    let dk2 = m.dkx() * m.dky();
    let mut worst = 0.0f64;
    for (l, field) in m.channels.as_ref().unwrap() {
        let k_norm: f64 = field.iter().map(|v| v.norm_sqr()).sum::<f64>() * dk2 / (4.0 * PI * PI);
        let mut x_norm = 0.0;
        for ((iy, ix), v) in s.channel(*l).indexed_iter() {
            let t = det.transmission(&h, grid.x(ix), grid.y(iy));
            x_norm += v.norm_sqr() * t * t;
        }
        x_norm *= grid.pixel_area();
        worst = worst.max((k_norm / x_norm - 1.0).abs());
    }
    let summed = energy_filtered_map(&s, &Channels::Inelastic);
    let closed = energy_filtered_closed_form(&p, &b).unwrap();
    let mut worst_px = 0.0f64;
    for (a, c) in summed.iter().zip(closed.iter()) {
        let rel = if *c == 0.0 { a.abs() } else { ((a - c) / c).abs() };
        worst_px = worst_px.max(rel);
    }
    outcome(
        worst < 1e-9 && worst_px < 1e-9,
        format!(
            "{} channels, worst Parseval defect {worst:.1e}; sideband sum vs closed form worst pixel {worst_px:.1e}",
            m.channels.as_ref().unwrap().len()
        ),
    )
}

/// `μ/μ_N = E[l·(1 + r'_⊥·Ŝ/S)]` with `r' ~ ρ` and `S ~ |ψ|²` sampled independently.
fn monte_carlo_moment(l: i32, waist: f64, rms: f64, samples: usize, seed: u64) -> (f64, f64) {
    let a = rms / 12f64.sqrt();
    let r_dist = Gamma::new(3.0, a).unwrap();
    let s_dist = Gamma::new(l.unsigned_abs() as f64 + 1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        let r = r_dist.sample(&mut rng);
        let cos_t: f64 = rng.random_range(-1.0..1.0);
        let phi_r: f64 = rng.random_range(0.0..2.0 * PI);
        let rt = r * (1.0 - cos_t * cos_t).sqrt();
        let s = waist * (s_dist.sample(&mut rng) / 2.0).sqrt();
        let phi_s: f64 = rng.random_range(0.0..2.0 * PI);
        let v = l as f64 * (1.0 + rt * (phi_r - phi_s).cos() / s);
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    (mean, ((sum2 / n - mean * mean) / n).sqrt())
}

fn c9_proton() -> Outcome {
    let model = ProtonModel::default();
    let rms = model.rms_charge_radius;
    let q = QuadratureParams::default();
    let far = magnetic_moment(&model, &OamWavefunction::new(1, 100.0 * rms).unwrap(), &q).unwrap();
    let near = magnetic_moment(&model, &OamWavefunction::new(1, 2.0 * rms).unwrap(), &q).unwrap();
    let (mc, se) = monte_carlo_moment(1, 2.0 * rms, rms, 10_000_000, 7);
    let mc_rel = (near.mu_over_mu_n / mc - 1.0).abs();
    let mut anti = true;
    for w in [0.5, 2.0, 100.0] {
        let p = magnetic_moment(&model, &OamWavefunction::new(1, w * rms).unwrap(), &q).unwrap();
        let m = magnetic_moment(&model, &OamWavefunction::new(-1, w * rms).unwrap(), &q).unwrap();
        anti &= m.mu == -p.mu && m.mu_over_mu_n == -p.mu_over_mu_n;
    }
    let dev = (far.mu_over_mu_n - 1.0).abs();
    outcome(
        dev < 1e-3 && mc_rel < 0.01 && anti,
        format!(
            "w=100 rms: mu/mu_N = {:.8} (|dev| {dev:.1e}); w=2 rms: {:.6} vs Monte Carlo {mc:.6} ± {se:.1e} \
             (rel {mc_rel:.1e}); mu(-l) = -mu(l) exactly: {anti}",
            far.mu_over_mu_n, near.mu_over_mu_n
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
[optics.polarization]
jones_x_re = 0.9238795325112867
jones_y_im = 0.3826834323650898

[grid]
nx = 128
ny = 128

[nearfield]
preset = "holography"

[timescan]
t_end_fs = 3.0
axes = "perpendicular"

[proton]
waist_over_rms = [1.0, 2.0, 10.0]

[output]
difference_csv = true
"#;

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn c10_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_chiral-pinem");
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("scenario.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for cmd in ["nearfield", "farfield", "timescan", "proton"] {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = tmp.path().join(format!("{cmd}_{k}"));
            let status = Command::new(exe)
                .args([cmd, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--profiles", "--keep-sidebands"])
                .output()
                .unwrap();
            ok &= status.status.success();
            runs.push(csv_files(&out));
        }
        let same = !runs[0].is_empty() && runs[0] == runs[1];
        ok &= same;
        parts.push(format!("{cmd}: {} CSVs {}", runs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Bessel unitarity", c1_unitarity),
        ("OAM transfer", c2_oam_transfer),
        ("vortex core charge", c3_vortex_core),
        ("far-field morphology", c4_far_field_morphology),
        ("spiral phase plate equivalence", c5_phase_plate),
        ("fringe period", c6_fringe_period),
        ("attosecond control", c7_attosecond_control),
        ("Parseval and closed form", c8_parseval),
        ("proton asymptote", c9_proton),
        ("CLI determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|s| s == &id.to_string()) {
            continue;
        }
        let o = f();
        println!(
            "criterion {id:2} {:4} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
