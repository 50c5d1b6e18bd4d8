//! Scenario runner: TOML config, subcommand dispatch, outputs and run manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    fit_oscillation, fringe_period, helicity_of_field, run_delay_scan, sign_changes_per_cycle, topological_charge,
    delay_grid, OscillationFit, RadialCut, ScanSetup,
};
use crate::bessel::sideband_truncation;
use crate::error::{Error, Result};
use crate::farfield::{
    count_peaks, far_field, far_field_with_channels, line_profile, peak_radius, spiral_phase_plate_reference,
    DetectorModel, FarFieldMap, ProfileAxis,
};
use crate::grid::{Grid2D, RealField};
use crate::io::{read_beta_file, table_csv, Metadata, OutputDir, OutputRecord};
use crate::nearfield::{
    reference_amplitude, synthesize_beta, EnvelopeMode, HoleGeometry, InteractionField, InteriorProfile,
    ReferencePreset,
};
use crate::optics::{effective_spp_wavevector, jones_to_circular, ElectronBeam, IncidentLight, MaterialStack};
use crate::pinem::{
    build_sidebands, energy_filtered_map, space_energy_map, Channels, IncidentWavefunction, LineCut, SidebandSet,
};
use crate::proton::{moment_vs_waist_sweep, DensityProfile, ProtonModel, QuadratureParams};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Nearfield,
    Farfield,
    Timescan,
    Proton,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "chiral-pinem", version, about = "Chiral plasmonic near fields and electron vortex beams")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML scenario, or a previous run's manifest.json.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Imported β grid replacing the synthesized field.
    #[arg(long)]
    pub beta_file: Option<PathBuf>,
    /// Emit far-field line profiles.
    #[arg(long)]
    pub profiles: bool,
    /// Emit every sideband (nearfield) or far-field channel (farfield).
    #[arg(long)]
    pub keep_sidebands: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JonesConfig {
    pub jones_x_re: f64,
    pub jones_x_im: f64,
    pub jones_y_re: f64,
    pub jones_y_im: f64,
}

impl Default for JonesConfig {
    /// σ = +1.
    fn default() -> Self {
        Self {
            jones_x_re: 1.0,
            jones_x_im: 0.0,
            jones_y_re: 0.0,
            jones_y_im: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub electron_kev: f64,
    pub coherence_um: f64,
    pub photon_ev: f64,
    pub field_vpm: f64,
    pub eps_metal_re: f64,
    pub eps_metal_im: f64,
    pub eps_diel: f64,
    /// Intensity propagation length; 0 keeps the dispersion-relation damping.
    pub spp_decay_um: f64,
    pub delta_deg: f64,
    pub alpha_deg: f64,
    pub polarization: JonesConfig,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            electron_kev: 200.0,
            coherence_um: 0.85,
            photon_ev: 1.57,
            field_vpm: 8e7,
            eps_metal_re: -29.0,
            eps_metal_im: 0.3,
            eps_diel: 4.0,
            spp_decay_um: 10.0,
            delta_deg: 4.5,
            alpha_deg: 4.5,
            polarization: JonesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub hole_radius_um: f64,
    pub center_x_um: f64,
    pub center_y_um: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            hole_radius_um: 0.4,
            center_x_um: 0.0,
            center_y_um: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub half_width_x_um: f64,
    pub half_width_y_um: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 256,
            ny: 256,
            half_width_x_um: 2.0,
            half_width_y_um: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Holography,
    #[default]
    VortexDetection,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NearfieldConfig {
    pub preset: PresetName,
    /// `|B/A|` for the holography preset.
    pub b_over_a: f64,
    /// `A` for the custom preset.
    pub a_re: f64,
    pub a_im: f64,
    pub b_re: f64,
    pub b_im: f64,
    pub interior_profile: InteriorProfile,
}

impl Default for NearfieldConfig {
    fn default() -> Self {
        Self {
            preset: PresetName::VortexDetection,
            b_over_a: 1.0,
            a_re: 0.0,
            a_im: 0.0,
            b_re: 0.5,
            b_im: 0.0,
            interior_profile: InteriorProfile::RimMatched,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    All,
    #[default]
    Inelastic,
    Orders,
}

fn channels(key: &str, filter: FilterName, orders: &[i32]) -> Result<Channels> {
    Ok(match filter {
        FilterName::All => Channels::All,
        FilterName::Inelastic => Channels::Inelastic,
        FilterName::Orders => {
            if orders.is_empty() {
                return Err(Error::config(key, "filter = \"orders\" needs a non-empty order list"));
            }
            Channels::Orders(orders.to_vec())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinemConfig {
    /// 0 selects the truncation rule from `max |β|`.
    pub l_max: usize,
    pub filter: FilterName,
    pub orders: Vec<i32>,
    pub cut_angle_deg: f64,
    pub cut_half_length_um: f64,
}

impl Default for PinemConfig {
    fn default() -> Self {
        Self {
            l_max: 0,
            filter: FilterName::Inelastic,
            orders: Vec::new(),
            cut_angle_deg: 0.0,
            cut_half_length_um: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub loop_radius_um: f64,
    pub helicity_inner_um: f64,
    pub helicity_outer_um: f64,
    pub fringe_angle_deg: f64,
    pub fringe_r_min_um: f64,
    pub fringe_r_max_um: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            loop_radius_um: 0.3,
            helicity_inner_um: 0.1,
            helicity_outer_um: 0.35,
            fringe_angle_deg: 0.0,
            fringe_r_min_um: 0.5,
            fringe_r_max_um: 1.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarfieldConfig {
    pub broadening_per_um: f64,
    pub aperture_radius_um: f64,
    pub transmissivity: f64,
    pub padding: usize,
    pub filter: FilterName,
    pub orders: Vec<i32>,
    pub reference: bool,
    pub reference_l: i32,
}

impl Default for FarfieldConfig {
    fn default() -> Self {
        let d = DetectorModel::default();
        Self {
            broadening_per_um: d.broadening_sigma * 1e-6,
            aperture_radius_um: d.aperture_radius * 1e6,
            transmissivity: d.transmissivity,
            padding: d.padding,
            filter: FilterName::Inelastic,
            orders: Vec::new(),
            reference: true,
            reference_l: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseAxes {
    #[default]
    Parallel,
    Perpendicular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimescanConfig {
    pub t_start_fs: f64,
    pub t_end_fs: f64,
    pub step_as: f64,
    pub axes: PulseAxes,
    pub rel_amplitude: f64,
    pub envelope_fwhm_fs: f64,
    pub envelope: EnvelopeMode,
    pub fit_period_min_fs: f64,
    pub fit_period_max_fs: f64,
}

impl Default for TimescanConfig {
    fn default() -> Self {
        Self {
            t_start_fs: 0.0,
            t_end_fs: 8.0,
            step_as: 334.0,
            axes: PulseAxes::Parallel,
            rel_amplitude: 1.0,
            envelope_fwhm_fs: 55.0,
            envelope: EnvelopeMode::Monochromatic,
            fit_period_min_fs: 1.5,
            fit_period_max_fs: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtonConfig {
    pub l: i32,
    pub rms_fm: f64,
    pub profile: DensityProfile,
    pub waist_over_rms: Vec<f64>,
    pub points_per_scale: usize,
    pub angular_points: usize,
    pub max_points: usize,
    pub tolerance: f64,
}

impl Default for ProtonConfig {
    fn default() -> Self {
        let q = QuadratureParams::default();
        Self {
            l: 1,
            rms_fm: 0.84,
            profile: DensityProfile::Exponential,
            waist_over_rms: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            points_per_scale: q.points_per_scale,
            angular_points: q.angular_points,
            max_points: q.max_points,
            tolerance: q.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub png: bool,
    /// Also export the β used by the run as a binary grid file.
    pub beta_bin: bool,
    /// CSV copies of the per-delay difference maps.
    pub difference_csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            png: true,
            beta_bin: false,
            difference_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub optics: OpticsConfig,
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    pub nearfield: NearfieldConfig,
    pub pinem: PinemConfig,
    pub analysis: AnalysisConfig,
    pub farfield: FarfieldConfig,
    pub timescan: TimescanConfig,
    pub proton: ProtonConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = e
                .span()
                .map(|s| key_at(text, s.start))
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, msg)
        })
    }

    /// Reads TOML, or the `config` object of a run manifest when the file is JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::config("<manifest>", e.to_string()))?;
            let cfg = v
                .get("config")
                .ok_or_else(|| Error::config("config", "manifest has no `config` object"))?;
            return serde_json::from_value(cfg.clone()).map_err(|e| Error::config("config", e.to_string()));
        }
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Dotted key path of the table header and key that enclose byte `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let mut table = String::new();
    for line in before.lines() {
        let t = line.trim();
        if t.starts_with('[') && !t.starts_with("[[") {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..].find('\n').map_or(text.len(), |i| line_start + i);
    let line = text[line_start..line_end].trim();
    let key = if line.starts_with('[') {
        ""
    } else {
        line.split('=').next().unwrap_or("").trim()
    };
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "<document>".into(),
        (true, false) => key.into(),
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

/// Re-labels an input-validation error with the config key that caused it.
fn keyed(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Domain(m) | Error::Shape(m) => Error::config(key, m),
        Error::Pole => Error::config(key, Error::Pole.to_string()),
        other => other,
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

/// Physical inputs resolved from a [`Config`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub beam: ElectronBeam,
    pub light: IncidentLight,
    pub stack: MaterialStack,
    pub hole: HoleGeometry,
    pub grid: Grid2D,
    pub a: Complex64,
    pub b: Complex64,
    pub profile: InteriorProfile,
    pub k_spp: Complex64,
}

impl Scenario {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let o = &cfg.optics;
        let beam = ElectronBeam::new(
            positive("optics.electron_kev", o.electron_kev)? * 1e3,
            positive("optics.coherence_um", o.coherence_um)? * 1e-6,
        )
        .map_err(keyed("optics.electron_kev"))?;
        let p = o.polarization;
        let pol = jones_to_circular(
            Complex64::new(p.jones_x_re, p.jones_x_im),
            Complex64::new(p.jones_y_re, p.jones_y_im),
        )
        .map_err(keyed("optics.polarization"))?;
        let light = IncidentLight::new(
            positive("optics.photon_ev", o.photon_ev)?,
            o.field_vpm,
            pol,
            o.delta_deg.to_radians(),
            o.alpha_deg.to_radians(),
        )
        .map_err(keyed("optics.field_vpm"))?;
        if !(o.spp_decay_um >= 0.0) {
            return Err(Error::config("optics.spp_decay_um", "must be non-negative (0 disables the override)"));
        }
        let stack = MaterialStack {
            eps_metal: Complex64::new(o.eps_metal_re, o.eps_metal_im),
            eps_dielectric: o.eps_diel,
            spp_decay_length: (o.spp_decay_um > 0.0).then_some(o.spp_decay_um * 1e-6),
        };
        let k_spp = effective_spp_wavevector(&light, &stack).map_err(keyed("optics.eps_metal_re"))?;

        let g = &cfg.geometry;
        let hole = HoleGeometry::new(g.hole_radius_um * 1e-6, (g.center_x_um * 1e-6, g.center_y_um * 1e-6))
            .map_err(keyed("geometry.hole_radius_um"))?;
        let gc = &cfg.grid;
        let grid = Grid2D::new(gc.nx, gc.ny, gc.half_width_x_um * 1e-6, gc.half_width_y_um * 1e-6)
            .map_err(keyed("grid"))?;

        let n = &cfg.nearfield;
        let b = Complex64::new(n.b_re, n.b_im);
        let preset = match n.preset {
            PresetName::Holography => ReferencePreset::Holography { b_over_a: n.b_over_a },
            PresetName::VortexDetection => ReferencePreset::VortexDetection,
            PresetName::Custom => ReferencePreset::Custom {
                a: Complex64::new(n.a_re, n.a_im),
            },
        };
        let a = reference_amplitude(preset, b).map_err(keyed("nearfield.b_over_a"))?;
        Ok(Self {
            beam,
            light,
            stack,
            hole,
            grid,
            a,
            b,
            profile: n.interior_profile,
            k_spp,
        })
    }

    pub fn synthesize(&self) -> Result<InteractionField> {
        synthesize_beta(self.hole, self.grid, &self.light, &self.stack, self.a, self.b, self.profile)
            .map_err(keyed("grid"))
    }

    pub fn detector(&self, cfg: &FarfieldConfig) -> Result<DetectorModel> {
        let d = DetectorModel {
            broadening_sigma: cfg.broadening_per_um * 1e6,
            aperture_radius: cfg.aperture_radius_um * 1e-6,
            transmissivity: cfg.transmissivity,
            padding: cfg.padding,
            channels: channels("farfield.filter", cfg.filter, &cfg.orders)?,
        };
        d.validate().map_err(keyed("farfield"))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub electron_velocity_m_per_s: f64,
    pub k_spp_re_per_m: f64,
    pub k_spp_im_per_m: f64,
    pub spp_wavelength_nm: f64,
    pub optical_period_fs: f64,
    pub reference_amplitude_re: f64,
    pub reference_amplitude_im: f64,
    pub l_max: Option<usize>,
    pub beta_max_abs: Option<f64>,
    pub beta_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: Config,
    pub derived: Derived,
    pub wall_clock_s: f64,
    pub outputs: Vec<OutputRecord>,
    pub notes: Vec<String>,
}

const MODEL_NOTES: &[&str] = &[
    "beta is an analytic stand-in for a full-wave near field: A + B * outgoing cylindrical SPP outside the hole, J1 profile inside",
    "permittivities are configurable stand-in values, not fitted optical constants",
    "A and B are dimensionless config scalars; field_vpm is recorded but does not rescale them",
    "helicity h = (P(+1) - P(-1)) / (P(+1) + P(-1)) from the OAM spectrum of beta over the analysis annulus",
    "energy-filtered maps and far fields default to the inelastic channels (l != 0)",
];

struct Run<'a> {
    args: &'a Args,
    cfg: Config,
    out: OutputDir,
    derived: Derived,
    notes: Vec<String>,
}

impl Run<'_> {
    fn meta(&self, quantity: &str, units: &str) -> Metadata {
        vec![
            ("tool".into(), format!("chiral-pinem {TOOL_VERSION}")),
            ("command".into(), format!("{:?}", self.args.command).to_lowercase()),
            ("quantity".into(), quantity.into()),
            ("units".into(), units.into()),
        ]
    }

    fn map(&mut self, stem: &str, field: &RealField, grid: &Grid2D, quantity: &str, units: &str) -> Result<()> {
        let meta = self.meta(quantity, units);
        self.out.write_map(stem, field, grid, &meta, self.cfg.output.png)
    }

    fn beta(&mut self, sc: &Scenario) -> Result<InteractionField> {
        let beta = match &self.args.beta_file {
            Some(p) => {
                let f = read_beta_file(p).map_err(|e| match e {
                    Error::Format(m) => Error::config("--beta-file", m),
                    other => other,
                })?;
                self.notes
                    .push("beta imported from file; [grid] and the synthesis parameters are not used for beta".into());
                self.derived.beta_source = Some(format!("file:{}", p.display()));
                f
            }
            None => {
                self.derived.beta_source = Some("synthesized".into());
                sc.synthesize()?
            }
        };
        self.derived.beta_max_abs = Some(beta.max_abs());
        if self.cfg.output.beta_bin {
            self.out.write("beta.bin", &crate::io::encode_beta(&beta))?;
        }
        Ok(beta)
    }

    fn sidebands(&mut self, sc: &Scenario, beta: &InteractionField) -> Result<(IncidentWavefunction, SidebandSet)> {
        let psi = IncidentWavefunction::gaussian(beta.grid, sc.beam.transverse_coherence(), sc.hole.center)
            .map_err(keyed("optics.coherence_um"))?;
        let l_max = match self.cfg.pinem.l_max {
            0 => sideband_truncation(beta.max_abs()),
            n => n,
        };
        self.derived.l_max = Some(l_max);
        let s = build_sidebands(&psi, beta, l_max).map_err(keyed("pinem.l_max"))?;
        Ok((psi, s))
    }
}

fn opt<T: Serialize>(r: Result<T>) -> serde_json::Value {
    match r {
        Ok(v) => serde_json::json!(v),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    }
}

fn cmd_nearfield(run: &mut Run, sc: &Scenario) -> Result<()> {
    let beta = run.beta(sc)?;
    let (_, s) = run.sidebands(sc, &beta)?;
    let grid = beta.grid;
    let ch = channels("pinem.filter", run.cfg.pinem.filter, &run.cfg.pinem.orders)?;
    let filtered = energy_filtered_map(&s, &ch);
    run.map("beta_abs", &beta.modulus(), &grid, "|beta|", "dimensionless")?;
    run.map("beta_arg", &beta.phase(), &grid, "arg beta", "rad")?;
    run.map("energy_filtered", &filtered, &grid, "energy-filtered electron density", "1/m^2")?;

    let pc = &run.cfg.pinem;
    let cut = LineCut {
        angle: pc.cut_angle_deg.to_radians(),
        half_length: positive("pinem.cut_half_length_um", pc.cut_half_length_um)? * 1e-6,
        center: sc.hole.center,
    };
    let se = space_energy_map(&s, &cut).map_err(keyed("pinem.cut_half_length_um"))?;
    let mut columns = vec!["position_um".to_string()];
    columns.extend(se.orders.iter().map(|l| format!("l{l}")));
    let rows: Vec<Vec<f64>> = se
        .positions
        .iter()
        .enumerate()
        .map(|(i, &p)| std::iter::once(p * 1e6).chain(se.values.row(i).iter().copied()).collect())
        .collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let meta = run.meta("space-energy map |psi_l|^2 along a line cut", "1/m^2");
    run.out.write_text("space_energy.csv", &table_csv(&cols, &rows, &meta))?;

    if run.args.keep_sidebands {
        for l in s.orders() {
            let m = s.channel(l).mapv(|v| v.norm_sqr());
            run.map(&format!("sideband_l{l}"), &m, &grid, &format!("|psi_{l}|^2"), "1/m^2")?;
        }
    }

    let a = &run.cfg.analysis;
    let charge = topological_charge(&beta.values, &grid, a.loop_radius_um * 1e-6);
    let helicity = helicity_of_field(&beta, a.helicity_inner_um * 1e-6, a.helicity_outer_um * 1e-6);
    let fringe_cut = RadialCut {
        angle: a.fringe_angle_deg.to_radians(),
        r_min: a.fringe_r_min_um * 1e-6,
        r_max: a.fringe_r_max_um * 1e-6,
        center: sc.hole.center,
    };
    let intensity = beta.values.mapv(|v| v.norm_sqr());
    let fringe = fringe_period(&intensity, &grid, &fringe_cut).map(|p| p * 1e6);
    let summary = serde_json::json!({
        "beta_max_abs": beta.max_abs(),
        "l_max": s.l_max(),
        "filtered_total": filtered.sum() * grid.pixel_area(),
        "topological_charge": opt(charge),
        "helicity": opt(helicity),
        "fringe_period_um": opt(fringe),
        "spp_wavelength_um": 2.0 * PI / sc.k_spp.re * 1e6,
        "dark_region_halfwidth_um_l1": se.dark_region_halfwidth(1).map(|w| w * 1e6),
    });
    run.out.write_json("nearfield.json", &summary)?;
    Ok(())
}

fn k_grid(map: &FarFieldMap) -> Result<Grid2D> {
    let (nx, ny) = (map.kx.len(), map.ky.len());
    Grid2D::new(nx, ny, map.dkx() * (nx / 2) as f64, map.dky() * (ny / 2) as f64)
}

fn safe_peak_radius(map: &FarFieldMap) -> Option<f64> {
    (map.max() > 0.0).then(|| peak_radius(map) * 1e-6)
}

fn cmd_farfield(run: &mut Run, sc: &Scenario) -> Result<()> {
    let beta = run.beta(sc)?;
    let (psi, s) = run.sidebands(sc, &beta)?;
    let det = sc.detector(&run.cfg.farfield)?;
    let map = if run.args.keep_sidebands {
        far_field_with_channels(&s, &det, &sc.hole)?
    } else {
        far_field(&s, &det, &sc.hole)?
    };
    let kg = k_grid(&map)?;
    run.map("farfield", &map.intensity, &kg, "broadened far-field intensity", "m^2 (per k-pixel area)")?;
    run.map("farfield_unbroadened", &map.unbroadened, &kg, "far-field intensity", "m^2")?;
    if let Some(chs) = &map.channels {
        for (l, field) in chs {
            let m = field.mapv(|v| v.norm_sqr());
            run.map(&format!("farfield_l{l}"), &m, &kg, &format!("|Psi_{l}|^2"), "m^2")?;
        }
    }

    let (kh, ih) = line_profile(&map, ProfileAxis::Horizontal);
    let (kv, iv) = line_profile(&map, ProfileAxis::Vertical);
    if run.args.profiles {
        let meta = run.meta("far-field line profiles through k = 0", "k in 1/um");
        let text = if kh == kv {
            let rows: Vec<Vec<f64>> = (0..kh.len()).map(|i| vec![kh[i] * 1e-6, ih[i], iv[i]]).collect();
            table_csv(&["k_per_um", "I_horizontal", "I_vertical"], &rows, &meta)
        } else {
            let n = kh.len().max(kv.len());
            let at = |v: &[f64], i: usize, s: f64| v.get(i).map_or(f64::NAN, |x| x * s);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![at(&kh, i, 1e-6), at(&ih, i, 1.0), at(&kv, i, 1e-6), at(&iv, i, 1.0)])
                .collect();
            table_csv(&["kx_per_um", "I_horizontal", "ky_per_um", "I_vertical"], &rows, &meta)
        };
        run.out.write_text("profiles.csv", &text)?;
    }

    let mut reference = serde_json::Value::Null;
    let fc = run.cfg.farfield.clone();
    if fc.reference {
        let r = spiral_phase_plate_reference(fc.reference_l, &sc.hole, &psi, &det)?;
        run.map(
            "farfield_reference",
            &r.intensity,
            &kg,
            &format!("spiral phase plate reference, l = {}", fc.reference_l),
            "m^2 (per k-pixel area)",
        )?;
        let (pr, pm) = (safe_peak_radius(&r), safe_peak_radius(&map));
        reference = serde_json::json!({
            "l": fc.reference_l,
            "peak_radius_per_um": pr,
            "center_contrast": r.center_contrast(),
            "peak_radius_ratio": pm.zip(pr).map(|(a, b)| a / b),
        });
    }
    let um = map.unbroadened.iter().cloned().fold(0.0, f64::max);
    let summary = serde_json::json!({
        "inelastic_fraction": map.inelastic_fraction,
        "center_contrast": map.center_contrast(),
        "unbroadened_center_contrast": if um > 0.0 { map.unbroadened[map.center()] / um } else { 0.0 },
        "peak_radius_per_um": safe_peak_radius(&map),
        "peaks_horizontal": count_peaks(&ih, 0.1),
        "peaks_vertical": count_peaks(&iv, 0.1),
        "reference": reference,
    });
    run.out.write_json("farfield.json", &summary)?;
    Ok(())
}

fn fit_json(fit: &Result<OscillationFit>) -> serde_json::Value {
    match fit {
        Ok(f) => serde_json::json!({
            "period_fs": f.period,
            "amplitude": f.amplitude,
            "phase_rad": f.phase,
            "offset": f.offset,
            "rms_residual": f.rms_residual,
        }),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    }
}

fn cmd_timescan(run: &mut Run, sc: &Scenario) -> Result<()> {
    if run.args.beta_file.is_some() {
        return Err(Error::config(
            "--beta-file",
            "timescan re-drives the near field with a second pulse and needs a synthesized beta",
        ));
    }
    let tc = run.cfg.timescan.clone();
    let beta = run.beta(sc)?;
    let psi = IncidentWavefunction::gaussian(beta.grid, sc.beam.transverse_coherence(), sc.hole.center)
        .map_err(keyed("optics.coherence_um"))?;
    let pol_1 = sc.light.polarization();
    let pol_2 = match tc.axes {
        PulseAxes::Parallel => pol_1,
        PulseAxes::Perpendicular => pol_1.rotated(PI / 2.0),
    };
    let a = &run.cfg.analysis;
    let setup = ScanSetup {
        field_1: beta,
        light: sc.light,
        pol_2,
        rel_amplitude_2: tc.rel_amplitude,
        envelope_fwhm: positive("timescan.envelope_fwhm_fs", tc.envelope_fwhm_fs)? * 1e-15,
        envelope: tc.envelope,
        psi_inc: psi,
        channels: channels("pinem.filter", run.cfg.pinem.filter, &run.cfg.pinem.orders)?,
        helicity_annulus: (a.helicity_inner_um * 1e-6, a.helicity_outer_um * 1e-6),
        fringe_cut: RadialCut {
            angle: a.fringe_angle_deg.to_radians(),
            r_min: a.fringe_r_min_um * 1e-6,
            r_max: a.fringe_r_max_um * 1e-6,
            center: sc.hole.center,
        },
        keep_maps: true,
    };
    let delays = delay_grid(tc.t_start_fs * 1e-15, tc.t_end_fs * 1e-15, tc.step_as * 1e-18)
        .map_err(keyed("timescan.step_as"))?;
    let scan = run_delay_scan(&setup, &delays).map_err(|e| match e {
        Error::AtDelay { source, .. } if matches!(*source, Error::Domain(_)) => keyed("timescan")(*source),
        other => other,
    })?;
    // each delay picks its own truncation; this bounds all of them
    let peak = (1.0 + tc.rel_amplitude) * run.derived.beta_max_abs.unwrap_or(0.0);
    run.derived.l_max = Some(sideband_truncation(peak));

    let rows: Vec<Vec<f64>> = scan
        .points
        .iter()
        .map(|p| {
            vec![
                p.delay * 1e15,
                p.helicity.unwrap_or(f64::NAN),
                p.fringe_period.map_or(f64::NAN, |v| v * 1e6),
                p.intensity,
            ]
        })
        .collect();
    let meta = run.meta("two-pulse delay scan; blank = undefined at that delay", "fs, -, um, -");
    run.out.write_text(
        "scan.csv",
        &table_csv(&["delay_fs", "helicity", "fringe_period_um", "intensity"], &rows, &meta),
    )?;

    let t_fs: Vec<f64> = scan.delays().iter().map(|d| d * 1e15).collect();
    let (pmin, pmax) = (tc.fit_period_min_fs, tc.fit_period_max_fs);
    let intensity_fit = fit_oscillation(&t_fs, &scan.intensities(), pmin, pmax).map_err(keyed("timescan"));
    let helicity_fit = scan
        .helicities()
        .and_then(|h| fit_oscillation(&t_fs, &h, pmin, pmax).map(|f| (f, h)));
    let sign_changes = helicity_fit
        .as_ref()
        .ok()
        .map(|(f, h)| sign_changes_per_cycle(&t_fs, h, f.period));
    let summary = serde_json::json!({
        "axes": tc.axes,
        "optical_period_fs": sc.light.optical_period() * 1e15,
        "intensity_fit": fit_json(&intensity_fit),
        "helicity_fit": fit_json(&helicity_fit.map(|(f, _)| f)),
        "helicity_sign_changes_per_cycle": sign_changes,
    });
    run.out.write_json("scan_fit.json", &summary)?;

    if let Some(maps) = &scan.maps {
        let grid = setup.field_1.grid;
        let mut mean = RealField::zeros(grid.shape());
        for m in maps {
            mean += m;
        }
        mean /= maps.len() as f64;
        for (k, (m, p)) in maps.iter().zip(&scan.points).enumerate() {
            let diff = m - &mean;
            let stem = format!("difference_{k:03}");
            let mut meta = run.meta("energy-filtered map minus the scan mean", "1/m^2");
            meta.push(("delay_fs".into(), format!("{:e}", p.delay * 1e15)));
            if run.cfg.output.difference_csv {
                run.out.write_text(&format!("{stem}.csv"), &crate::io::real_field_csv(&diff, &grid, &meta))?;
            }
            if run.cfg.output.png {
                run.out.write_png(&stem, &diff, &meta)?;
            }
        }
    }
    Ok(())
}

fn cmd_proton(run: &mut Run) -> Result<()> {
    let pc = run.cfg.proton.clone();
    let model = ProtonModel {
        rms_charge_radius: pc.rms_fm * 1e-15,
        density_profile: pc.profile,
        ..ProtonModel::default()
    };
    model.validate().map_err(keyed("proton.rms_fm"))?;
    let q = QuadratureParams {
        points_per_scale: pc.points_per_scale,
        angular_points: pc.angular_points,
        max_points: pc.max_points,
        tolerance: pc.tolerance,
    };
    if pc.points_per_scale < 2 || pc.angular_points < 4 || !(pc.tolerance > 0.0) {
        return Err(Error::config("proton", "quadrature parameters too coarse"));
    }
    let waists: Vec<f64> = pc.waist_over_rms.iter().map(|r| r * model.rms_charge_radius).collect();
    let sweep = moment_vs_waist_sweep(&model, pc.l, &waists, &q).map_err(keyed("proton.waist_over_rms"))?;
    let rows: Vec<Vec<f64>> = sweep
        .iter()
        .map(|p| {
            vec![
                p.waist * 1e15,
                p.result.mu_over_mu_n,
                p.waist_over_rms,
                p.result.convergence_defect,
            ]
        })
        .collect();
    let meta = run.meta("orbital magnetic moment vs beam waist", "fm, mu_N, -, -");
    run.out.write_text(
        "sweep.csv",
        &table_csv(&["w_fm", "mu_over_muN", "waist_over_rms", "convergence_defect"], &rows, &meta),
    )?;
    let last = sweep.last().expect("non-empty sweep");
    let deviation = (last.result.mu_over_mu_n - pc.l as f64).abs();
    let summary = serde_json::json!({
        "profile": pc.profile,
        "l": pc.l,
        "rms_fm": pc.rms_fm,
        "resolution": q,
        "max_convergence_defect": sweep.iter().map(|p| p.result.convergence_defect).fold(0.0, f64::max),
        "asymptote": {
            "waist_over_rms": last.waist_over_rms,
            "mu_over_muN": last.result.mu_over_mu_n,
            "expected": pc.l,
            "abs_deviation": deviation,
            "within_1e-3": deviation < 1e-3,
        },
    });
    run.out.write_json("proton.json", &summary)?;
    Ok(())
}

/// Runs one subcommand and writes its outputs and `manifest.json`.
pub fn run(args: &Args) -> Result<RunManifest> {
    let start = Instant::now();
    let mut cfg = Config::load(&args.config)?;
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    let out = OutputDir::create(&cfg.output.dir)?;
    let mut run = Run {
        args,
        cfg,
        out,
        derived: Derived::default(),
        notes: MODEL_NOTES.iter().map(|s| s.to_string()).collect(),
    };
    let sc = Scenario::from_config(&run.cfg)?;
    run.derived.electron_velocity_m_per_s = sc.beam.velocity();
    run.derived.k_spp_re_per_m = sc.k_spp.re;
    run.derived.k_spp_im_per_m = sc.k_spp.im;
    run.derived.spp_wavelength_nm = 2.0 * PI / sc.k_spp.re * 1e9;
    run.derived.optical_period_fs = sc.light.optical_period() * 1e15;
    run.derived.reference_amplitude_re = sc.a.re;
    run.derived.reference_amplitude_im = sc.a.im;

    match args.command {
        Command::Nearfield => cmd_nearfield(&mut run, &sc)?,
        Command::Farfield => cmd_farfield(&mut run, &sc)?,
        Command::Timescan => cmd_timescan(&mut run, &sc)?,
        Command::Proton => cmd_proton(&mut run)?,
    }
    let resolved = run.cfg.to_toml();
    run.out.write_text("config.resolved.toml", &resolved)?;

    let manifest = RunManifest {
        tool: "chiral-pinem".into(),
        version: TOOL_VERSION.into(),
        command: args.command,
        config: run.cfg.clone(),
        derived: run.derived.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        outputs: run.out.records().to_vec(),
        notes: run.notes.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(run.out.root().join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

/// 0 success, 1 I/O, 2 configuration or input, 3 numerical convergence.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        return 3;
    }
    match err {
        Error::Io(_) => 1,
        Error::AtDelay { source, .. } => exit_code(source),
        _ => 2,
    }
}
