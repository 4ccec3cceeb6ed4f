//! Scenario files.
//!
//! TOML with one section per module. Every physical number carries a unit
//! suffix in its key (`power_W`, `waist_um`, `duration_ms`); numbers under
//! unsuffixed keys are rejected before deserialization. Dimensionless
//! numbers use `_ratio`, `_count` or `_gamma` (units of the natural
//! linewidth). The only exceptions are `scenario.seed` and `sweep.values`,
//! whose unit is that of the swept key.

// field names mirror the file keys, units included
#![allow(non_snake_case)]

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    CaptureRegion, CoolingConfig, InjectionGeometry, MolassesConfig, PowerSchedule, SimulationSpec, SourceConfig,
    SubDoppler,
};
use crate::lightshift::{SampleRegion, SpectrumOptions};
use crate::readout::ScanSettings;
use crate::trap_optics::{
    CavityMode, CavityParams, Gravity, LinewidthSource, ModePolarization, Propagation, ToneField,
};
use crate::{Error, Result};

/// Key suffixes accepted on numeric values.
pub const UNIT_SUFFIXES: &[&str] = &[
    "_W", "_mW", "_nm", "_um", "_mm", "_cm", "_m", "_s", "_ms", "_us", "_Hz", "_kHz", "_MHz", "_GHz", "_K", "_mK",
    "_uK", "_per_s", "_G_cm", "_T_m", "_W_m2", "_mW_cm2", "_uW_cm2", "_m_s2", "_gamma", "_ratio", "_count",
];

const UNSUFFIXED_ALLOWED: &[&str] = &["scenario.seed", "sweep.values"];

/// Largest seed a config file can hold (TOML integers are signed).
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
    #[serde(rename = "+y")]
    PlusY,
    #[serde(rename = "-y")]
    MinusY,
    #[serde(rename = "+z")]
    PlusZ,
    #[serde(rename = "-z")]
    MinusZ,
}

impl Direction {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Direction::PlusX => Vector3::x(),
            Direction::MinusX => -Vector3::x(),
            Direction::PlusY => Vector3::y(),
            Direction::MinusY => -Vector3::y(),
            Direction::PlusZ => Vector3::z(),
            Direction::MinusZ => -Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Ring,
    Shell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knot {
    pub t_ms: f64,
    pub power_W: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSection {
    pub wavelength_nm: f64,
    pub waist_um: f64,
    pub polarization: Axis,
    #[serde(default)]
    pub propagation: Propagation,
    #[serde(default)]
    pub backscatter_ratio: f64,
    /// Constant power; exclusive with `schedule`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_W: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<Knot>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravitySection {
    pub enabled: bool,
    pub acceleration_m_s2: f64,
    pub direction: Direction,
}

impl Default for GravitySection {
    fn default() -> Self {
        Self {
            enabled: true,
            acceleration_m_s2: 9.80665,
            direction: Direction::MinusZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub wavelength_nm: f64,
    pub polarization: ModePolarization,
    pub finesse_ratio: f64,
    pub waist_um: f64,
    /// Measured κ/2π.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_kHz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub circumference_cm: f64,
    /// g/2π.
    pub coupling_kHz: f64,
    #[serde(default)]
    pub linewidth_source: LinewidthSource,
    pub modes: Vec<ModeSection>,
}

impl Default for CavitySection {
    fn default() -> Self {
        let c = CavityParams::ring_cavity();
        Self {
            circumference_cm: c.circumference * 100.0,
            coupling_kHz: c.coupling / (2.0 * PI * 1e3),
            linewidth_source: c.linewidth_source,
            modes: c
                .modes
                .iter()
                .map(|m| ModeSection {
                    wavelength_nm: (m.wavelength * 1e9 * 1e6).round() / 1e6,
                    polarization: m.polarization,
                    finesse_ratio: m.finesse,
                    waist_um: (m.waist * 1e6 * 1e6).round() / 1e6,
                    linewidth_kHz: m.measured_linewidth.map(|k| (k / (2.0 * PI * 1e3) * 1e6).round() / 1e6),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapOpticsSection {
    pub trap: ToneSection,
    pub compensation: ToneSection,
    #[serde(default)]
    pub gravity: GravitySection,
    #[serde(default)]
    pub cavity: CavitySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightshiftSection {
    pub temperature_uK: f64,
    pub sample_count: f64,
    pub probe_fwhm_MHz: f64,
    pub sublevels: bool,
    pub start_MHz: f64,
    pub end_MHz: f64,
    pub step_MHz: f64,
}

impl Default for LightshiftSection {
    fn default() -> Self {
        Self {
            temperature_uK: 11.0,
            sample_count: 3000.0,
            probe_fwhm_MHz: 10.0,
            sublevels: true,
            start_MHz: -200.0,
            end_MHz: 200.0,
            step_MHz: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub rate_per_s: f64,
    pub temperature_uK: f64,
    pub geometry: Geometry,
    pub radius_um: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            rate_per_s: 6e7,
            temperature_uK: 300.0,
            geometry: Geometry::Ring,
            radius_um: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingSection {
    pub detuning_gamma: f64,
    pub intensity_mW_cm2: f64,
    pub beam_waist_mm: f64,
    pub repump_detuning_MHz: f64,
    pub repump_intensity_uW_cm2: f64,
    /// Axial quadrupole gradient; 0 switches the coils off.
    pub gradient_G_cm: f64,
    pub mot_center_um: [f64; 3],
    pub capture_radius_um: f64,
    pub capture_half_length_mm: f64,
    pub subdoppler_threshold_gamma: f64,
    pub subdoppler_floor_uK: f64,
    pub subdoppler_coefficient_uK: f64,
    pub subdoppler_rate_per_s: f64,
}

impl Default for CoolingSection {
    fn default() -> Self {
        Self::from_config(&CoolingConfig::default())
    }
}

impl CoolingSection {
    fn from_config(c: &CoolingConfig) -> Self {
        Self {
            detuning_gamma: c.detuning_gamma,
            intensity_mW_cm2: c.beam_intensity / 10.0,
            beam_waist_mm: c.beam_waist * 1e3,
            repump_detuning_MHz: c.repump_detuning * 1e-6,
            repump_intensity_uW_cm2: c.repump_intensity * 100.0,
            gradient_G_cm: c.gradient.unwrap_or(0.0) * 100.0,
            mot_center_um: [0, 1, 2].map(|i| (c.mot_center[i] * 1e6 * 1e6).round() / 1e6),
            capture_radius_um: c.capture.radius * 1e6,
            capture_half_length_mm: c.capture.half_length * 1e3,
            subdoppler_threshold_gamma: c.subdoppler.threshold_gamma,
            subdoppler_floor_uK: c.subdoppler.floor * 1e6,
            subdoppler_coefficient_uK: c.subdoppler.coefficient * 1e6,
            subdoppler_rate_per_s: c.subdoppler.rate,
        }
    }

    pub fn to_config(&self) -> CoolingConfig {
        CoolingConfig {
            detuning_gamma: self.detuning_gamma,
            beam_intensity: self.intensity_mW_cm2 * 10.0,
            beam_waist: self.beam_waist_mm / 1e3,
            repump_detuning: self.repump_detuning_MHz * 1e6,
            repump_intensity: self.repump_intensity_uW_cm2 / 1e2,
            gradient: (self.gradient_G_cm != 0.0).then_some(self.gradient_G_cm / 1e2),
            subdoppler: SubDoppler {
                threshold_gamma: self.subdoppler_threshold_gamma,
                floor: self.subdoppler_floor_uK / 1e6,
                coefficient: self.subdoppler_coefficient_uK / 1e6,
                rate: self.subdoppler_rate_per_s,
            },
            mot_center: Vector3::from(self.mot_center_um.map(|v| v / 1e6)),
            capture: CaptureRegion {
                radius: self.capture_radius_um / 1e6,
                half_length: self.capture_half_length_mm / 1e3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MolassesSection {
    pub duration_ms: f64,
    pub compensation_power_W: f64,
    pub detuning_gamma: f64,
    pub intensity_mW_cm2: f64,
    pub repump_intensity_uW_cm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Macro-atoms per physical atom.
    pub scale_ratio: f64,
    pub dt_us: f64,
    pub duration_ms: f64,
    pub hold_ms: f64,
    pub sample_interval_ms: f64,
    pub volume_radius_mm: f64,
    pub loss_rate_per_s: f64,
    #[serde(default)]
    pub snapshot: bool,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub cooling: CoolingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molasses: Option<MolassesSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub scan_half_span_kHz: f64,
    pub scan_points_count: f64,
    /// Gaussian noise on the normalized reflection.
    pub noise_ratio: f64,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            scan_half_span_kHz: 500.0,
            scan_points_count: 201.0,
            noise_ratio: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub tof_times_ms: Vec<f64>,
    pub tof_inflation_um: f64,
    /// Fewest trapped macro-atoms for which a TOF fit is attempted.
    pub tof_min_atoms_count: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            tof_times_ms: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            tof_inflation_um: 0.0,
            tof_min_atoms_count: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted key, e.g. `trap_optics.compensation.power_W`.
    pub parameter: String,
    pub values: Vec<f64>,
}

/// A complete scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario: ScenarioSection,
    pub trap_optics: TrapOpticsSection,
    #[serde(default)]
    pub lightshift: LightshiftSection,
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig3_sweep", include_str!("../../scenarios/fig3_sweep.toml")),
    ("fig5_traces", include_str!("../../scenarios/fig5_traces.toml")),
];

fn parse_error(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
}

fn check_units(value: &toml::Value, prefix: &str, text: &str, origin: &str) -> Result<()> {
    let toml::Value::Table(table) = value else {
        return Ok(());
    };
    for (key, v) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        let numeric = match v {
            toml::Value::Integer(_) | toml::Value::Float(_) => true,
            toml::Value::Array(items) => items
                .iter()
                .any(|i| matches!(i, toml::Value::Integer(_) | toml::Value::Float(_))),
            _ => false,
        };
        let allowed = UNSUFFIXED_ALLOWED.contains(&path.as_str()) || UNIT_SUFFIXES.iter().any(|s| key.ends_with(s));
        if numeric && !allowed {
            let at = line_of(text, key).map_or(String::new(), |l| format!(":{}", l + 1));
            return Err(parse_error(
                &format!("{origin}{at}"),
                format!(
                    "`{path}` is a number without a unit suffix (expected one of {})",
                    UNIT_SUFFIXES.join(" ")
                ),
            ));
        }
        match v {
            toml::Value::Table(_) => check_units(v, &path, text, origin)?,
            toml::Value::Array(items) => {
                for item in items {
                    check_units(item, &path, text, origin)?;
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Parses TOML into a raw value, enforcing unit suffixes.
pub fn parse_value(text: &str, origin: &str) -> Result<toml::Value> {
    let value: toml::Value = toml::from_str(text).map_err(|e| parse_error(origin, e.to_string()))?;
    check_units(&value, "", text, origin)?;
    Ok(value)
}

impl Scenario {
    pub fn from_value(value: toml::Value, origin: &str) -> Result<Self> {
        value
            .try_into()
            .map_err(|e: toml::de::Error| parse_error(origin, e.to_string()))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        Self::from_value(parse_value(text, origin)?, origin)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| parse_error(&origin, e.to_string()))?;
        Self::parse(&text, &origin)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidInput(format!("no bundled scenario `{name}`")))?;
        Self::parse(text, &format!("{name}.toml"))
    }

    /// The 36 W trap with 5.2 W compensation and no sweep.
    pub fn reference() -> Self {
        let mut s = Self::bundled("fig3_sweep").expect("bundled scenario parses");
        s.sweep = None;
        s.scenario.name = "reference".into();
        s.scenario.out_dir = None;
        s
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn to_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Copy with the dotted numeric key set to `value`.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<Self> {
        let unknown = || Error::UnknownParameter(parameter.to_string());
        let mut root = self.to_value()?;
        let (path, key) = parameter.rsplit_once('.').unwrap_or(("", parameter));
        let mut node = &mut root;
        for part in path.split('.').filter(|p| !p.is_empty()) {
            node = node.get_mut(part).ok_or_else(unknown)?;
        }
        let table = node.as_table_mut().ok_or_else(unknown)?;
        let known = table.contains_key(key) || is_optional_power(parameter);
        if !known || !UNIT_SUFFIXES.iter().any(|s| key.ends_with(s)) {
            return Err(unknown());
        }
        table.insert(key.to_string(), toml::Value::Float(value));
        if key == "power_W" {
            // a constant power replaces any schedule on the same tone
            table.remove("schedule");
        }
        Self::from_value(root, parameter)
    }

    /// Power schedule of a tone, or a flat one from `power_W`.
    fn schedule(tone: &ToneSection) -> Result<PowerSchedule> {
        match (&tone.schedule, tone.power_W) {
            (Some(knots), None) => PowerSchedule::new(knots.iter().map(|k| (k.t_ms * 1e-3, k.power_W)).collect()),
            (None, Some(p)) => Ok(PowerSchedule::flat(p)),
            _ => Err(Error::InvalidInput("give exactly one of power_W and schedule".into())),
        }
    }

    pub fn tone(section: &ToneSection) -> ToneField {
        let power = match (&section.schedule, section.power_W) {
            (_, Some(p)) => p,
            (Some(k), None) => k.first().map_or(0.0, |k| k.power_W),
            _ => 0.0,
        };
        ToneField::new(section.wavelength_nm * 1e-9, power, section.waist_um * 1e-6)
            .with_polarization(section.polarization.unit())
            .with_propagation(section.propagation)
            .with_backscatter(section.backscatter_ratio)
    }

    /// Trap and compensation tones at their t = 0 powers.
    pub fn tones(&self) -> Vec<ToneField> {
        vec![
            Self::tone(&self.trap_optics.trap),
            Self::tone(&self.trap_optics.compensation),
        ]
    }

    pub fn gravity(&self) -> Result<Option<Gravity>> {
        let g = &self.trap_optics.gravity;
        if g.enabled {
            Gravity::new(g.acceleration_m_s2, g.direction.unit()).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn cavity(&self) -> CavityParams {
        let c = &self.trap_optics.cavity;
        CavityParams {
            circumference: c.circumference_cm * 1e-2,
            modes: c
                .modes
                .iter()
                .map(|m| CavityMode {
                    wavelength: m.wavelength_nm * 1e-9,
                    polarization: m.polarization,
                    finesse: m.finesse_ratio,
                    waist: m.waist_um * 1e-6,
                    measured_linewidth: m.linewidth_kHz.map(|k| 2.0 * PI * k * 1e3),
                })
                .collect(),
            coupling: 2.0 * PI * c.coupling_kHz * 1e3,
            linewidth_source: c.linewidth_source,
        }
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        let l = &self.lightshift;
        SpectrumOptions {
            start_hz: l.start_MHz * 1e6,
            end_hz: l.end_MHz * 1e6,
            step_hz: l.step_MHz * 1e6,
            sublevels: l.sublevels.then_some(3),
        }
    }

    pub fn sample_region(&self) -> SampleRegion {
        SampleRegion::default()
    }

    pub fn scan_settings(&self, center_hz: f64) -> ScanSettings {
        let r = &self.readout;
        ScanSettings::around(
            center_hz,
            r.scan_half_span_kHz * 1e3,
            r.scan_points_count as usize,
            r.noise_ratio,
        )
    }

    pub fn molasses(&self) -> Option<MolassesConfig> {
        self.dynamics.molasses.as_ref().map(|m| {
            let mut cooling = self.dynamics.cooling.to_config().molasses();
            cooling.detuning_gamma = m.detuning_gamma;
            cooling.beam_intensity = m.intensity_mW_cm2 * 10.0;
            cooling.repump_intensity = m.repump_intensity_uW_cm2 * 1e-2;
            cooling.repump_detuning = 0.0;
            MolassesConfig {
                duration: m.duration_ms * 1e-3,
                compensation_power: m.compensation_power_W,
                cooling,
            }
        })
    }

    /// Every violation found, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.scenario.seed > MAX_SEED {
            p.push(format!("scenario.seed: must not exceed {MAX_SEED}"));
        }
        for (name, tone) in [
            ("trap", &self.trap_optics.trap),
            ("compensation", &self.trap_optics.compensation),
        ] {
            match Self::schedule(tone) {
                Ok(s) => {
                    if s.knots()[0].0 != 0.0 {
                        p.push(format!("trap_optics.{name}: schedule must start at t = 0"));
                    }
                }
                Err(e) => p.push(format!("trap_optics.{name}: {e}")),
            }
            if let Err(e) = Self::tone(tone).validate() {
                p.push(format!("trap_optics.{name}: {e}"));
            }
        }
        let g = &self.trap_optics.gravity;
        if g.enabled && !(g.acceleration_m_s2 >= 0.0) {
            p.push("trap_optics.gravity: acceleration must be non-negative".into());
        }
        if let Err(Error::Validation(v)) = self.cavity().validate() {
            p.extend(v.into_iter().map(|m| format!("trap_optics.cavity: {m}")));
        }
        let l = &self.lightshift;
        if !(l.temperature_uK >= 0.0) || !(l.sample_count >= 1.0) || !(l.probe_fwhm_MHz >= 0.0) {
            p.push("lightshift: temperature, sample count and probe width must be non-negative".into());
        }
        if !(l.step_MHz > 0.0) || !(l.end_MHz > l.start_MHz) {
            p.push("lightshift: need step_MHz > 0 and end_MHz > start_MHz".into());
        }
        let d = &self.dynamics;
        if !(d.scale_ratio > 0.0 && d.scale_ratio <= 1.0) {
            p.push("dynamics.scale_ratio must lie in (0, 1]".into());
        }
        for (k, v) in [
            ("dt_us", d.dt_us),
            ("sample_interval_ms", d.sample_interval_ms),
            ("volume_radius_mm", d.volume_radius_mm),
        ] {
            if !(v > 0.0) {
                p.push(format!("dynamics.{k} must be positive"));
            }
        }
        for (k, v) in [
            ("duration_ms", d.duration_ms),
            ("hold_ms", d.hold_ms),
            ("loss_rate_per_s", d.loss_rate_per_s),
        ] {
            if !(v >= 0.0) {
                p.push(format!("dynamics.{k} must be non-negative"));
            }
        }
        p.extend(
            self.dynamics
                .cooling
                .to_config()
                .problems()
                .into_iter()
                .map(|m| format!("dynamics.cooling: {m}")),
        );
        p.extend(
            self.source_config()
                .problems()
                .into_iter()
                .map(|m| format!("dynamics.source: {m}")),
        );
        if let Some(m) = &d.molasses {
            if !(m.duration_ms >= 0.0) || !(m.compensation_power_W >= 0.0) {
                p.push("dynamics.molasses: duration and power must be non-negative".into());
            }
        }
        let r = &self.readout;
        if !(r.scan_half_span_kHz > 0.0) || !(r.scan_points_count >= 5.0) || !(r.noise_ratio >= 0.0) {
            p.push("readout: need a positive span, at least 5 points and non-negative noise".into());
        }
        let a = &self.analysis;
        if a.tof_times_ms.len() < 3 || a.tof_times_ms.windows(2).any(|w| w[1] <= w[0]) {
            p.push("analysis.tof_times_ms needs at least 3 strictly increasing times".into());
        }
        if let Some(s) = &self.sweep {
            if let Err(e) = self.with_parameter(&s.parameter, s.values.first().copied().unwrap_or(0.0)) {
                p.push(format!("sweep: {e}"));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    fn source_config(&self) -> SourceConfig {
        let s = &self.dynamics.source;
        let radius = s.radius_um * 1e-6;
        SourceConfig {
            rate: s.rate_per_s,
            temperature: s.temperature_uK * 1e-6,
            geometry: match s.geometry {
                Geometry::Ring => InjectionGeometry::Ring { radius },
                Geometry::Shell => InjectionGeometry::Shell { radius },
            },
        }
    }

    /// Dynamics input in SI units. Validates first.
    pub fn to_spec(&self) -> Result<SimulationSpec> {
        self.validate()?;
        let d = &self.dynamics;
        let t = &self.trap_optics;
        Ok(SimulationSpec {
            trap: Self::tone(&t.trap),
            trap_schedule: Self::schedule(&t.trap)?,
            compensation: Self::tone(&t.compensation),
            schedule: Self::schedule(&t.compensation)?,
            gravity: self.gravity()?,
            cooling: d.cooling.to_config(),
            source: self.source_config(),
            cavity: self.cavity(),
            loss_rate: d.loss_rate_per_s,
            scale: d.scale_ratio,
            dt: d.dt_us * 1e-6,
            duration: d.duration_ms * 1e-3,
            hold: d.hold_ms * 1e-3,
            sample_interval: d.sample_interval_ms * 1e-3,
            seed: self.scenario.seed,
            volume_radius: d.volume_radius_mm * 1e-3,
        })
    }
}

fn is_optional_power(parameter: &str) -> bool {
    parameter.starts_with("trap_optics.") && parameter.ends_with(".power_W")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[scenario]
name = "minimal"
seed = 7

[trap_optics.trap]
wavelength_nm = 1560
waist_um = 157
polarization = "z"
power_W = 36

[trap_optics.compensation]
wavelength_nm = 1527
waist_um = 155
polarization = "y"
propagation = "backward"
power_W = 5.2

[dynamics]
scale_ratio = 1e-4
dt_us = 80
duration_ms = 20
hold_ms = 0
sample_interval_ms = 10
volume_radius_mm = 5
loss_rate_per_s = 1.8
"#;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let s = Scenario::parse(MINIMAL, "minimal.toml").unwrap();
        s.validate().unwrap();
        let spec = s.to_spec().unwrap();
        assert_eq!(spec.seed, 7);
        assert!((spec.compensation.power - 5.2).abs() < 1e-12);
        assert!((spec.cooling.mot_center.y - 800e-6).abs() < 1e-15);
        assert_eq!(spec.cavity, CavityParams::ring_cavity());
    }

    #[test]
    fn bundled_scenarios_validate() {
        for (name, _) in BUNDLED {
            let s = Scenario::bundled(name).unwrap();
            s.validate().unwrap();
            assert!(s.sweep.is_some());
        }
        assert!(Scenario::reference().sweep.is_none());
    }

    #[test]
    fn round_trip_is_identity() {
        let s = Scenario::parse(MINIMAL, "m").unwrap();
        let again = Scenario::parse(&s.to_toml().unwrap(), "m2").unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn unsuffixed_numbers_are_rejected() {
        let text = MINIMAL.replace("loss_rate_per_s = 1.8", "loss = 1.8");
        let e = Scenario::parse(&text, "bad.toml").unwrap_err();
        match e {
            Error::Parse { path, message } => {
                assert!(path.starts_with("bad.toml:"), "{path}");
                assert!(message.contains("dynamics.loss"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("power_W = 36", "power_W = 36\ncolour = \"red\"");
        assert!(matches!(Scenario::parse(&text, "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut s = Scenario::parse(MINIMAL, "m").unwrap();
        s.dynamics.dt_us = -1.0;
        s.dynamics.scale_ratio = 2.0;
        s.trap_optics.trap.waist_um = 0.0;
        match s.validate() {
            Err(Error::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parameters_are_addressable() {
        let s = Scenario::parse(MINIMAL, "m").unwrap();
        let t = s.with_parameter("trap_optics.compensation.power_W", 2.8).unwrap();
        assert_eq!(t.trap_optics.compensation.power_W, Some(2.8));
        let t = s.with_parameter("dynamics.cooling.detuning_gamma", -3.0).unwrap();
        assert_eq!(t.dynamics.cooling.detuning_gamma, -3.0);
        assert!(matches!(
            s.with_parameter("dynamics.nothing_W", 1.0),
            Err(Error::UnknownParameter(_))
        ));
        assert!(matches!(
            s.with_parameter("scenario.name", 1.0),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn schedule_and_power_are_exclusive() {
        let text = MINIMAL.replace(
            "power_W = 5.2",
            "power_W = 5.2\nschedule = [{ t_ms = 0, power_W = 2.8 }]",
        );
        let s = Scenario::parse(&text, "m").unwrap();
        assert!(s.validate().is_err());
        let text = MINIMAL.replace(
            "power_W = 5.2",
            "schedule = [{ t_ms = 0, power_W = 2.8 }, { t_ms = 500, power_W = 2.8 }, { t_ms = 550, power_W = 5.2 }]",
        );
        let spec = Scenario::parse(&text, "m").unwrap().to_spec().unwrap();
        assert!((spec.schedule.at(0.525) - 4.0).abs() < 1e-9);
    }
}
