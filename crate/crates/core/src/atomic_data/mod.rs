//! ⁸⁷Rb constants and frequency-dependent polarizabilities.
//!
//! Everything here is immutable once loaded. The bundled data file
//! (`data/rb87.toml`) is parsed once on first use and shared.
//!
//! Sign convention: a level with polarizability α in a field of intensity I
//! shifts by ΔE = −α I / (2ε₀c). Polarizabilities are in J m²/V².

mod level;
pub mod wigner;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Deserialize;

pub use level::{GroundManifold, Level, LevelId};
use wigner::wigner_6j;

use crate::{Error, Result};

const BUNDLED: &str = include_str!("../../data/rb87.toml");

/// Wavelengths closer than this to a tabulated entry use the table value.
const TABLE_MATCH_TOLERANCE: f64 = 1e-12;

/// Physical constants for ⁸⁷Rb in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicConstants {
    /// Atomic mass (kg).
    pub mass: f64,
    /// Natural linewidth Γ of 5P₃/₂ (rad/s).
    pub gamma: f64,
    /// D2 cycling-transition saturation intensity (W/m²).
    pub saturation_intensity: f64,
    /// Ground-state hyperfine splitting (Hz).
    pub hyperfine_splitting: f64,
    /// 5P₃/₂ F′=3 to F′=2 splitting (Hz).
    pub excited_f3_f2_splitting: f64,
    pub d2_wavelength: f64,
    pub nuclear_spin_twice: u32,
    pub boltzmann: f64,
    pub planck: f64,
    pub hbar: f64,
    pub speed_of_light: f64,
    pub vacuum_permittivity: f64,
    /// ε₀c, converting |E|²_rms to intensity.
    pub eps0_c: f64,
    pub bohr_magneton: f64,
    pub atomic_unit_dipole: f64,
    pub standard_gravity: f64,
}

impl AtomicConstants {
    /// D2 wavenumber k = 2π/λ (1/m).
    pub fn d2_wavenumber(&self) -> f64 {
        2.0 * PI / self.d2_wavelength
    }

    pub fn nuclear_spin(&self) -> f64 {
        self.nuclear_spin_twice as f64 / 2.0
    }

    /// Energy shift of a level with polarizability α at intensity I.
    pub fn light_shift(&self, polarizability: f64, intensity: f64) -> f64 {
        -polarizability * intensity / (2.0 * self.eps0_c)
    }
}

/// Scalar and tensor polarizability of one level at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizabilityEntry {
    pub level: LevelId,
    pub wavelength: f64,
    pub scalar: f64,
    pub tensor: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Transition {
    lower: Level,
    upper: Level,
    /// |⟨upper‖d‖lower⟩| in C·m.
    reduced_dipole: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct TableEntry {
    level: Level,
    wavelength: f64,
    scalar: f64,
}

/// Constants, level energies, dipole matrix elements and tabulated
/// polarizabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicData {
    pub constants: AtomicConstants,
    /// Term energies above 5S₁/₂ (J).
    energies: BTreeMap<Level, f64>,
    transitions: Vec<Transition>,
    table: Vec<TableEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    constants: RawConstants,
    levels: Vec<RawLevel>,
    transitions: Vec<RawTransition>,
    scalar_table: Vec<RawTableEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawConstants {
    mass_kg: f64,
    natural_linewidth_MHz: f64,
    saturation_intensity_W_m2: f64,
    hyperfine_splitting_GHz: f64,
    excited_f3_f2_splitting_MHz: f64,
    d2_wavelength_nm: f64,
    nuclear_spin_twice: u32,
    boltzmann_J_K: f64,
    planck_J_s: f64,
    vacuum_permittivity_F_m: f64,
    speed_of_light_m_s: f64,
    bohr_magneton_J_T: f64,
    atomic_unit_dipole_C_m: f64,
    standard_gravity_m_s2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    id: Level,
    j_twice: u32,
    energy_cm1: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    lower: Level,
    upper: Level,
    reduced_dipole_au: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawTableEntry {
    level: Level,
    wavelength_nm: f64,
    scalar_J_m2_V2: f64,
}

impl AtomicData {
    /// The bundled ⁸⁷Rb data set.
    pub fn rb87() -> &'static AtomicData {
        static DATA: OnceLock<AtomicData> = OnceLock::new();
        DATA.get_or_init(|| AtomicData::from_toml(BUNDLED).expect("bundled rb87.toml is valid"))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::AtomicData(e.to_string()))?;
        let c = raw.constants;
        let positive = [
            ("mass_kg", c.mass_kg),
            ("natural_linewidth_MHz", c.natural_linewidth_MHz),
            ("saturation_intensity_W_m2", c.saturation_intensity_W_m2),
            ("hyperfine_splitting_GHz", c.hyperfine_splitting_GHz),
            ("boltzmann_J_K", c.boltzmann_J_K),
            ("planck_J_s", c.planck_J_s),
            ("vacuum_permittivity_F_m", c.vacuum_permittivity_F_m),
            ("speed_of_light_m_s", c.speed_of_light_m_s),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::AtomicData(format!("{name} must be positive")));
        }
        let constants = AtomicConstants {
            mass: c.mass_kg,
            gamma: 2.0 * PI * c.natural_linewidth_MHz * 1e6,
            saturation_intensity: c.saturation_intensity_W_m2,
            hyperfine_splitting: c.hyperfine_splitting_GHz * 1e9,
            excited_f3_f2_splitting: c.excited_f3_f2_splitting_MHz * 1e6,
            d2_wavelength: c.d2_wavelength_nm * 1e-9,
            nuclear_spin_twice: c.nuclear_spin_twice,
            boltzmann: c.boltzmann_J_K,
            planck: c.planck_J_s,
            hbar: c.planck_J_s / (2.0 * PI),
            speed_of_light: c.speed_of_light_m_s,
            vacuum_permittivity: c.vacuum_permittivity_F_m,
            eps0_c: c.vacuum_permittivity_F_m * c.speed_of_light_m_s,
            bohr_magneton: c.bohr_magneton_J_T,
            atomic_unit_dipole: c.atomic_unit_dipole_C_m,
            standard_gravity: c.standard_gravity_m_s2,
        };

        // 1 cm⁻¹ = 100 h c joules.
        let cm1 = 100.0 * constants.planck * constants.speed_of_light;
        let mut energies = BTreeMap::new();
        for l in raw.levels {
            if l.j_twice != l.id.j_twice() {
                return Err(Error::AtomicData(format!(
                    "level {} has 2J={} but expected {}",
                    l.id,
                    l.j_twice,
                    l.id.j_twice()
                )));
            }
            energies.insert(l.id, l.energy_cm1 * cm1);
        }
        let mut transitions = Vec::new();
        for t in raw.transitions {
            for lvl in [t.lower, t.upper] {
                if !energies.contains_key(&lvl) {
                    return Err(Error::AtomicData(format!("transition references unknown level {lvl}")));
                }
            }
            transitions.push(Transition {
                lower: t.lower,
                upper: t.upper,
                reduced_dipole: t.reduced_dipole_au * constants.atomic_unit_dipole,
            });
        }
        let table = raw
            .scalar_table
            .into_iter()
            .map(|e| TableEntry {
                level: e.level,
                wavelength: e.wavelength_nm * 1e-9,
                scalar: e.scalar_J_m2_V2,
            })
            .collect();

        Ok(Self {
            constants,
            energies,
            transitions,
            table,
        })
    }

    fn table_lookup(&self, level: Level, wavelength: f64) -> Option<f64> {
        self.table
            .iter()
            .find(|e| e.level == level && (e.wavelength - wavelength).abs() <= TABLE_MATCH_TOLERANCE)
            .map(|e| e.scalar)
    }

    /// Returns the dipole partners of `level` with (ΔE, |d|², J′), or the
    /// list of expected partners that are absent from the data.
    fn partners(&self, level: Level) -> Result<Vec<(f64, f64, Level)>, Vec<String>> {
        let expected = level.sum_partners();
        if expected.is_empty() {
            return Err(vec![format!("{level}: no transitions defined")]);
        }
        let e0 = self.energies.get(&level).copied();
        let mut out = Vec::new();
        let mut missing = Vec::new();
        for &upper in expected {
            let t = self.transitions.iter().find(|t| t.lower == level && t.upper == upper);
            match (t, e0, self.energies.get(&upper)) {
                (Some(t), Some(e0), Some(&e1)) => out.push((e1 - e0, t.reduced_dipole * t.reduced_dipole, upper)),
                _ => missing.push(format!("{level} -> {upper}")),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(missing)
        }
    }

    fn photon_energy(&self, wavelength: f64) -> f64 {
        self.constants.planck * self.constants.speed_of_light / wavelength
    }

    /// Truncated sum-over-states scalar polarizability.
    pub fn sum_over_states_scalar(&self, level: Level, wavelength: f64) -> Result<f64> {
        let partners = self.partners(level).map_err(|_| Error::UnknownLevel {
            level: level.to_string(),
            wavelength_nm: wavelength * 1e9,
        })?;
        let w = self.photon_energy(wavelength);
        let j2 = level.j_twice() as f64;
        let pref = 2.0 / (3.0 * (j2 + 1.0));
        Ok(pref
            * partners
                .iter()
                .map(|&(de, d2, _)| d2 * de / (de * de - w * w))
                .sum::<f64>())
    }

    /// Scalar polarizability α_s. Tabulated pairs are returned exactly; other
    /// wavelengths fall back to the truncated sum over states.
    pub fn scalar_polarizability(&self, level: Level, wavelength: f64) -> Result<f64> {
        if let Some(v) = self.table_lookup(level, wavelength) {
            return Ok(v);
        }
        self.sum_over_states_scalar(level, wavelength)
    }

    /// Rank-2 polarizability α₂ of the fine-structure level, in the convention
    /// ΔE(m_J) = −½ℰ²[α_s + α₂ (3m_J² − J(J+1))/(J(2J−1))].
    pub fn tensor_polarizability_j(&self, level: Level, wavelength: f64) -> Result<f64> {
        let j2 = level.j_twice() as i64;
        if j2 < 2 {
            return Ok(0.0);
        }
        let partners = self.partners(level).map_err(|missing| Error::MissingMatrixElement {
            level: level.to_string(),
            missing,
        })?;
        let j = j2 as f64 / 2.0;
        let c = (5.0 * j * (2.0 * j - 1.0) / (6.0 * (j + 1.0) * (2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt();
        let w = self.photon_energy(wavelength);
        let sum: f64 = partners
            .iter()
            .map(|&(de, d2, upper)| {
                let jk2 = upper.j_twice() as i64;
                // (−1)^(J + J′ + 1), integer exponent
                let phase = if ((j2 + jk2) / 2 + 1) % 2 == 0 { 1.0 } else { -1.0 };
                phase * wigner_6j(j2, 2, jk2, 2, j2, 4) * d2 * de / (de * de - w * w)
            })
            .sum();
        Ok(-4.0 * c * sum)
    }

    /// Ratio α₂(F)/α₂(J) for hyperfine level F.
    pub fn hyperfine_tensor_factor(&self, level: Level, f: u32) -> f64 {
        let j2 = level.j_twice() as i64;
        let i2 = self.constants.nuclear_spin_twice as i64;
        let f2 = 2 * f as i64;
        if j2 < 2 || f < 1 {
            return 0.0;
        }
        let (jf, ff) = (j2 as f64 / 2.0, f as f64);
        let exponent = (j2 + i2 + f2) / 2;
        let phase = if exponent % 2 == 0 { 1.0 } else { -1.0 };
        let root = (ff * (2.0 * ff - 1.0) * (2.0 * ff + 1.0) * (2.0 * jf + 3.0) * (2.0 * jf + 1.0) * (jf + 1.0)
            / ((2.0 * ff + 3.0) * (ff + 1.0) * jf * (2.0 * jf - 1.0)))
            .sqrt();
        phase * wigner_6j(f2, j2, i2, j2, f2, 4) * root
    }

    /// Tensor polarizability α_t. With an F label this is the hyperfine-level
    /// value used with the operator [3(F̂·ε̂)² − F̂²]/(F(2F−1)); without one it is
    /// the fine-structure α₂.
    pub fn tensor_polarizability(&self, level: LevelId, wavelength: f64) -> Result<f64> {
        let alpha_j = self.tensor_polarizability_j(level.level, wavelength)?;
        Ok(match level.f {
            Some(f) => alpha_j * self.hyperfine_tensor_factor(level.level, f),
            None => alpha_j,
        })
    }

    pub fn entry(&self, level: LevelId, wavelength: f64) -> Result<PolarizabilityEntry> {
        Ok(PolarizabilityEntry {
            level,
            wavelength,
            scalar: self.scalar_polarizability(level.level, wavelength)?,
            tensor: self.tensor_polarizability(level, wavelength)?,
        })
    }
}
