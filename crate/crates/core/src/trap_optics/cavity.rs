use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance allowed between a measured linewidth and 2π·FSR/finesse.
pub const LINEWIDTH_CONSISTENCY_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModePolarization {
    S,
    P,
}

/// Which linewidth a scenario treats as authoritative for a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinewidthSource {
    #[default]
    Measured,
    Finesse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityMode {
    /// Vacuum wavelength (m).
    pub wavelength: f64,
    pub polarization: ModePolarization,
    pub finesse: f64,
    /// Mode waist at the atoms (m).
    pub waist: f64,
    /// Measured FWHM linewidth κ (rad/s), if one was reported.
    pub measured_linewidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityParams {
    /// Round-trip length (m).
    pub circumference: f64,
    pub modes: Vec<CavityMode>,
    /// Single-atom coupling g on the high-finesse 780-nm mode (rad/s).
    pub coupling: f64,
    pub linewidth_source: LinewidthSource,
}

impl CavityParams {
    /// The bow-tie ring cavity used throughout the bundled scenarios.
    pub fn ring_cavity() -> Self {
        let khz = 2.0 * PI * 1e3;
        let mode = |nm: f64, polarization, finesse: f64, waist_um: f64, kappa_khz: Option<f64>| CavityMode {
            wavelength: nm * 1e-9,
            polarization,
            finesse,
            waist: waist_um * 1e-6,
            measured_linewidth: kappa_khz.map(|k| k * khz),
        };
        Self {
            circumference: 0.0984,
            modes: vec![
                mode(780.0, ModePolarization::S, 39e3, 111.0, Some(85.0)),
                mode(780.0, ModePolarization::P, 2.2e3, 111.0, Some(1390.0)),
                mode(1560.0, ModePolarization::S, 103e3, 157.0, Some(30.0)),
                mode(1527.0, ModePolarization::P, 2.2e3, 155.0, None),
            ],
            coupling: 2.0 * PI * 85e3,
            linewidth_source: LinewidthSource::Measured,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.circumference > 0.0) {
            problems.push("circumference must be positive".to_string());
        }
        if !(self.coupling >= 0.0) {
            problems.push("coupling must be non-negative".to_string());
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.finesse > 1.0) {
                problems.push(format!("mode {i}: finesse must exceed 1"));
            }
            if !(m.waist > 0.0) {
                problems.push(format!("mode {i}: waist must be positive"));
            }
            if !(m.wavelength > 0.0) {
                problems.push(format!("mode {i}: wavelength must be positive"));
            }
            if let (Some(k), true) = (m.measured_linewidth, self.circumference > 0.0 && m.finesse > 1.0) {
                let derived = linewidth_from_finesse(self, m);
                if ((k - derived) / derived).abs() > LINEWIDTH_CONSISTENCY_TOLERANCE {
                    problems.push(format!(
                        "mode {i}: measured linewidth {:.4} kHz disagrees with finesse-derived {:.4} kHz",
                        k / (2.0 * PI * 1e3),
                        derived / (2.0 * PI * 1e3)
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn mode(&self, wavelength: f64, polarization: ModePolarization) -> Option<&CavityMode> {
        self.modes
            .iter()
            .find(|m| m.polarization == polarization && (m.wavelength - wavelength).abs() < 1e-12)
    }

    /// Linewidth (rad/s) chosen according to `linewidth_source`.
    pub fn linewidth(&self, mode: &CavityMode) -> f64 {
        match (self.linewidth_source, mode.measured_linewidth) {
            (LinewidthSource::Measured, Some(k)) => k,
            _ => linewidth_from_finesse(self, mode),
        }
    }
}

/// c/L in Hz.
pub fn free_spectral_range(cavity: &CavityParams) -> f64 {
    SPEED_OF_LIGHT / cavity.circumference
}

/// κ = 2π·FSR/finesse (rad/s).
pub fn linewidth_from_finesse(cavity: &CavityParams, mode: &CavityMode) -> f64 {
    2.0 * PI * free_spectral_range(cavity) / mode.finesse
}

/// Peak relative intensity modulation 2√f from a back-scattered fraction f.
pub fn backscatter_modulation(fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "back-scatter fraction {fraction} outside [0, 1)"
        )));
    }
    Ok(2.0 * fraction.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fsr_of_ring() {
        let cav = CavityParams::ring_cavity();
        assert!((free_spectral_range(&cav) / 1e9 - 3.0467).abs() < 1e-3);
        let unit = CavityParams {
            circumference: SPEED_OF_LIGHT,
            ..cav.clone()
        };
        assert!((free_spectral_range(&unit) - 1.0).abs() < 1e-12);
        let doubled = CavityParams {
            circumference: 2.0 * cav.circumference,
            ..cav.clone()
        };
        assert!((free_spectral_range(&cav) / free_spectral_range(&doubled) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finesse_linewidths() {
        let cav = CavityParams::ring_cavity();
        let hi = cav.mode(1560e-9, ModePolarization::S).unwrap();
        let k = linewidth_from_finesse(&cav, hi) / (2.0 * PI);
        assert!((k - 29.6e3).abs() < 0.1e3, "{k}");
        let lo = cav.mode(780e-9, ModePolarization::P).unwrap();
        let k = linewidth_from_finesse(&cav, lo) / (2.0 * PI);
        assert!((k - 1.39e6).abs() < 0.01e6, "{k}");
        let sharp = CavityMode {
            finesse: 1e15,
            ..hi.clone()
        };
        assert!(linewidth_from_finesse(&cav, &sharp) < 1e-3);
    }

    #[test]
    fn linewidth_source_selects_value() {
        let mut cav = CavityParams::ring_cavity();
        let m = cav.mode(780e-9, ModePolarization::S).unwrap().clone();
        assert!((cav.linewidth(&m) / (2.0 * PI) - 85e3).abs() < 1e-6);
        cav.linewidth_source = LinewidthSource::Finesse;
        assert!((cav.linewidth(&m) / (2.0 * PI) - 78.1e3).abs() < 0.1e3);
    }

    #[test]
    fn bundled_cavity_is_consistent() {
        CavityParams::ring_cavity().validate().unwrap();
        let mut bad = CavityParams::ring_cavity();
        bad.modes[0].finesse = 1.0;
        bad.circumference = -1.0;
        match bad.validate() {
            Err(Error::Validation(v)) => assert!(v.len() >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn modulation_depths() {
        assert!((backscatter_modulation(5e-3).unwrap() - 0.1414).abs() < 1e-4);
        assert_eq!(backscatter_modulation(0.0).unwrap(), 0.0);
        assert!((backscatter_modulation(0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!(backscatter_modulation(1.0).is_err());
    }
}
