use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Direction of travel along the cavity axis (x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Propagation {
    #[default]
    Forward,
    Backward,
}

/// One intracavity light tone: a fundamental Gaussian mode whose waist sits
/// at the origin and whose axis is x.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneField {
    /// Vacuum wavelength (m).
    pub wavelength: f64,
    /// Circulating power (W).
    pub power: f64,
    /// 1/e² intensity radius at the focus (m), averaged over both axes.
    pub waist: f64,
    /// Linear polarization, unit norm.
    pub polarization: Vector3<f64>,
    pub propagation: Propagation,
    /// Power fraction scattered into the counter-propagating mode.
    pub backscatter: f64,
}

impl ToneField {
    /// Forward-propagating tone polarized along z with no back-scatter.
    pub fn new(wavelength: f64, power: f64, waist: f64) -> Self {
        Self {
            wavelength,
            power,
            waist,
            polarization: Vector3::z(),
            propagation: Propagation::Forward,
            backscatter: 0.0,
        }
    }

    pub fn with_polarization(mut self, polarization: Vector3<f64>) -> Self {
        let n = polarization.norm();
        self.polarization = if n > 0.0 { polarization / n } else { polarization };
        self
    }

    pub fn with_propagation(mut self, propagation: Propagation) -> Self {
        self.propagation = propagation;
        self
    }

    pub fn with_backscatter(mut self, fraction: f64) -> Self {
        self.backscatter = fraction;
        self
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.power = power;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.wavelength > 0.0) {
            problems.push("wavelength must be positive");
        }
        if !(self.power >= 0.0) {
            problems.push("power must be non-negative");
        }
        if !(self.waist > 0.0) {
            problems.push("waist must be positive");
        }
        if !(0.0..1.0).contains(&self.backscatter) {
            problems.push("back-scatter fraction must lie in [0, 1)");
        }
        if (self.polarization.norm() - 1.0).abs() > 1e-9 {
            problems.push("polarization must be a unit vector");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.wavelength
    }

    /// 2P/(πw²).
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }

    /// Whether `point` lies within ten Rayleigh ranges of the focus, where
    /// the paraxial mode is used.
    pub fn in_validity_region(&self, point: &Vector3<f64>) -> bool {
        point.x.abs() <= 10.0 * self.rayleigh_range()
    }

    fn modulation_depth(&self) -> f64 {
        2.0 * self.backscatter.sqrt()
    }

    /// Intensity I(r) in W/m², including divergence and any back-scatter
    /// standing-wave modulation.
    pub fn intensity_at(&self, point: &Vector3<f64>) -> f64 {
        if self.power == 0.0 {
            return 0.0;
        }
        let zr = self.rayleigh_range();
        let w2 = self.waist * self.waist * (1.0 + (point.x / zr).powi(2));
        let rho2 = point.y * point.y + point.z * point.z;
        let base = 2.0 * self.power / (PI * w2) * (-2.0 * rho2 / w2).exp();
        if self.backscatter > 0.0 {
            let k = 2.0 * PI / self.wavelength;
            base * (1.0 + self.modulation_depth() * (2.0 * k * point.x).cos())
        } else {
            base
        }
    }

    /// Intensity and its gradient (W/m³).
    pub fn intensity_and_gradient(&self, point: &Vector3<f64>) -> (f64, Vector3<f64>) {
        if self.power == 0.0 {
            return (0.0, Vector3::zeros());
        }
        let zr = self.rayleigh_range();
        let w02 = self.waist * self.waist;
        let w2 = w02 * (1.0 + (point.x / zr).powi(2));
        let rho2 = point.y * point.y + point.z * point.z;
        let base = 2.0 * self.power / (PI * w2) * (-2.0 * rho2 / w2).exp();
        let dw2_dx = 2.0 * w02 * point.x / (zr * zr);
        let mut dlog_dx = dw2_dx * (2.0 * rho2 / (w2 * w2) - 1.0 / w2);
        let mut intensity = base;
        if self.backscatter > 0.0 {
            let k2 = 4.0 * PI / self.wavelength;
            let m = self.modulation_depth();
            let modulation = 1.0 + m * (k2 * point.x).cos();
            intensity *= modulation;
            dlog_dx += -k2 * m * (k2 * point.x).sin() / modulation;
        }
        let grad = Vector3::new(
            intensity * dlog_dx,
            intensity * (-4.0 * point.y / w2),
            intensity * (-4.0 * point.z / w2),
        );
        (intensity, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1e-6;

    #[test]
    fn peak_intensity_closed_form() {
        // 2·36 W / (π (157 µm)²) evaluated by hand: 9.2979e8 W/m².
        let tone = ToneField::new(1560e-9, 36.0, 157.0 * UM);
        let i0 = tone.intensity_at(&Vector3::zeros());
        assert!((i0 - 9.2979e8).abs() / 9.2979e8 < 1e-4, "{i0}");
        assert_eq!(i0, tone.peak_intensity());
    }

    #[test]
    fn zero_power_is_dark_everywhere() {
        let tone = ToneField::new(1560e-9, 0.0, 157.0 * UM);
        assert_eq!(tone.intensity_at(&Vector3::new(1e-3, 2e-5, -3e-5)), 0.0);
        assert_eq!(tone.intensity_and_gradient(&Vector3::zeros()).1, Vector3::zeros());
    }

    #[test]
    fn half_peak_at_one_rayleigh_range() {
        let tone = ToneField::new(1560e-9, 36.0, 157.0 * UM);
        let zr = tone.rayleigh_range();
        let ratio = tone.intensity_at(&Vector3::new(zr, 0.0, 0.0)) / tone.peak_intensity();
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tone = ToneField::new(1527e-9, 2.8, 155.0 * UM).with_backscatter(5e-3);
        let p = Vector3::new(3.1e-4, 4.0e-5, -7.0e-5);
        let (_, g) = tone.intensity_and_gradient(&p);
        for axis in 0..3 {
            let h = if axis == 0 { 1e-10 } else { 1e-9 };
            let mut a = p;
            let mut b = p;
            a[axis] += h;
            b[axis] -= h;
            let fd = (tone.intensity_at(&a) - tone.intensity_at(&b)) / (2.0 * h);
            assert!(
                (fd - g[axis]).abs() <= 1e-5 * g.norm(),
                "axis {axis}: {fd} vs {}",
                g[axis]
            );
        }
    }

    #[test]
    fn backscatter_averages_out_along_axis() {
        let plain = ToneField::new(1560e-9, 36.0, 157.0 * UM);
        let modulated = plain.clone().with_backscatter(5e-3);
        // average over an integer number of standing-wave periods near the focus
        let period = 1560e-9 / 2.0;
        let n = 20_000;
        let span = 200.0 * period;
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..n {
            let p = Vector3::new(span * (i as f64 + 0.5) / n as f64, 1e-5, 0.0);
            a += plain.intensity_at(&p);
            b += modulated.intensity_at(&p);
        }
        assert!((a - b).abs() / a < 1e-3);
    }

    #[test]
    fn validation_catches_bad_fields() {
        assert!(ToneField::new(1560e-9, 1.0, 1e-4).validate().is_ok());
        assert!(ToneField::new(1560e-9, -1.0, 1e-4).validate().is_err());
        assert!(ToneField::new(1560e-9, 1.0, 0.0).validate().is_err());
        assert!(ToneField::new(1560e-9, 1.0, 1e-4)
            .with_backscatter(1.0)
            .validate()
            .is_err());
        let mut t = ToneField::new(1560e-9, 1.0, 1e-4);
        t.polarization = Vector3::new(1.0, 1.0, 0.0);
        assert!(t.validate().is_err());
    }
}
