use nalgebra::Vector3;

use crate::trap_optics::{CavityParams, Gravity, ToneField};
use crate::{Error, Result};

/// Phenomenological polarization-gradient cooling: an Ornstein–Uhlenbeck
/// relaxation of the velocity toward a temperature floor + coefficient·s/|δ/Γ|,
/// active only where the effective detuning is redder than the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubDoppler {
    /// |δ_eff|/Γ above which the term switches on.
    pub threshold_gamma: f64,
    /// K.
    pub floor: f64,
    /// K per unit single-beam saturation per unit |δ/Γ|⁻¹.
    pub coefficient: f64,
    /// Velocity relaxation rate at unit single-beam saturation (1/s).
    pub rate: f64,
}

impl Default for SubDoppler {
    fn default() -> Self {
        Self {
            threshold_gamma: 3.0,
            floor: 3e-6,
            coefficient: 40e-6,
            rate: 2e4,
        }
    }
}

/// Geometry of the region whose atoms count as trapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureRegion {
    /// Radius around the cavity axis (m).
    pub radius: f64,
    /// Half-length along the cavity axis (m).
    pub half_length: f64,
}

impl Default for CaptureRegion {
    fn default() -> Self {
        Self {
            radius: 300e-6,
            half_length: 30e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoolingConfig {
    /// Cooling-laser detuning from the free-space F=2→F′=3 line, in Γ.
    pub detuning_gamma: f64,
    /// Peak intensity of each of the six beams (W/m²).
    pub beam_intensity: f64,
    /// 1/e² radius of the cooling and repump beams (m).
    pub beam_waist: f64,
    /// Repump detuning from the free-space F=1→F′=2 line (Hz).
    pub repump_detuning: f64,
    /// Repump intensity (W/m²).
    pub repump_intensity: f64,
    /// Axial quadrupole gradient (T/m); `None` switches the coils off.
    pub gradient: Option<f64>,
    pub subdoppler: SubDoppler,
    /// MOT center, where the beams cross and the field vanishes (m).
    pub mot_center: Vector3<f64>,
    pub capture: CaptureRegion,
}

impl Default for CoolingConfig {
    fn default() -> Self {
        Self {
            detuning_gamma: -2.5,
            beam_intensity: 50.0,
            beam_waist: 4e-3,
            repump_detuning: 0.0,
            repump_intensity: 1.8,
            gradient: Some(0.1),
            subdoppler: SubDoppler::default(),
            mot_center: Vector3::new(0.0, 800e-6, 0.0),
            capture: CaptureRegion::default(),
        }
    }
}

impl CoolingConfig {
    /// Post-accumulation molasses: −20 Γ, 8 W/m² per beam, no gradient.
    pub fn molasses(&self) -> Self {
        Self {
            detuning_gamma: -20.0,
            beam_intensity: 8.0,
            gradient: None,
            ..self.clone()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.beam_intensity >= 0.0) {
            p.push("cooling intensity must be non-negative".into());
        }
        if !(self.repump_intensity >= 0.0) {
            p.push("repump intensity must be non-negative".into());
        }
        if !(self.beam_waist > 0.0) {
            p.push("cooling beam waist must be positive".into());
        }
        if !(self.capture.radius > 0.0) || !(self.capture.half_length > 0.0) {
            p.push("capture region must have positive size".into());
        }
        if let Some(g) = self.gradient {
            if !g.is_finite() {
                p.push("gradient must be finite".into());
            }
        }
        let s = &self.subdoppler;
        if !(s.floor >= 0.0) || !(s.coefficient >= 0.0) || !(s.rate >= 0.0) || !(s.threshold_gamma >= 0.0) {
            p.push("sub-Doppler parameters must be non-negative".into());
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InjectionGeometry {
    /// Circle of the given radius around the MOT center, in the plane
    /// normal to the cavity axis.
    Ring { radius: f64 },
    /// Spherical shell around the MOT center.
    Shell { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    /// Atoms/s delivered to the MOT.
    pub rate: f64,
    /// K.
    pub temperature: f64,
    pub geometry: InjectionGeometry,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            rate: 6e7,
            temperature: 300e-6,
            geometry: InjectionGeometry::Ring { radius: 500e-6 },
        }
    }
}

impl SourceConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.rate >= 0.0) {
            p.push("source rate must be non-negative".into());
        }
        if !(self.temperature > 0.0) {
            p.push("source temperature must be positive".into());
        }
        let r = match self.geometry {
            InjectionGeometry::Ring { radius } | InjectionGeometry::Shell { radius } => radius,
        };
        if !(r >= 0.0) {
            p.push("injection radius must be non-negative".into());
        }
        p
    }
}

/// Piecewise-linear power schedule, constant outside its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    knots: Vec<(f64, f64)>,
}

impl PowerSchedule {
    pub fn flat(power: f64) -> Self {
        Self {
            knots: vec![(0.0, power)],
        }
    }

    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidInput("empty power schedule".into()));
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidInput("schedule times must be non-decreasing".into()));
        }
        if knots.iter().any(|k| !(k.1 >= 0.0) || !k.0.is_finite()) {
            return Err(Error::InvalidInput("schedule powers must be non-negative".into()));
        }
        Ok(Self { knots })
    }

    /// Hold `p0` until `t_ramp`, then ramp linearly to `p1` at `t_end`.
    pub fn ramp(p0: f64, t_ramp: f64, p1: f64, t_end: f64) -> Result<Self> {
        Self::new(vec![(0.0, p0), (t_ramp, p0), (t_end, p1)])
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t <= t1 {
                return if t1 > t0 {
                    p0 + (p1 - p0) * (t - t0) / (t1 - t0)
                } else {
                    p1
                };
            }
        }
        k[k.len() - 1].1
    }

    pub fn max(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolassesConfig {
    pub duration: f64,
    /// Compensation power during molasses (W).
    pub compensation_power: f64,
    pub cooling: CoolingConfig,
}

/// Everything needed to run the loading simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    /// Trap tone; its power is overridden by `trap_schedule`.
    pub trap: ToneField,
    pub trap_schedule: PowerSchedule,
    /// Compensation tone; its power is overridden by `schedule`.
    pub compensation: ToneField,
    pub schedule: PowerSchedule,
    pub gravity: Option<Gravity>,
    pub cooling: CoolingConfig,
    pub source: SourceConfig,
    pub cavity: CavityParams,
    /// One-body loss rate for every atom (1/s).
    pub loss_rate: f64,
    /// Simulated fraction of physical atoms (macro-atoms per atom).
    pub scale: f64,
    pub dt: f64,
    pub duration: f64,
    /// Lights-off hold after accumulation (s).
    pub hold: f64,
    pub sample_interval: f64,
    pub seed: u64,
    /// Atoms farther than this from the MOT center and outside the cavity
    /// tube are dropped (m).
    pub volume_radius: f64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        for (name, tone) in [("trap", &self.trap), ("compensation", &self.compensation)] {
            if let Err(e) = tone.validate() {
                p.push(format!("{name}: {e}"));
            }
        }
        p.extend(self.cooling.problems());
        p.extend(self.source.problems());
        if let Err(Error::Validation(v)) = self.cavity.validate() {
            p.extend(v);
        }
        if !(self.loss_rate >= 0.0) {
            p.push("loss rate must be non-negative".into());
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            p.push("scale must lie in (0, 1]".into());
        }
        if !(self.dt > 0.0) {
            p.push("time step must be positive".into());
        }
        if !(self.duration >= 0.0) || !(self.hold >= 0.0) {
            p.push("durations must be non-negative".into());
        }
        if !(self.sample_interval > 0.0) {
            p.push("sample interval must be positive".into());
        }
        if !(self.volume_radius > 0.0) {
            p.push("simulation volume must be positive".into());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }
}
