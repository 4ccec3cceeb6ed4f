use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::atom::Atom;
use super::config::CoolingConfig;
use crate::atomic_data::{AtomicConstants, AtomicData, GroundManifold};
use crate::lightshift::ShiftMap;
use crate::trap_optics::Gravity;
use crate::{Error, Result};

/// Relative strength of F=2→F′=2 against the cycling line.
const OFF_RESONANT_STRENGTH: f64 = 0.357;
/// F′=2 decay probability into F=1 (and F=2).
const F_PRIME_2_BRANCHING: f64 = 0.5;

/// Everything the integrator needs at one phase-space point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalDynamics {
    /// Deterministic force (N).
    pub force: Vector3<f64>,
    /// Momentum diffusion per axis, d⟨p_i²⟩/dt = 2D_i (kg²m²/s³).
    pub diffusion: Vector3<f64>,
    /// Velocity relaxation rate (1/s) and target temperature (K).
    pub subdoppler: Option<(f64, f64)>,
    /// F=2 → F=1 rate (1/s).
    pub depump_rate: f64,
    /// F=1 → F=2 rate (1/s).
    pub repump_rate: f64,
    /// Total photon scattering rate (1/s).
    pub scattering_rate: f64,
    /// Cooling-laser detuning including the local light shift (rad/s).
    pub effective_detuning: f64,
}

/// A force law the integrator can step through.
pub trait ForceField: Sync {
    fn local(&self, position: &Vector3<f64>, velocity: &Vector3<f64>, manifold: GroundManifold) -> LocalDynamics;
}

/// Dipole trap, gravity and (optionally) the cooling and repump light.
#[derive(Debug, Clone)]
pub struct LightField {
    shifts: ShiftMap,
    gravity: Option<Gravity>,
    cooling: CoolingConfig,
    lights: bool,
    consts: AtomicConstants,
}

impl LightField {
    pub fn new(shifts: ShiftMap, gravity: Option<Gravity>, cooling: CoolingConfig, lights: bool) -> Self {
        Self {
            shifts,
            gravity,
            cooling,
            lights,
            consts: AtomicData::rb87().constants.clone(),
        }
    }

    pub fn shifts(&self) -> &ShiftMap {
        &self.shifts
    }

    pub fn shifts_mut(&mut self) -> &mut ShiftMap {
        &mut self.shifts
    }

    pub fn cooling(&self) -> &CoolingConfig {
        &self.cooling
    }

    pub fn set_cooling(&mut self, cooling: CoolingConfig) {
        self.cooling = cooling;
    }

    pub fn set_lights(&mut self, on: bool) {
        self.lights = on;
    }

    pub fn gravity(&self) -> Option<Gravity> {
        self.gravity
    }

    /// Optical plus gravitational potential energy (J).
    pub fn potential(&self, p: &Vector3<f64>) -> f64 {
        self.shifts.ground(p) + self.gravity.map_or(0.0, |g| g.potential(self.consts.mass, p))
    }
}

impl ForceField for LightField {
    fn local(&self, p: &Vector3<f64>, v: &Vector3<f64>, manifold: GroundManifold) -> LocalDynamics {
        let c = &self.consts;
        let (_, grad, diff_hz) = self.shifts.local(p);
        let mut out = LocalDynamics {
            force: -grad + self.gravity.map_or(Vector3::zeros(), |g| g.force(c.mass)),
            ..Default::default()
        };
        let cool = &self.cooling;
        let gamma = c.gamma;
        let delta = cool.detuning_gamma * gamma - 2.0 * PI * diff_hz;
        out.effective_detuning = delta;
        if !self.lights {
            return out;
        }
        let r2 = (p - cool.mot_center).norm_squared();
        let envelope = (-2.0 * r2 / (cool.beam_waist * cool.beam_waist)).exp();

        // both pumping rates are needed for the exact two-state update
        let s_rep = cool.repump_intensity * envelope / c.saturation_intensity;
        let d_rep = 2.0 * PI * (cool.repump_detuning - diff_hz);
        let repump_exc = 0.5 * gamma * s_rep / (1.0 + s_rep + 4.0 * (d_rep / gamma).powi(2));
        out.repump_rate = F_PRIME_2_BRANCHING * repump_exc;

        let s = cool.beam_intensity * envelope / c.saturation_intensity;
        let s_tot = 6.0 * s;
        let rate = |d: f64| 0.5 * gamma * s / (1.0 + s_tot + 4.0 * (d / gamma).powi(2));
        let d_f2 = delta + 2.0 * PI * c.excited_f3_f2_splitting;
        out.depump_rate = OFF_RESONANT_STRENGTH * F_PRIME_2_BRANCHING * 6.0 * rate(d_f2);

        if manifold == GroundManifold::F1 {
            out.scattering_rate = repump_exc;
            return out;
        }
        if s == 0.0 {
            return out;
        }
        let k = c.d2_wavenumber();
        let zeeman = match cool.gradient {
            // beam handedness makes every axis restoring
            Some(b) => {
                let r = p - cool.mot_center;
                Vector3::new(0.5 * b * r.x, 0.5 * b * r.y, b * r.z) * (c.bohr_magneton / c.hbar)
            }
            None => Vector3::zeros(),
        };
        let mut pair = Vector3::zeros();
        let mut total = 0.0;
        for i in 0..3 {
            let plus = rate(delta - k * v[i] - zeeman[i]);
            let minus = rate(delta + k * v[i] + zeeman[i]);
            out.force[i] += c.hbar * k * (plus - minus);
            pair[i] = plus + minus;
            total += plus + minus;
        }
        let hk2 = (c.hbar * k).powi(2);
        out.diffusion = (pair + Vector3::repeat(total / 3.0)) * (0.5 * hk2);
        out.scattering_rate = total;
        let sd = &cool.subdoppler;
        if -delta > sd.threshold_gamma * gamma {
            let temp = sd.floor + sd.coefficient * s / (-delta / gamma);
            out.subdoppler = Some((sd.rate * s.min(1.0), temp));
        }
        out
    }
}

/// Exact two-state Markov update of the hyperfine manifold over `dt`.
pub fn pump(atom: &mut Atom, local: &LocalDynamics, dt: f64) {
    let total = local.depump_rate + local.repump_rate;
    if total <= 0.0 {
        return;
    }
    let relax = 1.0 - (-total * dt).exp();
    let p = match atom.manifold {
        GroundManifold::F2 => local.depump_rate / total * relax,
        GroundManifold::F1 => local.repump_rate / total * relax,
    };
    if atom.rng.random::<f64>() < p {
        atom.manifold = match atom.manifold {
            GroundManifold::F1 => GroundManifold::F2,
            GroundManifold::F2 => GroundManifold::F1,
        };
    }
}

/// Largest time step allowed for a trap whose highest frequency is `f_max`.
pub fn max_timestep(f_max: f64) -> f64 {
    1.0 / (50.0 * f_max)
}

/// One drift–kick–drift step with diffusion, sub-Doppler relaxation and
/// hyperfine pumping evaluated at the half-step position.
pub fn step_atom<F: ForceField + ?Sized>(atom: &mut Atom, field: &F, dt: f64) {
    let mass = AtomicData::rb87().constants.mass;
    let kb = AtomicData::rb87().constants.boltzmann;
    let half = atom.position + atom.velocity * (0.5 * dt);
    let local = field.local(&half, &atom.velocity, atom.manifold);
    atom.velocity += local.force * (dt / mass);
    if local.diffusion != Vector3::zeros() {
        for i in 0..3 {
            let xi: f64 = StandardNormal.sample(&mut atom.rng);
            atom.velocity[i] += (2.0 * local.diffusion[i] * dt).sqrt() / mass * xi;
        }
    }
    if let Some((rate, temp)) = local.subdoppler {
        let decay = (-rate * dt).exp();
        let spread = (kb * temp / mass * (1.0 - decay * decay)).sqrt();
        for i in 0..3 {
            let xi: f64 = StandardNormal.sample(&mut atom.rng);
            atom.velocity[i] = atom.velocity[i] * decay + spread * xi;
        }
    }
    atom.position = half + atom.velocity * (0.5 * dt);
    atom.scattered += local.scattering_rate * dt;
    pump(atom, &local, dt);
}

/// Advances every atom by `dt`, refusing steps longer than `max_dt`.
pub fn step<F: ForceField + ?Sized>(atoms: &mut [Atom], field: &F, dt: f64, max_dt: f64) -> Result<()> {
    use rayon::prelude::*;
    if dt > max_dt {
        return Err(Error::TimestepTooLarge { dt, max: max_dt });
    }
    atoms.par_iter_mut().for_each(|a| step_atom(a, field, dt));
    Ok(())
}
