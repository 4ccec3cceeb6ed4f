use std::io::Write;

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;

use super::atom::{inject, source_rng, Atom};
use super::config::{MolassesConfig, PowerSchedule, SimulationSpec};
use super::force::{max_timestep, step, LightField};
use super::trace::{Counts, EnsembleTrace, TraceRow};
use crate::analysis::PhaseSpacePoint;
use crate::atomic_data::{AtomicData, GroundManifold};
use crate::lightshift::ShiftMap;
use crate::readout::{cavity_shift, probe_mode, DispersiveParams, SpinSummary};
use crate::trap_optics::{trap_shape, CavityMode};
use crate::{Error, Result};

const TRAP: usize = 0;
const COMPENSATION: usize = 1;

/// Monte-Carlo loading simulation. Phases run back to back on the same
/// ensemble and append to one trace.
#[derive(Debug, Clone)]
pub struct Engine {
    spec: SimulationSpec,
    field: LightField,
    atoms: Vec<Atom>,
    t: f64,
    next_id: u64,
    injected: u64,
    departed: u64,
    source: ChaCha8Rng,
    max_dt: f64,
    power_override: Option<f64>,
    escape_cache: Vec<((u64, u64), f64)>,
    mode: CavityMode,
    dispersive: DispersiveParams,
    trace: EnsembleTrace,
    next_sample: usize,
}

impl Engine {
    pub fn new(spec: SimulationSpec) -> Result<Self> {
        spec.validate()?;
        let shifts = ShiftMap::new(&[
            spec.trap.clone().with_power(spec.trap_schedule.at(0.0)),
            spec.compensation.clone().with_power(spec.schedule.at(0.0)),
        ])?;

        // frequencies grow with trap power and shrink with compensation power
        let mut f_max: f64 = 0.0;
        for &(_, pt) in spec.trap_schedule.knots() {
            for &(_, pc) in spec.schedule.knots() {
                let tones = [
                    spec.trap.clone().with_power(pt),
                    spec.compensation.clone().with_power(pc),
                ];
                if let Ok(shape) = trap_shape(&tones, spec.gravity) {
                    f_max = shape.frequencies.iter().cloned().fold(f_max, f64::max);
                }
            }
        }
        let max_dt = if f_max > 0.0 {
            max_timestep(f_max)
        } else {
            f64::INFINITY
        };
        if spec.dt > max_dt {
            return Err(Error::TimestepTooLarge {
                dt: spec.dt,
                max: max_dt,
            });
        }

        let mode = probe_mode(&spec.cavity)?.clone();
        let dispersive = DispersiveParams::for_cavity(&spec.cavity)?;
        let field = LightField::new(shifts, spec.gravity, spec.cooling.clone(), true);
        let mut engine = Self {
            source: source_rng(spec.seed),
            spec,
            field,
            atoms: Vec::new(),
            t: 0.0,
            next_id: 0,
            injected: 0,
            departed: 0,
            max_dt,
            power_override: None,
            escape_cache: Vec::new(),
            mode,
            dispersive,
            trace: EnsembleTrace::default(),
            next_sample: 0,
        };
        engine.sample();
        Ok(engine)
    }

    pub fn spec(&self) -> &SimulationSpec {
        &self.spec
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn trace(&self) -> &EnsembleTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EnsembleTrace {
        self.trace
    }

    /// Largest step the trap frequencies allow.
    pub fn max_dt(&self) -> f64 {
        self.max_dt
    }

    pub fn compensation_power(&self) -> f64 {
        self.power_override.unwrap_or_else(|| self.spec.schedule.at(self.t))
    }

    pub fn trap_power(&self) -> f64 {
        self.spec.trap_schedule.at(self.t)
    }

    fn sync_powers(&mut self) {
        let (pt, pc) = (self.trap_power(), self.compensation_power());
        self.field.shifts_mut().set_power(TRAP, pt);
        self.field.shifts_mut().set_power(COMPENSATION, pc);
    }

    /// Total energy of the lowest escape saddle at the current powers (J);
    /// −∞ if the potential does not trap.
    pub fn escape_energy(&mut self) -> f64 {
        self.sync_powers();
        let key = (self.trap_power().to_bits(), self.compensation_power().to_bits());
        if let Some(&(_, e)) = self.escape_cache.iter().find(|(k, _)| *k == key) {
            return e;
        }
        let tones = self.field.shifts().tones().to_vec();
        let e = match trap_shape(&tones, self.spec.gravity) {
            Ok(shape) => self.field.potential(&shape.minimum) + shape.depth,
            Err(_) => f64::NEG_INFINITY,
        };
        self.escape_cache.push((key, e));
        e
    }

    fn in_capture(&self, p: &Vector3<f64>) -> bool {
        let cap = &self.spec.cooling.capture;
        p.x.abs() <= cap.half_length && p.y * p.y + p.z * p.z <= cap.radius * cap.radius
    }

    pub fn is_trapped(&self, atom: &Atom, escape: f64) -> bool {
        self.in_capture(&atom.position) && atom.kinetic_energy() + self.field.potential(&atom.position) < escape
    }

    /// Atoms currently counted as trapped.
    pub fn trapped_atoms(&mut self) -> Vec<&Atom> {
        let e = self.escape_energy();
        self.atoms.iter().filter(|a| self.is_trapped(a, e)).collect()
    }

    pub fn trapped_phase_space(&mut self) -> Vec<PhaseSpacePoint> {
        self.trapped_atoms()
            .into_iter()
            .map(|a| PhaseSpacePoint {
                position: a.position,
                velocity: a.velocity,
            })
            .collect()
    }

    fn sample(&mut self) {
        let escape = self.escape_energy();
        let consts = &AtomicData::rb87().constants;
        let mut trapped = 0u64;
        let mut f1 = 0u64;
        let mut sum = Vector3::zeros();
        let mut sq = Vector3::zeros();
        for a in &self.atoms {
            if self.is_trapped(a, escape) {
                trapped += 1;
                if a.manifold == GroundManifold::F1 {
                    f1 += 1;
                }
                sum += a.velocity;
                sq += a.velocity.component_mul(&a.velocity);
            }
        }
        let temperatures = if trapped >= 2 {
            let n = trapped as f64;
            let mean = sum / n;
            [0, 1, 2].map(|i| {
                let var = (sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0);
                consts.mass * var / consts.boltzmann
            })
        } else {
            [0.0; 3]
        };
        let weight = 1.0 / self.spec.scale;
        let summary = SpinSummary::from_atoms(self.atoms.iter().map(|a| (a.position, a.manifold)), &self.mode, weight);
        let alive = self.atoms.len() as u64;
        self.trace.rows.push(TraceRow {
            t: self.t,
            n_trapped: trapped as f64 * weight,
            temperatures,
            f_f1: if trapped > 0 { f1 as f64 / trapped as f64 } else { 0.0 },
            cavity_shift_hz: cavity_shift(&summary, &self.dispersive),
            counts: Counts {
                injected: self.injected,
                trapped,
                transiting: alive - trapped,
                departed: self.departed,
            },
        });
        self.next_sample += 1;
    }

    fn retire(&mut self) {
        let t = self.t;
        let center = self.spec.cooling.mot_center;
        let r_vol = self.spec.volume_radius;
        let cap = self.spec.cooling.capture;
        let tube = cap.radius.max(1e-3);
        let before = self.atoms.len();
        self.atoms.retain(|a| {
            let p = &a.position;
            let near_mot = (p - center).norm() <= r_vol;
            let in_tube = p.x.abs() <= 2.0 * cap.half_length && p.y * p.y + p.z * p.z <= tube * tube;
            a.death > t && (near_mot || in_tube)
        });
        self.departed += (before - self.atoms.len()) as u64;
    }

    /// Advances by `duration`, injecting from the source if `load` is set.
    fn advance(&mut self, duration: f64, load: bool) -> Result<()> {
        let dt = self.spec.dt;
        let steps = (duration / dt).round() as u64;
        let t0 = self.t;
        for n in 1..=steps {
            self.t = t0 + n as f64 * dt;
            self.sync_powers();
            if load {
                let born = inject(
                    &self.spec.source,
                    &self.spec.cooling.mot_center,
                    dt,
                    self.spec.scale,
                    self.t,
                    self.spec.loss_rate,
                    self.spec.seed,
                    &mut self.next_id,
                    &mut self.source,
                )?;
                self.injected += born.len() as u64;
                self.atoms.extend(born);
            }
            step(&mut self.atoms, &self.field, dt, self.max_dt)?;
            self.retire();
            let due = self.next_sample as f64 * self.spec.sample_interval;
            if self.t + 1e-9 * dt >= due {
                self.sample();
            }
        }
        Ok(())
    }

    /// Cooling light, coils and source on for the configured duration,
    /// following the compensation schedule; then the lights-off hold.
    pub fn run_accumulation(&mut self) -> Result<&EnsembleTrace> {
        self.run_loading()?;
        if self.spec.hold > 0.0 {
            self.run_hold(self.spec.hold)?;
        }
        Ok(&self.trace)
    }

    /// Cooling light, coils and source on for the configured duration.
    pub fn run_loading(&mut self) -> Result<&EnsembleTrace> {
        self.power_override = None;
        self.field.set_cooling(self.spec.cooling.clone());
        self.field.set_lights(true);
        self.advance(self.spec.duration, true)?;
        Ok(&self.trace)
    }

    /// Dipole trap only.
    pub fn run_hold(&mut self, duration: f64) -> Result<&EnsembleTrace> {
        self.field.set_lights(false);
        self.advance(duration, false)?;
        Ok(&self.trace)
    }

    /// Molasses pulse at fixed compensation power, no source.
    pub fn run_molasses(&mut self, config: &MolassesConfig) -> Result<&EnsembleTrace> {
        if !(config.duration >= 0.0) || !(config.compensation_power >= 0.0) {
            return Err(Error::InvalidInput("molasses duration and power must be ≥ 0".into()));
        }
        if let Some(p) = config.cooling.problems().into_iter().next() {
            return Err(Error::InvalidInput(p));
        }
        self.power_override = Some(config.compensation_power);
        self.field.set_cooling(config.cooling.clone());
        self.field.set_lights(true);
        self.advance(config.duration, false)?;
        Ok(&self.trace)
    }

    /// Adds prepared atoms; they count as injected. Ids continue from the
    /// engine's counter and each atom's stream is reseeded accordingly.
    pub fn add_atoms(&mut self, atoms: impl IntoIterator<Item = Atom>) {
        for a in atoms {
            let mut fresh = Atom::new(self.next_id, self.spec.seed, a.position, a.velocity);
            fresh.manifold = a.manifold;
            fresh.born = self.t;
            fresh.death = a.death;
            self.next_id += 1;
            self.injected += 1;
            self.atoms.push(fresh);
        }
    }

    /// Records a sample at the current time regardless of cadence.
    pub fn record(&mut self) -> &TraceRow {
        self.next_sample -= 1;
        self.sample();
        self.trace.rows.last().expect("just pushed")
    }

    /// `id,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s,manifold,trapped` for every atom.
    pub fn write_snapshot<W: Write>(&mut self, mut out: W) -> Result<()> {
        let e = self.escape_energy();
        writeln!(out, "id,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s,manifold,trapped")?;
        for a in &self.atoms {
            let m = match a.manifold {
                GroundManifold::F1 => 1,
                GroundManifold::F2 => 2,
            };
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{m},{}",
                a.id,
                a.position.x,
                a.position.y,
                a.position.z,
                a.velocity.x,
                a.velocity.y,
                a.velocity.z,
                self.is_trapped(a, e) as u8
            )?;
        }
        Ok(())
    }
}

/// Loading run at the spec's schedule, including any hold.
pub fn run_accumulation(spec: &SimulationSpec) -> Result<EnsembleTrace> {
    let mut e = Engine::new(spec.clone())?;
    e.run_accumulation()?;
    Ok(e.into_trace())
}

/// Loading under `ramp` for the ramp's full length, then any hold.
pub fn run_ramp_protocol(spec: &SimulationSpec, ramp: &PowerSchedule) -> Result<EnsembleTrace> {
    let end = ramp.knots().last().map_or(0.0, |k| k.0);
    let spec = SimulationSpec {
        schedule: ramp.clone(),
        duration: end,
        ..spec.clone()
    };
    run_accumulation(&spec)
}

/// Samples just before and after a molasses pulse that follows loading.
#[derive(Debug, Clone)]
pub struct MolassesOutcome {
    pub before: TraceRow,
    pub after: TraceRow,
    pub trace: EnsembleTrace,
}

/// Loads without the hold, applies the molasses pulse and compares the
/// trapped ensemble before and after.
pub fn run_molasses(spec: &SimulationSpec, config: &MolassesConfig) -> Result<MolassesOutcome> {
    let mut e = Engine::new(SimulationSpec {
        hold: 0.0,
        ..spec.clone()
    })?;
    e.run_accumulation()?;
    let before = e.record().clone();
    e.run_molasses(config)?;
    let after = e.record().clone();
    Ok(MolassesOutcome {
        before,
        after,
        trace: e.into_trace(),
    })
}

impl SimulationSpec {
    /// Starting point shared by the bundled scenarios: the 36 W trap, its
    /// compensation tone at `compensation_power`, gravity on.
    pub fn standard(compensation_power: f64) -> Result<Self> {
        use super::config::{CoolingConfig, SourceConfig};
        use crate::lightshift::compensation_template;
        use crate::trap_optics::{CavityParams, Gravity, ToneField};
        Ok(Self {
            trap: ToneField::new(1560e-9, 36.0, 157e-6),
            trap_schedule: PowerSchedule::flat(36.0),
            compensation: compensation_template(),
            schedule: PowerSchedule::flat(compensation_power),
            gravity: Some(Gravity::standard()),
            cooling: CoolingConfig::default(),
            source: SourceConfig::default(),
            cavity: CavityParams::ring_cavity(),
            loss_rate: 1.8,
            scale: 1e-4,
            dt: 80e-6,
            duration: 0.55,
            hold: 0.1,
            sample_interval: 10e-3,
            seed: 1,
            volume_radius: 5e-3,
        })
    }
}
