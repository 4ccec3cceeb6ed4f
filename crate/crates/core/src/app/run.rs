#![allow(non_snake_case)]

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Scenario, MAX_SEED};
use crate::analysis::{fit_lorentzian, fit_tof, tof_expand};
use crate::atomic_data::{AtomicData, Level, LevelId};
use crate::dynamics::{Engine, EnsembleTrace, TraceRow};
use crate::lightshift::{
    differential_shift, level_shift, sample_boltzmann, solve_compensation_with, sublevel_shifts, synthesize_spectrum,
};
use crate::readout::{probe_mode, probe_scan, DispersiveParams};
use crate::trap_optics::{
    backscatter_modulation, free_spectral_range, linewidth_from_finesse, trap_shape, ModePolarization, ToneField,
};
use crate::{Error, Result};

pub const CRATE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Compensation powers of the spectra and spread tables (W).
pub const SPECTRUM_POWERS: [f64; 3] = [0.0, 2.8, 5.2];

/// Powers sampled by `spreads.csv` (W).
pub fn spread_powers() -> Vec<f64> {
    (0..=30).map(|i| i as f64 * 0.2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleKind {
    Run,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Index of a bundle. Contains no timestamps, so identical inputs give an
/// identical manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: BundleKind,
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: String,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that records what it writes.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.put(name, &buf)
    }

    pub fn finish(mut self, kind: BundleKind, config: &str, seed: u64) -> Result<Manifest> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            kind,
            config_sha256: sha256_hex(config.as_bytes()),
            seed,
            crate_version: CRATE_VERSION.to_string(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

/// Reads a bundle's manifest and checks every listed file.
pub fn verify_bundle(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    for f in &manifest.files {
        let p = dir.join(&f.name);
        let bytes = fs::read(&p).map_err(|_| Error::MissingArtifact(p.display().to_string()))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::ChecksumMismatch(f.name.clone()));
        }
    }
    Ok(manifest)
}

/// Closed-form quantities of a scenario's tones at the end of their
/// schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticScalars {
    pub trap_power_W: f64,
    pub trap_wavelength_nm: f64,
    pub trap_waist_um: f64,
    pub compensation_power_W: f64,
    pub trap_depth_uK: f64,
    pub trap_depth_with_gravity_uK: f64,
    /// Along x (cavity axis), y, z.
    pub trap_frequencies_Hz: [f64; 3],
    /// 5P₃/₂ over 5S₁/₂ scalar polarizability at the trap wavelength.
    pub polarizability_ratio: f64,
    /// Compensation-to-trap peak intensity at which the 5P₃/₂ shift vanishes.
    pub compensation_intensity_ratio: f64,
    pub nulling_power_W: f64,
    pub ground_shift_MHz: f64,
    pub focal_differential_shift_MHz: f64,
    pub effective_detuning_gamma: f64,
    pub fprime3_spread_MHz: f64,
    pub shift_rate_Hz: f64,
    pub cooperativity: f64,
    pub collective_cooperativity_4e6: f64,
    pub fsr_GHz: f64,
    pub kappa_780p_finesse_kHz: Option<f64>,
    pub backscatter_modulation_5e3: f64,
}

impl StaticScalars {
    pub fn compute(scenario: &Scenario) -> Result<Self> {
        let spec = scenario.to_spec()?;
        let end = spec.duration;
        let trap = spec.trap.clone().with_power(spec.trap_schedule.at(end));
        let comp = spec.compensation.clone().with_power(spec.schedule.at(end));
        let tones = [trap.clone(), comp.clone()];
        let data = AtomicData::rb87();
        let c = &data.constants;
        let origin = Vector3::zeros();

        let optical = trap_shape(std::slice::from_ref(&trap), None)?;
        let with_gravity = trap_shape(std::slice::from_ref(&trap), spec.gravity)?;
        let nulled = solve_compensation_with(&trap, &spec.compensation)?;
        let differential = differential_shift(&tones, &origin)?;
        let ground = level_shift(LevelId::new(Level::S5Half), &tones, &origin)?;
        let spread = sublevel_shifts(3, &tones, &origin)?.spread_mhz();
        let gamma_hz = c.gamma / (2.0 * std::f64::consts::PI);

        let dispersive = DispersiveParams::for_cavity(&spec.cavity)?;
        let p_mode = spec
            .cavity
            .modes
            .iter()
            .find(|m| (m.wavelength - c.d2_wavelength).abs() < 2e-9 && m.polarization == ModePolarization::P);
        Ok(Self {
            trap_power_W: trap.power,
            trap_wavelength_nm: trap.wavelength * 1e9,
            trap_waist_um: trap.waist * 1e6,
            compensation_power_W: comp.power,
            trap_depth_uK: optical.depth_uk(),
            trap_depth_with_gravity_uK: with_gravity.depth_uk(),
            trap_frequencies_Hz: optical.frequencies,
            polarizability_ratio: data.scalar_polarizability(Level::P5ThreeHalves, trap.wavelength)?
                / data.scalar_polarizability(Level::S5Half, trap.wavelength)?,
            compensation_intensity_ratio: nulled.peak_intensity() / trap.peak_intensity(),
            nulling_power_W: nulled.power,
            ground_shift_MHz: ground.scalar_mhz(),
            focal_differential_shift_MHz: differential * 1e-6,
            effective_detuning_gamma: spec.cooling.detuning_gamma - differential / gamma_hz,
            fprime3_spread_MHz: spread,
            shift_rate_Hz: dispersive.shift_rate / (2.0 * std::f64::consts::PI),
            cooperativity: dispersive.cooperativity(),
            collective_cooperativity_4e6: 4e6 * dispersive.cooperativity(),
            fsr_GHz: free_spectral_range(&spec.cavity) * 1e-9,
            kappa_780p_finesse_kHz: p_mode
                .map(|m| linewidth_from_finesse(&spec.cavity, m) / (2.0 * std::f64::consts::PI) * 1e-3),
            backscatter_modulation_5e3: backscatter_modulation(5e-3)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub t_s: f64,
    pub N_trapped: f64,
    pub trapped_macro_count: u64,
    pub T_uK: [f64; 3],
    pub f_F1: f64,
    pub cavity_shift_Hz: f64,
}

impl From<&TraceRow> for RowSummary {
    fn from(r: &TraceRow) -> Self {
        Self {
            t_s: r.t,
            N_trapped: r.n_trapped,
            trapped_macro_count: r.counts.trapped,
            T_uK: r.temperatures.map(|t| t * 1e6),
            f_F1: r.f_f1,
            cavity_shift_Hz: r.cavity_shift_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsResults {
    pub duration_s: f64,
    pub hold_s: f64,
    /// Last sample of the loading phase.
    pub loaded: Option<RowSummary>,
    /// Last sample of the run.
    pub last: Option<RowSummary>,
    pub measured_shift_Hz: Option<f64>,
    pub tof_temperatures_uK: Option<[f64; 3]>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub compensation_W: f64,
    pub center_MHz: f64,
    pub fwhm_MHz: f64,
    pub mean_MHz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub scenario: String,
    pub seed: u64,
    #[serde(rename = "static")]
    pub scalars: StaticScalars,
    pub spectra: Vec<SpectrumSummary>,
    pub dynamics: DynamicsResults,
}

/// Outcome of the dynamics phases of one scenario, before anything is
/// written.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trace: EnsembleTrace,
    pub results: DynamicsResults,
    probe: Option<crate::readout::ProbeScan>,
    tof: Option<(crate::analysis::TofSeries, [crate::analysis::FitResult; 3])>,
    snapshot: Option<Vec<u8>>,
}

/// Loading, hold and optional molasses, followed by the readout scan and
/// a release-and-image sequence on the trapped ensemble.
pub fn simulate(scenario: &Scenario) -> Result<SimulationOutput> {
    let spec = scenario.to_spec()?;
    let molasses = scenario.molasses();
    let total = spec.duration + spec.hold + molasses.as_ref().map_or(0.0, |m| m.duration);
    let mut notes = Vec::new();
    let mut engine = Engine::new(spec.clone())?;
    let mut trace = EnsembleTrace::default();
    let mut loaded = None;
    if total > 0.0 {
        engine.run_loading()?;
        loaded = engine.trace().last().map(RowSummary::from);
        if spec.hold > 0.0 {
            engine.run_hold(spec.hold)?;
        }
        if let Some(m) = &molasses {
            engine.run_molasses(m)?;
        }
        trace = engine.trace().clone();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    let last = trace.last().map(RowSummary::from);
    let mut probe = None;
    let mut measured = None;
    if let Some(row) = &last {
        let mode = probe_mode(&spec.cavity)?;
        let kappa = spec.cavity.linewidth(mode);
        // the scan window follows the cavity, as a locked probe would
        let settings = scenario.scan_settings(row.cavity_shift_Hz);
        match probe_scan(row.cavity_shift_Hz, kappa, &settings, &mut rng) {
            Ok(scan) => {
                measured = Some(scan.measured_shift_hz);
                probe = Some(scan);
            }
            Err(e) => notes.push(format!("probe scan: {e}")),
        }
    }

    let mut tof = None;
    let mut tof_temperatures = None;
    let analysis = &scenario.analysis;
    let ensemble = engine.trapped_phase_space();
    if total > 0.0 && ensemble.len() as f64 >= analysis.tof_min_atoms_count {
        let times: Vec<f64> = analysis.tof_times_ms.iter().map(|t| t * 1e-3).collect();
        let series = tof_expand(&ensemble, &times, spec.gravity, analysis.tof_inflation_um * 1e-6)?;
        match fit_tof(&series) {
            Ok(fits) => {
                tof_temperatures = Some([0, 1, 2].map(|i| fits[i].get("T_K").unwrap_or(f64::NAN) * 1e6));
                tof = Some((series, fits));
            }
            Err(e) => notes.push(format!("tof fit: {e}")),
        }
    } else if total > 0.0 {
        notes.push(format!("tof skipped: {} trapped macro-atoms", ensemble.len()));
    }

    let snapshot = if scenario.dynamics.snapshot {
        let mut buf = Vec::new();
        engine.write_snapshot(&mut buf)?;
        Some(buf)
    } else {
        None
    };

    Ok(SimulationOutput {
        results: DynamicsResults {
            duration_s: spec.duration,
            hold_s: spec.hold,
            loaded,
            last,
            measured_shift_Hz: measured,
            tof_temperatures_uK: tof_temperatures,
            notes,
        },
        trace,
        probe,
        tof,
        snapshot,
    })
}

fn tones_at(scenario: &Scenario, compensation: f64) -> Result<Vec<ToneField>> {
    let spec = scenario.to_spec()?;
    let trap = spec.trap.clone().with_power(spec.trap_schedule.at(spec.duration));
    Ok(vec![trap, spec.compensation.with_power(compensation)])
}

/// Synthesized cooling-transition spectra at [`SPECTRUM_POWERS`] and the
/// F′=3 spread table, written into `bundle`.
fn write_spectra(scenario: &Scenario, bundle: &mut Bundle) -> Result<Vec<SpectrumSummary>> {
    let l = &scenario.lightshift;
    let mut csv = String::from("detuning_MHz,weight,compensation_W\n");
    let mut summaries = Vec::new();
    for (i, &p) in SPECTRUM_POWERS.iter().enumerate() {
        let tones = tones_at(scenario, p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.scenario.seed);
        rng.set_stream(u64::MAX - 1 - i as u64);
        let sample = sample_boltzmann(
            &tones,
            l.temperature_uK * 1e-6,
            l.sample_count as usize,
            scenario.sample_region(),
            &mut rng,
        )?;
        let spectrum = synthesize_spectrum(&tones, &sample, l.probe_fwhm_MHz * 1e6, scenario.spectrum_options())?;
        for (x, w) in spectrum.detuning_hz.iter().zip(&spectrum.weights) {
            csv.push_str(&format!("{:.6},{:.9e},{p}\n", x * 1e-6, w));
        }
        let fit = fit_lorentzian(&spectrum)?;
        summaries.push(SpectrumSummary {
            compensation_W: p,
            center_MHz: fit.get("center").unwrap_or(f64::NAN) * 1e-6,
            fwhm_MHz: fit.get("fwhm").unwrap_or(f64::NAN) * 1e-6,
            mean_MHz: spectrum.mean_hz() * 1e-6,
        });
    }
    bundle.put("spectra.csv", csv.as_bytes())?;

    let mut csv = String::from("compensation_W,spread_MHz\n");
    for p in spread_powers() {
        let spread = sublevel_shifts(3, &tones_at(scenario, p)?, &Vector3::zeros())?.spread_mhz();
        csv.push_str(&format!("{p:.1},{spread:.6}\n"));
    }
    bundle.put("spreads.csv", csv.as_bytes())?;
    Ok(summaries)
}

fn write_simulation(out: &SimulationOutput, bundle: &mut Bundle, prefix: &str) -> Result<()> {
    bundle.write(&format!("{prefix}trace.csv"), |w| out.trace.write_csv(w))?;
    if let Some(scan) = &out.probe {
        bundle.write(&format!("{prefix}probe_scan.csv"), |w| scan.write_csv(w))?;
    }
    if let Some((series, fits)) = &out.tof {
        bundle.write(&format!("{prefix}tof_series.csv"), |w| series.write_csv(w))?;
        bundle.write(&format!("{prefix}tof_fit.csv"), |w| {
            use std::io::Write;
            writeln!(w, "axis,parameter,value,uncertainty")?;
            for (axis, fit) in ["x", "y", "z"].iter().zip(fits) {
                for ((n, v), u) in fit.names.iter().zip(&fit.values).zip(&fit.uncertainties) {
                    writeln!(w, "{axis},{n},{v:e},{u:e}")?;
                }
            }
            Ok(())
        })?;
    }
    if let Some(snapshot) = &out.snapshot {
        bundle.put(&format!("{prefix}snapshot.csv"), snapshot)?;
    }
    Ok(())
}

/// Runs `scenario` end to end and writes a bundle into `dir`.
pub fn run(scenario: &Scenario, dir: &Path) -> Result<Manifest> {
    let config = scenario.to_toml()?;
    let scalars = StaticScalars::compute(scenario)?;
    let out = simulate(scenario)?;
    let mut bundle = Bundle::create(dir)?;
    bundle.put("scenario.toml", config.as_bytes())?;
    let spectra = write_spectra(scenario, &mut bundle)?;
    write_simulation(&out, &mut bundle, "")?;
    let results = RunResults {
        scenario: scenario.scenario.name.clone(),
        seed: scenario.scenario.seed,
        scalars,
        spectra,
        dynamics: out.results,
    };
    bundle.write("results.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &results)?;
        w.push(b'\n');
        Ok(())
    })?;
    bundle.finish(BundleKind::Run, &config, scenario.scenario.seed)
}

/// Seed of one sweep point: the first eight bytes (little endian) of
/// SHA-256 over the master seed, the parameter name and the value's bits.
pub fn point_seed(master: u64, parameter: &str, value: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(parameter.as_bytes());
    h.update(value.to_bits().to_le_bytes());
    let d = h.finalize();
    // masked to 63 bits so the point scenario still serializes
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes")) & MAX_SEED
}

impl Scenario {
    /// The stand-alone scenario a sweep runs for `value`; simulating it
    /// reproduces that sweep row exactly.
    pub fn sweep_point(&self, parameter: &str, value: f64) -> Result<Scenario> {
        let mut s = self.with_parameter(parameter, value)?;
        s.scenario.seed = point_seed(self.scenario.seed, parameter, value);
        s.scenario.name = format!("{}[{parameter}={value}]", self.scenario.name);
        s.sweep = None;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub loaded: Option<RowSummary>,
    pub last: Option<RowSummary>,
    pub measured_shift_Hz: Option<f64>,
    pub tof_temperatures_uK: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResults {
    pub scenario: String,
    pub seed: u64,
    pub parameter: String,
    #[serde(rename = "static")]
    pub scalars: StaticScalars,
    pub spectra: Vec<SpectrumSummary>,
    pub rows: Vec<SweepRow>,
}

/// Runs one simulation per value (in parallel) and writes `sweep.csv`,
/// one `trace_<i>.csv` per point and the usual bundle files.
pub fn sweep(scenario: &Scenario, parameter: &str, values: &[f64], dir: &Path) -> Result<Manifest> {
    let points: Vec<Scenario> = values
        .iter()
        .map(|&v| scenario.sweep_point(parameter, v))
        .collect::<Result<_>>()?;
    let outputs: Vec<SimulationOutput> = points.par_iter().map(simulate).collect::<Result<_>>()?;

    let mut base = scenario.clone();
    base.sweep = Some(super::config::SweepSection {
        parameter: parameter.to_string(),
        values: values.to_vec(),
    });
    let config = base.to_toml()?;
    let mut bundle = Bundle::create(dir)?;
    bundle.put("scenario.toml", config.as_bytes())?;
    let spectra = write_spectra(scenario, &mut bundle)?;

    let mut csv =
        format!("{parameter},seed,t_s,N_trapped,T_x_uK,T_y_uK,T_z_uK,f_F1,cavity_shift_Hz,measured_shift_Hz\n");
    let mut rows = Vec::new();
    for (i, ((value, point), out)) in values.iter().zip(&points).zip(&outputs).enumerate() {
        write_simulation(out, &mut bundle, &format!("point_{i}_"))?;
        let r = &out.results;
        match &r.last {
            Some(l) => csv.push_str(&format!(
                "{value},{},{:.6},{:.6e},{:.4},{:.4},{:.4},{:.5},{:.6e},{}\n",
                point.scenario.seed,
                l.t_s,
                l.N_trapped,
                l.T_uK[0],
                l.T_uK[1],
                l.T_uK[2],
                l.f_F1,
                l.cavity_shift_Hz,
                r.measured_shift_Hz.map_or(String::new(), |m| format!("{m:.6e}")),
            )),
            None => csv.push_str(&format!("{value},{},,,,,,,,\n", point.scenario.seed)),
        }
        rows.push(SweepRow {
            value: *value,
            seed: point.scenario.seed,
            loaded: r.loaded.clone(),
            last: r.last.clone(),
            measured_shift_Hz: r.measured_shift_Hz,
            tof_temperatures_uK: r.tof_temperatures_uK,
        });
    }
    bundle.put("sweep.csv", csv.as_bytes())?;
    let results = SweepResults {
        scenario: scenario.scenario.name.clone(),
        seed: scenario.scenario.seed,
        parameter: parameter.to_string(),
        scalars: StaticScalars::compute(scenario)?,
        spectra,
        rows,
    };
    bundle.write("results.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &results)?;
        w.push(b'\n');
        Ok(())
    })?;
    bundle.finish(BundleKind::Sweep, &config, scenario.scenario.seed)
}
