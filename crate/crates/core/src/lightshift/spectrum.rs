use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;

use super::shifts::ShiftMap;
use super::sublevel::SublevelOperator;
use crate::atomic_data::AtomicData;
use crate::trap_optics::{trap_shape, ToneField};
use crate::{Error, Result};

/// Positions drawn from a thermal distribution in the ground potential.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSample {
    pub positions: Vec<Vector3<f64>>,
    /// K.
    pub temperature: f64,
}

/// Truncation of the thermal sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRegion {
    /// Half-length along the cavity axis (m); the atomic cloud along the
    /// weak axis is limited by loading, not by the trap.
    pub half_length: f64,
    /// Transverse half-width in thermal radii, capped at two waists.
    pub transverse_sigmas: f64,
}

impl Default for SampleRegion {
    fn default() -> Self {
        Self {
            half_length: 5e-3,
            transverse_sigmas: 8.0,
        }
    }
}

/// Rejection-samples `n` positions from exp(−U/k_BT) inside `region`.
/// At zero temperature every atom sits at the potential minimum.
pub fn sample_boltzmann<R: Rng + ?Sized>(
    tones: &[ToneField],
    temperature: f64,
    n: usize,
    region: SampleRegion,
    rng: &mut R,
) -> Result<EnsembleSample> {
    if !(temperature >= 0.0) {
        return Err(Error::InvalidInput(format!("temperature {temperature} K")));
    }
    let shape = trap_shape(tones, None)?;
    if temperature == 0.0 {
        return Ok(EnsembleSample {
            positions: vec![shape.minimum; n],
            temperature,
        });
    }
    let map = ShiftMap::new(tones)?;
    let c = &AtomicData::rb87().constants;
    let kt = c.boltzmann * temperature;
    let u_min = map.ground(&shape.minimum);
    let w = tones
        .iter()
        .filter(|t| t.power > 0.0)
        .map(|t| t.waist)
        .fold(f64::INFINITY, f64::min);
    let sigma_v = (kt / c.mass).sqrt();
    let half = |f: f64| (region.transverse_sigmas * sigma_v / (2.0 * std::f64::consts::PI * f)).min(2.0 * w);
    let box_half = Vector3::new(
        region.half_length,
        half(shape.frequencies[1]),
        half(shape.frequencies[2]),
    );
    let max_tries = 100_000usize.max(20_000 * n);
    let mut positions = Vec::with_capacity(n);
    let mut tries = 0;
    while positions.len() < n {
        tries += 1;
        if tries > max_tries {
            return Err(Error::NonConvergence(tries));
        }
        let p = shape.minimum
            + Vector3::new(
                rng.random_range(-1.0..1.0) * box_half.x,
                rng.random_range(-1.0..1.0) * box_half.y,
                rng.random_range(-1.0..1.0) * box_half.z,
            );
        let weight = (-(map.ground(&p) - u_min) / kt).exp();
        if rng.random::<f64>() < weight {
            positions.push(p);
        }
    }
    Ok(EnsembleSample { positions, temperature })
}

/// Mean cooling-transition shift (Hz) over a sample.
pub fn ensemble_mean_shift(tones: &[ToneField], sample: &EnsembleSample) -> Result<f64> {
    if sample.positions.is_empty() {
        return Err(Error::EmptySample);
    }
    let map = ShiftMap::new(tones)?;
    Ok(sample.positions.iter().map(|p| map.differential_hz(p)).sum::<f64>() / sample.positions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub start_hz: f64,
    pub end_hz: f64,
    pub step_hz: f64,
    /// Resolve the tensor splitting of this 5P₃/₂ F′ level, each sublevel
    /// carrying an equal share of the atom's weight.
    pub sublevels: Option<u32>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            start_hz: -200e6,
            end_hz: 200e6,
            step_hz: 0.25e6,
            sublevels: Some(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMeta {
    pub tone_powers: Vec<f64>,
    pub temperature: f64,
    pub probe_fwhm_hz: f64,
    pub sample_size: usize,
    /// Weight that fell outside the grid and was dropped.
    pub outside_grid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpectrum {
    /// Strictly increasing (Hz).
    pub detuning_hz: Vec<f64>,
    pub weights: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl ShiftSpectrum {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean_hz(&self) -> f64 {
        self.detuning_hz
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum::<f64>()
            / self.total_weight()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "detuning_MHz,weight")?;
        for (x, w) in self.detuning_hz.iter().zip(&self.weights) {
            writeln!(out, "{:.6},{:.9e}", x * 1e-6, w)?;
        }
        Ok(())
    }
}

/// Histogram of per-atom cooling-transition shifts, convolved with a
/// Lorentzian of full width `probe_fwhm_hz`. Each histogram bin's kernel is
/// normalized on the grid, so the total weight equals the in-grid count.
pub fn synthesize_spectrum(
    tones: &[ToneField],
    sample: &EnsembleSample,
    probe_fwhm_hz: f64,
    options: SpectrumOptions,
) -> Result<ShiftSpectrum> {
    if sample.positions.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(probe_fwhm_hz >= 0.0) || !(options.step_hz > 0.0) || !(options.end_hz > options.start_hz) {
        return Err(Error::InvalidInput("bad spectrum grid or probe width".into()));
    }
    let n_bins = ((options.end_hz - options.start_hz) / options.step_hz).round() as usize + 1;
    let grid: Vec<f64> = (0..n_bins)
        .map(|i| options.start_hz + i as f64 * options.step_hz)
        .collect();

    let map = ShiftMap::new(tones)?;
    let operator = options.sublevels.map(|f| SublevelOperator::new(f, tones)).transpose()?;
    let planck = AtomicData::rb87().constants.planck;

    let mut hist = vec![0.0; n_bins];
    let mut outside = 0.0;
    let mut deposit = |shift: f64, weight: f64| {
        let idx = ((shift - options.start_hz) / options.step_hz).round();
        if idx >= 0.0 && (idx as usize) < n_bins {
            hist[idx as usize] += weight;
        } else {
            outside += weight;
        }
    };
    for p in &sample.positions {
        match &operator {
            Some(op) => {
                let ground = map.ground(p);
                let levels = op.eigenvalues(p);
                let share = 1.0 / levels.len() as f64;
                for e in levels {
                    deposit((e - ground) / planck, share);
                }
            }
            None => deposit(map.differential_hz(p), 1.0),
        }
    }

    let weights = if probe_fwhm_hz > 0.0 {
        let half = probe_fwhm_hz / 2.0;
        let mut out = vec![0.0; n_bins];
        let mut kernel = vec![0.0; n_bins];
        for (i, &count) in hist.iter().enumerate() {
            if count == 0.0 {
                continue;
            }
            let mut norm = 0.0;
            for (k, x) in kernel.iter_mut().zip(&grid) {
                let d = (x - grid[i]) / half;
                *k = 1.0 / (1.0 + d * d);
                norm += *k;
            }
            for (o, k) in out.iter_mut().zip(&kernel) {
                *o += count * k / norm;
            }
        }
        out
    } else {
        hist
    };

    Ok(ShiftSpectrum {
        detuning_hz: grid,
        weights,
        meta: SpectrumMeta {
            tone_powers: tones.iter().map(|t| t.power).collect(),
            temperature: sample.temperature,
            probe_fwhm_hz,
            sample_size: sample.positions.len(),
            outside_grid: outside,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightshift::compensation_template;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tones(comp: f64) -> Vec<ToneField> {
        vec![
            ToneField::new(1560e-9, 36.0, 157e-6),
            compensation_template().with_power(comp),
        ]
    }

    #[test]
    fn thermal_sample_has_expected_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_boltzmann(&tones(2.8), 11e-6, 4000, SampleRegion::default(), &mut rng).unwrap();
        let var_y = s.positions.iter().map(|p| p.y * p.y).sum::<f64>() / s.positions.len() as f64;
        // grid quadrature of the same truncated distribution gives 1.63 kT/(mω²)
        let shape = trap_shape(&tones(2.8), None).unwrap();
        let c = &AtomicData::rb87().constants;
        let omega = 2.0 * std::f64::consts::PI * shape.frequencies[1];
        let harmonic = c.boltzmann * 11e-6 / (c.mass * omega * omega);
        let ratio = var_y / harmonic;
        assert!((ratio - 1.63).abs() < 0.12, "{ratio}");
        assert!(s.positions.iter().all(|p| p.x.abs() <= 5e-3));
    }

    #[test]
    fn zero_temperature_sits_at_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_boltzmann(&tones(0.0), 0.0, 3, SampleRegion::default(), &mut rng).unwrap();
        assert!(s.positions.iter().all(|p| p.norm() < 1e-9));
    }

    #[test]
    fn single_position_gives_probe_lorentzian() {
        let sample = EnsembleSample {
            positions: vec![Vector3::zeros()],
            temperature: 0.0,
        };
        let opts = SpectrumOptions {
            sublevels: None,
            ..Default::default()
        };
        let s = synthesize_spectrum(&tones(2.9), &sample, 10e6, opts).unwrap();
        let peak = s.weights.iter().cloned().fold(0.0, f64::max);
        let above: Vec<f64> = s
            .detuning_hz
            .iter()
            .zip(&s.weights)
            .filter(|(_, &w)| w >= peak / 2.0)
            .map(|(x, _)| *x)
            .collect();
        let width = above.last().unwrap() - above.first().unwrap();
        assert!((width - 10e6).abs() <= 0.25e6 + 1.0, "{width}");
    }

    #[test]
    fn weight_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_boltzmann(&tones(5.2), 11e-6, 500, SampleRegion::default(), &mut rng).unwrap();
        let spec = synthesize_spectrum(&tones(5.2), &s, 10e6, SpectrumOptions::default()).unwrap();
        assert_eq!(spec.meta.outside_grid, 0.0);
        assert!((spec.total_weight() - 500.0).abs() < 0.5);
        assert!(spec.weights.iter().all(|&w| w >= 0.0));
        assert!(spec.detuning_hz.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn empty_sample_is_an_error() {
        let sample = EnsembleSample {
            positions: vec![],
            temperature: 1e-5,
        };
        assert!(matches!(
            synthesize_spectrum(&tones(0.0), &sample, 1e6, SpectrumOptions::default()),
            Err(Error::EmptySample)
        ));
        assert!(matches!(
            ensemble_mean_shift(&tones(0.0), &sample),
            Err(Error::EmptySample)
        ));
    }
}
