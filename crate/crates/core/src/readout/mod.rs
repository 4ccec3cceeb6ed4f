//! Dispersive cavity readout of the hyperfine population difference.
//!
//! An atom in F=2 (F=1) pulls the 780-nm high-finesse mode by +Ω/2 (−Ω/2)
//! per unit mode overlap, with Ω = 2g²/Δ and Δ half the ground hyperfine
//! splitting.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::fit_lorentzian_xy;
use crate::atomic_data::{AtomicData, GroundManifold};
use crate::trap_optics::{CavityMode, CavityParams, ModePolarization};
use crate::{Error, Result};

/// Ω = 2g²/Δ (rad/s).
pub fn dispersive_shift_rate(coupling: f64, detuning: f64) -> Result<f64> {
    if detuning == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(2.0 * coupling * coupling / detuning)
}

/// Single-atom cooperativity C = 4g²/(κΓ).
pub fn cooperativity(coupling: f64, linewidth: f64, gamma: f64) -> f64 {
    4.0 * coupling * coupling / (linewidth * gamma)
}

/// N·C.
pub fn collective_cooperativity(coupling: f64, linewidth: f64, gamma: f64, atoms: f64) -> f64 {
    atoms * cooperativity(coupling, linewidth, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveParams {
    /// g (rad/s).
    pub coupling: f64,
    /// Δ (rad/s).
    pub detuning: f64,
    /// Ω = 2g²/Δ (rad/s).
    pub shift_rate: f64,
    /// Probe-mode FWHM κ (rad/s).
    pub linewidth: f64,
}

impl DispersiveParams {
    pub fn new(coupling: f64, detuning: f64, linewidth: f64) -> Result<Self> {
        if !(linewidth > 0.0) {
            return Err(Error::InvalidInput("cavity linewidth must be positive".into()));
        }
        Ok(Self {
            coupling,
            detuning,
            shift_rate: dispersive_shift_rate(coupling, detuning)?,
            linewidth,
        })
    }

    /// Probe midway between the two ground manifolds on the high-finesse
    /// 780-nm mode of `cavity`.
    pub fn for_cavity(cavity: &CavityParams) -> Result<Self> {
        let c = &AtomicData::rb87().constants;
        let mode = probe_mode(cavity)?;
        Self::new(
            cavity.coupling,
            2.0 * PI * c.hyperfine_splitting / 2.0,
            cavity.linewidth(mode),
        )
    }

    pub fn cooperativity(&self) -> f64 {
        cooperativity(self.coupling, self.linewidth, AtomicData::rb87().constants.gamma)
    }
}

/// The high-finesse 780-nm mode that carries the probe.
pub fn probe_mode(cavity: &CavityParams) -> Result<&CavityMode> {
    let d2 = AtomicData::rb87().constants.d2_wavelength;
    cavity
        .modes
        .iter()
        .filter(|m| (m.wavelength - d2).abs() < 2e-9)
        .max_by(|a, b| a.finesse.total_cmp(&b.finesse))
        .or_else(|| cavity.mode(780e-9, ModePolarization::S))
        .ok_or_else(|| Error::InvalidInput("cavity has no 780-nm mode".into()))
}

/// Normalized intensity of `mode` at `point`, in [0, 1].
pub fn mode_overlap(mode: &CavityMode, point: &Vector3<f64>) -> f64 {
    let zr = PI * mode.waist * mode.waist / mode.wavelength;
    let grow = 1.0 + (point.x / zr).powi(2);
    let w2 = mode.waist * mode.waist * grow;
    (-2.0 * (point.y * point.y + point.z * point.z) / w2).exp() / grow
}

/// Mode-overlap-weighted populations of the two ground manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpinSummary {
    pub n_f1: f64,
    pub n_f2: f64,
}

impl SpinSummary {
    /// `weight` is the number of physical atoms each entry stands for.
    pub fn from_atoms<I>(atoms: I, mode: &CavityMode, weight: f64) -> Self
    where
        I: IntoIterator<Item = (Vector3<f64>, GroundManifold)>,
    {
        let mut s = Self::default();
        for (p, m) in atoms {
            let w = weight * mode_overlap(mode, &p);
            match m {
                GroundManifold::F1 => s.n_f1 += w,
                GroundManifold::F2 => s.n_f2 += w,
            }
        }
        s
    }

    pub fn jz(&self) -> f64 {
        (self.n_f2 - self.n_f1) / 2.0
    }
}

/// Cavity frequency shift Ω·J_z/2π (Hz).
pub fn cavity_shift(summary: &SpinSummary, params: &DispersiveParams) -> f64 {
    params.shift_rate * summary.jz() / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub start_hz: f64,
    pub end_hz: f64,
    pub points: usize,
    /// Fractional dip depth of the reflected power on resonance.
    pub dip_depth: f64,
    /// White-noise standard deviation in units of the off-resonant power.
    pub noise: f64,
}

impl ScanSettings {
    /// Symmetric scan of ±`half_span_hz` around `center_hz`.
    pub fn around(center_hz: f64, half_span_hz: f64, points: usize, noise: f64) -> Self {
        Self {
            start_hz: center_hz - half_span_hz,
            end_hz: center_hz + half_span_hz,
            points,
            dip_depth: 0.8,
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeScan {
    pub detuning_hz: Vec<f64>,
    pub reflected: Vec<f64>,
    /// Fitted dip frequency (Hz).
    pub measured_shift_hz: f64,
}

impl ProbeScan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "probe_detuning_Hz,reflected_power_norm")?;
        for (x, y) in self.detuning_hz.iter().zip(&self.reflected) {
            writeln!(out, "{x:.3},{y:.6}")?;
        }
        Ok(())
    }
}

/// Synthesizes a reflection scan with a Lorentzian dip of FWHM κ/2π at
/// `true_shift_hz`, adds noise and returns the fitted dip frequency.
pub fn probe_scan<R: Rng + ?Sized>(
    true_shift_hz: f64,
    linewidth: f64,
    settings: &ScanSettings,
    rng: &mut R,
) -> Result<ProbeScan> {
    let (a, b) = (settings.start_hz, settings.end_hz);
    if !(b > a) || settings.points < 5 || !(linewidth > 0.0) || !(settings.noise >= 0.0) {
        return Err(Error::InvalidInput("bad scan settings".into()));
    }
    if true_shift_hz < a || true_shift_hz > b {
        return Err(Error::DipOutOfRange {
            shift: true_shift_hz,
            start: a,
            end: b,
        });
    }
    let fwhm = linewidth / (2.0 * PI);
    let step = (b - a) / (settings.points - 1) as f64;
    let detuning_hz: Vec<f64> = (0..settings.points).map(|i| a + i as f64 * step).collect();
    let noise = Normal::new(0.0, settings.noise).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let reflected: Vec<f64> = detuning_hz
        .iter()
        .map(|&f| {
            let u = 2.0 * (f - true_shift_hz) / fwhm;
            let clean = 1.0 - settings.dip_depth / (1.0 + u * u);
            if settings.noise > 0.0 {
                clean + noise.sample(rng)
            } else {
                clean
            }
        })
        .collect();
    let inverted: Vec<f64> = reflected.iter().map(|r| 1.0 - r).collect();
    let fit = fit_lorentzian_xy(&detuning_hz, &inverted).map_err(|e| Error::FitFailure(e.to_string()))?;
    let center = fit.get("center").unwrap_or(f64::NAN);
    let amplitude = fit.get("amplitude").unwrap_or(0.0);
    if !(center >= a && center <= b) || !(amplitude > 2.0 * settings.noise) {
        return Err(Error::FitFailure(format!(
            "dip not resolved (center {center:.1} Hz, depth {amplitude:.3})"
        )));
    }
    Ok(ProbeScan {
        detuning_hz,
        reflected,
        measured_shift_hz: center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const KHZ: f64 = 2.0 * PI * 1e3;

    fn params() -> DispersiveParams {
        DispersiveParams::for_cavity(&CavityParams::ring_cavity()).unwrap()
    }

    #[test]
    fn shift_rate_value_and_symmetry() {
        let p = params();
        assert!(
            (p.shift_rate / (2.0 * PI) - 4.228).abs() < 0.005,
            "{}",
            p.shift_rate / (2.0 * PI)
        );
        let neg = dispersive_shift_rate(p.coupling, -p.detuning).unwrap();
        assert_eq!(neg, -p.shift_rate);
        assert_eq!(dispersive_shift_rate(0.0, p.detuning).unwrap(), 0.0);
        assert!(matches!(dispersive_shift_rate(1.0, 0.0), Err(Error::ZeroDetuning)));
    }

    #[test]
    fn cooperativities() {
        let p = params();
        let c = p.cooperativity();
        assert!((c - 0.056).abs() < 0.001, "{c}");
        let gamma = AtomicData::rb87().constants.gamma;
        let nc = collective_cooperativity(p.coupling, p.linewidth, gamma, 4.0e6);
        assert!((nc - 2.2e5).abs() / 2.2e5 < 0.03, "{nc}");
        assert_eq!(collective_cooperativity(p.coupling, p.linewidth, gamma, 0.0), 0.0);
    }

    #[test]
    fn per_atom_shifts() {
        let p = params();
        let cav = CavityParams::ring_cavity();
        let mode = probe_mode(&cav).unwrap();
        let one = SpinSummary::from_atoms([(Vector3::zeros(), GroundManifold::F2)], mode, 1.0);
        assert!((cavity_shift(&one, &p) - 2.114).abs() < 0.005);
        let pair = SpinSummary::from_atoms(
            [
                (Vector3::zeros(), GroundManifold::F2),
                (Vector3::zeros(), GroundManifold::F1),
            ],
            mode,
            1.0,
        );
        assert_eq!(cavity_shift(&pair, &p), 0.0);
        let many = SpinSummary::from_atoms([(Vector3::zeros(), GroundManifold::F1)], mode, 1e6);
        assert!((cavity_shift(&many, &p) / 1e6 + 2.114).abs() < 0.005);
    }

    #[test]
    fn overlap_is_bounded() {
        let cav = CavityParams::ring_cavity();
        let mode = probe_mode(&cav).unwrap();
        assert_eq!(mode_overlap(mode, &Vector3::zeros()), 1.0);
        let v = mode_overlap(mode, &Vector3::new(0.0, 111e-6, 0.0));
        assert!((v - (-2.0f64).exp()).abs() < 1e-12);
        let v = mode_overlap(mode, &Vector3::new(5e-3, 0.0, 0.0));
        assert!(v > 0.98 && v < 1.0);
    }

    #[test]
    fn noiseless_scan_is_exact_and_repeatable() {
        let s = ScanSettings::around(0.0, 1e6, 401, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = probe_scan(123e3, 85.0 * KHZ, &s, &mut rng).unwrap();
        let b = probe_scan(123e3, 85.0 * KHZ, &s, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!((a.measured_shift_hz - 123e3).abs() < 5e3);
    }

    #[test]
    fn far_shift_is_found() {
        let s = ScanSettings {
            start_hz: -8e6,
            end_hz: 2e6,
            points: 2001,
            dip_depth: 0.8,
            noise: 0.02,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = probe_scan(-6e6, 85.0 * KHZ, &s, &mut rng).unwrap();
        assert!(
            (r.measured_shift_hz + 6e6).abs() < 85e3 / 50.0,
            "{}",
            r.measured_shift_hz
        );
    }

    #[test]
    fn out_of_range_and_failure() {
        let s = ScanSettings::around(0.0, 1e6, 201, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            probe_scan(2e6, 85.0 * KHZ, &s, &mut rng),
            Err(Error::DipOutOfRange { .. })
        ));
        let noisy = ScanSettings::around(0.0, 1e6, 201, 5.0);
        assert!(probe_scan(0.0, 85.0 * KHZ, &noisy, &mut rng).is_err());
    }
}
