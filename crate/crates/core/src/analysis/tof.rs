use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector3};

use super::fit::{FitResult, FitWarning};
use super::lm::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::atomic_data::AtomicData;
use crate::trap_optics::Gravity;
use crate::{Error, Result};

/// Position and velocity of one atom at release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpacePoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Cloud widths after free expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct TofSeries {
    /// s, strictly increasing.
    pub times: Vec<f64>,
    /// Standard deviation per axis (m).
    pub widths: Vec<[f64; 3]>,
    /// Optional 1σ uncertainty of each width (m).
    pub width_errors: Option<Vec<[f64; 3]>>,
}

impl TofSeries {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.widths.len() {
            return Err(Error::InvalidInput("times and widths differ in length".into()));
        }
        if self.times.iter().any(|&t| !(t >= 0.0)) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("times must be ≥ 0 and strictly increasing".into()));
        }
        if self.widths.iter().flatten().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput("widths must be positive".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_s,sigma_x_m,sigma_y_m,sigma_z_m")?;
        for (t, w) in self.times.iter().zip(&self.widths) {
            writeln!(out, "{t:e},{:e},{:e},{:e}", w[0], w[1], w[2])?;
        }
        Ok(())
    }
}

/// Ballistic expansion of `ensemble` (optionally falling under `gravity`)
/// with per-axis standard deviations at each time. `inflation` adds a
/// constant width in quadrature, mimicking imaging blur.
pub fn tof_expand(
    ensemble: &[PhaseSpacePoint],
    times: &[f64],
    gravity: Option<Gravity>,
    inflation: f64,
) -> Result<TofSeries> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = ensemble.len() as f64;
    let widths = times
        .iter()
        .map(|&t| {
            let fall = gravity.map_or(Vector3::zeros(), |g| g.direction * (0.5 * g.acceleration * t * t));
            let mut mean = Vector3::zeros();
            let mut sq = Vector3::zeros();
            for a in ensemble {
                let p = a.position + a.velocity * t + fall;
                mean += p;
                sq += p.component_mul(&p);
            }
            mean /= n;
            let var = sq / n - mean.component_mul(&mean);
            [0, 1, 2].map(|i| (var[i].max(0.0) + inflation * inflation).sqrt())
        })
        .collect();
    Ok(TofSeries {
        times: times.to_vec(),
        widths,
        width_errors: None,
    })
}

struct TofModel<'a> {
    t: &'a [f64],
    sigma: Vec<f64>,
    weight: Vec<f64>,
}

impl TofModel<'_> {
    fn predict(&self, p: &DVector<f64>, t: f64) -> f64 {
        (p[0] * p[0] + p[1] * t * t).max(1e-300).sqrt()
    }
}

// parameters: σ₀ (m), v² = k_B T/m (m²/s²)
impl LeastSquares for TofModel<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.t.len(),
            (0..self.t.len()).map(|i| (self.predict(p, self.t[i]) - self.sigma[i]) * self.weight[i]),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.t.len(), 2, |i, c| {
            let s = self.predict(p, self.t[i]);
            let d = if c == 0 {
                p[0] / s
            } else {
                self.t[i] * self.t[i] / (2.0 * s)
            };
            d * self.weight[i]
        })
    }
}

/// Ordinary regression of σ² on t² giving (σ₀², v²).
fn linear_start(t: &[f64], sigma: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let x: Vec<f64> = t.iter().map(|t| t * t).collect();
    let y: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Fits σ(t) = √(σ₀² + k_B T t²/m) on one axis. Parameters: `T_K`, `sigma0_m`.
pub fn fit_tof_axis(times: &[f64], widths: &[f64], errors: Option<&[f64]>) -> Result<FitResult> {
    if times.len() < 3 {
        return Err(Error::TooFewPoints {
            need: 3,
            got: times.len(),
        });
    }
    let c = &AtomicData::rb87().constants;
    let weight = match errors {
        Some(e) => e.iter().map(|e| 1.0 / e.max(1e-300)).collect(),
        None => vec![1.0; times.len()],
    };
    let model = TofModel {
        t: times,
        sigma: widths.to_vec(),
        weight,
    };
    let (s0sq, v2) = linear_start(times, widths);
    let s0 = s0sq.max(widths[0] * widths[0] * 1e-4).sqrt();
    let mut warnings = Vec::new();

    let (sigma0, d_sigma0, v2, d_v2, residual_norm) = if v2 <= 0.0 {
        // best fit is at T = 0: a constant width
        warnings.push(FitWarning::TemperatureClamped);
        let mean = widths.iter().sum::<f64>() / widths.len() as f64;
        let p = DVector::from_vec(vec![mean, 0.0]);
        let r = model.residuals(&p).norm();
        let spread = (r * r / (widths.len() - 1) as f64 / widths.len() as f64).sqrt();
        (mean, spread, 0.0, 0.0, r)
    } else {
        let options = LmOptions {
            scale_by_chi2: errors.is_none(),
            ..Default::default()
        };
        let sol = levenberg_marquardt(&model, DVector::from_vec(vec![s0, v2]), options)?;
        let mut v = sol.params[1];
        if v < 0.0 {
            warnings.push(FitWarning::TemperatureClamped);
            v = 0.0;
        }
        (
            sol.params[0].abs(),
            sol.covariance[(0, 0)].max(0.0).sqrt(),
            v,
            sol.covariance[(1, 1)].max(0.0).sqrt(),
            sol.residual_norm,
        )
    };
    let to_kelvin = c.mass / c.boltzmann;
    Ok(FitResult {
        names: vec!["T_K", "sigma0_m"],
        values: vec![v2 * to_kelvin, sigma0],
        uncertainties: vec![d_v2 * to_kelvin, d_sigma0],
        residual_norm,
        converged: true,
        warnings,
    })
}

/// Per-axis temperature and initial-width fits.
pub fn fit_tof(series: &TofSeries) -> Result<[FitResult; 3]> {
    series.validate()?;
    let fit = |axis: usize| {
        let w: Vec<f64> = series.widths.iter().map(|w| w[axis]).collect();
        let e: Option<Vec<f64>> = series
            .width_errors
            .as_ref()
            .map(|e| e.iter().map(|e| e[axis]).collect());
        fit_tof_axis(&series.times, &w, e.as_deref())
    };
    Ok([fit(0)?, fit(1)?, fit(2)?])
}
