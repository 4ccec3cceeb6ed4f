use nalgebra::{DMatrix, DVector};

use super::fit::{FitResult, FitWarning};
use super::lm::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::lightshift::ShiftSpectrum;
use crate::{Error, Result};

/// Positive residual, relative to the fitted amplitude, above which a
/// second peak is suspected.
pub const MULTI_PEAK_THRESHOLD: f64 = 0.15;

/// A/(1 + (2(x − x₀)/w)²) + B.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    amplitude / (1.0 + u * u) + offset
}

struct Model {
    x: Vec<f64>,
    y: Vec<f64>,
}

// parameters: center, fwhm, amplitude, offset (all in scaled units)
impl LeastSquares for Model {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(&self.y)
                .map(|(&x, &y)| lorentzian(x, p[0], p[1], p[2], p[3]) - y),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (x0, w, a) = (p[0], p[1], p[2]);
        DMatrix::from_fn(self.x.len(), 4, |i, c| {
            let u = 2.0 * (self.x[i] - x0) / w;
            let den = 1.0 + u * u;
            match c {
                0 => a * 2.0 * u / (den * den) * 2.0 / w,
                1 => a * 2.0 * u * u / (den * den * w),
                2 => 1.0 / den,
                _ => 1.0,
            }
        })
    }
}

/// Fits a single Lorentzian peak to (x, y). Parameters `center` and `fwhm`
/// share the units of x; `amplitude` and `offset` those of y.
pub fn fit_lorentzian_xy(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("x and y differ in length".into()));
    }
    if x.len() < 5 {
        return Err(Error::TooFewPoints { need: 5, got: x.len() });
    }
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptySample)?;
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let amp0 = ymax - ymin;
    if !(amp0 > 0.0) {
        return Err(Error::FitFailure("flat spectrum".into()));
    }
    let above: Vec<f64> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v >= ymin + amp0 / 2.0)
        .map(|(&x, _)| x)
        .collect();
    let step = (x[x.len() - 1] - x[0]).abs() / (x.len() - 1) as f64;
    let width0 = (above.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - above.iter().cloned().fold(f64::INFINITY, f64::min))
    .max(step);

    // work in units of the starting width and amplitude
    let (xc, xs, ys) = (x[imax], width0, amp0);
    let model = Model {
        x: x.iter().map(|v| (v - xc) / xs).collect(),
        y: y.iter().map(|v| (v - ymin) / ys).collect(),
    };
    let init = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0]);
    let sol = levenberg_marquardt(&model, init, LmOptions::default())?;
    let p = &sol.params;
    if !(p[1].abs() > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::FitFailure("degenerate Lorentzian".into()));
    }
    let mut warnings = Vec::new();
    let max_resid = model.residuals(p).iter().cloned().fold(f64::INFINITY, f64::min);
    if -max_resid > MULTI_PEAK_THRESHOLD * p[2].abs() {
        warnings.push(FitWarning::MultiplePeaks);
    }
    let sd = |i: usize| sol.covariance[(i, i)].max(0.0).sqrt();
    Ok(FitResult {
        names: vec!["center", "fwhm", "amplitude", "offset"],
        values: vec![xc + p[0] * xs, p[1].abs() * xs, p[2] * ys, ymin + p[3] * ys],
        uncertainties: vec![sd(0) * xs, sd(1) * xs, sd(2) * ys, sd(3) * ys],
        residual_norm: sol.residual_norm * ys,
        converged: true,
        warnings,
    })
}

/// Lorentzian fit of a synthesized spectrum; center and FWHM in Hz.
pub fn fit_lorentzian(spectrum: &ShiftSpectrum) -> Result<FitResult> {
    fit_lorentzian_xy(&spectrum.detuning_hz, &spectrum.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..801).map(|i| -100e6 + i as f64 * 0.25e6).collect()
    }

    #[test]
    fn exact_recovery() {
        let x = grid();
        let y: Vec<f64> = x.iter().map(|&x| lorentzian(x, 0.0, 10e6, 3.0, 0.1)).collect();
        let f = fit_lorentzian_xy(&x, &y).unwrap();
        assert!(f.get("center").unwrap().abs() < 1e3);
        assert!((f.get("fwhm").unwrap() - 10e6).abs() / 10e6 < 1e-3);
        assert!((f.get("amplitude").unwrap() - 3.0).abs() < 1e-3);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn translation_equivariance() {
        let x = grid();
        let y: Vec<f64> = x.iter().map(|&x| lorentzian(x, 3e6, 18e6, 1.0, 0.0)).collect();
        let a = fit_lorentzian_xy(&x, &y).unwrap().get("center").unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + 7.3e6).collect();
        let b = fit_lorentzian_xy(&shifted, &y).unwrap().get("center").unwrap();
        assert!((b - a - 7.3e6).abs() < 1e3);
    }

    #[test]
    fn two_peaks_warn() {
        let x = grid();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| lorentzian(x, -30e6, 8e6, 1.0, 0.0) + lorentzian(x, 30e6, 8e6, 0.9, 0.0))
            .collect();
        let f = fit_lorentzian_xy(&x, &y).unwrap();
        assert!(f.warnings.contains(&FitWarning::MultiplePeaks));
    }

    #[test]
    fn flat_input_fails() {
        let x = grid();
        let y = vec![1.0; x.len()];
        assert!(fit_lorentzian_xy(&x, &y).is_err());
    }
}
