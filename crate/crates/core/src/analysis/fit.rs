use std::fmt;
use std::io::Write;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// The unconstrained temperature estimate was negative and set to zero.
    TemperatureClamped,
    /// Residuals show structure beyond a single peak.
    MultiplePeaks,
}

/// Named parameter estimates with 1σ uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<&'static str>,
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.uncertainties[i])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "parameter,value,uncertainty")?;
        for ((n, v), u) in self.names.iter().zip(&self.values).zip(&self.uncertainties) {
            writeln!(out, "{n},{v:e},{u:e}")?;
        }
        Ok(())
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "converged: {}", self.converged)?;
        for ((n, v), u) in self.names.iter().zip(&self.values).zip(&self.uncertainties) {
            writeln!(f, "  {n:<14} {v:>14.6e} ± {u:.3e}")?;
        }
        writeln!(f, "  residual norm  {:.4e}", self.residual_norm)?;
        for w in &self.warnings {
            writeln!(f, "  warning: {w:?}")?;
        }
        Ok(())
    }
}
