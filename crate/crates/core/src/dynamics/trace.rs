use std::io::Write;

use crate::Result;

/// Macro-atom bookkeeping. `injected = trapped + transiting + departed`
/// holds at every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub injected: u64,
    pub trapped: u64,
    pub transiting: u64,
    pub departed: u64,
}

impl Counts {
    pub fn balanced(&self) -> bool {
        self.injected == self.trapped + self.transiting + self.departed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Physical atoms (macro count / scale).
    pub n_trapped: f64,
    /// Per-axis kinetic temperature of the trapped atoms (K); zero with
    /// fewer than two.
    pub temperatures: [f64; 3],
    /// Fraction of trapped atoms in F=1; zero when none are trapped.
    pub f_f1: f64,
    /// Dispersive shift of the probe mode from every atom present (Hz).
    pub cavity_shift_hz: f64,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleTrace {
    pub rows: Vec<TraceRow>,
}

impl EnsembleTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn trapped(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n_trapped).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_s,N_trapped,T_x_uK,T_y_uK,T_z_uK,f_F1,cavity_shift_Hz")?;
        for r in &self.rows {
            let [tx, ty, tz] = r.temperatures.map(|t| t * 1e6);
            writeln!(
                out,
                "{:.6},{:.6e},{tx:.4},{ty:.4},{tz:.4},{:.5},{:.6e}",
                r.t, r.n_trapped, r.f_f1, r.cavity_shift_hz
            )?;
        }
        Ok(())
    }
}
