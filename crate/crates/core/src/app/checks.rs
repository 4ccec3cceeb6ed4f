//! Shape checks on simulated traces and sweeps.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        })
    }
}

/// One line of a summary: a computed value against a target.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    pub fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            detail: why.into(),
        }
    }

    pub fn condition(name: &str, ok: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    /// `value` within `rel` (fractional) of `target`.
    pub fn relative(name: &str, value: f64, target: f64, rel: f64, unit: &str) -> Self {
        let ok = ((value - target) / target).abs() <= rel;
        Self::condition(
            name,
            ok,
            format!("{value:.5} {unit} vs {target} {unit} ± {:.1}%", rel * 100.0),
        )
    }

    /// `value` within `abs` of `target`.
    pub fn absolute(name: &str, value: f64, target: f64, abs: f64, unit: &str) -> Self {
        let ok = (value - target).abs() <= abs;
        Self::condition(name, ok, format!("{value:.5} {unit} vs {target} {unit} ± {abs} {unit}"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:<34} {}", self.status, self.name, self.detail)
    }
}

/// Largest value at `x ≤ cut` as a fraction of the overall maximum; `None`
/// if nothing lies at or below the cut or the maximum is not positive.
pub fn threshold_fraction(points: &[(f64, f64)], cut: f64) -> Option<f64> {
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let below = points
        .iter()
        .filter(|p| p.0 <= cut)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    (max > 0.0 && below.is_finite()).then(|| below / max)
}

/// Moving average over full windows of `window` samples; the output is
/// `window − 1` samples shorter than the input.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    values
        .windows(window.max(1))
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect()
}

/// Largest drop between consecutive smoothed samples, as a fraction of the
/// smoothed maximum. Zero for a non-decreasing series.
pub fn smoothed_drop(values: &[f64], window: usize) -> f64 {
    let s = smooth(values, window);
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    s.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max) / max
}

/// Growth over the second half of a rising series divided by growth over
/// the first half, the series starting at its first nonzero sample. Below
/// one the rise is bending over toward a plateau.
pub fn late_growth_ratio(values: &[f64]) -> Option<f64> {
    let start = values.iter().position(|&v| v > 0.0)?;
    let v = &values[start..];
    if v.len() < 5 {
        return None;
    }
    let mid = v.len() / 2;
    let early = v[mid] - v[0];
    let late = v[v.len() - 1] - v[mid];
    (early > 0.0).then(|| late / early)
}

/// Mean absolute value over the trailing `fraction` of a series.
pub fn tail_mean_abs(values: &[f64], fraction: f64) -> f64 {
    let n = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len().max(1));
    let tail = &values[values.len().saturating_sub(n)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|v| v.abs()).sum::<f64>() / tail.len() as f64
}

/// Transit-only shift relative to the trapped plateau: the ratio of tail
/// means, and the largest single transit sample over the plateau mean.
pub fn transit_ratio(transit: &[f64], plateau: &[f64], fraction: f64) -> (f64, f64) {
    let reference = tail_mean_abs(plateau, fraction);
    let tail = tail_mean_abs(transit, fraction) / reference;
    let peak = transit.iter().map(|v| v.abs()).fold(0.0, f64::max) / reference;
    (tail, peak)
}
