#![allow(non_snake_case)]

use std::fs;
use std::path::{Path, PathBuf};

use super::checks::{late_growth_ratio, smoothed_drop, threshold_fraction, transit_ratio, Check, Status};
use super::config::Scenario;
use super::run::{verify_bundle, BundleKind, RowSummary, RunResults, StaticScalars, SweepResults, SPECTRUM_POWERS};
use crate::trap_optics::CavityParams;
use crate::{Error, Result};

/// Fraction of a trace treated as its steady-state tail.
pub const TAIL_FRACTION: f64 = 0.2;
/// Largest trapped count at ≤ 2.8 W compensation, relative to the maximum.
pub const THRESHOLD_LIMIT: f64 = 0.02;
/// Transit-only shift relative to the trapped plateau.
pub const TRANSIT_LIMIT: f64 = 0.015;
/// Shortest loading over which approach to a plateau is judged.
pub const PLATEAU_MIN_LOADING_MS: f64 = 1500.0;
/// Moving-average window (samples) for monotonicity.
pub const SMOOTHING_WINDOW: usize = 9;
/// Largest allowed drop of the smoothed accumulation trace.
pub const MONOTONE_TOLERANCE: f64 = 0.02;

/// A verified bundle as read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub dir: PathBuf,
    pub kind: BundleKind,
    pub scenario: Scenario,
    pub scalars: StaticScalars,
    pub spectra: Vec<super::run::SpectrumSummary>,
    /// `(label, value, results)` per simulation; the value is the swept one.
    pub points: Vec<Point>,
    pub parameter: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Point {
    pub prefix: String,
    pub value: Option<f64>,
    /// End of loading.
    pub loaded: Option<RowSummary>,
    /// End of the run, after any hold or molasses.
    pub last: Option<RowSummary>,
}

/// Numeric columns of a CSV file.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let bad = |e: csv::Error| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let headers = reader.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(bad)?;
            rows.push(record.iter().map(|f| f.trim().parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

impl LoadedBundle {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = verify_bundle(dir)?;
        let scenario = Scenario::load(&dir.join("scenario.toml"))?;
        let results = fs::read_to_string(dir.join("results.json"))
            .map_err(|_| Error::MissingArtifact(dir.join("results.json").display().to_string()))?;
        let (scalars, spectra, points, parameter) = match manifest.kind {
            BundleKind::Run => {
                let r: RunResults = serde_json::from_str(&results)?;
                let p = Point {
                    prefix: String::new(),
                    value: None,
                    loaded: r.dynamics.loaded,
                    last: r.dynamics.last,
                };
                (r.scalars, r.spectra, vec![p], None)
            }
            BundleKind::Sweep => {
                let r: SweepResults = serde_json::from_str(&results)?;
                let points = r
                    .rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, row)| Point {
                        prefix: format!("point_{i}_"),
                        value: Some(row.value),
                        loaded: row.loaded,
                        last: row.last,
                    })
                    .collect();
                (r.scalars, r.spectra, points, Some(r.parameter))
            }
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            kind: manifest.kind,
            scenario,
            scalars,
            spectra,
            points,
            parameter,
        })
    }

    pub fn trace(&self, point: &Point) -> Result<Table> {
        Table::read(&self.dir.join(format!("{}trace.csv", point.prefix)))
    }

    /// Trace rows up to the end of loading.
    pub fn loading_trace(&self, point: &Point) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let t = self.trace(point)?;
        let end = self.scenario.dynamics.duration_ms * 1e-3 + 1e-9;
        let times = t.column("t_s")?;
        let n = t.column("N_trapped")?;
        let shift = t.column("cavity_shift_Hz")?;
        let keep: Vec<usize> = (0..times.len()).filter(|&i| times[i] <= end).collect();
        Ok((
            keep.iter().map(|&i| times[i]).collect(),
            keep.iter().map(|&i| n[i]).collect(),
            keep.iter().map(|&i| shift[i]).collect(),
        ))
    }

    fn compensation_swept(&self) -> bool {
        self.parameter.as_deref() == Some("trap_optics.compensation.power_W")
    }
}

/// Plot data and checks for one bundle.
#[derive(Debug, Clone)]
pub struct Report {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!("{c}\n"));
        }
        let count = |st| self.checks.iter().filter(|c| c.status == st).count();
        s.push_str(&format!(
            "{} checks: {} passed, {} failed, {} skipped\n",
            self.checks.len(),
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Skipped)
        ));
        s
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * b.abs().max(1.0)
}

/// Checks on closed-form quantities. Targets hold for the 36 W, 1560 nm,
/// 157 µm trap, the 1527 nm compensation tone and the bundled ring cavity;
/// other configurations skip them.
pub fn static_checks(b: &LoadedBundle) -> Vec<Check> {
    let s = &b.scalars;
    let reference_trap =
        close(s.trap_power_W, 36.0) && close(s.trap_wavelength_nm, 1560.0) && close(s.trap_waist_um, 157.0);
    let t = &b.scenario.trap_optics;
    let comp_1527 = close(t.compensation.wavelength_nm, 1527.0);
    let reference_comp = comp_1527 && close(s.compensation_power_W, 5.2) && close(t.compensation.waist_um, 155.0);
    let reference_cavity = b.scenario.cavity() == CavityParams::ring_cavity();
    let gated = |ok: bool, why: &str, c: Check| if ok { c } else { Check::skipped(&c.name, why) };
    let trap_why = "trap is not the 36 W / 157 µm reference";
    let mut out = vec![
        gated(
            reference_trap,
            trap_why,
            Check::relative("trap depth", s.trap_depth_uK, 87.0, 0.03, "uK"),
        ),
        gated(
            comp_1527 && close(s.trap_wavelength_nm, 1560.0),
            "tones are not 1560/1527 nm",
            Check::relative(
                "compensation intensity ratio",
                s.compensation_intensity_ratio,
                1.0 / 12.1,
                0.01,
                "",
            ),
        ),
        gated(
            close(s.trap_wavelength_nm, 1560.0),
            "trap is not at 1560 nm",
            Check::relative("excited/ground polarizability", s.polarizability_ratio, 47.9, 0.01, ""),
        ),
        gated(
            reference_trap,
            trap_why,
            Check::relative("transverse trap frequency", s.trap_frequencies_Hz[2], 185.0, 0.03, "Hz"),
        ),
        gated(
            reference_trap,
            trap_why,
            Check::relative(
                "longitudinal trap frequency",
                s.trap_frequencies_Hz[0],
                0.41,
                0.05,
                "Hz",
            ),
        ),
        gated(
            reference_trap && reference_comp,
            "not the 36 W + 5.2 W configuration",
            Check::relative(
                "focal differential shift",
                s.focal_differential_shift_MHz,
                69.0,
                0.03,
                "MHz",
            ),
        ),
        gated(
            reference_trap && reference_comp && close(b.scenario.dynamics.cooling.detuning_gamma, -2.5),
            "not the 36 W + 5.2 W configuration at -2.5 Γ",
            Check::absolute("effective detuning", s.effective_detuning_gamma, -14.0, 0.5, "Γ"),
        ),
    ];
    let cavity_why = "cavity differs from the bundled ring cavity";
    out.push(gated(
        reference_cavity,
        cavity_why,
        Check::relative("Ω/2π", s.shift_rate_Hz, 4.2, 0.02, "Hz"),
    ));
    out.push(gated(
        reference_cavity,
        cavity_why,
        Check::relative("cooperativity", s.cooperativity, 0.056, 0.02, ""),
    ));
    out.push(gated(
        reference_cavity,
        cavity_why,
        Check::relative("NC at 4e6 atoms", s.collective_cooperativity_4e6, 2.2e5, 0.02, ""),
    ));
    out.push(gated(
        reference_cavity,
        cavity_why,
        Check::relative("FSR", s.fsr_GHz, 3.05, 0.002, "GHz"),
    ));
    out.push(match s.kappa_780p_finesse_kHz {
        Some(k) if reference_cavity => Check::relative("κ 780 p from finesse", k, 1390.0, 0.02, "kHz"),
        _ => Check::skipped("κ 780 p from finesse", cavity_why),
    });
    out.push(Check::absolute(
        "back-scatter modulation",
        s.backscatter_modulation_5e3 * 100.0,
        14.0,
        1.0,
        "%",
    ));
    out
}

/// F′=3 spread ordering and spectrum width ordering.
pub fn lightshift_checks(b: &LoadedBundle) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let table = Table::read(&b.dir.join("spreads.csv"))?;
    let powers = table.column("compensation_W")?;
    let spreads = table.column("spread_MHz")?;
    let at = |p: f64| powers.iter().position(|&x| (x - p).abs() < 1e-9).map(|i| spreads[i]);
    match (at(0.0), at(2.8), at(5.2)) {
        (Some(a), Some(c), Some(e)) => out.push(Check::condition(
            "F'=3 spread increases",
            a < c && c < e,
            format!("{a:.2} < {c:.2} < {e:.2} MHz"),
        )),
        _ => out.push(Check::skipped(
            "F'=3 spread increases",
            "spread table lacks 0/2.8/5.2 W",
        )),
    }
    let w: Vec<f64> = b.spectra.iter().map(|s| s.fwhm_MHz).collect();
    if b.spectra.len() == SPECTRUM_POWERS.len() {
        out.push(Check::condition(
            "spectrum width ordering",
            w[1] < w[0] && w[0] < w[2],
            format!("2.8 W {:.1} < 0 W {:.1} < 5.2 W {:.1} MHz", w[1], w[0], w[2]),
        ));
        out.push(Check::absolute(
            "2.8 W spectrum center",
            b.spectra[1].center_MHz,
            0.0,
            3.0,
            "MHz",
        ));
    }
    Ok(out)
}

/// Checks on simulated traces; skipped where no atoms were trapped.
pub fn dynamic_checks(b: &LoadedBundle) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let depth = b.scalars.trap_depth_with_gravity_uK;
    let best = b
        .points
        .iter()
        .filter(|p| p.loaded.as_ref().is_some_and(|l| l.trapped_macro_count >= 2))
        .max_by(|x, y| {
            let n = |p: &Point| p.loaded.as_ref().map_or(0.0, |l| l.N_trapped);
            n(x).total_cmp(&n(y))
        });
    match best.and_then(|p| p.loaded.as_ref()) {
        Some(l) => {
            out.push(Check::condition(
                "temperatures below depth",
                l.T_uK.iter().all(|&t| t < depth),
                format!(
                    "T = {:.1}/{:.1}/{:.1} uK vs depth {depth:.1} uK",
                    l.T_uK[0], l.T_uK[1], l.T_uK[2]
                ),
            ));
            out.push(Check::condition(
                "F=1 fraction",
                l.f_F1 > 0.5,
                format!("{:.3} > 0.5", l.f_F1),
            ));
        }
        None => {
            out.push(Check::skipped("temperatures below depth", "no trapped atoms"));
            out.push(Check::skipped("F=1 fraction", "no trapped atoms"));
        }
    }

    let swept: Vec<(f64, &Point)> = b.points.iter().filter_map(|p| p.value.map(|v| (v, p))).collect();
    let counts: Vec<(f64, f64)> = swept
        .iter()
        .filter_map(|(v, p)| p.last.as_ref().map(|l| (*v, l.N_trapped)))
        .collect();
    let top = swept.iter().max_by(|a, b| a.0.total_cmp(&b.0));
    let usable = b.compensation_swept() && counts.iter().any(|p| p.1 > 0.0) && top.is_some();
    let names = [
        "threshold below 2.8 W",
        "accumulation monotone",
        "accumulation bends over",
        "transit-only shift",
    ];
    if !usable {
        let why = if b.kind == BundleKind::Run {
            "needs a compensation sweep"
        } else {
            "no trapped atoms in the sweep"
        };
        out.extend(names.iter().map(|n| Check::skipped(n, why)));
        return Ok(out);
    }
    let (top_value, top_point) = top.expect("checked");
    out.push(match threshold_fraction(&counts, 2.8) {
        Some(f) if counts.iter().any(|p| p.0 > 2.8) => Check::condition(
            names[0],
            f < THRESHOLD_LIMIT,
            format!("{:.2}% of maximum (limit {:.0}%)", f * 100.0, THRESHOLD_LIMIT * 100.0),
        ),
        _ => Check::skipped(names[0], "sweep lacks points on both sides of 2.8 W"),
    });
    let (_, n_top, shift_top) = b.loading_trace(top_point)?;
    let drop = smoothed_drop(&n_top, SMOOTHING_WINDOW);
    out.push(Check::condition(
        names[1],
        drop <= MONOTONE_TOLERANCE,
        format!("{top_value} W: largest smoothed drop {:.2}% of maximum", drop * 100.0),
    ));
    let long_enough = b.scenario.dynamics.duration_ms >= PLATEAU_MIN_LOADING_MS;
    out.push(match late_growth_ratio(&n_top) {
        Some(r) if long_enough => Check::condition(
            names[2],
            r < 1.0,
            format!("{top_value} W: late/early growth {r:.3} < 1"),
        ),
        _ => Check::skipped(names[2], "loading shorter than 1.5 s"),
    });
    let mut worst: Option<(f64, f64, f64)> = None;
    for (v, p) in &swept {
        if *v <= 2.8 {
            let (_, _, shift) = b.loading_trace(p)?;
            let (tail, peak) = transit_ratio(&shift, &shift_top, TAIL_FRACTION);
            if worst.is_none_or(|w| tail > w.1) {
                worst = Some((*v, tail, peak));
            }
        }
    }
    out.push(match worst {
        Some((v, tail, peak)) => Check::condition(
            names[3],
            tail <= TRANSIT_LIMIT,
            format!(
                "{v} W: tail {:.2}% of plateau (limit {:.1}%), largest sample {:.2}%",
                tail * 100.0,
                TRANSIT_LIMIT * 100.0,
                peak * 100.0
            ),
        ),
        None => Check::skipped(names[3], "no point at or below 2.8 W"),
    });
    Ok(out)
}

fn write_plots(b: &LoadedBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        files.push(p);
        Ok(())
    };

    let spectra = Table::read(&b.dir.join("spectra.csv"))?;
    let mut text = String::from("detuning_MHz,weight,compensation_W\n");
    for r in &spectra.rows {
        text.push_str(&format!("{},{:e},{}\n", r[0], r[1], r[2]));
    }
    put("spectra.csv", text)?;

    let spreads = Table::read(&b.dir.join("spreads.csv"))?;
    let mut text = String::from("compensation_W,spread_MHz\n");
    for r in &spreads.rows {
        text.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    put("spreads.csv", text)?;

    if let Some(param) = &b.parameter {
        let mut text = format!("{param},N_trapped\n");
        for p in &b.points {
            if let (Some(v), Some(l)) = (p.value, &p.last) {
                text.push_str(&format!("{v},{:e}\n", l.N_trapped));
            }
        }
        put("threshold.csv", text)?;
    }

    let mut shift = String::from("t_s,cavity_shift_Hz,series\n");
    let mut tof = String::from("t_ms,sigma_um,axis,series\n");
    for p in &b.points {
        let series = p.value.map_or("run".to_string(), |v| v.to_string());
        let t = b.trace(p)?;
        for (x, y) in t.column("t_s")?.iter().zip(t.column("cavity_shift_Hz")?) {
            shift.push_str(&format!("{x},{y:e},{series}\n"));
        }
        let path = b.dir.join(format!("{}tof_series.csv", p.prefix));
        if path.exists() {
            let s = Table::read(&path)?;
            let times = s.column("t_s")?;
            for axis in ["x", "y", "z"] {
                for (x, y) in times.iter().zip(s.column(&format!("sigma_{axis}_m"))?) {
                    tof.push_str(&format!("{},{},{axis},{series}\n", x * 1e3, y * 1e6));
                }
            }
        }
    }
    put("shift_traces.csv", shift)?;
    put("tof_widths.csv", tof)?;
    Ok(files)
}

/// Verifies `bundle`, writes plot data and `summary.txt` into `out`
/// (default `<bundle>/report`) and returns the checks.
pub fn report(bundle: &Path, out: Option<&Path>) -> Result<Report> {
    let b = LoadedBundle::open(bundle)?;
    let dir = out.map_or_else(|| bundle.join("report"), Path::to_path_buf);
    let mut files = write_plots(&b, &dir)?;
    let mut checks = static_checks(&b);
    checks.extend(lightshift_checks(&b)?);
    checks.extend(dynamic_checks(&b)?);
    let report = Report {
        checks,
        files: Vec::new(),
    };
    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, report.summary())?;
    files.push(summary_path);
    Ok(Report { files, ..report })
}
