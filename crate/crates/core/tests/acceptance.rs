//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use intracavity::analysis::{fit_tof, tof_expand, PhaseSpacePoint};
use intracavity::app::checks::{smoothed_drop, threshold_fraction, transit_ratio};
use intracavity::app::{simulate, sweep, Knot, LoadedBundle, Scenario, StaticScalars};
use intracavity::atomic_data::{AtomicData, GroundManifold};
use intracavity::lightshift::{compensation_template, sublevel_shifts};
use intracavity::readout::{cavity_shift, probe_mode, probe_scan, DispersiveParams, ScanSettings, SpinSummary};
use intracavity::trap_optics::{CavityParams, ToneField};
use intracavity::Result;

// tolerances
const DEPTH_REL: f64 = 0.03;
const INTENSITY_RATIO_REL: f64 = 0.01;
const POLARIZABILITY_RATIO_REL: f64 = 0.01;
const TRANSVERSE_FREQ_REL: f64 = 0.03;
const AXIAL_FREQ_REL: f64 = 0.05;
const FOCAL_SHIFT_REL: f64 = 0.03;
const DETUNING_ABS_GAMMA: f64 = 0.5;
const READOUT_REL: f64 = 0.02;
const FSR_REL: f64 = 0.002;
const KAPPA_REL: f64 = 0.02;
const MODULATION_ABS_POINTS: f64 = 1.0;
const THRESHOLD_LIMIT: f64 = 0.02;
const SMOOTHING_WINDOW: usize = 9;
const MONOTONE_LIMIT: f64 = 0.02;
const SPREAD_REL: f64 = 0.30;
const CENTER_ABS_MHZ: f64 = 3.0;
const TOF_REL: f64 = 0.05;
const SINGLE_ATOM_REL: f64 = 0.02;
const TRANSIT_LIMIT: f64 = 0.015;
const TAIL_FRACTION: f64 = 0.2;

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn record(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        println!("{} {id:>2} {name:<38} {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn scalars(out: &mut Outcome, s: &StaticScalars) {
    out.record(
        1,
        "trap depth",
        within(s.trap_depth_uK, 87.0, DEPTH_REL),
        format!("{:.2} uK vs 87 uK", s.trap_depth_uK),
    );
    out.record(
        2,
        "compensation intensity ratio",
        within(s.compensation_intensity_ratio, 1.0 / 12.1, INTENSITY_RATIO_REL),
        format!("1/{:.3} vs 1/12.1", 1.0 / s.compensation_intensity_ratio),
    );
    out.record(
        3,
        "excited/ground polarizability ratio",
        within(s.polarizability_ratio, 47.9, POLARIZABILITY_RATIO_REL),
        format!("{:.3} vs 47.9", s.polarizability_ratio),
    );
    let [fx, fy, fz] = s.trap_frequencies_Hz;
    let transverse = 0.5 * (fy + fz);
    out.record(
        4,
        "trap frequencies",
        within(transverse, 185.0, TRANSVERSE_FREQ_REL) && within(fx, 0.41, AXIAL_FREQ_REL),
        format!("{transverse:.2} Hz / {fx:.4} Hz vs 185 Hz / 0.41 Hz"),
    );
    out.record(
        5,
        "focal differential shift",
        within(s.focal_differential_shift_MHz, 69.0, FOCAL_SHIFT_REL)
            && (s.effective_detuning_gamma + 14.0).abs() <= DETUNING_ABS_GAMMA,
        format!(
            "{:+.2} MHz vs +69 MHz, detuning {:.3} gamma vs -14 gamma",
            s.focal_differential_shift_MHz, s.effective_detuning_gamma
        ),
    );
    out.record(
        6,
        "shift rate and cooperativity",
        within(s.shift_rate_Hz, 4.2, READOUT_REL)
            && within(s.cooperativity, 0.056, READOUT_REL)
            && within(s.collective_cooperativity_4e6, 2.2e5, READOUT_REL),
        format!(
            "{:.4} Hz, C = {:.5}, NC = {:.4e}",
            s.shift_rate_Hz, s.cooperativity, s.collective_cooperativity_4e6
        ),
    );
    let kappa = s.kappa_780p_finesse_kHz.unwrap_or(f64::NAN);
    out.record(
        7,
        "free spectral range and linewidth",
        within(s.fsr_GHz, 3.05, FSR_REL) && within(kappa, 1390.0, KAPPA_REL),
        format!("{:.5} GHz, {kappa:.2} kHz vs 3.05 GHz, 1390 kHz", s.fsr_GHz),
    );
    let points = s.backscatter_modulation_5e3 * 100.0;
    out.record(
        8,
        "backscatter modulation",
        (points - 14.0).abs() <= MODULATION_ABS_POINTS,
        format!("{points:.2}% vs 14%"),
    );
}

fn accumulation(out: &mut Outcome, short: &LoadedBundle, long: &LoadedBundle) -> Result<()> {
    let counts: Vec<(f64, f64)> = short
        .points
        .iter()
        .filter_map(|p| Some((p.value?, p.last.as_ref()?.N_trapped)))
        .collect();
    let fraction = threshold_fraction(&counts, 2.8).unwrap_or(f64::NAN);
    let top = long
        .points
        .iter()
        .max_by(|a, b| a.value.unwrap_or(0.0).total_cmp(&b.value.unwrap_or(0.0)))
        .expect("bundled sweep has points");
    let (_, n, _) = long.loading_trace(top)?;
    let drop = smoothed_drop(&n, SMOOTHING_WINDOW);
    let half = n.len() / 2;
    let late = n[n.len() - 1] - n[half];
    let early = n[half] - n[0];
    let listing: Vec<String> = counts.iter().map(|(v, n)| format!("{v} W: {n:.3e}")).collect();
    out.record(
        9,
        "loading threshold and accumulation",
        fraction < THRESHOLD_LIMIT && drop <= MONOTONE_LIMIT && late < early && n[n.len() - 1] > 0.0,
        format!(
            "[{}], below 2.8 W {:.2}% of max; 5.2 W trace drop {:.2}%, late/early growth {:.3}",
            listing.join(", "),
            fraction * 100.0,
            drop * 100.0,
            late / early
        ),
    );
    Ok(())
}

fn steady_state(out: &mut Outcome, long: &LoadedBundle) {
    let depth = long.scalars.trap_depth_with_gravity_uK;
    let best = long
        .points
        .iter()
        .filter_map(|p| p.loaded.as_ref())
        .max_by(|a, b| a.N_trapped.total_cmp(&b.N_trapped))
        .filter(|l| l.trapped_macro_count >= 2);
    match best {
        Some(l) => out.record(
            10,
            "plateau temperature and F=1 fraction",
            l.T_uK.iter().all(|&t| t < depth) && l.f_F1 > 0.5,
            format!(
                "T = {:.1}/{:.1}/{:.1} uK below {depth:.1} uK, F=1 fraction {:.3}",
                l.T_uK[0], l.T_uK[1], l.T_uK[2], l.f_F1
            ),
        ),
        None => out.record(
            10,
            "plateau temperature and F=1 fraction",
            false,
            "no trapped atoms".into(),
        ),
    }
}

fn spreads(out: &mut Outcome, trap: &ToneField) -> Result<()> {
    let mut values = Vec::new();
    for p in [0.0, 2.8, 5.2] {
        let tones = [trap.clone(), compensation_template().with_power(p)];
        values.push(sublevel_shifts(3, &tones, &Vector3::zeros())?.spread_mhz());
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let close = values
        .iter()
        .zip([25.0, 40.0, 55.0])
        .all(|(&v, t)| within(v, t, SPREAD_REL));
    out.record(
        11,
        "excited sublevel spread trend",
        increasing && close,
        format!(
            "{:.2} / {:.2} / {:.2} MHz vs 25 / 40 / 55 MHz",
            values[0], values[1], values[2]
        ),
    );
    Ok(())
}

fn spectra(out: &mut Outcome, short: &LoadedBundle) {
    let at = |p: f64| short.spectra.iter().find(|s| (s.compensation_W - p).abs() < 1e-9);
    match (at(0.0), at(2.8), at(5.2)) {
        (Some(zero), Some(mid), Some(high)) => out.record(
            12,
            "spectrum width ordering",
            mid.fwhm_MHz < zero.fwhm_MHz && zero.fwhm_MHz < high.fwhm_MHz && mid.center_MHz.abs() <= CENTER_ABS_MHZ,
            format!(
                "FWHM {:.1} < {:.1} < {:.1} MHz, 2.8 W center {:+.2} MHz",
                mid.fwhm_MHz, zero.fwhm_MHz, high.fwhm_MHz, mid.center_MHz
            ),
        ),
        _ => out.record(12, "spectrum width ordering", false, "missing spectra".into()),
    }
}

fn tof(out: &mut Outcome) -> Result<()> {
    let c = &AtomicData::rb87().constants;
    let times: Vec<f64> = (1..=8).map(|i| i as f64 * 1e-3).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, t_uk) in [3.0, 13.0, 40.0, 300.0].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let v = Normal::new(0.0, (c.boltzmann * t_uk * 1e-6 / c.mass).sqrt()).expect("positive width");
        let x = Normal::new(0.0, 100e-6).expect("positive width");
        let atoms: Vec<PhaseSpacePoint> = (0..20_000)
            .map(|_| PhaseSpacePoint {
                position: Vector3::from_fn(|_, _| x.sample(&mut rng)),
                velocity: Vector3::from_fn(|_, _| v.sample(&mut rng)),
            })
            .collect();
        let fits = fit_tof(&tof_expand(&atoms, &times, None, 0.0)?)?;
        let fitted: Vec<f64> = fits.iter().map(|f| f.get("T_K").unwrap_or(f64::NAN) * 1e6).collect();
        ok &= fitted.iter().all(|&t| within(t, t_uk, TOF_REL));
        let worst = fitted.iter().map(|t| (t / t_uk - 1.0).abs()).fold(0.0, f64::max);
        parts.push(format!("{t_uk} uK: worst {:.2}%", worst * 100.0));
    }
    out.record(13, "time-of-flight round trip", ok, parts.join(", "));
    Ok(())
}

fn readout(out: &mut Outcome, long: &LoadedBundle) -> Result<()> {
    let cavity = CavityParams::ring_cavity();
    let params = DispersiveParams::for_cavity(&cavity)?;
    let mode = probe_mode(&cavity)?.clone();
    let single = |m| cavity_shift(&SpinSummary::from_atoms([(Vector3::zeros(), m)], &mode, 1.0), &params);
    let (f1, f2) = (single(GroundManifold::F1), single(GroundManifold::F2));
    let signs = within(f2, 2.1, SINGLE_ATOM_REL) && within(f1, -2.1, SINGLE_ATOM_REL);

    let kappa = params.linewidth;
    let settings = ScanSettings::around(0.0, 2e6, 401, 0.0);
    let step = 2.0 * 2e6 / 400.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_scan: f64 = 0.0;
    for shift in [-1.234e6, -3.1e5, 0.0, 4.2e3, 7.77e5] {
        let scan = probe_scan(shift, kappa, &settings, &mut rng)?;
        worst_scan = worst_scan.max((scan.measured_shift_hz - shift).abs());
    }
    let exact = worst_scan <= 0.5 * step;

    let by_value = |v: f64| {
        long.points
            .iter()
            .find(|p| p.value.is_some_and(|x| (x - v).abs() < 1e-9))
    };
    let mut transit = (f64::NAN, f64::NAN);
    if let Some(top) = by_value(5.2) {
        let (_, _, plateau) = long.loading_trace(top)?;
        for v in [0.0, 2.8] {
            if let Some(p) = by_value(v) {
                let (_, _, shift) = long.loading_trace(p)?;
                let r = transit_ratio(&shift, &plateau, TAIL_FRACTION);
                if transit.0.is_nan() || r.0 > transit.0 {
                    transit = r;
                }
            }
        }
    }
    out.record(
        14,
        "dispersive readout",
        signs && exact && transit.0 <= TRANSIT_LIMIT,
        format!(
            "F=2 {f2:+.3} Hz, F=1 {f1:+.3} Hz; noiseless scan error {worst_scan:.3e} Hz (step {step} Hz); \
             transit {:.2}% of plateau (largest sample {:.2}%)",
            transit.0 * 100.0,
            transit.1 * 100.0
        ),
    );
    Ok(())
}

fn determinism(out: &mut Outcome, scenario: &Scenario, first: &Path, second: &Path) -> Result<()> {
    let sweep_spec = scenario.sweep.as_ref().expect("bundled sweep");
    sweep(scenario, &sweep_spec.parameter, &sweep_spec.values, second)?;
    let mut names: Vec<String> = std::fs::read_dir(first)?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(first.join(n)).ok() != std::fs::read(second.join(n)).ok())
        .collect();
    out.record(
        15,
        "sweep determinism",
        !names.is_empty() && differing.is_empty(),
        format!("{} CSV files compared, {} differ", names.len(), differing.len()),
    );
    Ok(())
}

fn ramp_comparison(short: &LoadedBundle) -> Result<()> {
    let mut s = short.scenario.clone();
    s.sweep = None;
    s.dynamics.hold_ms = 0.0;
    s.trap_optics.compensation.power_W = None;
    s.trap_optics.compensation.schedule = Some(vec![
        Knot {
            t_ms: 0.0,
            power_W: 2.8,
        },
        Knot {
            t_ms: 500.0,
            power_W: 2.8,
        },
        Knot {
            t_ms: 550.0,
            power_W: 5.2,
        },
    ]);
    let ramp = simulate(&s)?.results.loaded.map_or(0.0, |l| l.N_trapped);
    let fixed = short
        .points
        .iter()
        .find(|p| p.value == Some(5.2))
        .and_then(|p| p.loaded.as_ref())
        .map_or(0.0, |l| l.N_trapped);
    println!("INFO    ramp 2.8 W then 5.2 W loads {ramp:.3e} at 550 ms; fixed 5.2 W loads {fixed:.3e}");
    Ok(())
}

fn run() -> Result<usize> {
    let dir = tempfile::tempdir()?;
    let mut out = Outcome { failed: 0 };

    let reference = Scenario::reference();
    scalars(&mut out, &StaticScalars::compute(&reference)?);

    let short = Scenario::bundled("fig3_sweep")?;
    let long = Scenario::bundled("fig5_traces")?;
    let (short_dir, short_again, long_dir) = (
        dir.path().join("short"),
        dir.path().join("short_again"),
        dir.path().join("long"),
    );
    for (s, d) in [(&short, &short_dir), (&long, &long_dir)] {
        let sw = s.sweep.as_ref().expect("bundled sweep");
        sweep(s, &sw.parameter, &sw.values, d)?;
    }
    let short_bundle = LoadedBundle::open(&short_dir)?;
    let long_bundle = LoadedBundle::open(&long_dir)?;

    accumulation(&mut out, &short_bundle, &long_bundle)?;
    steady_state(&mut out, &long_bundle);
    spreads(&mut out, &Scenario::tone(&reference.trap_optics.trap))?;
    spectra(&mut out, &short_bundle);
    tof(&mut out)?;
    readout(&mut out, &long_bundle)?;
    determinism(&mut out, &short, &short_dir, &short_again)?;
    ramp_comparison(&short_bundle)?;
    Ok(out.failed)
}

fn main() -> ExitCode {
    match run() {
        Ok(0) => {
            println!("acceptance: all criteria pass");
            ExitCode::SUCCESS
        }
        Ok(n) => {
            println!("acceptance: {n} criteria fail");
            ExitCode::FAILURE
        }
        Err(e) => {
            println!("acceptance: error: {e}");
            ExitCode::FAILURE
        }
    }
}
