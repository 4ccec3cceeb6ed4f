use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use intracavity::analysis::{fit_tof, TofSeries};
use intracavity::app::{self, Scenario, Table};
use intracavity::atomic_data::{AtomicData, Level, LevelId};
use intracavity::lightshift::{
    level_shift, sample_boltzmann, solve_compensation_with, sublevel_shifts, synthesize_spectrum, write_sublevel_csv,
};
use intracavity::readout::{cavity_shift, probe_mode, probe_scan, DispersiveParams, ScanSettings, SpinSummary};
use intracavity::trap_optics::{
    free_spectral_range, linewidth_from_finesse, trap_shape, write_potential_grid, GroundPotential, ToneField,
};
use intracavity::{Error, Result};

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_ACCEPTANCE: u8 = 5;

#[derive(Parser)]
#[command(name = "intracavity", version, about = "Two-tone intracavity dipole trap toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario file; commands that do not need one fall back to the
    /// bundled 36 W / 5.2 W reference.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `scenario.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `dynamics.scale_ratio` (macro-atoms per atom).
    #[arg(long, global = true)]
    scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Light shifts at the trap focus; optional spectrum and sublevel tables.
    Shift {
        /// Compensation power in W (default: from the scenario).
        #[arg(long = "compensation-w")]
        compensation: Option<f64>,
        /// Write a synthesized spectrum CSV here.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        /// Write the F'=3 sublevel table here.
        #[arg(long)]
        sublevels: Option<PathBuf>,
    },
    /// Trap depth, minimum and frequencies; optional potential grid.
    Trap {
        #[arg(long = "compensation-w")]
        compensation: Option<f64>,
        /// Write an x,y,z,U grid CSV here.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Points per axis of the grid.
        #[arg(long, default_value_t = 21)]
        grid_points: usize,
    },
    /// Run a scenario end to end and write an output bundle.
    Simulate,
    /// Run a scenario once per value of one parameter.
    Sweep {
        /// Dotted key, e.g. trap_optics.compensation.power_W (default: the
        /// scenario's [sweep] section).
        #[arg(long)]
        parameter: Option<String>,
        /// Comma-separated values in the key's unit.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Option<Vec<f64>>,
    },
    /// Fit a time-of-flight series (t_s,sigma_x_m,sigma_y_m,sigma_z_m).
    Tof {
        input: PathBuf,
        /// Write the fitted parameters as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cavity parameters, dispersive shift and a synthetic probe scan.
    Cavity {
        /// Atoms in the mode.
        #[arg(long, default_value_t = 4e6)]
        atoms: f64,
        /// Fraction of them in F=1.
        #[arg(long, default_value_t = 1.0)]
        f1_fraction: f64,
        /// Write a probe scan CSV here.
        #[arg(long)]
        scan: Option<PathBuf>,
    },
    /// Verify a bundle, write plot data and a pass/fail summary.
    Report { bundle: PathBuf },
}

fn scenario(global: &Global, required: bool) -> Result<Scenario> {
    let mut s = match &global.config {
        Some(p) => Scenario::load(p)?,
        None if required => return Err(Error::InvalidInput("--config is required".into())),
        None => Scenario::reference(),
    };
    if let Some(seed) = global.seed {
        s.scenario.seed = seed;
    }
    if let Some(scale) = global.scale {
        s.dynamics.scale_ratio = scale;
    }
    s.validate()?;
    Ok(s)
}

fn out_dir(global: &Global, s: &Scenario) -> PathBuf {
    global
        .out_dir
        .clone()
        .or_else(|| s.scenario.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&s.scenario.name))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn tones(s: &Scenario, compensation: Option<f64>) -> Vec<ToneField> {
    let mut t = s.tones();
    if let Some(p) = compensation {
        t[1] = t[1].clone().with_power(p);
    }
    t
}

fn shift(s: &Scenario, compensation: Option<f64>, spectrum: Option<&Path>, sublevels: Option<&Path>) -> Result<()> {
    let tones = tones(s, compensation);
    let origin = Vector3::zeros();
    let c = &AtomicData::rb87().constants;
    let gamma_mhz = c.gamma / (2.0 * std::f64::consts::PI) * 1e-6;
    let ground = level_shift(LevelId::new(Level::S5Half), &tones, &origin)?.scalar_mhz();
    let excited = level_shift(LevelId::new(Level::P5ThreeHalves), &tones, &origin)?.scalar_mhz();
    let diff = excited - ground;
    println!("trap {:.2} W, compensation {:.3} W", tones[0].power, tones[1].power);
    println!("5S1/2 shift            {ground:>10.3} MHz");
    println!("5P3/2 shift            {excited:>10.3} MHz");
    println!("differential shift     {diff:>10.3} MHz");
    println!(
        "effective detuning     {:>10.3} Γ",
        s.dynamics.cooling.detuning_gamma - diff / gamma_mhz
    );
    let f3 = sublevel_shifts(3, &tones, &origin)?;
    let levels: Vec<String> = f3
        .sublevels_mhz()
        .unwrap_or_default()
        .iter()
        .map(|v| format!("{v:.2}"))
        .collect();
    println!("F'=3 sublevels (MHz)   {}", levels.join(" "));
    println!("F'=3 spread            {:>10.3} MHz", f3.spread_mhz());
    let nulled = solve_compensation_with(&tones[0], &tones[1])?;
    println!("nulling power          {:>10.3} W", nulled.power);
    println!(
        "nulling intensity ratio 1/{:.3}",
        tones[0].peak_intensity() / nulled.peak_intensity()
    );

    if let Some(path) = spectrum {
        let l = &s.lightshift;
        let mut rng = ChaCha8Rng::seed_from_u64(s.scenario.seed);
        let sample = sample_boltzmann(
            &tones,
            l.temperature_uK * 1e-6,
            l.sample_count as usize,
            s.sample_region(),
            &mut rng,
        )?;
        let spec = synthesize_spectrum(&tones, &sample, l.probe_fwhm_MHz * 1e6, s.spectrum_options())?;
        spec.write_csv(create(path)?)?;
        println!(
            "spectrum mean          {:>10.3} MHz -> {}",
            spec.mean_hz() * 1e-6,
            path.display()
        );
    }
    if let Some(path) = sublevels {
        write_sublevel_csv(3, &tones, &origin, create(path)?)?;
        println!("sublevel table -> {}", path.display());
    }
    Ok(())
}

fn trap(s: &Scenario, compensation: Option<f64>, grid: Option<&Path>, points: usize) -> Result<()> {
    let tones = tones(s, compensation);
    let gravity = s.gravity()?;
    let optical = trap_shape(&tones, None)?;
    let full = trap_shape(&tones, gravity)?;
    let [fx, fy, fz] = full.frequencies;
    println!("optical depth          {:>10.3} uK", optical.optical_depth_uk());
    println!("depth with gravity     {:>10.3} uK", full.depth_uk());
    println!("frequencies x/y/z      {fx:.3} / {fy:.3} / {fz:.3} Hz");
    println!(
        "minimum                ({:.3e}, {:.3e}, {:.3e}) m",
        full.minimum.x, full.minimum.y, full.minimum.z
    );
    if let Some(p) = full.saddle {
        println!("escape saddle          ({:.3e}, {:.3e}, {:.3e}) m", p.x, p.y, p.z);
    }
    if let Some(path) = grid {
        let n = points.max(2);
        let axis = |half: f64| -> Vec<f64> { (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect() };
        let w = tones[0].waist;
        let zr = tones[0].rayleigh_range();
        let potential = GroundPotential::new(&tones)?;
        write_potential_grid(
            &potential,
            gravity,
            &axis(zr),
            &axis(2.0 * w),
            &axis(2.0 * w),
            create(path)?,
        )?;
        println!("potential grid ({n}³) -> {}", path.display());
    }
    Ok(())
}

fn simulate(s: &Scenario, dir: &Path) -> Result<()> {
    let manifest = app::run(s, dir)?;
    let results: app::RunResults = serde_json::from_str(&std::fs::read_to_string(dir.join("results.json"))?)?;
    if let Some(l) = &results.dynamics.last {
        println!(
            "t = {:.3} s  N_trapped = {:.4e}  T = {:.1}/{:.1}/{:.1} uK  f_F1 = {:.3}  shift = {:.4e} Hz",
            l.t_s, l.N_trapped, l.T_uK[0], l.T_uK[1], l.T_uK[2], l.f_F1, l.cavity_shift_Hz
        );
    } else {
        println!("zero-length run: empty trace");
    }
    for n in &results.dynamics.notes {
        println!("note: {n}");
    }
    println!("{} files -> {}", manifest.files.len(), dir.display());
    Ok(())
}

fn sweep(s: &Scenario, parameter: Option<String>, values: Option<Vec<f64>>, dir: &Path) -> Result<()> {
    let section = s.sweep.clone();
    let parameter = parameter
        .or_else(|| section.as_ref().map(|w| w.parameter.clone()))
        .ok_or_else(|| Error::InvalidInput("no --parameter and no [sweep] section".into()))?;
    let values = values
        .or_else(|| section.map(|w| w.values))
        .ok_or_else(|| Error::InvalidInput("no --values and no [sweep] section".into()))?;
    let manifest = app::sweep(s, &parameter, &values, dir)?;
    print!("{}", std::fs::read_to_string(dir.join("sweep.csv"))?);
    println!("{} files -> {}", manifest.files.len(), dir.display());
    Ok(())
}

fn tof(input: &Path, out: Option<&Path>) -> Result<()> {
    let table = Table::read(input)?;
    let times = table.column("t_s")?;
    let axes = ["x", "y", "z"].map(|a| table.column(&format!("sigma_{a}_m")));
    let [x, y, z] = axes;
    let (x, y, z) = (x?, y?, z?);
    let errors = ["x", "y", "z"].map(|a| table.column(&format!("sigma_{a}_err_m")).ok());
    let width_errors = match errors {
        [Some(ex), Some(ey), Some(ez)] => Some((0..times.len()).map(|i| [ex[i], ey[i], ez[i]]).collect()),
        _ => None,
    };
    let series = TofSeries {
        widths: (0..times.len()).map(|i| [x[i], y[i], z[i]]).collect(),
        times,
        width_errors,
    };
    series.validate()?;
    let fits = fit_tof(&series)?;
    let mut csv = String::from("axis,parameter,value,uncertainty\n");
    for (axis, fit) in ["x", "y", "z"].iter().zip(&fits) {
        let t = fit.get("T_K").unwrap_or(f64::NAN);
        let dt = fit.uncertainty("T_K").unwrap_or(f64::NAN);
        println!("axis {axis}: T = {:.3} ± {:.3} uK", t * 1e6, dt * 1e6);
        print!("{fit}");
        for ((n, v), u) in fit.names.iter().zip(&fit.values).zip(&fit.uncertainties) {
            csv.push_str(&format!("{axis},{n},{v:e},{u:e}\n"));
        }
    }
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, csv)?;
    }
    Ok(())
}

fn cavity(s: &Scenario, atoms: f64, f1: f64, scan: Option<&Path>) -> Result<()> {
    if !(0.0..=1.0).contains(&f1) || atoms.is_nan() || atoms < 0.0 {
        return Err(Error::InvalidInput("need atoms ≥ 0 and 0 ≤ f1-fraction ≤ 1".into()));
    }
    let cav = s.cavity();
    let khz = 2.0 * std::f64::consts::PI * 1e3;
    println!("FSR                    {:>10.4} GHz", free_spectral_range(&cav) * 1e-9);
    for m in &cav.modes {
        let measured = m
            .measured_linewidth
            .map_or("-".to_string(), |k| format!("{:.2}", k / khz));
        println!(
            "mode {:.0} nm {:?}: finesse {:.0}, κ/2π measured {measured} kHz, from finesse {:.2} kHz",
            m.wavelength * 1e9,
            m.polarization,
            m.finesse,
            linewidth_from_finesse(&cav, m) / khz
        );
    }
    let params = DispersiveParams::for_cavity(&cav)?;
    let hz = 2.0 * std::f64::consts::PI;
    println!("Ω/2π                   {:>10.4} Hz", params.shift_rate / hz);
    println!("C                      {:>10.5}", params.cooperativity());
    println!("NC                     {:>10.4e}", atoms * params.cooperativity());
    let summary = SpinSummary {
        n_f1: atoms * f1,
        n_f2: atoms * (1.0 - f1),
    };
    let shift = cavity_shift(&summary, &params);
    println!("shift                  {shift:>10.4e} Hz");
    if let Some(path) = scan {
        let mode = probe_mode(&cav)?;
        let r = &s.readout;
        let settings = ScanSettings::around(
            shift,
            r.scan_half_span_kHz * 1e3,
            r.scan_points_count as usize,
            r.noise_ratio,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(s.scenario.seed);
        let result = probe_scan(shift, cav.linewidth(mode), &settings, &mut rng)?;
        result.write_csv(create(path)?)?;
        println!(
            "fitted dip             {:>10.4e} Hz -> {}",
            result.measured_shift_hz,
            path.display()
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    match cli.command {
        Command::Shift {
            compensation,
            spectrum,
            sublevels,
        } => shift(
            &scenario(g, false)?,
            compensation,
            spectrum.as_deref(),
            sublevels.as_deref(),
        )?,
        Command::Trap {
            compensation,
            grid,
            grid_points,
        } => trap(&scenario(g, false)?, compensation, grid.as_deref(), grid_points)?,
        Command::Simulate => {
            let s = scenario(g, true)?;
            simulate(&s, &out_dir(g, &s))?;
        }
        Command::Sweep { parameter, values } => {
            let s = scenario(g, true)?;
            sweep(&s, parameter, values, &out_dir(g, &s))?;
        }
        Command::Tof { input, out } => tof(&input, out.as_deref())?,
        Command::Cavity {
            atoms,
            f1_fraction,
            scan,
        } => cavity(&scenario(g, false)?, atoms, f1_fraction, scan.as_deref())?,
        Command::Report { bundle } => {
            let report = app::report(&bundle, g.out_dir.as_deref())?;
            print!("{}", report.summary());
            if report.failed() > 0 {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Parse { .. } => EXIT_PARSE,
                Error::Validation(_) | Error::UnknownParameter(_) => EXIT_VALIDATION,
                _ => EXIT_RUNTIME,
            })
        }
    }
}
