use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use intracavity::app::{run, sha256_hex, Manifest, Scenario, MANIFEST};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intracavity"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn quick() -> Scenario {
    let mut s = Scenario::bundled("fig3_sweep").unwrap();
    s.sweep = None;
    s.scenario.name = "quick".into();
    s.scenario.out_dir = None;
    s.dynamics.scale_ratio = 2e-5;
    s.dynamics.duration_ms = 30.0;
    s.dynamics.hold_ms = 0.0;
    s.lightshift.sample_count = 300.0;
    s
}

fn write_config(dir: &Path, s: &Scenario) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, s.to_toml().unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn scalar_commands_use_the_reference_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["shift"][..], &["trap"], &["cavity"]] {
        let out = cli(args, dir.path());
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = cli(&["trap"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("optical depth"));
}

#[test]
fn malformed_config_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[scenario]\nname = \"x\"\nseed = \n").unwrap();
    let out = cli(&["simulate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}

#[test]
fn invalid_values_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = quick();
    s.trap_optics.trap.waist_um = -1.0;
    s.dynamics.dt_us = 0.0;
    let config = write_config(dir.path(), &s);
    let out = cli(&["simulate", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(3));

    let config = write_config(dir.path(), &quick());
    let out = cli(
        &[
            "sweep",
            "--config",
            &config,
            "--parameter",
            "trap_optics.trap.colour_nm",
            "--values",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runtime_errors_exit_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["report", "missing_bundle"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let out = cli(&["simulate"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &quick());
    let out = cli(&["simulate", "--config", &config, "--out-dir", "bundle"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trace.csv", "results.json", "spectra.csv", MANIFEST] {
        assert!(dir.path().join("bundle").join(name).exists(), "{name}");
    }
    let out = cli(&["report", "bundle"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("bundle/report/summary.txt").exists());
}

#[test]
fn failing_checks_exit_with_code_five() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    run(&quick(), &bundle).unwrap();

    // swap the zero- and high-compensation widths, then re-seal the bundle
    let path = bundle.join("results.json");
    let mut results: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let spectra = results["spectra"].as_array_mut().unwrap();
    let first = spectra[0]["fwhm_MHz"].clone();
    spectra[0]["fwhm_MHz"] = spectra[2]["fwhm_MHz"].clone();
    spectra[2]["fwhm_MHz"] = first;
    let text = serde_json::to_string_pretty(&results).unwrap();
    fs::write(&path, &text).unwrap();
    let mpath = bundle.join(MANIFEST);
    let mut manifest: Manifest = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
    for f in &mut manifest.files {
        if f.name == "results.json" {
            f.sha256 = sha256_hex(text.as_bytes());
        }
    }
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();

    let out = cli(&["report", "bundle"], dir.path());
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn tof_command_fits_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let (kb, m) = (1.380649e-23, 1.443160648e-25);
    let v2 = kb * 20e-6 / m;
    let mut text = String::from("t_s,sigma_x_m,sigma_y_m,sigma_z_m\n");
    for i in 1..=8 {
        let t = i as f64 * 1e-3;
        let s = (1e-8 + v2 * t * t).sqrt();
        text.push_str(&format!("{t},{s},{s},{s}\n"));
    }
    fs::write(dir.path().join("tof.csv"), text).unwrap();
    let out = cli(&["tof", "tof.csv", "--out", "fit.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("T = 20.000"));
    assert!(fs::read_to_string(dir.path().join("fit.csv"))
        .unwrap()
        .starts_with("axis,parameter"));
}
