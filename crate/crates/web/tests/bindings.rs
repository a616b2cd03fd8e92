use nhadiabatic_web::{adiabatic_sweep, preset, spectrum_scan, state_trajectory};
use serde_json::Value;

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn broken_dimer() -> String {
    let mut spec = parse(&preset("pt_dimer"));
    spec["gamma"]["value"] = Value::from(1.5);
    spec.to_string()
}

#[test]
fn pt_dimer_spectrum_is_real_and_gapped() {
    let scan = parse(&spectrum_scan(&preset("pt_dimer"), 64));
    assert_eq!(scan["hypotheses_met"], true);
    let re = scan["re"].as_array().unwrap();
    assert_eq!(re.len(), 2);
    let top = re[1][0].as_f64().unwrap();
    assert!((top - 0.75f64.sqrt()).abs() < 1e-12);
}

#[test]
fn broken_dimer_is_shown_as_diagnostic() {
    let scan = parse(&spectrum_scan(&broken_dimer(), 64));
    assert_eq!(scan["hypotheses_met"], false);
    assert_eq!(scan["diagnostic"], true);
    assert!(scan["max_imag"].as_f64().unwrap() > 1.0);
}

#[test]
fn sweep_decays_like_one_over_t() {
    let out = parse(&adiabatic_sweep(&preset("hermitian2"), "[50, 100, 200]", 0));
    let p = out["fitted_exponent"].as_f64().unwrap();
    assert!((p + 1.0).abs() < 0.15, "{p}");
}

#[test]
fn trajectory_tracks_prediction() {
    let out = parse(&state_trajectory(&preset("pt_dimer"), 200.0, 0));
    let dev = out["deviation"].as_array().unwrap();
    assert_eq!(dev.len(), 257);
    assert_eq!(dev[0].as_f64().unwrap(), 0.0);
    assert!(dev.iter().all(|d| d.as_f64().unwrap() < 0.05));
}

#[test]
fn errors_are_reported_as_json() {
    assert!(parse(&spectrum_scan("{}", 64))["error"].is_string());
    assert!(parse(&adiabatic_sweep(&preset("pt_dimer"), "[-1]", 0))["error"].is_string());
    assert!(parse(&state_trajectory(&preset("pt_dimer"), 10.0, 5))["error"].is_string());
    assert!(parse(&preset("nope"))["error"].is_string());
}
