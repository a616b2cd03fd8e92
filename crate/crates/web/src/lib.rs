//! WebAssembly bindings for the browser demo. Every export takes and returns
//! JSON strings; failures come back as `{"error": "..."}`.

use nhadiabatic::adiabatic::{
    error_sample, fit_loglog, phase_record, predicted_state, prepared_eigenpath, StudyOptions,
};
use nhadiabatic::hampath::{validate_spectrum, HamiltonianPath, PathSpec, SpectrumThresholds};
use nhadiabatic::numkernel::{eig, vec_norm, vec_sub};
use nhadiabatic::propagator::{propagate_with, PropagatorOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_SCAN_POINTS: usize = 2000;
const MAX_SWEEP_POINTS: usize = 8;
const MAX_T: f64 = 2000.0;
const DEMO_GRID: usize = 256;
const DEMO_TOL: f64 = 1e-6;

#[derive(Serialize)]
pub struct SpectrumScan {
    pub s: Vec<f64>,
    /// `re[i][k]`: real part of eigenvalue `i` at `s[k]`, sorted by real part.
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    pub hypotheses_met: bool,
    pub min_gap: f64,
    pub max_imag: f64,
    pub diagnostic: bool,
}

#[derive(Serialize)]
pub struct Sweep {
    pub t: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub sup_u: Vec<f64>,
    pub sup_uinv: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    pub hypotheses_met: bool,
    pub diagnostic: bool,
}

#[derive(Serialize)]
pub struct Trajectory {
    pub s: Vec<f64>,
    /// `populations[i][k] = |ψ_i(s_k)|²` for `ψ = U_T(s)·v_j(0)`.
    pub populations: Vec<Vec<f64>>,
    pub norm: Vec<f64>,
    /// `‖ψ(s_k) − predicted_k‖`.
    pub deviation: Vec<f64>,
    pub hypotheses_met: bool,
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(value) => serde_json::to_string(&value).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(message) => error_json(&message),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

/// Parameters outside the real-spectrum regime still build, flagged
/// diagnostic, so the demo can show what breaks.
fn build(spec_json: &str) -> Result<(HamiltonianPath, bool), String> {
    let spec: PathSpec = serde_json::from_str(spec_json).map_err(|e| format!("path spec: {e}"))?;
    match spec.build() {
        Ok(path) => Ok((path, false)),
        Err(e) => spec
            .diagnostic_variant()
            .build()
            .map(|p| (p.with_diagnostic(true), true))
            .map_err(|_| e.to_string()),
    }
}

fn check_t(t: f64) -> Result<(), String> {
    if t > 0.0 && t <= MAX_T {
        Ok(())
    } else {
        Err(format!("T must lie in (0, {MAX_T}], got {t}"))
    }
}

fn demo_options() -> StudyOptions {
    StudyOptions {
        eig_grid: DEMO_GRID,
        ..StudyOptions::default()
    }
}

pub fn spectrum_scan_native(spec_json: &str, points: usize) -> Result<SpectrumScan, String> {
    if !(32..=MAX_SCAN_POINTS).contains(&points) {
        return Err(format!("points must lie in [32, {MAX_SCAN_POINTS}]"));
    }
    let (path, diagnostic) = build(spec_json)?;
    let cert = validate_spectrum(&path, points, SpectrumThresholds::default())
        .map_err(|e| e.to_string())?;
    let n = path.dim();
    let mut scan = SpectrumScan {
        s: Vec::with_capacity(points + 1),
        re: vec![Vec::with_capacity(points + 1); n],
        im: vec![Vec::with_capacity(points + 1); n],
        hypotheses_met: cert.hypotheses_met,
        min_gap: cert.min_gap,
        max_imag: cert.max_imag,
        diagnostic,
    };
    for k in 0..=points {
        let s = k as f64 / points as f64;
        let Ok(d) = eig(&path.sample(s)) else { continue };
        scan.s.push(s);
        for (i, l) in d.eigenvalues.iter().enumerate() {
            scan.re[i].push(l.re);
            scan.im[i].push(l.im);
        }
    }
    Ok(scan)
}

pub fn adiabatic_sweep_native(spec_json: &str, t_list: &[f64], label: usize) -> Result<Sweep, String> {
    if t_list.is_empty() || t_list.len() > MAX_SWEEP_POINTS {
        return Err(format!("give between 1 and {MAX_SWEEP_POINTS} time scales"));
    }
    t_list.iter().try_for_each(|&t| check_t(t))?;
    let (path, diagnostic) = build(spec_json)?;
    let options = demo_options();
    let cert = validate_spectrum(&path, options.validation_grid, options.thresholds)
        .map_err(|e| e.to_string())?;
    let ep = prepared_eigenpath(&path, &options).map_err(|e| e.to_string())?;
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let phases = phase_record(&ep, label, t_max).map_err(|e| e.to_string())?;
    let mut sweep = Sweep {
        t: Vec::new(),
        epsilon: Vec::new(),
        sup_u: Vec::new(),
        sup_uinv: Vec::new(),
        fitted_exponent: None,
        hypotheses_met: cert.hypotheses_met,
        diagnostic,
    };
    // Sequential: threads are unavailable in the browser.
    for &t in t_list {
        let e = error_sample(&path, &ep, &phases, t, 1.0, options.tol, &options.propagator)
            .map_err(|e| e.to_string())?;
        sweep.t.push(t);
        sweep.epsilon.push(e.epsilon);
        sweep.sup_u.push(e.sup_u);
        sweep.sup_uinv.push(e.sup_uinv);
    }
    sweep.fitted_exponent = fit_loglog(&sweep.t, &sweep.epsilon);
    Ok(sweep)
}

pub fn state_trajectory_native(spec_json: &str, t: f64, label: usize) -> Result<Trajectory, String> {
    check_t(t)?;
    let (path, _) = build(spec_json)?;
    let options = demo_options();
    let cert = validate_spectrum(&path, options.validation_grid, options.thresholds)
        .map_err(|e| e.to_string())?;
    let ep = prepared_eigenpath(&path, &options).map_err(|e| e.to_string())?;
    let phases = phase_record(&ep, label, t).map_err(|e| e.to_string())?;
    let propagator = PropagatorOptions {
        output_intervals: ep.intervals(),
        ..options.propagator
    };
    let trace = propagate_with(&path, t, DEMO_TOL, &propagator).map_err(|e| e.to_string())?;
    let v0 = ep.system(0).vector(label);
    let n = path.dim();
    let mut out = Trajectory {
        s: ep.grid().to_vec(),
        populations: vec![Vec::with_capacity(ep.grid().len()); n],
        norm: Vec::with_capacity(ep.grid().len()),
        deviation: Vec::with_capacity(ep.grid().len()),
        hypotheses_met: cert.hypotheses_met,
    };
    for (k, &s) in ep.grid().iter().enumerate() {
        let psi = trace.u[k].mul_vec(&v0);
        for (i, c) in psi.iter().enumerate() {
            out.populations[i].push(c.norm_sqr());
        }
        out.norm.push(vec_norm(&psi));
        let predicted = predicted_state(&ep, &phases, t, label, s).map_err(|e| e.to_string())?;
        out.deviation.push(vec_norm(&vec_sub(&psi, &predicted)));
    }
    Ok(out)
}

/// Eigenvalue curves of `H(s)` with the reality/gap certificate.
#[wasm_bindgen]
pub fn spectrum_scan(spec_json: &str, points: usize) -> String {
    to_json(spectrum_scan_native(spec_json, points))
}

/// Adiabatic error at `s = 1` for each `T` in the JSON array `t_list_json`.
#[wasm_bindgen]
pub fn adiabatic_sweep(spec_json: &str, t_list_json: &str, label: usize) -> String {
    let t_list: Result<Vec<f64>, String> =
        serde_json::from_str(t_list_json).map_err(|e| format!("time scales: {e}"));
    to_json(t_list.and_then(|t| adiabatic_sweep_native(spec_json, &t, label)))
}

/// Evolved state against the adiabatic prediction along the path.
#[wasm_bindgen]
pub fn state_trajectory(spec_json: &str, t: f64, label: usize) -> String {
    to_json(state_trajectory_native(spec_json, t, label))
}

/// JSON of a built-in path by name, for the page's presets.
#[wasm_bindgen]
pub fn preset(name: &str) -> String {
    let spec = match name {
        "hermitian2" => PathSpec::hermitian2_default(),
        "pt_dimer" => PathSpec::pt_dimer_default(),
        "dressed_hermitian" => PathSpec::dressed_hermitian_default(),
        "hermitian_loop" => PathSpec::hermitian_loop_default(),
        "pt_loop" => PathSpec::pt_loop_default(),
        "dressed_loop" => PathSpec::dressed_loop_default(),
        other => return error_json(&format!("unknown preset {other}")),
    };
    serde_json::to_string(&spec).expect("path specs serialize")
}
