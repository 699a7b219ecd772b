//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Each export returns JSON text. The `*_json` functions hold the logic and
//! are plain Rust so they can be tested natively.

use drs_inekf::drs::PitchProfile;
use drs_inekf::filter::FilterVariant;
use drs_inekf::harness::{single_run, RunOptions, Rms};
use drs_inekf::liegroup::rot_y;
use drs_inekf::observability::{observability_report_with, ObservabilityOptions};
use drs_inekf::sim::{generate, initial_error_from_seed, ScenarioConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Longest scenario the demo will simulate, s.
pub const MAX_DURATION: f64 = 60.0;

fn profile(name: &str) -> Result<PitchProfile, String> {
    match name.to_ascii_lowercase().as_str() {
        "tm1" => Ok(PitchProfile::tm1()),
        "tm2" => Ok(PitchProfile::tm2()),
        "tm3" => Ok(PitchProfile::tm3()),
        "horizontal" => Ok(PitchProfile::horizontal()),
        other => Err(format!("unknown profile `{other}`")),
    }
}

fn check_duration(duration: f64) -> Result<(), String> {
    if duration.is_finite() && duration > 0.0 && duration <= MAX_DURATION {
        Ok(())
    } else {
        Err(format!("duration must be in (0, {MAX_DURATION}] s"))
    }
}

/// Surface pitch angle (deg) and rate (deg/s) sampled every `dt` seconds.
pub fn treadmill_profile_json(name: &str, duration: f64, dt: f64) -> Result<String, String> {
    let p = profile(name)?;
    check_duration(duration)?;
    if !(dt.is_finite() && dt >= 1e-3) {
        return Err("dt must be at least 1 ms".into());
    }
    let n = (duration / dt).floor() as usize;
    let (mut t, mut angle, mut rate) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=n {
        let s = p.sample(k as f64 * dt);
        t.push(k as f64 * dt);
        angle.push(s.angle.to_degrees());
        rate.push(s.rate.to_degrees());
    }
    Ok(json!({ "t": t, "angle_deg": angle, "rate_deg_s": rate }).to_string())
}

/// Rank and observability flags for tilts 0, step, ... up to `max_tilt` degrees.
pub fn observability_sweep_json(max_tilt: f64, step: f64, orientation: bool) -> Result<String, String> {
    if !(max_tilt.is_finite() && (0.0..90.0).contains(&max_tilt)) {
        return Err("max tilt must be in [0, 90) deg".into());
    }
    if !(step.is_finite() && step >= 0.1) {
        return Err("step must be at least 0.1 deg".into());
    }
    let opts = ObservabilityOptions {
        orientation,
        ..ObservabilityOptions::default()
    };
    let n = (max_tilt / step + 1e-9).floor() as usize;
    let rows = (0..=n)
        .map(|k| {
            let deg = k as f64 * step;
            let r = observability_report_with(&rot_y(deg.to_radians()), &opts).map_err(|e| e.to_string())?;
            Ok(json!({
                "tilt_deg": deg,
                "rank": r.rank,
                "roll_pitch": r.roll_pitch,
                "yaw": r.yaw,
                "velocity": r.velocity,
                "position": r.position,
                "contact": r.contact,
            }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "orientation_rows": orientation, "sweep": rows }).to_string())
}

/// One filter run on a freshly simulated scenario. `seed` drives both the
/// sensor noise and the initial error.
pub fn convergence_run_json(case: &str, variant: &str, seed: u32, duration: f64) -> Result<String, String> {
    let letter = match case.trim() {
        c if c.len() == 1 => c.chars().next().unwrap_or('?'),
        c => return Err(format!("unknown case `{c}`")),
    };
    let variant: FilterVariant = variant.parse().map_err(|e: drs_inekf::Error| e.to_string())?;
    check_duration(duration)?;
    let mut cfg = ScenarioConfig::case(letter).map_err(|e| e.to_string())?;
    cfg.duration = duration;
    cfg.seed = u64::from(seed);
    let data = generate(&cfg).map_err(|e| e.to_string())?;
    let opts = RunOptions::new(variant, 1, u64::from(seed));
    let run = single_run(&data, &opts, 0, &initial_error_from_seed(u64::from(seed))).map_err(|e| e.to_string())?;
    let column = |f: &dyn Fn(&drs_inekf::harness::ErrorSample) -> f64| run.errors.iter().map(f).collect::<Vec<_>>();
    let surface: Vec<f64> = run
        .errors
        .iter()
        .map(|e| cfg.profile.angle(e.t).to_degrees())
        .collect();
    Ok(json!({
        "case": cfg.name,
        "variant": variant.to_string(),
        "t": column(&|e| e.t),
        "v_x": column(&|e| e.v[0]),
        "v_y": column(&|e| e.v[1]),
        "v_z": column(&|e| e.v[2]),
        "yaw": column(&|e| e.yaw),
        "pitch": column(&|e| e.pitch),
        "roll": column(&|e| e.roll),
        "surface_deg": surface,
        "convergence": run.convergence,
        "rms": Rms::of(&run.errors),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn treadmill_profile(name: &str, duration: f64, dt: f64) -> Result<String, JsValue> {
    treadmill_profile_json(name, duration, dt).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn observability_sweep(max_tilt: f64, step: f64, orientation: bool) -> Result<String, JsValue> {
    observability_sweep_json(max_tilt, step, orientation).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn convergence_run(case: &str, variant: &str, seed: u32, duration: f64) -> Result<String, JsValue> {
    convergence_run_json(case, variant, seed, duration).map_err(|e| JsValue::from_str(&e))
}
