//! Report serialization: JSON for single metric reports, CSV for sweeps.

use std::path::Path;

use hexlat::metrics::{EfficiencyReport, SweepEntry};
use hexlat::transform::InterpMode;
use serde_json::{json, Value};

/// JSON has no infinity literal; non-finite values become string sentinels
/// matching the CSV convention.
pub fn float_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn efficiency_json(image: &str, interp: InterpMode, r: &EfficiencyReport) -> Value {
    json!({
        "image": image,
        "interp": interp.to_string(),
        "R": float_value(r.r),
        "rows": r.rows,
        "cols": r.cols,
        "mse_h": float_value(r.mse_h),
        "mse_q": float_value(r.mse_q),
        "T_h": float_value(r.t_h),
        "T_q": float_value(r.t_q),
        "delta": float_value(r.delta),
        "max_i": r.max_i,
    })
}

pub fn sweep_csv(image: &str, entries: &[SweepEntry]) -> String {
    let mut out = String::from("image,R,T_q,T_h,delta\n");
    for entry in entries {
        if let SweepEntry::Report(r) = entry {
            out.push_str(&format!("{image},{},{},{},{}\n", r.r, r.t_q, r.t_h, r.delta));
        }
    }
    out
}

pub fn sweep_json(image: &str, interp: InterpMode, entries: &[SweepEntry]) -> String {
    let items: Vec<Value> = entries
        .iter()
        .map(|entry| match entry {
            SweepEntry::Report(r) => efficiency_json(image, interp, r),
            SweepEntry::Skipped { r, reason } => json!({
                "image": image,
                "R": float_value(*r),
                "skipped": reason,
            }),
        })
        .collect();
    pretty(&Value::Array(items))
}

pub fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON value serialization");
    s.push('\n');
    s
}

/// Writes to the given path, or stdout when none is set.
pub fn emit(path: Option<&Path>, content: &str) -> hexlat::Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, content)?),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
