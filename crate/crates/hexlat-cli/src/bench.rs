//! Throughput measurement: warmup passes, then timed runs over a fixed
//! image batch, reported as mean ± standard deviation in images per second.

use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::report::float_value;

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub operation: String,
    /// Mean throughput over the timed runs, images per second.
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
    pub warmup: usize,
    pub input: String,
}

impl BenchReport {
    pub fn to_json(&self) -> Value {
        json!({
            "operation": self.operation,
            "images_per_second": float_value(self.mean),
            "stddev": float_value(self.stddev),
            "runs": self.runs,
            "warmup": self.warmup,
            "input": self.input,
        })
    }
}

/// Times `op` over `runs` batches of `batch` invocations each (after
/// `warmup` untimed batches) and returns per-run throughputs.
pub fn measure(
    batch: usize,
    runs: usize,
    warmup: usize,
    parallel: bool,
    op: &(dyn Fn() + Sync),
) -> (f64, f64) {
    let exec = |n: usize| {
        if parallel {
            (0..n).into_par_iter().for_each(|_| op());
        } else {
            for _ in 0..n {
                op();
            }
        }
    };
    for _ in 0..warmup {
        exec(batch);
    }
    let mut rates = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        exec(batch);
        let secs = start.elapsed().as_secs_f64().max(1e-12);
        rates.push(batch as f64 / secs);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let variance = if rates.len() > 1 {
        rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rates.len() - 1) as f64
    } else {
        0.0
    };
    (mean, variance.sqrt())
}
