//! Median wall-clock timing over repeated runs: one untimed warm-up, then
//! `reps` timed runs on the monotonic clock. Each run must return a checksum,
//! which the harness consumes through `black_box` so the optimizer cannot
//! elide the work.

use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub task: String,
    pub reps: usize,
    /// Wall-clock durations in seconds, in run order.
    pub times: Vec<f64>,
    pub median: f64,
    /// Sum of the per-run checksums, kept so results stay observable.
    pub checksum: f64,
}

/// Exact sample median (mean of the middle pair for even lengths).
pub fn median(times: &[f64]) -> f64 {
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn measure<F>(task: &str, reps: usize, mut f: F) -> Result<BenchReport>
where
    F: FnMut() -> Result<f64>,
{
    if reps < 1 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    black_box(f()?); // warm-up, untimed
    let mut times = Vec::with_capacity(reps);
    let mut checksum = 0.0;
    for _ in 0..reps {
        let start = Instant::now();
        let c = f()?;
        let elapsed = start.elapsed().as_secs_f64();
        checksum += black_box(c);
        times.push(elapsed);
    }
    Ok(BenchReport {
        task: task.to_string(),
        reps,
        median: median(&times),
        times,
        checksum,
    })
}
