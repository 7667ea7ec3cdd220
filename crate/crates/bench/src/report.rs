use std::time::Instant;

use serde::Serialize;
use serde_json::Value as Json;

/// One measured quantity under one configuration.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub metric: String,
    pub config: Json,
    pub samples: Vec<f64>,
    pub median: f64,
}

impl Report {
    pub fn new(metric: &str, config: Json, samples: Vec<f64>) -> Report {
        Report { metric: metric.to_string(), median: median(&samples), config, samples }
    }
}

pub fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// Runs `f` `runs` times; returns wall-clock milliseconds per run and the
/// last result.
pub fn timed<R>(runs: usize, mut f: impl FnMut() -> R) -> (Vec<f64>, R) {
    let mut samples = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs.max(1) {
        let t = Instant::now();
        let r = f();
        samples.push(t.elapsed().as_secs_f64() * 1e3);
        last = Some(r);
    }
    (samples, last.expect("at least one run"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
