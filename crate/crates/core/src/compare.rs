//! Side-by-side comparison of an AFM run and its ODE approximation.
//!
//! The ODE trace is interpolated linearly onto the AFM sample times within
//! the common window. Occupancies are compared as `β_ji` against
//! `β0_ji + sign · δ_l`.

use serde::Serialize;

use crate::afm::AfmTrace;
use crate::error::{Error, Result};
use crate::numerics::DenseVector;
use crate::ode::OdeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Maximum occupancy disagreement over the whole run, in frames.
    pub occupancy_frames: f64,
    /// Maximum final frequency disagreement, relative to the mean frequency.
    pub frequency_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            occupancy_frames: 2.0,
            frequency_rel: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDeviation {
    pub label: String,
    pub max_abs: f64,
    pub at_time: f64,
    pub final_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub window: (f64, f64),
    pub samples: usize,
    pub thresholds: Thresholds,
    pub frequency: Vec<SeriesDeviation>,
    pub occupancy: Vec<SeriesDeviation>,
    pub max_frequency_dev: f64,
    pub max_final_frequency_rel: f64,
    pub max_occupancy_dev: f64,
    pub occupancy_ok: bool,
    pub frequency_ok: bool,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.occupancy_ok && self.frequency_ok
    }
}

fn interpolate(times: &[f64], values: &[DenseVector], t: f64) -> DenseVector {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return values[0].clone();
    }
    if k >= times.len() {
        return values[times.len() - 1].clone();
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    &values[k - 1] * (1.0 - w) + &values[k] * w
}

fn track(dev: &mut SeriesDeviation, err: f64, t: f64) {
    if err > dev.max_abs {
        dev.max_abs = err;
        dev.at_time = t;
    }
    dev.final_abs = err;
}

pub fn compare_traces(
    afm: &AfmTrace,
    ode: &OdeTrace,
    thresholds: Thresholds,
) -> Result<ComparisonReport> {
    if afm.times.is_empty() || ode.is_empty() {
        return Err(Error::GridMismatch);
    }
    let n = afm.omega[0].len();
    if ode.omega[0].len() != n || ode.delta[0].len() * 2 != afm.links.len() {
        return Err(Error::DimensionMismatch(format!(
            "AFM trace has {n} nodes and {} links, ODE trace has {} nodes and {} edges",
            afm.links.len(),
            ode.omega[0].len(),
            ode.delta[0].len()
        )));
    }
    let start = afm.times[0].max(ode.times[0]);
    let end = afm.times[afm.times.len() - 1].min(ode.times[ode.len() - 1]);
    if end < start {
        return Err(Error::GridMismatch);
    }

    let blank = |label: String| SeriesDeviation {
        label,
        max_abs: 0.0,
        at_time: start,
        final_abs: 0.0,
    };
    let mut frequency: Vec<_> = (0..n).map(|i| blank(format!("omega_{i}"))).collect();
    let mut occupancy: Vec<_> = afm
        .links
        .iter()
        .map(|l| blank(format!("beta_{}", l.label())))
        .collect();
    let mut samples = 0;
    let mut final_mean = 1.0;

    for (k, &t) in afm.times.iter().enumerate() {
        if t < start || t > end {
            continue;
        }
        samples += 1;
        let w = interpolate(&ode.times, &ode.omega, t);
        let d = interpolate(&ode.times, &ode.delta, t);
        for i in 0..n {
            track(&mut frequency[i], (afm.omega[k][i] - w[i]).abs(), t);
        }
        for (j, link) in afm.links.iter().enumerate() {
            let predicted = afm.beta0[j] as f64 + f64::from(link.sign) * d[link.edge];
            track(
                &mut occupancy[j],
                (afm.beta[k][j] as f64 - predicted).abs(),
                t,
            );
        }
        final_mean = afm.omega[k].iter().sum::<f64>() / n as f64;
    }

    let max_of =
        |s: &[SeriesDeviation], f: fn(&SeriesDeviation) -> f64| s.iter().map(f).fold(0.0, f64::max);
    let max_frequency_dev = max_of(&frequency, |d| d.max_abs);
    let max_final_frequency_rel = max_of(&frequency, |d| d.final_abs) / final_mean.abs();
    let max_occupancy_dev = max_of(&occupancy, |d| d.max_abs);
    Ok(ComparisonReport {
        window: (start, end),
        samples,
        thresholds,
        occupancy_ok: max_occupancy_dev <= thresholds.occupancy_frames,
        frequency_ok: max_final_frequency_rel <= thresholds.frequency_rel,
        frequency,
        occupancy,
        max_frequency_dev,
        max_final_frequency_rel,
        max_occupancy_dev,
    })
}
