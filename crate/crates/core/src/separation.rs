//! Splitting a monitoring stream into filter cycles and trimming their
//! start-up and shut-down transients.
//!
//! Each filter is a short kernel slid over the stream; its inner product
//! with the data, divided by the stream's robust scale, is compared against
//! a per-filter threshold. Start filters fire on `score ≥ threshold`, end
//! filters on `score ≤ −threshold`. Starts and ends are taken in
//! alternation; an end is placed at the strongest end response within its
//! run of consecutive firings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::timeseries::{Cycle, TimeSeries, MIN_LEN};

/// Consistency constant turning a median absolute deviation into a
/// Gaussian standard deviation.
const MAD_SCALE: f64 = 1.4826;
/// First differences must also exceed this multiple of the median absolute
/// difference to count as extreme.
const EXTREME_FACTOR: f64 = 5.0;
/// Shortest cycle `trim_cycle` accepts.
pub const MIN_TRIM_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterRole {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub name: String,
    pub kernel: Vec<f64>,
    /// Kernel position aligned with the scored sample.
    pub anchor: usize,
    pub role: FilterRole,
    /// Decision threshold in units of the stream's robust scale.
    pub threshold: f64,
}

impl Filter {
    /// `score(i) = Σ_j k[j] y[i − anchor + j]`, with the stream extended by
    /// repeating its edge values.
    fn scores(&self, y: &[f64], scale: f64) -> Vec<f64> {
        let n = y.len() as isize;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for (j, k) in self.kernel.iter().enumerate() {
                    let idx = (i - self.anchor as isize + j as isize).clamp(0, n - 1);
                    s += k * y[idx as usize];
                }
                s / scale
            })
            .collect()
    }

    /// Score normalized so that the filter fires at `≥ 1`.
    fn strength(&self, score: f64) -> f64 {
        match self.role {
            FilterRole::Start => score / self.threshold,
            FilterRole::End => -score / self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationConfig {
    pub filters: Vec<Filter>,
    /// Fraction of the largest absolute first differences eligible for
    /// removal at either end of a cycle.
    pub trim_fraction: f64,
    /// Cycles shorter than this are dropped.
    pub min_length: usize,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        let mut step_edge = vec![-1.0; 6];
        step_edge.extend([1.0; 6]);
        Self {
            filters: vec![
                Filter {
                    name: "step-edge".into(),
                    kernel: step_edge,
                    anchor: 6,
                    role: FilterRole::End,
                    threshold: 4.0,
                },
                Filter {
                    name: "negative-spike".into(),
                    kernel: vec![-1.0, 1.0],
                    anchor: 1,
                    role: FilterRole::End,
                    threshold: 1.5,
                },
                Filter {
                    name: "positive-ramp".into(),
                    kernel: vec![-1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                    anchor: 0,
                    role: FilterRole::Start,
                    threshold: 0.05,
                },
            ],
            trim_fraction: 0.1,
            min_length: MIN_LEN,
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.25).contains(&self.trim_fraction) {
            return Err(Error::OutOfRange {
                name: "trim_fraction",
                value: self.trim_fraction,
            });
        }
        for f in &self.filters {
            if f.kernel.is_empty() || f.anchor >= f.kernel.len() {
                return Err(Error::InvalidInput(format!(
                    "filter `{}` needs a nonempty kernel containing its anchor",
                    f.name
                )));
            }
            if !(f.threshold.is_finite() && f.threshold > 0.0) || f.kernel.iter().any(|k| !k.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "filter `{}` has a non-finite or non-positive threshold or weight",
                    f.name
                )));
            }
        }
        for role in [FilterRole::Start, FilterRole::End] {
            if !self.filters.iter().any(|f| f.role == role) {
                return Err(Error::InvalidInput(format!("no {role:?} filter configured")));
            }
        }
        Ok(())
    }

    fn longest_kernel(&self) -> usize {
        self.filters.iter().map(|f| f.kernel.len()).max().unwrap_or(0)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// `1.4826 · MAD`, falling back to the standard deviation when more than
/// half of the stream is constant.
fn robust_scale(y: &[f64]) -> f64 {
    let mut v = y.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = y.iter().map(|x| (x - med).abs()).collect();
    let mad = MAD_SCALE * median(&mut dev);
    if mad > 0.0 {
        return mad;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

fn make_cycle<T: Real>(stream: &TimeSeries<T>, start: usize, end: usize, complete: bool) -> Result<Cycle<T>> {
    let series = stream.slice(start, end + 1)?;
    let len = series.len();
    Cycle::new(series, start, (0, len), complete)
}

/// Finds cycles by filter responses. Returns an empty list when nothing
/// fires.
pub fn separate_cycles<T: Real>(stream: &TimeSeries<T>, config: &SeparationConfig) -> Result<Vec<Cycle<T>>> {
    config.validate()?;
    let y: Vec<f64> = stream.values().iter().map(|v| v.as_f64()).collect();
    let n = y.len();
    if n < config.longest_kernel() {
        return Err(Error::TooShort {
            needed: config.longest_kernel(),
            got: n,
        });
    }
    let scale = robust_scale(&y);
    if !(scale > 0.0) {
        return Ok(Vec::new());
    }
    let strength = |role: FilterRole| -> Vec<f64> {
        let mut best = vec![f64::NEG_INFINITY; n];
        for f in config.filters.iter().filter(|f| f.role == role) {
            for (b, s) in best.iter_mut().zip(f.scores(&y, scale)) {
                *b = b.max(f.strength(s));
            }
        }
        best
    };
    let start_strength = strength(FilterRole::Start);
    let end_strength = strength(FilterRole::End);

    let mut bounds = Vec::new();
    let mut i = 0;
    let mut open: Option<usize> = None;
    while i < n {
        match open {
            None => {
                if start_strength[i] >= 1.0 {
                    open = Some(i);
                }
                i += 1;
            }
            Some(start) => {
                if end_strength[i] >= 1.0 {
                    let mut best = i;
                    let mut j = i;
                    while j < n && end_strength[j] >= 1.0 {
                        if end_strength[j] > end_strength[best] {
                            best = j;
                        }
                        j += 1;
                    }
                    if best > start {
                        bounds.push((start, best - 1, true));
                    }
                    open = None;
                    // the boundary sample may itself begin the next cycle
                    i = best;
                    if start_strength[i] >= 1.0 {
                        open = Some(i);
                    }
                    i = j.max(best + 1);
                } else {
                    i += 1;
                }
            }
        }
    }
    if let Some(start) = open {
        bounds.push((start, n - 1, false));
    }
    bounds
        .into_iter()
        .filter(|&(s, e, _)| e + 1 - s >= config.min_length.max(MIN_LEN))
        .map(|(s, e, c)| make_cycle(stream, s, e, c))
        .collect()
}

/// Cycles as maximal runs of `on == true`.
pub fn separate_by_switch<T: Real>(stream: &TimeSeries<T>, on: &[bool], min_length: usize) -> Result<Vec<Cycle<T>>> {
    if on.len() != stream.len() {
        return Err(Error::DimensionMismatch {
            expected: stream.len(),
            got: on.len(),
        });
    }
    let n = on.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if !on[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && on[i] {
            i += 1;
        }
        if i - start >= min_length.max(MIN_LEN) {
            out.push(make_cycle(stream, start, i - 1, i < n)?);
        }
    }
    Ok(out)
}

/// One pass: indices `[lo, hi)` of the phase after removing end runs of
/// extreme differences.
fn trim_pass(y: &[f64], fraction: f64) -> (usize, usize) {
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut sorted = d.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = crate::bhm::sampler::quantile_sorted(&sorted, 1.0 - fraction);
    let med = median(&mut sorted);
    let extreme = |v: f64| fraction > 0.0 && v >= q && v > EXTREME_FACTOR * med;
    let lead = d.iter().take_while(|&&v| extreme(v)).count();
    let trail = d.iter().rev().take_while(|&&v| extreme(v)).count();
    let lo = lead;
    let hi = y.len().saturating_sub(trail).max(lo);
    (lo, hi)
}

/// Removes leading and trailing runs of extreme first differences, repeated
/// until a pass removes nothing, so that trimming twice equals trimming once.
pub fn trim_cycle<T: Real>(cycle: &Cycle<T>, config: &SeparationConfig) -> Result<Cycle<T>> {
    config.validate()?;
    if cycle.series.len() < MIN_TRIM_LEN {
        return Err(Error::TooShort {
            needed: MIN_TRIM_LEN,
            got: cycle.series.len(),
        });
    }
    let (mut lo, mut hi) = cycle.phase_bounds;
    let y: Vec<f64> = cycle.series.values().iter().map(|v| v.as_f64()).collect();
    loop {
        let (a, b) = trim_pass(&y[lo..hi], config.trim_fraction);
        if b - a < MIN_LEN {
            return Err(Error::TooShort {
                needed: MIN_LEN,
                got: b - a,
            });
        }
        if a == 0 && b == hi - lo {
            break;
        }
        hi = lo + b;
        lo += a;
    }
    Cycle::new(cycle.series.clone(), cycle.source_offset, (lo, hi), cycle.complete)
}
