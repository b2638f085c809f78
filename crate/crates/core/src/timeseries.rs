//! Series data model, CSV ingestion and time standardization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest series a cubic spline with a linear null space can be fit to.
pub const MIN_LEN: usize = 4;

/// Observations `values[i]` taken at strictly increasing `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<T> {
    times: Vec<T>,
    values: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.len() < MIN_LEN {
            return Err(Error::TooShort {
                needed: MIN_LEN,
                got: times.len(),
            });
        }
        if let Some(i) = times.iter().chain(values.iter()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at position {}",
                i % times.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonIncreasingTimes { index: i + 1 });
        }
        Ok(Self {
            times,
            values,
            label: None,
        })
    }

    /// Unit-spaced times `0, 1, ..., n-1`.
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        let times = (0..values.len()).map(T::from_count).collect();
        Self::new(times, values)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Contiguous sub-series `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidInput(format!(
                "slice [{start}, {end}) outside series of length {}",
                self.len()
            )));
        }
        let mut out = Self::new(self.times[start..end].to_vec(), self.values[start..end].to_vec())?;
        out.label = self.label.clone();
        Ok(out)
    }

    /// Same times, new values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        let mut out = Self::new(self.times.clone(), values)?;
        out.label = self.label.clone();
        Ok(out)
    }
}

/// Affine map `t -> (t - offset) / span` taking the observed range to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale<T> {
    pub offset: T,
    pub span: T,
}

impl<T: Real> TimeScale<T> {
    pub fn forward(&self, t: T) -> T {
        (t - self.offset) / self.span
    }

    pub fn inverse(&self, u: T) -> T {
        u * self.span + self.offset
    }
}

/// Maps times onto `[0, 1]`; values are untouched. Exact identity on input
/// that already spans `[0, 1]`.
pub fn standardize_times<T: Real>(ts: &TimeSeries<T>) -> (TimeSeries<T>, TimeScale<T>) {
    let first = ts.times[0];
    let last = ts.times[ts.len() - 1];
    let scale = TimeScale {
        offset: first,
        span: last - first,
    };
    let mut times: Vec<T> = ts.times.iter().map(|&t| scale.forward(t)).collect();
    // pin the endpoints against rounding in (last - first) / (last - first)
    times[0] = T::zero();
    let n = times.len();
    times[n - 1] = T::one();
    let out = TimeSeries {
        times,
        values: ts.values.clone(),
        label: ts.label.clone(),
    };
    (out, scale)
}

/// One filter run cut out of a longer stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle<T> {
    pub series: TimeSeries<T>,
    /// Index of `series[0]` in the parent stream.
    pub source_offset: usize,
    /// Retained running phase `[start, end)` within `series`.
    pub phase_bounds: (usize, usize),
    /// False when the stream ended before the cycle did.
    pub complete: bool,
}

impl<T: Real> Cycle<T> {
    pub fn new(
        series: TimeSeries<T>,
        source_offset: usize,
        phase_bounds: (usize, usize),
        complete: bool,
    ) -> Result<Self> {
        let (start, end) = phase_bounds;
        if start >= end || end > series.len() {
            return Err(Error::InvalidInput(format!(
                "phase bounds [{start}, {end}) invalid for cycle of length {}",
                series.len()
            )));
        }
        Ok(Self {
            series,
            source_offset,
            phase_bounds,
            complete,
        })
    }

    /// The retained running phase as its own series.
    pub fn phase(&self) -> Result<TimeSeries<T>> {
        self.series.slice(self.phase_bounds.0, self.phase_bounds.1)
    }
}

/// Numeric rows of a headerless or single-header CSV file.
pub fn read_numeric_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "row {}: non-finite value in column {}",
                        line + 1,
                        i + 1
                    )));
                }
                match width {
                    None => width = Some(row.len()),
                    Some(w) if w != row.len() => {
                        return Err(Error::InvalidInput(format!(
                            "row {}: expected {w} columns, found {}",
                            line + 1,
                            row.len()
                        )))
                    }
                    _ => {}
                }
                rows.push(row);
            }
            // a single leading header row is allowed
            Err(_) if line == 0 => continue,
            Err(_) => return Err(Error::InvalidInput(format!("row {}: non-numeric value", line + 1))),
        }
    }
    Ok(rows)
}

/// Loads `time,value` rows, or a single value column with implied unit
/// spacing. Extra columns beyond the second are ignored.
pub fn load_series<T: Real>(path: impl AsRef<Path>) -> Result<TimeSeries<T>> {
    let path = path.as_ref();
    let rows = read_numeric_table(path)?;
    if rows.len() < MIN_LEN {
        return Err(Error::TooShort {
            needed: MIN_LEN,
            got: rows.len(),
        });
    }
    let ts = if rows[0].len() == 1 {
        TimeSeries::from_values(rows.iter().map(|r| T::lit(r[0])).collect())?
    } else {
        TimeSeries::new(
            rows.iter().map(|r| T::lit(r[0])).collect(),
            rows.iter().map(|r| T::lit(r[1])).collect(),
        )?
    };
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ts.with_label(label))
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `time,value` with a header row.
pub fn save_series<T: Real>(ts: &TimeSeries<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "time,value").map_err(io)?;
    for (t, v) in ts.times.iter().zip(&ts.values) {
        writeln!(out, "{},{}", fmt_num(t.as_f64()), fmt_num(v.as_f64())).map_err(io)?;
    }
    out.flush().map_err(io)
}
