//! Serializable detection output shared by every method.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::HybridFit;
use crate::scalar::Real;

/// Estimate (and interval, for posterior summaries) of one step column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub column: usize,
    /// Row of the series at which the step takes effect.
    pub index: usize,
    pub estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub lambda: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: String,
    /// Flagged rows, sorted and unique.
    pub flagged: Vec<usize>,
    /// The same change points in the original time units.
    pub flagged_times: Vec<f64>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Penalties>,
    pub diagnostics: BTreeMap<String, f64>,
    /// Resolved configuration that produced the report.
    #[serde(default)]
    pub config: serde_json::Value,
    pub entries: Vec<IndexSummary>,
}

impl DetectionReport {
    pub fn new(method: &str, entries: Vec<IndexSummary>, threshold: f64) -> Self {
        let mut flagged: Vec<usize> = entries.iter().filter(|e| e.flagged).map(|e| e.index).collect();
        flagged.sort_unstable();
        flagged.dedup();
        let flagged_times = flagged.iter().map(|&i| i as f64).collect();
        Self {
            method: method.to_string(),
            flagged,
            flagged_times,
            threshold,
            level: None,
            penalties: None,
            diagnostics: BTreeMap::new(),
            config: serde_json::Value::Null,
            entries,
        }
    }

    /// Flags columns with `|γ̂_j| > threshold` (and nonzero).
    pub fn from_hybrid<T: Real>(method: &str, fit: &HybridFit<T>, column_times: &[usize], threshold: f64) -> Self {
        let flagged = fit.flagged_columns(T::lit(threshold));
        let entries = column_times
            .iter()
            .enumerate()
            .map(|(j, &index)| IndexSummary {
                column: j,
                index,
                estimate: fit.gamma_hat[j].as_f64(),
                lower: None,
                upper: None,
                flagged: flagged.binary_search(&j).is_ok(),
            })
            .collect();
        let mut report = Self::new(method, entries, threshold);
        report.penalties = Some(Penalties {
            lambda: fit.lambda.as_f64(),
            omega: fit.omega.as_f64(),
        });
        report
            .diagnostics
            .insert("fista_iterations".into(), fit.iterations as f64);
        report
            .diagnostics
            .insert("converged".into(), if fit.converged { 1.0 } else { 0.0 });
        report.diagnostics.insert("rmse".into(), fit.rmse.as_f64());
        report.diagnostics.insert("edf_total".into(), fit.edf_total.as_f64());
        report
    }

    /// Maps flagged rows to time stamps in original units.
    pub fn with_times(mut self, times: &[f64]) -> Self {
        self.flagged_times = self
            .flagged
            .iter()
            .map(|&i| times.get(i).copied().unwrap_or(f64::NAN))
            .collect();
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Per-column table `column,index,estimate,lower,upper,flagged`.
    pub fn write_intervals_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        use crate::timeseries::fmt_num;
        use std::io::Write;
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "column,index,estimate,lower,upper,flagged").map_err(io)?;
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.column,
                e.index,
                fmt_num(e.estimate),
                opt(e.lower),
                opt(e.upper),
                e.flagged as u8
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
