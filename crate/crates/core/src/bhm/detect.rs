//! Credible-interval detection rule.

use super::chains::PosteriorSamples;
use super::sampler::quantile_sorted;
use crate::report::{DetectionReport, IndexSummary};
use crate::scalar::Real;

/// Minimum posterior mean magnitude for a flag.
pub const DEFAULT_THRESHOLD: f64 = 0.15;
/// Central interval mass.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Flags step `j` when the central `level` interval of `γ_j` excludes zero
/// and `|E[γ_j]| > threshold`.
pub fn detect_bayes<T: Real>(samples: &PosteriorSamples<T>, threshold: f64, level: f64) -> DetectionReport {
    let tail = (1.0 - level.clamp(0.0, 1.0)) / 2.0;
    let mut entries = Vec::with_capacity(samples.column_times.len());
    for (j, &index) in samples.column_times.iter().enumerate() {
        let mut draws = samples.gamma_draws(j);
        if draws.is_empty() {
            continue;
        }
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        draws.sort_by(|a, b| a.total_cmp(b));
        let lower = quantile_sorted(&draws, tail);
        let upper = quantile_sorted(&draws, 1.0 - tail);
        let excludes_zero = lower > 0.0 || upper < 0.0;
        entries.push(IndexSummary {
            column: j,
            index,
            estimate: mean,
            lower: Some(lower),
            upper: Some(upper),
            flagged: excludes_zero && mean.abs() > threshold,
        });
    }
    let mut report = DetectionReport::new("bayes", entries, threshold);
    report.level = Some(level);
    report.diagnostics = samples
        .diagnostics
        .ess
        .iter()
        .map(|(k, v)| (format!("ess_{k}"), *v))
        .collect();
    report
        .diagnostics
        .extend(samples.diagnostics.rhat.iter().map(|(k, v)| (format!("rhat_{k}"), *v)));
    report
        .diagnostics
        .insert("failed_chains".into(), samples.failed.len() as f64);
    report
        .diagnostics
        .insert("retained_draws".into(), samples.total_draws() as f64);
    report
}
