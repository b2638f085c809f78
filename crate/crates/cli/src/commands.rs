use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hsmooth::pipeline::{
    bayes_model, bayes_report, prepare, run_bayes, run_hybrid, BayesOptions, Criterion, HybridOptions, Prepared,
};
use hsmooth::simulation::{detection_surfaces, reference_trend, synth_cycle, Method, StudyConfig};
use hsmooth::timeseries::{fmt_num, read_numeric_table};
use hsmooth::{
    load_series, separate_by_switch, separate_cycles, trim_cycle, Cycle, DetectionReport, SeparationConfig, Series,
    TimeSeries,
};
use nalgebra::DVector;
use rand::SeedableRng;
use serde::Serialize;
use serde_json::json;

use crate::config::{apply_chain, apply_hybrid, load, AnalyzeConfig, SelectConfig};
use crate::output::{Staging, Timing};
use crate::{AnalyzeArgs, BenchArgs, MethodArg, SelectArgs, SeparateArgs, SimulateArgs, Status};

/// Largest split-R̂ accepted as converged.
const RHAT_LIMIT: f64 = 1.1;

fn timing(staging: &mut Staging, command: &str, start: Instant) -> Result<()> {
    staging.json(
        "timing.json",
        &Timing {
            command,
            wall_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        },
    )
}

fn load_input(path: &Path) -> Result<Series> {
    load_series(path).with_context(|| format!("loading {}", path.display()))
}

/// `t,y,trend,anomaly,residual`
fn write_decomposition(path: &Path, series: &Series, trend: &DVector<f64>, anomaly: &DVector<f64>) -> Result<()> {
    let mut text = String::from("t,y,trend,anomaly,residual\n");
    for i in 0..series.len() {
        let y = series.values()[i];
        writeln!(
            text,
            "{},{},{},{},{}",
            fmt_num(series.times()[i]),
            fmt_num(y),
            fmt_num(trend[i]),
            fmt_num(anomaly[i]),
            fmt_num(y - trend[i] - anomaly[i])
        )?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn analyze(args: AnalyzeArgs) -> Result<Status> {
    let start = Instant::now();
    let mut cfg: AnalyzeConfig = load(args.config.as_deref())?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if let Some(v) = args.variant {
        cfg.hybrid.variant = v.into();
        cfg.bayes.variant = v.into();
    }
    apply_hybrid(&mut cfg.hybrid, &args.hybrid);
    apply_chain(&mut cfg.bayes, &args.chain);
    if cfg.threshold.is_nan() || cfg.threshold < 0.0 {
        bail!("threshold must be non-negative, got {}", cfg.threshold);
    }

    let series = load_input(&args.input)?;
    let prep = prepare(&series)?;
    let times = prep.original_times();
    let resolved = serde_json::to_value(&cfg)?;
    let (mut report, trend, anomaly, status, intervals) = match cfg.method {
        MethodArg::Elbow | MethodArg::Aicc => {
            let crit = if cfg.method == MethodArg::Elbow {
                Criterion::Elbow
            } else {
                Criterion::Aicc
            };
            let outcome = run_hybrid(&prep, &cfg.hybrid)?;
            let fit = outcome.fit(crit);
            let status = if fit.converged {
                Status::Ok
            } else {
                log::warn!(
                    "selected fit stopped after {} iterations without converging",
                    fit.iterations
                );
                Status::NotConverged
            };
            let report = outcome.report(crit, cfg.threshold, &times);
            (report, fit.trend.clone(), fit.anomaly.clone(), status, false)
        }
        MethodArg::Bayes => {
            let hybrid = run_hybrid(&prep, &cfg.hybrid)?;
            let model = bayes_model(&prep, &cfg.bayes)?;
            let samples = run_bayes(&prep, &model, hybrid.anchored_priors(), &cfg.bayes)?;
            let report = bayes_report(&samples, cfg.threshold, &cfg.bayes, &times);
            let trend = samples.trend_mean(&prep.design.x);
            let anomaly = &model.basis.psi * samples.gamma_mean();
            let worst = samples.diagnostics.rhat.values().cloned().fold(0.0, f64::max);
            let status = if !samples.failed.is_empty() || worst > RHAT_LIMIT {
                log::warn!(
                    "chains not converged: {} failed, max split R-hat {worst:.3}",
                    samples.failed.len()
                );
                Status::NotConverged
            } else {
                Status::Ok
            };
            (report, trend, anomaly, status, true)
        }
    };
    report.config = resolved;

    let mut staging = Staging::new(&args.out_dir)?;
    report.write_json(staging.path("report.json"))?;
    write_decomposition(&staging.path("decomposition.csv"), &series, &trend, &anomaly)?;
    if intervals {
        report.write_intervals_csv(staging.path("intervals.csv"))?;
    }
    timing(&mut staging, "analyze", start)?;
    staging.commit()?;
    print_flags(&report);
    Ok(status)
}

fn print_flags(report: &DetectionReport) {
    if report.flagged.is_empty() {
        println!("{}: no change points flagged", report.method);
    } else {
        let times: Vec<String> = report.flagged_times.iter().map(|t| t.to_string()).collect();
        println!("{}: change points at {}", report.method, times.join(", "));
    }
}

#[derive(Serialize)]
struct SelectionSummary {
    lambda: f64,
    omega: f64,
    rmse: f64,
    edf_total: f64,
    active: usize,
    flagged: Vec<usize>,
}

pub fn select(args: SelectArgs) -> Result<Status> {
    let start = Instant::now();
    let mut cfg: SelectConfig = load(args.config.as_deref())?;
    if let Some(v) = args.variant {
        cfg.hybrid.variant = v.into();
    }
    apply_hybrid(&mut cfg.hybrid, &args.hybrid);
    let series = load_input(&args.input)?;
    let prep = prepare(&series)?;
    let outcome = run_hybrid(&prep, &cfg.hybrid)?;
    let summary = |crit: Criterion| {
        let cell = &outcome.grid.cells[outcome.selection(crit).index];
        SelectionSummary {
            lambda: cell.lambda,
            omega: cell.omega,
            rmse: cell.e,
            edf_total: cell.n_edf,
            active: cell.s,
            flagged: cell
                .fit
                .flagged_columns(0.0)
                .into_iter()
                .map(|j| outcome.basis.column_times[j])
                .collect(),
        }
    };
    let doc = json!({
        "n": outcome.grid.n,
        "e0": outcome.grid.e0,
        "nonconverged_cells": outcome.grid.nonconverged(),
        "elbow": summary(Criterion::Elbow),
        "aicc": summary(Criterion::Aicc),
        "config": cfg,
    });
    let mut staging = Staging::new(&args.out_dir)?;
    outcome.grid.write_csv(staging.path("grid.csv"))?;
    staging.json("selection.json", &doc)?;
    timing(&mut staging, "select", start)?;
    staging.commit()?;
    Ok(if outcome.grid.nonconverged() > 0 {
        log::warn!("{} grid cells did not converge", outcome.grid.nonconverged());
        Status::NotConverged
    } else {
        Status::Ok
    })
}

#[derive(Serialize)]
struct CycleSummary {
    cycle: usize,
    file: String,
    source_offset: usize,
    length: usize,
    phase_bounds: (usize, usize),
    start_time: f64,
    end_time: f64,
    complete: bool,
}

pub fn separate(args: SeparateArgs) -> Result<Status> {
    let start = Instant::now();
    let mut cfg: SeparationConfig = load(args.config.as_deref())?;
    if let Some(f) = args.trim_fraction {
        cfg.trim_fraction = f;
    }
    if let Some(m) = args.min_length {
        cfg.min_length = m;
    }
    cfg.validate()?;
    let rows = read_numeric_table(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    let need = if args.switch_column { 3 } else { 2 };
    if rows.first().is_some_and(|r| r.len() < need) {
        bail!("{} needs at least {need} columns", args.input.display());
    }
    let stream = TimeSeries::new(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())?;
    let cycles: Vec<Cycle<f64>> = if args.switch_column {
        let on: Vec<bool> = rows.iter().map(|r| r[2] != 0.0).collect();
        separate_by_switch(&stream, &on, cfg.min_length)?
    } else {
        separate_cycles(&stream, &cfg)?
    };
    let cycles = if args.trim {
        cycles
            .iter()
            .map(|c| trim_cycle(c, &cfg))
            .collect::<hsmooth::Result<Vec<_>>>()?
    } else {
        cycles
    };

    let mut staging = Staging::new(&args.out_dir)?;
    let mut summaries = Vec::with_capacity(cycles.len());
    for (k, c) in cycles.iter().enumerate() {
        let file = format!("cycle_{:03}.csv", k + 1);
        let phase = c.phase()?;
        hsmooth::save_series(&phase, staging.path(&file))?;
        summaries.push(CycleSummary {
            cycle: k + 1,
            file,
            source_offset: c.source_offset,
            length: c.series.len(),
            phase_bounds: c.phase_bounds,
            start_time: phase.times()[0],
            end_time: phase.times()[phase.len() - 1],
            complete: c.complete,
        });
    }
    staging.json("cycles.json", &json!({ "cycles": summaries, "config": cfg }))?;
    timing(&mut staging, "separate", start)?;
    staging.commit()?;
    println!("{} cycles", cycles.len());
    Ok(Status::Ok)
}

fn method_of(m: MethodArg) -> Method {
    match m {
        MethodArg::Elbow => Method::HybridElbow,
        MethodArg::Aicc => Method::HybridAicc,
        MethodArg::Bayes => Method::Bayes,
    }
}

pub fn simulate(args: SimulateArgs) -> Result<Status> {
    let start = Instant::now();
    let mut cfg: StudyConfig = load(args.config.as_deref())?;
    if let Some(v) = args.sizes {
        cfg.disturbance_sizes = v;
    }
    if let Some(v) = args.sigmas {
        cfg.sigmas = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = args.disturbance_index {
        cfg.disturbance_index = v;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(seed) = args.chain.seed {
        cfg.seed = seed;
    }
    apply_hybrid(&mut cfg.hybrid, &args.hybrid);
    apply_chain(&mut cfg.bayes, &args.chain);
    let methods: Vec<Method> = if args.method.is_empty() {
        vec![cfg.method]
    } else {
        args.method.iter().map(|&m| method_of(m)).collect()
    };
    cfg.method = methods[0];
    let surfaces = detection_surfaces(&cfg, &methods)?;

    let mut staging = Staging::new(&args.out_dir)?;
    for s in &surfaces {
        s.write_csv(staging.path(&format!("surface_{}.csv", s.method.tag())))?;
        staging.json(&format!("contours_{}.json", s.method.tag()), &s.contours_json())?;
    }
    let tags: Vec<&str> = methods.iter().map(|m| m.tag()).collect();
    staging.json("study.json", &json!({ "methods": tags, "config": cfg }))?;
    timing(&mut staging, "simulate", start)?;
    staging.commit()?;
    for s in &surfaces {
        println!("{}", s.method.tag());
        for c in &s.cells {
            println!(
                "  size {:<8} sigma {:<8} p {:.3} ({}/{})",
                c.size,
                c.sigma,
                c.probability(),
                c.detected,
                c.total
            );
        }
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct BenchRow {
    repeat: usize,
    hybrid_seconds: f64,
    bayes_seconds: f64,
    ratio: f64,
}

pub fn bench(args: BenchArgs) -> Result<Status> {
    let mut cfg: AnalyzeConfig = load(args.config.as_deref())?;
    apply_hybrid(&mut cfg.hybrid, &args.hybrid);
    apply_chain(&mut cfg.bayes, &args.chain);
    if args.repeats == 0 {
        bail!("--repeats must be positive");
    }
    let series = match &args.input {
        Some(path) => load_input(path)?,
        None => {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.bayes.chain.seed);
            synth_cycle(&reference_trend(300, 8.0), 1.0, 150, 0.1, &mut rng)?
        }
    };
    let prep = prepare(&series)?;
    let rows = (0..args.repeats)
        .map(|repeat| {
            time_once(&prep, &cfg.hybrid, &cfg.bayes).map(|(h, b)| BenchRow {
                repeat,
                hybrid_seconds: h,
                bayes_seconds: b,
                ratio: b / h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    println!(
        "{:>6}  {:>12}  {:>12}  {:>8}",
        "repeat", "hybrid [s]", "bayes [s]", "ratio"
    );
    for r in &rows {
        println!(
            "{:>6}  {:>12.3}  {:>12.3}  {:>8.1}",
            r.repeat, r.hybrid_seconds, r.bayes_seconds, r.ratio
        );
    }
    if let Some(dir) = &args.out_dir {
        let mut staging = Staging::new(dir)?;
        staging.json(
            "bench.json",
            &json!({
                "n": series.len(),
                "threads": rayon::current_num_threads(),
                "rows": rows,
                "config": cfg,
            }),
        )?;
        staging.commit()?;
    }
    Ok(Status::Ok)
}

fn time_once(prep: &Prepared<f64>, hybrid: &HybridOptions, bayes: &BayesOptions) -> Result<(f64, f64)> {
    let t0 = Instant::now();
    let outcome = run_hybrid(prep, hybrid)?;
    let h = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let model = bayes_model(prep, bayes)?;
    run_bayes(prep, &model, outcome.anchored_priors(), bayes)?;
    Ok((h, t1.elapsed().as_secs_f64()))
}
