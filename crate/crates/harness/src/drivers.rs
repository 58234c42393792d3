//! Experiment drivers: single evolutions, time-step ladders for
//! convergence and cost studies, and coupled runs. Each driver returns an
//! in-memory report; [`write_report`] turns it into files.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use nlac::coupled::{run_coupled, CoupledOutput, CoupledRecord};
use nlac::stepper::{run, Counters, EnergyTrace, RunOptions, RunOutput, Scheme, SchemeConfig};
use nlac::{norm_h, Field64, Grid64, KernelGrid64};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::initial::initial_condition;
use crate::output::{self, Created, ErrorRow, SnapshotManifest};

/// Everything a driver needs that is derived from the config once.
pub struct Setup {
    pub grid: Grid64,
    pub kernel: KernelGrid64,
    pub u0: Field64,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let kernel = cfg.kernel(&grid)?;
        let u0 = initial_condition(
            &cfg.initial.name,
            &grid,
            &cfg.initial.params,
            cfg.experiment.seed,
            cfg.kernel.epsilon,
        )?;
        Ok(Self { grid, kernel, u0 })
    }
}

pub struct EvolveReport {
    pub output: RunOutput<f64>,
    pub xi_n: f64,
    pub wall_seconds: f64,
}

pub fn evolve(cfg: &ExperimentConfig) -> Result<EvolveReport> {
    let setup = Setup::new(cfg)?;
    let scheme = cfg.scheme_config()?;
    scheme.warn_on_step_restrictions(setup.kernel.xi_n(cfg.potential.c_f));
    let start = Instant::now();
    let output = run(
        &setup.u0,
        &setup.kernel,
        &scheme,
        &cfg.experiment.snapshot_times,
        RunOptions::default(),
    )?;
    Ok(EvolveReport {
        output,
        xi_n: setup.kernel.xi_n(cfg.potential.c_f),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One run of a ladder.
#[derive(Clone, Debug)]
pub struct LadderRun {
    pub scheme: Scheme,
    /// Halvings of `tau0`.
    pub rung: u32,
    pub tau: f64,
    pub steps: usize,
    pub error: f64,
    pub order: Option<f64>,
    pub counters: Counters,
    /// Largest `(E_k - E_{k-1}) / (1 + |E_{k-1}|)`.
    pub worst_energy_increase: f64,
    /// `max |u|` over all nodes and steps, the initial state included.
    pub max_abs: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SchemeLadder {
    pub scheme: Scheme,
    pub runs: Vec<LadderRun>,
    /// Least-squares slope of `ln error` against `ln tau`.
    pub fitted_order: Option<f64>,
}

impl SchemeLadder {
    pub fn error_rows(&self) -> Vec<ErrorRow> {
        self.runs
            .iter()
            .map(|r| ErrorRow {
                tau: r.tau,
                error: r.error,
                order: r.order,
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct LadderReport {
    pub benchmark: LadderRun,
    pub ladders: Vec<SchemeLadder>,
    pub xi_n: f64,
    pub wall_seconds: f64,
}

impl LadderReport {
    pub fn ladder(&self, scheme: Scheme) -> Option<&SchemeLadder> {
        self.ladders.iter().find(|l| l.scheme == scheme)
    }

    pub fn all_runs(&self) -> impl Iterator<Item = &LadderRun> {
        std::iter::once(&self.benchmark).chain(self.ladders.iter().flat_map(|l| l.runs.iter()))
    }
}

/// `log2(e_{k-1} / e_k)` for consecutive halvings.
pub fn successive_orders(errors: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None)
        .chain(errors.windows(2).map(|w| Some((w[0] / w[1]).log2())))
        .collect()
}

/// Least-squares slope of `ln error` against `ln tau` over the last
/// `last` rows, skipping rows whose error is below `floor` or not
/// positive. `None` with fewer than two usable rows.
pub fn fit_order(taus: &[f64], errors: &[f64], last: usize, floor: Option<f64>) -> Option<f64> {
    let start = taus.len().saturating_sub(last);
    let pts: Vec<(f64, f64)> = taus[start..]
        .iter()
        .zip(&errors[start..])
        .filter(|&(_, &e)| e > 0.0 && floor.is_none_or(|f| e >= f))
        .map(|(&t, &e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

struct Job {
    scheme: Scheme,
    rung: u32,
}

fn ladder_run(
    job: &Job,
    setup: &Setup,
    cfg: &ExperimentConfig,
    tau: f64,
) -> Result<(LadderRun, Field64)> {
    let scheme_cfg: SchemeConfig<f64> = cfg.scheme_config_for(job.scheme, tau)?;
    let start = Instant::now();
    let out = run(&setup.u0, &setup.kernel, &scheme_cfg, &[], RunOptions::default())?;
    let max_abs = out
        .trace
        .records
        .iter()
        .map(|r| r.max_abs)
        .fold(setup.u0.max_abs(), f64::max);
    let run = LadderRun {
        scheme: job.scheme,
        rung: job.rung,
        tau,
        steps: scheme_cfg.steps,
        error: f64::NAN,
        order: None,
        counters: out.counters,
        worst_energy_increase: out.trace.worst_relative_increase(),
        max_abs,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    info!(
        "{} tau = {tau:e}: {} steps in {:.1} s",
        job.scheme, run.steps, run.wall_seconds
    );
    Ok((run, out.state.u))
}

/// Runs every scheme of the ladder at `tau0 * 2^-k`, `k < rungs`, and a
/// second-order implicit benchmark at `tau0 * 2^-benchmark_halvings`, all
/// to `t_end`; errors are `norm_h` distances to the benchmark at `t_end`.
/// Runs are independent and execute in parallel.
pub fn ladder_study(cfg: &ExperimentConfig) -> Result<LadderReport> {
    let setup = Setup::new(cfg)?;
    let ladder = &cfg.ladder;
    let schemes = cfg.ladder_schemes()?;
    let start = Instant::now();

    let mut jobs = vec![Job {
        scheme: Scheme::SecondOrderImplicit,
        rung: ladder.benchmark_halvings,
    }];
    for &scheme in &schemes {
        jobs.extend((0..ladder.rungs as u32).map(|rung| Job { scheme, rung }));
    }
    let tau_of = |rung: u32| ladder.tau0 * 0.5f64.powi(rung as i32);
    let mut results: Vec<(LadderRun, Field64)> = jobs
        .par_iter()
        .map(|job| ladder_run(job, &setup, cfg, tau_of(job.rung)))
        .collect::<Result<_>>()?;

    let (mut benchmark, reference) = results.remove(0);
    benchmark.error = 0.0;
    let mut ladders = Vec::with_capacity(schemes.len());
    for &scheme in &schemes {
        let mut runs = Vec::with_capacity(ladder.rungs);
        for (mut r, u) in results.iter().filter(|(r, _)| r.scheme == scheme).cloned() {
            r.error = norm_h(&u.combine(1.0, &reference, -1.0)?);
            runs.push(r);
        }
        let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
        let taus: Vec<f64> = runs.iter().map(|r| r.tau).collect();
        for (r, o) in runs.iter_mut().zip(successive_orders(&errors)) {
            r.order = o;
        }
        let fitted_order = fit_order(&taus, &errors, ladder.fit_last, ladder.error_floor);
        ladders.push(SchemeLadder {
            scheme,
            runs,
            fitted_order,
        });
    }
    Ok(LadderReport {
        benchmark,
        ladders,
        xi_n: setup.kernel.xi_n(cfg.potential.c_f),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub struct CoupledReport {
    pub output: CoupledOutput<f64>,
    pub wall_seconds: f64,
}

pub fn coupled(cfg: &ExperimentConfig) -> Result<CoupledReport> {
    let setup = Setup::new(cfg)?;
    let ccfg = cfg.coupled_config()?;
    let theta0 = Field64::constant(&setup.grid, cfg.coupled.as_ref().map_or(0.0, |c| c.theta0));
    let start = Instant::now();
    let output = run_coupled(&setup.u0, &theta0, &setup.kernel, &ccfg, &cfg.experiment.snapshot_times)?;
    Ok(CoupledReport {
        output,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub enum Report {
    Evolve(EvolveReport),
    Converge(LadderReport),
    Cost(LadderReport),
    Coupled(CoupledReport),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    Ok(match cfg.experiment.kind {
        ExperimentKind::Evolve => Report::Evolve(evolve(cfg)?),
        ExperimentKind::Converge => Report::Converge(ladder_study(cfg)?),
        ExperimentKind::Cost => Report::Cost(ladder_study(cfg)?),
        ExperimentKind::Coupled => Report::Coupled(coupled(cfg)?),
    })
}

fn manifest(cfg: &ExperimentConfig, stem: &str, field: &str, step: usize, time: f64, requested: Option<f64>) -> SnapshotManifest {
    let grid = &cfg.grid;
    SnapshotManifest {
        file: format!("{stem}.bin"),
        field: field.to_string(),
        format: output::SNAPSHOT_FORMAT.to_string(),
        extents: vec![grid.extent; grid.dim],
        counts: vec![grid.points; grid.dim],
        step,
        time,
        requested_time: requested,
        grid: cfg.grid.clone(),
        kernel: cfg.kernel.clone(),
        potential: cfg.potential.clone(),
        scheme: cfg.scheme.clone(),
        seed: cfg.experiment.seed,
        created: Created::now(),
    }
}

fn coupled_csv(records: &[CoupledRecord]) -> String {
    let mut s = String::from("step,time,liquid_fraction,max_abs_m,theta_mean\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{}", r.k, r.time, r.liquid_fraction, r.max_abs_m, r.theta_mean);
    }
    s
}

fn ladder_summary_csv(report: &LadderReport) -> String {
    let mut s = String::from("scheme,tau,steps,convolutions,error,order,fp_iterations,worst_energy_increase,max_abs\n");
    for r in report.all_runs() {
        let order = r.order.map(|o| o.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.tau,
            r.steps,
            r.counters.scheme_convolutions,
            r.error,
            order,
            r.counters.fp_iterations,
            r.worst_energy_increase,
            r.max_abs
        );
    }
    s
}

/// Writes the report's files into `out` and returns a short summary.
pub fn write_report(cfg: &ExperimentConfig, report: &Report, out: &Path) -> Result<String> {
    output::ensure_dir(out)?;
    output::write_text(&out.join("config.toml"), &cfg.to_toml_string())?;
    let mut summary = String::new();
    match report {
        Report::Evolve(r) => {
            output::write_text(&out.join("trace.csv"), &output::trace_csv(&r.output.trace))?;
            for s in &r.output.snapshots {
                let stem = format!("u_{:06}", s.k);
                let m = manifest(cfg, &stem, "u", s.k, s.time, Some(s.requested_time));
                output::write_snapshot(out, &stem, &s.field, &m)?;
            }
            let c = r.output.counters;
            let _ = writeln!(
                summary,
                "{} steps, xi_N = {:.6}, scheme convolutions {}, FFT convolutions {}, fixed-point sweeps {}, {:.2} s",
                r.output.state.k, r.xi_n, c.scheme_convolutions, c.computed_convolutions, c.fp_iterations, r.wall_seconds
            );
            if let Some(e) = r.output.trace.energies().last() {
                let _ = writeln!(summary, "final energy {e}");
            }
        }
        Report::Converge(r) => {
            for l in &r.ladders {
                output::write_text(&out.join(format!("errors_{}.csv", l.scheme)), &output::error_csv(&l.error_rows()))?;
                let fit = l.fitted_order.map_or("n/a".to_string(), |o| format!("{o:.3}"));
                let _ = writeln!(summary, "{}: fitted order {fit}", l.scheme);
            }
            output::write_text(&out.join("runs.csv"), &ladder_summary_csv(r))?;
            let _ = writeln!(summary, "xi_N = {:.6}, {:.1} s", r.xi_n, r.wall_seconds);
        }
        Report::Cost(r) => {
            let mut s = String::from("scheme,tau,convolutions,error\n");
            for l in &r.ladders {
                for run in &l.runs {
                    let _ = writeln!(s, "{},{},{},{}", run.scheme, run.tau, run.counters.scheme_convolutions, run.error);
                }
            }
            output::write_text(&out.join("cost.csv"), &s)?;
            output::write_text(&out.join("runs.csv"), &ladder_summary_csv(r))?;
            let _ = writeln!(summary, "{} runs, {:.1} s", r.all_runs().count(), r.wall_seconds);
        }
        Report::Coupled(r) => {
            output::write_text(&out.join("coupled.csv"), &coupled_csv(&r.output.records))?;
            for s in &r.output.snapshots {
                for (name, field) in [("u", &s.u), ("theta", &s.theta)] {
                    let stem = format!("{name}_{:06}", s.k);
                    let m = manifest(cfg, &stem, name, s.k, s.time, None);
                    output::write_snapshot(out, &stem, field, &m)?;
                }
            }
            let last = r.output.records.last().ok_or_else(|| HarnessError::Config("no records".into()))?;
            let _ = writeln!(
                summary,
                "t = {}: liquid fraction {:.6}, mean theta {:.6}, {:.2} s",
                last.time, last.liquid_fraction, last.theta_mean, r.wall_seconds
            );
        }
    }
    Ok(summary)
}

/// Shared by tests and the CLI: the step-by-step energy check used for
/// monotonicity, `E_k - E_{k-1} <= tol (1 + |E_{k-1}|)`.
pub fn energy_is_monotone(trace: &EnergyTrace<f64>, tol: f64) -> bool {
    trace.worst_relative_increase() <= tol
}
