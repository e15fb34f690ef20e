//! Subcommand execution. Every command returns a [`Summary`]: results plus
//! named checks, each of which can be switched off through `checks.disable`.

use serde::Serialize;

use nsse::criteria::criteria_report;
use nsse::girsanov::{normalize_ensemble, weighted_expectation};
use nsse::hilbert::{ladder_ops, quadratures};
use nsse::lindblad::{compare_mc_density, evolve_density_at, stationary_kernel, steady_state};
use nsse::nsse::ensemble_nsse;
use nsse::sse_linear::ensemble_linear;
use nsse::stationary::{compare_windows, window_average, Observable, ObservableKind};
use nsse::stats::mean_stderr;
use nsse::{Density, Model, Traj};

use crate::config::Resolved;
use crate::CliError;

/// Observable by name: `norm`, `N`, `N2` (`‖N x‖²`), `Q`, `P` or `popK`.
pub fn parse_observable(name: &str, dim: usize) -> Result<Observable<f64>, CliError> {
    let l = ladder_ops::<f64>(dim)?;
    let (q, p) = quadratures::<f64>(dim)?;
    let obs = match name {
        "norm" => Observable::norm(),
        "N" => Observable::expectation("N", l.number),
        "N2" => Observable::sq_norm("N2", l.number),
        "Q" => Observable::expectation("Q", q),
        "P" => Observable::expectation("P", p),
        _ => match name.strip_prefix("pop").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k < dim => Observable { name: name.to_string(), kind: ObservableKind::Population(k) },
            _ => return Err(CliError::Config(format!("unknown observable `{name}` for dim {dim}"))),
        },
    };
    Ok(obs)
}

/// Value of an observable in a density matrix: `tr(A ρ)`, with `‖A x‖²`
/// read as `tr(A†A ρ)` and the norm as `tr ρ`.
fn density_value(obs: &Observable<f64>, rho: &Density) -> Result<f64, CliError> {
    Ok(match &obs.kind {
        ObservableKind::Norm => rho.trace().re,
        ObservableKind::Expectation(op) => rho.expectation(op)?,
        ObservableKind::SqNorm(op) => rho.expectation(&(&op.adjoint() * op))?,
        ObservableKind::Population(j) => rho.population(*j),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub version: &'static str,
    pub config: Resolved,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Collects checks, dropping disabled ones.
struct Checks<'a> {
    cfg: &'a Resolved,
    list: Vec<Check>,
}

impl<'a> Checks<'a> {
    fn new(cfg: &'a Resolved) -> Self {
        Self { cfg, list: Vec::new() }
    }

    fn push(&mut self, family: &str, name: String, passed: bool, detail: String) {
        if self.cfg.enabled(family) {
            self.list.push(Check { name, passed, detail });
        }
    }

    /// `dt ‖G‖∞ <= max_step_scale`: the explicit step resolves the drift.
    fn step_scale(&mut self, m: &Model) -> f64 {
        let scale = self.cfg.solver.dt * m.drift().row_sum_norm();
        let limit = self.cfg.checks.max_step_scale;
        self.push("step_scale", "step_scale".into(), scale <= limit, format!("dt*|G| = {scale:.4e}, limit {limit:.4e}"));
        scale
    }

    fn finish(self, command: &'static str, results: serde_json::Value) -> Summary {
        let failures = self.list.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
        Summary {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.cfg.clone(),
            results,
            checks: self.list,
            failures,
        }
    }
}

#[derive(Serialize)]
struct Series {
    name: String,
    mean: Vec<f64>,
    stderr: Vec<f64>,
}

fn observables(cfg: &Resolved) -> Result<Vec<Observable<f64>>, CliError> {
    cfg.checks.observables.iter().map(|o| parse_observable(o, cfg.model.dim)).collect()
}

fn json<S: Serialize>(s: &S) -> serde_json::Value {
    serde_json::to_value(s).expect("results serialize")
}

/// Plain ensemble mean, for raw linear paths whose weight is not a
/// probability weight.
fn plain_mean(ensemble: &[Traj], obs: &Observable<f64>, j: usize) -> Result<(f64, f64), CliError> {
    let xs = ensemble.iter().map(|tr| obs.eval(&tr.states()[j])).collect::<Result<Vec<_>, _>>()?;
    let e = mean_stderr(&xs)?;
    Ok((e.value, e.stderr))
}

/// Mean squared norm at every recorded time, checked against its initial
/// value at the check times: `|E‖φ_t‖² - E‖φ_0‖²| <= k·stderr + slack·dt`.
/// Testing every recorded time would flag a few percent of 3σ excursions.
fn martingale(checks: &mut Checks, raw: &[Traj]) -> Result<Series, CliError> {
    let (k, slack, dt) = (checks.cfg.checks.k_sigma, checks.cfg.checks.dt_slack, checks.cfg.solver.dt);
    let n = raw[0].times().len();
    let mut series = Series { name: "sq_norm".into(), mean: Vec::with_capacity(n), stderr: Vec::with_capacity(n) };
    for j in 0..n {
        let xs: Vec<f64> = raw.iter().map(|tr| tr.sq_norm()[j]).collect();
        let e = mean_stderr(&xs)?;
        series.mean.push(e.value);
        series.stderr.push(e.stderr);
    }
    let initial = series.mean[0];
    for &t in &checks.cfg.checks.check_times {
        let j = raw[0].time_index(t)?;
        let (v, se) = (series.mean[j], series.stderr[j]);
        checks.push(
            "martingale",
            format!("martingale:t={t}"),
            (v - initial).abs() <= k * se + slack * dt,
            format!("{v:.6} +- {se:.2e} vs {initial:.6}"),
        );
    }
    Ok(series)
}

pub fn simulate(cfg: &Resolved) -> Result<(Summary, Vec<Traj>), CliError> {
    let m = cfg.build_model()?;
    let x0 = cfg.initial_state();
    let sc = cfg.solver_config();
    let obs = observables(cfg)?;
    let mut checks = Checks::new(cfg);
    let step_scale = checks.step_scale(&m);
    let method = cfg.ensemble.method.as_str();
    let (ensemble, sq_norm, degenerate) = match method {
        "nsse" => (ensemble_nsse(&m, &x0, &sc)?, None, Vec::new()),
        _ => {
            let raw = ensemble_linear(&m, &x0, &sc)?;
            let series = martingale(&mut checks, &raw)?;
            if method == "linear" {
                (raw, Some(series), Vec::new())
            } else {
                let w = normalize_ensemble(&raw)?;
                let degenerate = w.degenerate;
                checks.push("weights", "weights".into(), degenerate.is_empty(), format!("{} degenerate paths", degenerate.len()));
                if w.trajectories.is_empty() {
                    return Err(CliError::Run(nsse::Error::ZeroWeights));
                }
                (w.trajectories, Some(series), degenerate)
            }
        }
    };
    let times = ensemble[0].times().to_vec();
    let mut series = Vec::with_capacity(obs.len());
    for o in &obs {
        let mut s = Series { name: o.name.clone(), mean: Vec::with_capacity(times.len()), stderr: Vec::with_capacity(times.len()) };
        for (j, &t) in times.iter().enumerate() {
            let (v, se) = if method == "linear" {
                plain_mean(&ensemble, o, j)?
            } else {
                let e = weighted_expectation(&ensemble, |x| o.eval(x).unwrap_or(f64::NAN), t)?;
                (e.value, e.stderr)
            };
            s.mean.push(v);
            s.stderr.push(se);
        }
        series.push(s);
    }
    let deviation = ensemble
        .iter()
        .flat_map(|tr| tr.states().iter().map(|x| (x.norm() - 1.0).abs()))
        .fold(0.0, f64::max);
    if method != "linear" && cfg.solver.renormalize {
        let tol = cfg.checks.norm_tol;
        checks.push("norm", "norm".into(), deviation <= tol, format!("max |norm - 1| = {deviation:.3e}, tolerance {tol:.1e}"));
    }

    #[derive(Serialize)]
    struct Results {
        method: String,
        n_traj: usize,
        step_scale: f64,
        times: Vec<f64>,
        observables: Vec<Series>,
        max_norm_deviation: f64,
        sq_norm: Option<Series>,
        degenerate: Vec<usize>,
    }
    let results = Results {
        method: method.to_string(),
        n_traj: ensemble.len(),
        step_scale,
        times,
        observables: series,
        max_norm_deviation: deviation,
        sq_norm,
        degenerate,
    };
    Ok((checks.finish("simulate", json(&results)), ensemble))
}

/// RK4 step for the master equation: the solver step, capped for stability.
fn master_step(cfg: &Resolved, m: &Model) -> f64 {
    cfg.solver.dt.min(0.25 / m.drift().row_sum_norm().max(1.0))
}

pub fn compare(cfg: &Resolved) -> Result<Summary, CliError> {
    let m = cfg.build_model()?;
    let x0 = cfg.initial_state();
    let sc = cfg.solver_config();
    let obs = observables(cfg)?;
    let (k, slack, dt) = (cfg.checks.k_sigma, cfg.checks.dt_slack, cfg.solver.dt);
    let mut checks = Checks::new(cfg);
    let step_scale = checks.step_scale(&m);

    let direct = ensemble_nsse(&m, &x0, &sc)?;
    let raw = ensemble_linear(&m, &x0, &sc)?;
    let sq_norm = martingale(&mut checks, &raw)?;
    let weighted = normalize_ensemble(&raw)?;
    checks.push(
        "weights",
        "weights".into(),
        weighted.degenerate.is_empty(),
        format!("{} degenerate paths", weighted.degenerate.len()),
    );
    let weighted = weighted.trajectories;
    if weighted.is_empty() {
        return Err(CliError::Run(nsse::Error::ZeroWeights));
    }
    let rho0 = Density::from_state(&x0)?;
    let references = evolve_density_at(&rho0, &m, &cfg.checks.check_times, master_step(cfg, &m))?;

    #[derive(Serialize)]
    struct Distance {
        t: f64,
        estimator: &'static str,
        trace_distance: f64,
        aggregate_sigma: f64,
        insufficient: bool,
    }
    #[derive(Serialize)]
    struct Agreement {
        t: f64,
        observable: String,
        lindblad: f64,
        direct: f64,
        direct_stderr: f64,
        weighted: f64,
        weighted_stderr: f64,
    }
    let mut distances = Vec::new();
    let mut agreements = Vec::new();
    for (&t, rho) in cfg.checks.check_times.iter().zip(&references) {
        for (label, ens) in [("direct", &direct), ("weighted", &weighted)] {
            let c = compare_mc_density(ens, t, rho)?;
            let passed = c.passes(k, slack * dt);
            checks.push(
                "trace_distance",
                format!("trace_distance:{label}:t={t}"),
                passed,
                format!(
                    "{:.4e} vs bound {:.4e}{}",
                    c.trace_distance,
                    k * c.aggregate_sigma + slack * dt,
                    if c.insufficient { " (ensemble too small)" } else { "" }
                ),
            );
            distances.push(Distance {
                t,
                estimator: label,
                trace_distance: c.trace_distance,
                aggregate_sigma: c.aggregate_sigma,
                insufficient: c.insufficient,
            });
        }
        for o in &obs {
            let reference = density_value(o, rho)?;
            let f = |x: &nsse::State| o.eval(x).unwrap_or(f64::NAN);
            let d = weighted_expectation(&direct, f, t)?;
            let w = weighted_expectation(&weighted, f, t)?;
            let within = |v: f64, se: f64, r: f64, rse: f64| (v - r).abs() <= k * (se * se + rse * rse).sqrt() + slack * dt;
            for (label, e) in [("direct", &d), ("weighted", &w)] {
                checks.push(
                    "observables",
                    format!("observable:{}:{label}-lindblad:t={t}", o.name),
                    within(e.value, e.stderr, reference, 0.0),
                    format!("{:.6} +- {:.2e} vs {reference:.6}", e.value, e.stderr),
                );
            }
            checks.push(
                "observables",
                format!("observable:{}:direct-weighted:t={t}", o.name),
                within(d.value, d.stderr, w.value, w.stderr),
                format!("{:.6} +- {:.2e} vs {:.6} +- {:.2e}", d.value, d.stderr, w.value, w.stderr),
            );
            agreements.push(Agreement {
                t,
                observable: o.name.clone(),
                lindblad: reference,
                direct: d.value,
                direct_stderr: d.stderr,
                weighted: w.value,
                weighted_stderr: w.stderr,
            });
        }
    }

    #[derive(Serialize)]
    struct Results {
        n_traj: usize,
        step_scale: f64,
        master_step: f64,
        distances: Vec<Distance>,
        observables: Vec<Agreement>,
        sq_norm: Series,
    }
    let results = Results {
        n_traj: direct.len(),
        step_scale,
        master_step: master_step(cfg, &m),
        distances,
        observables: agreements,
        sq_norm,
    };
    Ok(checks.finish("compare", json(&results)))
}

pub fn criteria(cfg: &Resolved, enforce: bool) -> Result<Summary, CliError> {
    let params = cfg
        .preset()
        .oscillator_params()
        .ok_or_else(|| CliError::Config(format!("preset `{}` is not an oscillator", cfg.model.preset)))?;
    let [lo, hi] = cfg.checks.levels;
    let r = criteria_report(&params, cfg.checks.p, cfg.model.dim, Some(lo..hi), Some(cfg.checks.h13_levels))?;
    let mut checks = Checks::new(cfg);
    if enforce {
        checks.push("theorem7", "theorem7".into(), r.theorem7, format!("predicate {}", r.theorem7));
        checks.push("theorem8", "theorem8".into(), r.theorem8, format!("predicate {} at p = {}", r.theorem8, r.p));
    }

    #[derive(Serialize)]
    struct Row {
        j: usize,
        c: f64,
        ratio: f64,
    }
    #[derive(Serialize)]
    struct H13 {
        alpha: f64,
        beta: f64,
        levels: usize,
        certified_states: usize,
    }
    #[derive(Serialize)]
    struct Results {
        p: u32,
        theorem7: bool,
        theorem8: bool,
        leading_coefficient: f64,
        leading_slope: f64,
        h13: Option<H13>,
        h13_error: Option<String>,
        table: Vec<Row>,
    }
    let (h13, h13_error) = match r.h13 {
        Ok(h) => (Some(H13 { alpha: h.alpha, beta: h.beta, levels: h.levels, certified_states: h.certified_states }), None),
        Err(e) => (None, Some(e)),
    };
    let table = r.levels.clone().zip(r.cj.iter().zip(&r.ratios)).map(|(j, (&c, &ratio))| Row { j, c, ratio }).collect();
    let results = Results {
        p: r.p,
        theorem7: r.theorem7,
        theorem8: r.theorem8,
        leading_coefficient: r.leading_coefficient,
        leading_slope: r.leading_slope,
        h13,
        h13_error,
        table,
    };
    Ok(checks.finish("criteria", json(&results)))
}

pub fn steady(cfg: &Resolved) -> Result<Summary, CliError> {
    let m = cfg.build_model()?;
    let mut checks = Checks::new(cfg);
    let step_scale = checks.step_scale(&m);
    let kernel = stationary_kernel(&m)?;

    #[derive(Serialize)]
    struct Row {
        observable: String,
        stationary: f64,
        time_average: f64,
        stderr: f64,
        first_window: f64,
        second_window: f64,
    }
    #[derive(Serialize)]
    struct Results {
        kernel_dimension: usize,
        smallest_singular_values: Vec<f64>,
        step_scale: f64,
        burn_in: f64,
        rows: Vec<Row>,
    }
    let mut results = Results {
        kernel_dimension: kernel.dimension,
        smallest_singular_values: kernel.smallest_singular_values.clone(),
        step_scale,
        burn_in: cfg.checks.burn_in,
        rows: Vec::new(),
    };
    if kernel.dimension != 1 {
        // Reported, never fatal: the kernel dimension is the finding.
        checks.list.push(Check {
            name: "unique_steady_state".into(),
            passed: false,
            detail: format!("stationary kernel has dimension {}", kernel.dimension),
        });
        return Ok(checks.finish("steady", json(&results)));
    }
    let rho = steady_state(&m)?;
    let obs = observables(cfg)?;
    let sc = cfg.solver_config();
    let ensemble = ensemble_nsse(&m, &cfg.initial_state(), &sc)?;
    let (b, t_final, k) = (cfg.checks.burn_in, cfg.solver.t_final, cfg.checks.k_sigma);
    let w = 0.5 * (t_final - b);
    for o in &obs {
        let f = |x: &nsse::State| o.eval(x).unwrap_or(f64::NAN);
        let stationary = density_value(o, &rho)?;
        let avg = window_average(&ensemble, f, b, t_final)?;
        checks.push(
            "observables",
            format!("time_average:{}", o.name),
            (avg.value - stationary).abs() <= k * avg.stderr,
            format!("{:.6} +- {:.2e} vs {stationary:.6}", avg.value, avg.stderr),
        );
        let windows = compare_windows(&ensemble, f, b, w)?;
        checks.push(
            "stationarity",
            format!("stationarity:{}", o.name),
            windows.agree,
            format!("{:.6} vs {:.6}", windows.first.value, windows.second.value),
        );
        results.rows.push(Row {
            observable: o.name.clone(),
            stationary,
            time_average: avg.value,
            stderr: avg.stderr,
            first_window: windows.first.value,
            second_window: windows.second.value,
        });
    }
    Ok(checks.finish("steady", json(&results)))
}
