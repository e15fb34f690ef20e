//! Long-run time averages along nonlinear paths, batch-means errors and the
//! Lyapunov integral diagnostic.

use crate::error::{Error, Result};
use crate::hilbert::{FockOperator, QuantumState};
use crate::model::ModelSpec;
use crate::nsse::stderr_or_zero;
use crate::scalar::{cabs, real, to_f64, Real};
use crate::stats::{batch_means, mean_stderr, Estimate};
use crate::trajectory::{common_grid, Trajectory};

/// Running-average checkpoints reported by [`time_average`].
pub const CHECKPOINTS: usize = 10;
/// Batches per window for batch-means errors.
pub const BATCHES: usize = 16;
/// Windows compared by [`empirical_measure_summary`].
pub const SUMMARY_WINDOWS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum ObservableKind<T: Real> {
    /// `‖x‖`.
    Norm,
    /// `Re<x, A x>`.
    Expectation(FockOperator<T>),
    /// `‖A x‖²`.
    SqNorm(FockOperator<T>),
    /// `|<e_j, x>|²`.
    Population(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observable<T: Real> {
    pub name: String,
    pub kind: ObservableKind<T>,
}

impl<T: Real> Observable<T> {
    pub fn norm() -> Self {
        Self { name: "norm".into(), kind: ObservableKind::Norm }
    }

    pub fn expectation(name: impl Into<String>, op: FockOperator<T>) -> Self {
        Self { name: name.into(), kind: ObservableKind::Expectation(op) }
    }

    pub fn sq_norm(name: impl Into<String>, op: FockOperator<T>) -> Self {
        Self { name: name.into(), kind: ObservableKind::SqNorm(op) }
    }

    pub fn population(level: usize) -> Self {
        Self { name: format!("p{level}"), kind: ObservableKind::Population(level) }
    }

    pub fn eval(&self, x: &QuantumState<T>) -> Result<T> {
        match &self.kind {
            ObservableKind::Norm => Ok(x.norm()),
            ObservableKind::Expectation(op) => Ok(x.expectation(op)?.re),
            ObservableKind::SqNorm(op) => Ok(op.apply(x)?.norm_sqr()),
            ObservableKind::Population(j) => {
                if *j >= x.dim() {
                    return Err(Error::InvalidConfig(format!("level {j} outside a basis of {}", x.dim())));
                }
                Ok(x.population(*j))
            }
        }
    }
}

/// `10 / rate` with `rate` the smallest squared nonzero channel entry, a
/// crude estimate of the slowest relaxation rate. `None` without channels.
pub fn default_burn_in<T: Real>(m: &ModelSpec<T>) -> Option<T> {
    let rate = m
        .channels()
        .iter()
        .filter_map(|l| l.entries().map(|(_, _, z)| cabs(z)).filter(|&a| a > T::zero()).reduce(|a, b| a.min(b)))
        .map(|a| a * a)
        .reduce(|a, b| a.min(b))?;
    Some(real::<T>(10.0) / rate)
}

/// Trapezoidal average of `values` over `times`, anchored at the first
/// value so constant samples average to themselves exactly.
fn trapezoid<T: Real>(times: &[T], values: &[T]) -> T {
    let anchor = values[0];
    let span = times[times.len() - 1] - times[0];
    if span == T::zero() {
        return anchor;
    }
    let half = real::<T>(0.5);
    let area = (1..values.len()).fold(T::zero(), |acc, i| {
        acc + half * ((values[i - 1] - anchor) + (values[i] - anchor)) * (times[i] - times[i - 1])
    });
    anchor + area / span
}

fn window_indices<T: Real>(times: &[T], t0: T, t1: T, dt: T) -> (usize, usize) {
    let eps = dt * real::<T>(1e-6);
    let start = times.iter().position(|&t| t >= t0 - eps).unwrap_or(times.len());
    let end = times.iter().rposition(|&t| t <= t1 + eps).map_or(0, |i| i + 1);
    (start, end.max(start))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeAverage<T: Real> {
    /// Trapezoidal average over `[burn_in, t_final]`.
    pub value: T,
    /// Batch-means standard error.
    pub stderr: T,
    /// `(t, running average over [burn_in, t])`.
    pub checkpoints: Vec<(T, T)>,
    pub batches: Vec<T>,
}

/// Average of `f(X_s)` over `[burn_in, t_final]` of one path.
pub fn time_average<T: Real, F>(traj: &Trajectory<T>, f: F, burn_in: T) -> Result<TimeAverage<T>>
where
    F: Fn(&QuantumState<T>) -> T,
{
    let t_final = *traj.times.last().expect("nonempty");
    if !(burn_in >= T::zero() && burn_in < t_final) {
        return Err(Error::InvalidBurnIn { burn_in: to_f64(burn_in), t_final: to_f64(t_final) });
    }
    let (start, end) = window_indices(&traj.times, burn_in, t_final, traj.dt);
    let times = &traj.times[start..end];
    let values: Vec<T> = traj.states[start..end].iter().map(&f).collect();
    if values.len() < BATCHES.max(CHECKPOINTS + 1) {
        return Err(Error::TooFewSamples { needed: BATCHES.max(CHECKPOINTS + 1), found: values.len() });
    }
    let n = values.len();
    let checkpoints = (1..=CHECKPOINTS)
        .map(|k| {
            let last = (k * (n - 1)).div_ceil(CHECKPOINTS);
            (times[last], trapezoid(&times[..=last], &values[..=last]))
        })
        .collect();
    let batches = batch_means(&values, BATCHES)?;
    let stderr = mean_stderr(&batches)?.stderr;
    Ok(TimeAverage { value: trapezoid(times, &values), stderr, checkpoints, batches })
}

/// Batch means over `[t0, t1]` pooled across the ensemble: the mean of all
/// `n·BATCHES` batch means and its standard error.
pub fn window_average<T: Real, F>(ensemble: &[Trajectory<T>], f: F, t0: T, t1: T) -> Result<Estimate<T>>
where
    F: Fn(&QuantumState<T>) -> T,
{
    let times = common_grid(ensemble)?;
    let (start, end) = window_indices(times, t0, t1, ensemble[0].dt);
    let mut pooled = Vec::with_capacity(ensemble.len() * BATCHES);
    for tr in ensemble {
        let values: Vec<T> = tr.states[start..end].iter().map(&f).collect();
        pooled.extend(batch_means(&values, BATCHES)?);
    }
    mean_stderr(&pooled)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowComparison<T: Real> {
    pub first: Estimate<T>,
    pub second: Estimate<T>,
    /// `|first - second| <= 3 sqrt(se1² + se2²)`.
    pub agree: bool,
}

/// Averages over `[b, b+w]` and `[b+w, b+2w]`, the two-time stationarity test.
pub fn compare_windows<T: Real, F>(ensemble: &[Trajectory<T>], f: F, b: T, w: T) -> Result<WindowComparison<T>>
where
    F: Fn(&QuantumState<T>) -> T,
{
    let first = window_average(ensemble, &f, b, b + w)?;
    let second = window_average(ensemble, &f, b + w, b + w + w)?;
    let agree = first.agrees_with(&second, real::<T>(3.0), T::zero());
    Ok(WindowComparison { first, second, agree })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovReport<T: Real> {
    pub times: Vec<T>,
    /// `∫_0^t E‖D X_s‖² ds` with its standard error.
    pub integral: Vec<Estimate<T>>,
    /// `E‖C X_0‖² + 2βt`.
    pub bound: Vec<T>,
    /// `(1/t) ∫_0^t E‖D X_s‖² ds`, the time-average constant estimate.
    pub time_average: Vec<T>,
    /// Indices where the integral exceeds the bound by more than 3 standard errors.
    pub violations: Vec<usize>,
}

impl<T: Real> LyapunovReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Final time-average constant.
    pub fn k_hat(&self) -> T {
        *self.time_average.last().expect("nonempty")
    }
}

/// Empirical Lyapunov integral along the ensemble.
pub fn lyapunov_diagnostic<T: Real>(
    ensemble: &[Trajectory<T>],
    d: &FockOperator<T>,
    c: &FockOperator<T>,
    beta: T,
) -> Result<LyapunovReport<T>> {
    let times = common_grid(ensemble)?.to_vec();
    let half = real::<T>(0.5);
    let mut paths = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        let dx: Vec<T> = tr.states.iter().map(|s| Ok(d.apply(s)?.norm_sqr())).collect::<Result<_>>()?;
        let mut acc = T::zero();
        let mut integral = Vec::with_capacity(times.len());
        integral.push(T::zero());
        for i in 1..times.len() {
            acc += half * (dx[i - 1] + dx[i]) * (times[i] - times[i - 1]);
            integral.push(acc);
        }
        paths.push((dx[0], integral));
    }
    let c0 = mean_stderr(&ensemble.iter().map(|tr| Ok(c.apply(&tr.states[0])?.norm_sqr())).collect::<Result<Vec<T>>>()?)?.value;
    let mut integral = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        integral.push(mean_stderr(&paths.iter().map(|(_, p)| p[j]).collect::<Vec<_>>())?);
    }
    let d0 = mean_stderr(&paths.iter().map(|(v, _)| *v).collect::<Vec<_>>())?.value;
    let two = real::<T>(2.0);
    let bound: Vec<T> = times.iter().map(|&t| c0 + two * beta * t).collect();
    let time_average = times.iter().zip(&integral).map(|(&t, e)| if t > T::zero() { e.value / t } else { d0 }).collect();
    let three = real::<T>(3.0);
    let violations = integral
        .iter()
        .zip(&bound)
        .enumerate()
        .filter(|(_, (e, &b))| e.value > b + three * stderr_or_zero(e))
        .map(|(j, _)| j)
        .collect();
    Ok(LyapunovReport { times, integral, bound, time_average, violations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow<T: Real> {
    pub name: String,
    /// Time-and-ensemble average over `[burn_in, t_final]`.
    pub overall: Estimate<T>,
    /// Averages over equal consecutive windows after burn-in.
    pub windows: Vec<Estimate<T>>,
    /// Every window exceeds the previous one by more than 3 combined
    /// standard errors.
    pub monotone_growth: bool,
}

/// Per-observable averages over the ensemble after `burn_in`.
pub fn empirical_measure_summary<T: Real>(
    ensemble: &[Trajectory<T>],
    battery: &[Observable<T>],
    burn_in: T,
) -> Result<Vec<SummaryRow<T>>> {
    if battery.is_empty() {
        return Err(Error::EmptyBattery);
    }
    let times = common_grid(ensemble)?;
    let t_final = *times.last().expect("nonempty");
    if !(burn_in >= T::zero() && burn_in < t_final) {
        return Err(Error::InvalidBurnIn { burn_in: to_f64(burn_in), t_final: to_f64(t_final) });
    }
    let width = (t_final - burn_in) / real::<T>(SUMMARY_WINDOWS as f64);
    let three = real::<T>(3.0);
    battery
        .iter()
        .map(|obs| {
            let f = |x: &QuantumState<T>| obs.eval(x).unwrap_or_else(|_| real::<T>(f64::NAN));
            let overall = window_average(ensemble, f, burn_in, t_final)?;
            let windows = (0..SUMMARY_WINDOWS)
                .map(|w| {
                    let a = burn_in + width * real::<T>(w as f64);
                    window_average(ensemble, f, a, a + width)
                })
                .collect::<Result<Vec<_>>>()?;
            let monotone_growth = windows.windows(2).all(|p| {
                let sigma = (p[0].stderr * p[0].stderr + p[1].stderr * p[1].stderr).sqrt();
                p[1].value - p[0].value > three * sigma
            });
            Ok(SummaryRow { name: obs.name.clone(), overall, windows, monotone_growth })
        })
        .collect()
}
