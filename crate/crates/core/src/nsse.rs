//! Nonlinear, norm-preserving stochastic Schrödinger equation
//! `dX = G(X) dt + Σ_k L_k(X) dW^k` with
//! `G(y) = Gy + Σ_k (r_k L_k y - ½ r_k² y)`, `L_k(y) = L_k y - r_k y` and
//! `r_k = Re<y, L_k y>`.
//!
//! Every state of the truncated space lies in the domain of every operator,
//! so the domain cutoff of the infinite-dimensional fields is the identity.

use crate::error::{Error, Result};
use crate::hilbert::{FockOperator, QuantumState, NORMALIZED_TOL};
use crate::model::ModelSpec;
use crate::scalar::{real, to_f64, Real};
use crate::stats::{mean_stderr, Estimate};
use crate::trajectory::{check_dim, common_grid, Dynamics, Integrator, SolverConfig, Trajectory};

/// Drift field `G(y)`; `y` is not normalized first.
pub fn drift_nonlinear<T: Real>(y: &QuantumState<T>, m: &ModelSpec<T>) -> Result<QuantumState<T>> {
    check_dim(m, y)?;
    let mut out = m.drift().apply(y)?;
    let half = real::<T>(0.5);
    for l in m.channels() {
        let ly = l.apply(y)?;
        let r = y.inner(&ly)?.re;
        out = &(&out + &ly.scaled_real(r)) - &y.scaled_real(half * r * r);
    }
    Ok(out)
}

/// Diffusion field `L_k(y)` of channel `k` (zero-based).
pub fn diffusion_nonlinear<T: Real>(y: &QuantumState<T>, m: &ModelSpec<T>, k: usize) -> Result<QuantumState<T>> {
    check_dim(m, y)?;
    let l = m.channels().get(k).ok_or(Error::ChannelIndex { index: k, count: m.channel_count() })?;
    let ly = l.apply(y)?;
    let r = y.inner(&ly)?.re;
    Ok(&ly - &y.scaled_real(r))
}

/// Path `index` of the nonlinear equation from the unit vector `x0`.
pub fn simulate_nsse<T: Real>(
    m: &ModelSpec<T>,
    x0: &QuantumState<T>,
    cfg: &SolverConfig<T>,
    index: usize,
) -> Result<Trajectory<T>> {
    prepare(m, x0, cfg)?.run(x0, cfg, index)
}

/// `cfg.n_traj` nonlinear paths; trajectory `i` uses random stream `i`.
pub fn ensemble_nsse<T: Real>(
    m: &ModelSpec<T>,
    x0: &QuantumState<T>,
    cfg: &SolverConfig<T>,
) -> Result<Vec<Trajectory<T>>> {
    prepare(m, x0, cfg)?.run_ensemble(x0, cfg)
}

fn prepare<'a, T: Real>(m: &'a ModelSpec<T>, x0: &QuantumState<T>, cfg: &SolverConfig<T>) -> Result<Integrator<'a, T>> {
    cfg.validate()?;
    check_dim(m, x0)?;
    let deviation = to_f64(x0.norm_sqr() - T::one()).abs();
    if deviation > NORMALIZED_TOL {
        return Err(Error::NotNormalized { deviation });
    }
    Integrator::new(m, cfg.dt, cfg.scheme, Dynamics::Nonlinear)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentBoundReport<T: Real> {
    pub times: Vec<T>,
    /// `E‖C X_t‖²` with its standard error.
    pub lhs: Vec<Estimate<T>>,
    /// `exp(αt)(E‖CX_0‖² + tα(E‖X_0‖² + β))`.
    pub bound: Vec<T>,
    pub alpha: T,
    pub beta: T,
    /// Indices where `lhs - 3·stderr` exceeds the bound.
    pub violations: Vec<usize>,
}

impl<T: Real> MomentBoundReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compare `E‖C X_t‖²` with the exponential moment bound on the grid.
pub fn moment_bound_check<T: Real>(
    ensemble: &[Trajectory<T>],
    c: &FockOperator<T>,
    alpha: T,
    beta: T,
) -> Result<MomentBoundReport<T>> {
    if !(alpha >= T::zero() && beta >= T::zero()) {
        return Err(Error::OutOfDomain { name: "alpha/beta", value: to_f64(alpha.min(beta)), domain: ">= 0" });
    }
    let times = common_grid(ensemble)?.to_vec();
    let mut lhs = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let xs = ensemble.iter().map(|tr| Ok(c.apply(&tr.states[j])?.norm_sqr())).collect::<Result<Vec<T>>>()?;
        lhs.push(mean_stderr(&xs)?);
    }
    let norm0 = mean_stderr(&ensemble.iter().map(|tr| tr.sq_norm[0]).collect::<Vec<_>>())?.value;
    let c0 = lhs[0].value;
    let bound: Vec<T> = times.iter().map(|&t| (alpha * t).exp() * (c0 + t * alpha * (norm0 + beta))).collect();
    let three = real::<T>(3.0);
    let violations = lhs
        .iter()
        .zip(&bound)
        .enumerate()
        .filter(|(_, (e, &b))| e.value - three * stderr_or_zero(e) > b)
        .map(|(j, _)| j)
        .collect();
    Ok(MomentBoundReport { times, lhs, bound, alpha, beta, violations })
}

pub(crate) fn stderr_or_zero<T: Real>(e: &Estimate<T>) -> T {
    if e.is_degenerate() {
        T::zero()
    } else {
        e.stderr
    }
}
