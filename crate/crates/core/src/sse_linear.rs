//! Linear stochastic Schrödinger equation `dφ = Gφ dt + Σ_k L_k φ dW^k`
//! on the truncated space.

use crate::error::{Error, Result};
use crate::hilbert::QuantumState;
use crate::model::ModelSpec;
use crate::scalar::{rabs, real, Real};
use crate::stats::{mean_stderr, Estimate};
use crate::trajectory::{check_dim, common_grid, Dynamics, Integrator, Scheme, SolverConfig, Trajectory};

/// Slack factor `c` of the second-moment check: a time is flagged when
/// `|mean - ‖ξ‖²| > 3·stderr + c·dt`.
pub const DRIFT_SLACK: f64 = 5.0;

/// One step from `x` with increments `dw` (one per channel).
pub fn step_linear<T: Real>(
    x: &QuantumState<T>,
    dw: &[T],
    dt: T,
    m: &ModelSpec<T>,
    scheme: Scheme,
) -> Result<QuantumState<T>> {
    check_dim(m, x)?;
    if dw.len() != m.channel_count() {
        return Err(Error::NoiseLength { expected: m.channel_count(), found: dw.len() });
    }
    let integ = Integrator::new(m, dt, scheme, Dynamics::Linear)?;
    let mut ws = integ.workspace();
    let mut y = x.coeffs().to_vec();
    integ.step(&mut y, dw, &mut ws);
    let y = QuantumState::from_vec_unchecked(y);
    if !y.is_finite() {
        return Err(Error::BlowUp { step: 1 });
    }
    Ok(y)
}

/// Path `index` of the linear equation started at `xi`.
pub fn simulate_linear<T: Real>(
    m: &ModelSpec<T>,
    xi: &QuantumState<T>,
    cfg: &SolverConfig<T>,
    index: usize,
) -> Result<Trajectory<T>> {
    prepare(m, xi, cfg)?.run(xi, cfg, index)
}

/// `cfg.n_traj` linear paths; trajectory `i` uses random stream `i`.
pub fn ensemble_linear<T: Real>(
    m: &ModelSpec<T>,
    xi: &QuantumState<T>,
    cfg: &SolverConfig<T>,
) -> Result<Vec<Trajectory<T>>> {
    prepare(m, xi, cfg)?.run_ensemble(xi, cfg)
}

fn prepare<'a, T: Real>(m: &'a ModelSpec<T>, xi: &QuantumState<T>, cfg: &SolverConfig<T>) -> Result<Integrator<'a, T>> {
    cfg.validate()?;
    check_dim(m, xi)?;
    if xi.norm_sqr() == T::zero() {
        return Err(Error::ZeroInitialState);
    }
    Integrator::new(m, cfg.dt, cfg.scheme, Dynamics::Linear)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondMomentReport<T: Real> {
    pub times: Vec<T>,
    /// Ensemble mean and standard error of `‖φ_t‖²`.
    pub sq_norm: Vec<Estimate<T>>,
    /// Ensemble mean of `‖φ_0‖²`.
    pub initial: T,
    /// Mean accumulated expected norm change due to the discretization.
    pub discretization_drift: Vec<T>,
    pub dt: T,
    /// The slack factor `c` in `3·stderr + c·dt`.
    pub slack: T,
    /// Indices of flagged times.
    pub flagged: Vec<usize>,
    /// Fewer than two trajectories: no standard errors, nothing flagged.
    pub degenerate: bool,
}

impl<T: Real> SecondMomentReport<T> {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Mean squared norm over the ensemble at every recorded time, checked
/// against its initial value.
pub fn second_moment_report<T: Real>(ensemble: &[Trajectory<T>]) -> Result<SecondMomentReport<T>> {
    let times = common_grid(ensemble)?.to_vec();
    let dt = ensemble[0].dt;
    let slack = real::<T>(DRIFT_SLACK);
    let degenerate = ensemble.len() < 2;
    let column = |f: &dyn Fn(&Trajectory<T>) -> T| {
        let xs: Vec<T> = ensemble.iter().map(f).collect();
        mean_stderr(&xs)
    };
    let mut sq_norm = Vec::with_capacity(times.len());
    let mut drift = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let mut e = column(&|tr| tr.sq_norm[j])?;
        if degenerate {
            e.stderr = real::<T>(f64::NAN);
        }
        sq_norm.push(e);
        drift.push(column(&|tr| tr.norm_drift[j])?.value);
    }
    let initial = sq_norm[0].value;
    let flagged = if degenerate {
        Vec::new()
    } else {
        sq_norm
            .iter()
            .enumerate()
            .filter(|(_, e)| rabs(e.value - initial) > real::<T>(3.0) * e.stderr + slack * dt)
            .map(|(j, _)| j)
            .collect()
    };
    Ok(SecondMomentReport { times, sq_norm, initial, discretization_drift: drift, dt, slack, flagged, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{FockOperator, QuantumState};
    use crate::model::{build_model, preset, Preset};
    use num_complex::Complex;

    fn free(dim: usize) -> ModelSpec<f64> {
        build_model(dim, FockOperator::zeros(dim), vec![]).unwrap()
    }

    #[test]
    fn zero_generator_is_identity() {
        let m = free(5);
        let x = QuantumState::superposition(5, &[0, 3]).unwrap();
        for s in [Scheme::EulerMaruyama, Scheme::SemiImplicit] {
            assert_eq!(step_linear(&x, &[], 0.1, &m, s).unwrap(), x);
        }
    }

    #[test]
    fn euler_step_is_definition() {
        let m = preset(&Preset::Damped { omega: 1.0, decay: 1.0, thermal: 0.5 }, 12).unwrap();
        let e0 = QuantumState::basis(12, 0).unwrap();
        let y = step_linear(&e0, &[0.0, 0.0], 1e-3, &m, Scheme::EulerMaruyama).unwrap();
        let expected = &e0 + &m.drift().apply(&e0).unwrap().scaled_real(1e-3);
        assert_eq!(y, expected);
    }

    #[test]
    fn noise_length_checked() {
        let m = preset(&Preset::Damped { omega: 1.0, decay: 1.0, thermal: 0.5 }, 6).unwrap();
        let e0 = QuantumState::basis(6, 0).unwrap();
        assert_eq!(
            step_linear(&e0, &[0.0], 1e-3, &m, Scheme::EulerMaruyama),
            Err(Error::NoiseLength { expected: 2, found: 1 })
        );
    }

    #[test]
    fn constant_trajectory_without_channels() {
        let m = free(4);
        let xi = QuantumState::superposition(4, &[1, 2]).unwrap().scaled(Complex::new(2.0, 0.0));
        let tr = simulate_linear(&m, &xi, &SolverConfig::new(0.01, 0.1), 0).unwrap();
        assert!(tr.states().iter().all(|s| s == &xi));
        assert_eq!(tr.weight(), xi.norm_sqr());
        assert_eq!(tr.times().len(), 11);
    }

    #[test]
    fn zero_initial_state_rejected() {
        let m = free(4);
        let r = simulate_linear(&m, &QuantumState::zeros(4), &SolverConfig::new(0.01, 0.1), 0);
        assert_eq!(r, Err(Error::ZeroInitialState));
    }

    #[test]
    fn report_on_free_model() {
        let m = free(4);
        let xi = QuantumState::basis(4, 1).unwrap();
        let ens = ensemble_linear(&m, &xi, &SolverConfig::new(0.01, 0.1).with_n_traj(3)).unwrap();
        let r = second_moment_report(&ens).unwrap();
        assert!(r.sq_norm.iter().all(|e| e.value == 1.0 && e.stderr == 0.0));
        assert!(r.passed() && !r.degenerate);
        let single = second_moment_report(&ens[..1]).unwrap();
        assert!(single.degenerate && single.sq_norm[0].is_degenerate());
    }
}
