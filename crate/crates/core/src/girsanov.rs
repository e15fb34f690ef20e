//! Change of measure from the linear to the nonlinear equation: normalized
//! linear paths weighted by their terminal squared norm have the law of the
//! nonlinear solution, driven by the shifted noises
//! `dB^k = dW^k - 2 Re<X, L_k X> dt`.

use crate::error::{Error, Result};
use crate::hilbert::QuantumState;
use crate::model::ModelSpec;
use crate::scalar::{real, to_f64, Real};
use crate::stats::{weighted_mean, Estimate};
use crate::trajectory::{common_grid, Trajectory, TrajectoryKind};

/// Squared norms below this abort the normalization of a path.
pub const DEGENERATE_SQ_NORM: f64 = 1e-300;

/// Replace the states of a linear path by `φ_t/‖φ_t‖` and attach the weight
/// `‖φ_T‖²`. The original squared norms stay available as
/// [`Trajectory::linear_sq_norm`].
pub fn normalize_and_weight<T: Real>(traj: &Trajectory<T>) -> Result<Trajectory<T>> {
    if traj.kind != TrajectoryKind::Linear {
        return Err(Error::KindMismatch { expected: "linear", found: traj.kind.name() });
    }
    let floor = real::<T>(DEGENERATE_SQ_NORM);
    let mut states = Vec::with_capacity(traj.states.len());
    for (index, (s, &sq)) in traj.states.iter().zip(&traj.sq_norm).enumerate() {
        if !(sq >= floor) {
            return Err(Error::DegenerateTrajectory { index, sq_norm: to_f64(sq) });
        }
        states.push(s.scaled_real(T::one() / sq.sqrt()));
    }
    let sq_norm = states.iter().map(QuantumState::norm_sqr).collect();
    Ok(Trajectory {
        kind: TrajectoryKind::Weighted,
        states,
        sq_norm,
        weight: *traj.sq_norm.last().expect("nonempty"),
        linear_sq_norm: Some(traj.sq_norm.clone()),
        ..traj.clone()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEnsemble<T: Real> {
    pub trajectories: Vec<Trajectory<T>>,
    /// Indices of linear paths whose norm degenerated; they are excluded.
    pub degenerate: Vec<usize>,
}

/// Normalize and weight every path, setting degenerate ones aside.
pub fn normalize_ensemble<T: Real>(ensemble: &[Trajectory<T>]) -> Result<WeightedEnsemble<T>> {
    let mut trajectories = Vec::with_capacity(ensemble.len());
    let mut degenerate = Vec::new();
    for (i, tr) in ensemble.iter().enumerate() {
        match normalize_and_weight(tr) {
            Ok(w) => trajectories.push(w),
            Err(Error::DegenerateTrajectory { .. }) => degenerate.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok(WeightedEnsemble { trajectories, degenerate })
}

/// Per-channel increments `dB_k[step] = dW_k[step] - 2 Re<X, L_k X> dt`
/// with `X` the normalized state at the start of the step.
#[allow(clippy::needless_range_loop)]
pub fn shifted_noise<T: Real>(traj: &Trajectory<T>, m: &ModelSpec<T>) -> Result<Vec<Vec<T>>> {
    if traj.stride != 1 || traj.noise.is_none() {
        return Err(Error::NotFullResolution);
    }
    if traj.channels != m.channel_count() {
        return Err(Error::ChannelIndex { index: m.channel_count(), count: traj.channels });
    }
    let two_dt = real::<T>(2.0) * traj.dt;
    let floor = real::<T>(DEGENERATE_SQ_NORM);
    let mut out: Vec<Vec<T>> = (0..traj.channels).map(|k| traj.noise_path(k)).collect::<Result<_>>()?;
    for step in 0..traj.n_steps {
        let s = &traj.states[step];
        let sq = s.norm_sqr();
        if !(sq >= floor) {
            return Err(Error::DegenerateTrajectory { index: step, sq_norm: to_f64(sq) });
        }
        for (k, l) in m.channels().iter().enumerate() {
            let r = s.inner(&l.apply(s)?)?.re / sq;
            out[k][step] -= two_dt * r;
        }
    }
    Ok(out)
}

/// Self-normalized estimate `Σ w f(X_t) / Σ w` at recorded time `t`.
///
/// Nonlinear paths carry weight 1, so the same estimator gives the plain
/// ensemble mean for them.
pub fn weighted_expectation<T: Real, F>(ensemble: &[Trajectory<T>], f: F, t: T) -> Result<Estimate<T>>
where
    F: Fn(&QuantumState<T>) -> T,
{
    common_grid(ensemble)?;
    let j = ensemble[0].time_index(t)?;
    let weights: Vec<T> = ensemble.iter().map(|tr| tr.weight).collect();
    let values: Vec<T> = ensemble.iter().map(|tr| f(&tr.states[j])).collect();
    weighted_mean(&weights, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{ladder_ops, FockOperator};
    use crate::model::build_model;
    use crate::sse_linear::{ensemble_linear, simulate_linear};
    use crate::trajectory::SolverConfig;
    use num_complex::Complex;

    #[test]
    fn free_model_is_unchanged() {
        let m = build_model(4, FockOperator::<f64>::zeros(4), vec![]).unwrap();
        let xi = QuantumState::superposition(4, &[0, 2]).unwrap();
        let tr = simulate_linear(&m, &xi, &SolverConfig::new(0.01, 0.1), 0).unwrap();
        let w = normalize_and_weight(&tr).unwrap();
        assert_eq!(w.weight(), tr.sq_norm()[10]);
        assert!((w.weight() - 1.0).abs() < 1e-15);
        assert!(w.states().iter().zip(tr.states()).all(|(a, b)| (a - b).norm() < 1e-15));
        assert!(shifted_noise(&tr, &m).unwrap().is_empty());
    }

    #[test]
    fn weighted_input_rejected() {
        let m = build_model(4, FockOperator::<f64>::zeros(4), vec![]).unwrap();
        let xi = QuantumState::basis(4, 0).unwrap();
        let tr = simulate_linear(&m, &xi, &SolverConfig::new(0.01, 0.1), 0).unwrap();
        let w = normalize_and_weight(&tr).unwrap();
        assert!(matches!(normalize_and_weight(&w), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn shift_matches_definition_for_anti_hermitian_channel() {
        let l = ladder_ops::<f64>(6).unwrap();
        let channel = l.number.scaled(Complex::new(0.0, 1.0));
        let m = build_model(6, FockOperator::zeros(6), vec![channel.clone()]).unwrap();
        let xi = QuantumState::superposition(6, &[1, 3]).unwrap();
        let tr = simulate_linear(&m, &xi, &SolverConfig::new(1e-2, 0.2), 3).unwrap();
        let db = shifted_noise(&tr, &m).unwrap();
        let dw = tr.noise_path(0).unwrap();
        for step in 0..tr.n_steps() {
            let x = tr.states()[step].normalized().unwrap();
            let r = x.inner(&channel.apply(&x).unwrap()).unwrap().re;
            assert!((db[0][step] - (dw[step] - 2.0 * 1e-2 * r)).abs() < 1e-14);
        }
    }

    #[test]
    fn stride_required() {
        let l = ladder_ops::<f64>(4).unwrap();
        let m = build_model(4, FockOperator::zeros(4), vec![l.annihilation.clone()]).unwrap();
        let xi = QuantumState::basis(4, 1).unwrap();
        let tr = simulate_linear(&m, &xi, &SolverConfig::new(0.01, 0.1).with_stride(2), 0).unwrap();
        assert_eq!(shifted_noise(&tr, &m), Err(Error::NotFullResolution));
    }

    #[test]
    fn expectation_of_constant_and_number() {
        let l = ladder_ops::<f64>(5).unwrap();
        let m = build_model(5, FockOperator::<f64>::zeros(5), vec![]).unwrap();
        let e2 = QuantumState::basis(5, 2).unwrap();
        let ens = ensemble_linear(&m, &e2, &SolverConfig::new(0.01, 0.1).with_n_traj(4)).unwrap();
        let w = normalize_ensemble(&ens).unwrap();
        assert!(w.degenerate.is_empty());
        assert_eq!(weighted_expectation(&w.trajectories, |_| 1.0, 0.1).unwrap().value, 1.0);
        let n = weighted_expectation(&w.trajectories, |x| x.expectation(&l.number).unwrap().re, 0.1).unwrap();
        assert_eq!(n.value, 2.0);
        assert!(weighted_expectation(&w.trajectories, |_| 1.0, 0.015).is_err());
    }
}
