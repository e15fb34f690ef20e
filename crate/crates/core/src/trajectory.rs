//! Solver configuration, recorded sample paths and the one-step integrator
//! shared by the linear and nonlinear equations.
//!
//! Every step has the form `y = S(u + Σ_k dW_k v_k)` where `S` is the
//! identity (explicit) or `(I - dt G)⁻¹` (drift-implicit). Because the
//! increments are centred with variance `dt`, the conditional expectation
//! of `‖y‖²` is `‖Su‖² + dt Σ_k ‖S v_k‖²`; its excess over `‖x‖²` is
//! accumulated as the trajectory's norm drift.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{inner, norm_sqr, QuantumState};
use crate::model::ModelSpec;
use crate::scalar::{cplx, czero, rabs, real, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    EulerMaruyama,
    /// Drift-implicit, noise-explicit.
    SemiImplicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler_maruyama",
            Scheme::SemiImplicit => "semi_implicit",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "euler_maruyama" | "euler" => Ok(Scheme::EulerMaruyama),
            "semi_implicit" => Ok(Scheme::SemiImplicit),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub dt: T,
    pub t_final: T,
    pub scheme: Scheme,
    pub seed: u64,
    pub n_traj: usize,
    /// Steps between recorded samples; the final step is always recorded.
    pub record_stride: usize,
    /// Rescale to unit norm after every nonlinear step.
    pub renormalize: bool,
    /// Keep every Brownian increment.
    pub record_noise: bool,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(dt: T, t_final: T) -> Self {
        Self {
            dt,
            t_final,
            scheme: Scheme::EulerMaruyama,
            seed: 0,
            n_traj: 1,
            record_stride: 1,
            renormalize: true,
            record_noise: true,
        }
    }

    /// `1e-3 · min(1, 1/‖G‖_∞)` with the row-sum norm of the drift.
    pub fn default_dt(m: &ModelSpec<T>) -> T {
        let g = m.drift().row_sum_norm();
        let scale = if g > T::one() { T::one() / g } else { T::one() };
        real::<T>(1e-3) * scale
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_traj(mut self, n_traj: usize) -> Self {
        self.n_traj = n_traj;
        self
    }

    pub fn with_stride(mut self, record_stride: usize) -> Self {
        self.record_stride = record_stride;
        self
    }

    pub fn with_renormalize(mut self, renormalize: bool) -> Self {
        self.renormalize = renormalize;
        self
    }

    pub fn with_record_noise(mut self, record_noise: bool) -> Self {
        self.record_noise = record_noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_final = {} must be at least dt = {}", self.t_final, self.dt)));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidConfig("n_traj must be at least 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record_stride must be at least 1".into()));
        }
        let ratio = self.t_final / self.dt;
        if rabs(ratio - ratio.round()) > real::<T>(1e-6) * ratio {
            return Err(Error::InvalidConfig(format!(
                "t_final = {} is not a whole number of steps of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Unnormalized solution of the linear equation.
    Linear,
    /// Solution of the nonlinear equation.
    Nonlinear,
    /// Normalized linear solution carrying its terminal weight.
    Weighted,
}

impl TrajectoryKind {
    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Linear => "linear",
            TrajectoryKind::Nonlinear => "nonlinear",
            TrajectoryKind::Weighted => "weighted",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real> {
    pub(crate) kind: TrajectoryKind,
    pub(crate) dt: T,
    pub(crate) stride: usize,
    pub(crate) n_steps: usize,
    pub(crate) channels: usize,
    pub(crate) times: Vec<T>,
    pub(crate) states: Vec<QuantumState<T>>,
    pub(crate) sq_norm: Vec<T>,
    /// `noise[step * channels + k]`.
    pub(crate) noise: Option<Vec<T>>,
    pub(crate) norm_drift: Vec<T>,
    pub(crate) weight: T,
    pub(crate) linear_sq_norm: Option<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn channel_count(&self) -> usize {
        self.channels
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[QuantumState<T>] {
        &self.states
    }

    pub fn sq_norm(&self) -> &[T] {
        &self.sq_norm
    }

    /// Terminal `‖φ_T‖²` for weighted paths, 1 for nonlinear paths, the
    /// terminal squared norm for raw linear paths.
    pub fn weight(&self) -> T {
        self.weight
    }

    /// Accumulated expected squared-norm change caused by the time
    /// discretization, at each recorded time.
    pub fn norm_drift(&self) -> &[T] {
        &self.norm_drift
    }

    /// Squared norms of the linear path a weighted trajectory came from.
    pub fn linear_sq_norm(&self) -> Option<&[T]> {
        self.linear_sq_norm.as_deref()
    }

    pub fn has_noise(&self) -> bool {
        self.noise.is_some()
    }

    /// Increment of channel `k` over step `step`.
    pub fn noise_increment(&self, step: usize, k: usize) -> Option<T> {
        if k >= self.channels || step >= self.n_steps {
            return None;
        }
        self.noise.as_ref().map(|n| n[step * self.channels + k])
    }

    /// All increments of channel `k`.
    pub fn noise_path(&self, k: usize) -> Result<Vec<T>> {
        if k >= self.channels {
            return Err(Error::ChannelIndex { index: k, count: self.channels });
        }
        let noise = self.noise.as_ref().ok_or(Error::NotFullResolution)?;
        Ok(noise.iter().skip(k).step_by(self.channels).copied().collect())
    }

    /// Index of the recorded sample at time `t`.
    pub fn time_index(&self, t: T) -> Result<usize> {
        let tol = self.dt * real::<T>(1e-6);
        self.times.iter().position(|&s| rabs(s - t) <= tol).ok_or(Error::TimeNotOnGrid { t: to_f64(t) })
    }

    pub fn state_at(&self, t: T) -> Result<&QuantumState<T>> {
        Ok(&self.states[self.time_index(t)?])
    }

    pub fn final_state(&self) -> &QuantumState<T> {
        self.states.last().expect("trajectories hold at least the initial state")
    }
}

/// The shared time grid of an ensemble.
pub fn common_grid<T: Real>(ensemble: &[Trajectory<T>]) -> Result<&[T]> {
    let first = ensemble.first().ok_or(Error::EmptyEnsemble)?;
    if ensemble.iter().any(|tr| tr.times != first.times) {
        return Err(Error::GridMismatch);
    }
    Ok(&first.times)
}

/// Random stream of trajectory `index`: the ChaCha20 stream `index` under
/// key `seed`, independent of how trajectories are scheduled.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Dynamics {
    Linear,
    Nonlinear,
}

pub(crate) struct Integrator<'a, T: Real> {
    model: &'a ModelSpec<T>,
    dt: T,
    dynamics: Dynamics,
    implicit: Option<LU<Complex<T>, Dyn, Dyn>>,
}

pub(crate) struct Workspace<T: Real> {
    lx: Vec<Vec<Complex<T>>>,
    u: Vec<Complex<T>>,
}

impl<'a, T: Real> Integrator<'a, T> {
    pub(crate) fn new(model: &'a ModelSpec<T>, dt: T, scheme: Scheme, dynamics: Dynamics) -> Result<Self> {
        let implicit = match scheme {
            Scheme::EulerMaruyama => None,
            Scheme::SemiImplicit => {
                let d = model.dim();
                let mut a = DMatrix::identity(d, d);
                for (i, j, g) in model.drift().entries() {
                    a[(i, j)] -= g * cplx(dt, T::zero());
                }
                let lu = a.lu();
                if !lu.is_invertible() {
                    return Err(Error::StepFailure { step: 0 });
                }
                Some(lu)
            }
        };
        Ok(Self { model, dt, dynamics, implicit })
    }

    pub(crate) fn workspace(&self) -> Workspace<T> {
        let d = self.model.dim();
        Workspace { lx: vec![vec![czero(); d]; self.model.channel_count()], u: vec![czero(); d] }
    }

    fn solve(&self, v: &mut [Complex<T>]) {
        if let Some(lu) = &self.implicit {
            let mut b = DVector::from_column_slice(v);
            lu.solve_mut(&mut b);
            v.copy_from_slice(b.as_slice());
        }
    }

    /// Advance `x` in place by one step with increments `dw`; returns the
    /// expected squared-norm change of the step.
    pub(crate) fn step(&self, x: &mut [Complex<T>], dw: &[T], ws: &mut Workspace<T>) -> T {
        let dt = self.dt;
        let x_sq = norm_sqr(x);
        for (l, lx) in self.model.channels().iter().zip(ws.lx.iter_mut()) {
            l.apply_into(x, lx);
        }
        ws.u.copy_from_slice(x);
        if self.implicit.is_none() {
            self.model.drift().apply_add(x, &mut ws.u, cplx(dt, T::zero()));
        }
        if self.dynamics == Dynamics::Nonlinear {
            let half = real::<T>(0.5);
            for lx in ws.lx.iter_mut() {
                let r = inner(x, lx).re;
                let shrink = dt * half * r * r;
                for ((u, &xi), l) in ws.u.iter_mut().zip(x.iter()).zip(lx.iter_mut()) {
                    *u += l.scale(dt * r) - xi.scale(shrink);
                    *l -= xi.scale(r);
                }
            }
        }
        self.solve(&mut ws.u);
        let mut expected = norm_sqr(&ws.u) - x_sq;
        x.copy_from_slice(&ws.u);
        for (v, &w) in ws.lx.iter_mut().zip(dw) {
            self.solve(v);
            expected += dt * norm_sqr(v);
            for (xi, vi) in x.iter_mut().zip(v.iter()) {
                *xi += vi.scale(w);
            }
        }
        expected
    }

    /// Integrate one path from `x0` with the random stream of `index`.
    pub(crate) fn run(&self, x0: &QuantumState<T>, cfg: &SolverConfig<T>, index: usize) -> Result<Trajectory<T>> {
        let k = self.model.channel_count();
        let n = cfg.n_steps();
        let stride = cfg.record_stride;
        let renormalize = self.dynamics == Dynamics::Nonlinear && cfg.renormalize;
        let sqrt_dt = cfg.dt.sqrt();
        let mut rng = trajectory_rng(cfg.seed, index);
        let mut ws = self.workspace();
        let mut x = x0.coeffs().to_vec();
        let mut dw = vec![T::zero(); k];
        let capacity = n / stride + 2;
        let mut times = Vec::with_capacity(capacity);
        let mut states = Vec::with_capacity(capacity);
        let mut sq_norm = Vec::with_capacity(capacity);
        let mut norm_drift = Vec::with_capacity(capacity);
        let mut noise = cfg.record_noise.then(|| Vec::with_capacity(n * k));
        let mut drift_acc = T::zero();

        times.push(T::zero());
        sq_norm.push(norm_sqr(&x));
        states.push(QuantumState::from_vec_unchecked(x.clone()));
        norm_drift.push(T::zero());

        for step in 1..=n {
            for w in dw.iter_mut() {
                *w = sqrt_dt * T::standard_normal(&mut rng);
            }
            if let Some(buf) = noise.as_mut() {
                buf.extend_from_slice(&dw);
            }
            drift_acc += self.step(&mut x, &dw, &mut ws);
            if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::BlowUp { step });
            }
            if renormalize {
                let s = norm_sqr(&x);
                if s == T::zero() {
                    return Err(Error::DegenerateState { step });
                }
                let inv = T::one() / s.sqrt();
                x.iter_mut().for_each(|z| *z = z.scale(inv));
            }
            if step % stride == 0 || step == n {
                times.push(real::<T>(step as f64) * cfg.dt);
                sq_norm.push(norm_sqr(&x));
                states.push(QuantumState::from_vec_unchecked(x.clone()));
                norm_drift.push(drift_acc);
            }
        }

        let (kind, weight) = match self.dynamics {
            Dynamics::Linear => (TrajectoryKind::Linear, *sq_norm.last().expect("nonempty")),
            Dynamics::Nonlinear => (TrajectoryKind::Nonlinear, T::one()),
        };
        Ok(Trajectory {
            kind,
            dt: cfg.dt,
            stride,
            n_steps: n,
            channels: k,
            times,
            states,
            sq_norm,
            noise,
            norm_drift,
            weight,
            linear_sq_norm: None,
        })
    }

    /// `cfg.n_traj` independent paths, computed in parallel and returned in
    /// index order.
    pub(crate) fn run_ensemble(&self, x0: &QuantumState<T>, cfg: &SolverConfig<T>) -> Result<Vec<Trajectory<T>>> {
        (0..cfg.n_traj)
            .into_par_iter()
            .map(|i| self.run(x0, cfg, i).map_err(|e| Error::Trajectory { index: i, source: Box::new(e) }))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

pub(crate) fn check_dim<T: Real>(m: &ModelSpec<T>, x: &QuantumState<T>) -> Result<()> {
    if x.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: x.dim() });
    }
    Ok(())
}
