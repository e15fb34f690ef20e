//! Master equation `dρ/dt = Gρ + ρG† + Σ_k L_k ρ L_k†`: the deterministic
//! reference for ensemble averages of `|X_t><X_t|`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::hilbert::{FockOperator, QuantumState};
use crate::model::ModelSpec;
use crate::scalar::{cabs, cplx, czero, rabs, real, to_f64, tol, Real};
use crate::trajectory::{common_grid, Trajectory, TrajectoryKind};

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue still accepted as positive semidefinite.
pub const DENSITY_PSD_TOL: f64 = 1e-8;
/// Largest trace drift tolerated by the ODE integrator.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;
/// Singular values below this fraction of the largest span the kernel of
/// the vectorized generator.
pub const KERNEL_TOL: f64 = 1e-10;
/// Ensembles smaller than this are flagged as insufficient.
pub const MIN_ENSEMBLE: usize = 16;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: DMatrix<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(m: DMatrix<Complex<T>>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidDensity(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        let asym = (&m - m.adjoint()).iter().fold(T::zero(), |acc, z| acc.max(cabs(*z)));
        if asym > tol(DENSITY_HERMITIAN_TOL) {
            return Err(Error::InvalidDensity(format!("not Hermitian (asymmetry {asym:e})")));
        }
        let tr = m.trace();
        if cabs(tr - cplx(T::one(), T::zero())) > tol(DENSITY_TRACE_TOL) {
            return Err(Error::InvalidDensity(format!("trace {} + {}i", tr.re, tr.im)));
        }
        let rho = Self { m };
        let min = rho.min_eigenvalue();
        if min < -tol::<T>(DENSITY_PSD_TOL) {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// `|x><x| / ‖x‖²`.
    pub fn from_state(x: &QuantumState<T>) -> Result<Self> {
        let s = x.norm_sqr();
        if s == T::zero() {
            return Err(Error::ZeroInitialState);
        }
        let v = DVector::from_column_slice(x.coeffs());
        Self::new(hermitian_part(&(&v * v.adjoint()).unscale(s)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.m
    }

    pub fn trace(&self) -> Complex<T> {
        self.m.trace()
    }

    /// `Re tr(Aρ)`.
    pub fn expectation(&self, op: &FockOperator<T>) -> Result<T> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: op.dim() });
        }
        Ok(op.entries().fold(T::zero(), |acc, (i, j, a)| acc + (a * self.m[(j, i)]).re))
    }

    pub fn population(&self, level: usize) -> T {
        self.m[(level, level)].re
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.m.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    /// `½ ‖ρ - σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<T> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(trace_distance(&(&self.m - &other.m)))
    }
}

/// `½ Σ |λ_i|` of the Hermitian part of `delta`.
pub fn trace_distance<T: Real>(delta: &DMatrix<Complex<T>>) -> T {
    let ev = hermitian_part(delta).symmetric_eigenvalues();
    ev.iter().fold(T::zero(), |acc, &l| acc + rabs(l)) * real::<T>(0.5)
}

fn hermitian_part<T: Real>(m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    (m + m.adjoint()).scale(real::<T>(0.5))
}

/// Sparse factors of the generator.
struct Generator<'a, T: Real> {
    drift: &'a FockOperator<T>,
    drift_adj: FockOperator<T>,
    channels: &'a [FockOperator<T>],
    channels_adj: Vec<FockOperator<T>>,
}

impl<'a, T: Real> Generator<'a, T> {
    fn new(m: &'a ModelSpec<T>) -> Self {
        Self {
            drift: m.drift(),
            drift_adj: m.drift().adjoint(),
            channels: m.channels(),
            channels_adj: m.channels().iter().map(FockOperator::adjoint).collect(),
        }
    }

    fn apply(&self, rho: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
        let mut out = self.drift.mul_dense(rho) + self.drift_adj.dense_mul(rho);
        for (l, ladj) in self.channels.iter().zip(&self.channels_adj) {
            out += ladj.dense_mul(&l.mul_dense(rho));
        }
        out
    }
}

/// Generator applied to `rho`. Its trace is the leak through the cutoff,
/// zero for the truncated operators used here.
pub fn lindblad_rhs<T: Real>(rho: &DensityMatrix<T>, m: &ModelSpec<T>) -> Result<DMatrix<Complex<T>>> {
    if rho.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: rho.dim() });
    }
    Ok(Generator::new(m).apply(&rho.m))
}

/// Classical RK4 to `t_final` with steps no longer than `dt`.
pub fn evolve_density<T: Real>(rho0: &DensityMatrix<T>, m: &ModelSpec<T>, t_final: T, dt: T) -> Result<DensityMatrix<T>> {
    let mut out = evolve_density_at(rho0, m, &[t_final], dt)?;
    Ok(out.pop().expect("one output time"))
}

/// RK4 solution at each of the increasing `times` (measured from 0).
pub fn evolve_density_at<T: Real>(
    rho0: &DensityMatrix<T>,
    m: &ModelSpec<T>,
    times: &[T],
    dt: T,
) -> Result<Vec<DensityMatrix<T>>> {
    if rho0.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: rho0.dim() });
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let generator = Generator::new(m);
    let half = real::<T>(0.5);
    let sixth = T::one() / real::<T>(6.0);
    let mut rho = rho0.m.clone();
    let mut now = T::zero();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < now {
            return Err(Error::InvalidConfig("output times must be increasing".into()));
        }
        let span = t - now;
        let steps = (span / dt - real::<T>(1e-9)).ceil().to_usize().unwrap_or(0).max(usize::from(span > T::zero()));
        if steps > 0 {
            let h = span / real::<T>(steps as f64);
            let ch = cplx(h, T::zero());
            for _ in 0..steps {
                let k1 = generator.apply(&rho);
                let k2 = generator.apply(&(&rho + &k1 * ch * cplx(half, T::zero())));
                let k3 = generator.apply(&(&rho + &k2 * ch * cplx(half, T::zero())));
                let k4 = generator.apply(&(&rho + &k3 * ch));
                let incr = (k1 + (k2 + k3) * cplx(real::<T>(2.0), T::zero()) + k4) * (ch * cplx(sixth, T::zero()));
                rho = hermitian_part(&(rho + incr));
            }
        }
        now = t;
        let drift = rabs(rho.trace().re - T::one());
        if !(drift <= tol(TRACE_DRIFT_TOL)) {
            return Err(Error::IntegrationFailure { drift: to_f64(drift) });
        }
        out.push(DensityMatrix::new(rho.clone())?);
    }
    Ok(out)
}

/// `d² × d²` matrix of the generator acting on column-stacked `vec(ρ)`:
/// `I⊗G + conj(G)⊗I + Σ_k conj(L_k)⊗L_k`.
pub fn vectorized_generator<T: Real>(m: &ModelSpec<T>) -> DMatrix<Complex<T>> {
    let d = m.dim();
    let mut s = DMatrix::from_element(d * d, d * d, czero());
    for (i, j, g) in m.drift().entries() {
        for c in 0..d {
            s[(c * d + i, c * d + j)] += g;
            s[(i * d + c, j * d + c)] += g.conj();
        }
    }
    for l in m.channels() {
        let entries: Vec<_> = l.entries().collect();
        for &(a, b, lab) in &entries {
            for &(i, j, lij) in &entries {
                s[(a * d + i, b * d + j)] += lab.conj() * lij;
            }
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport<T: Real> {
    pub dimension: usize,
    /// Kernel elements as matrices, scaled to unit trace when their trace
    /// is not negligible, to unit Frobenius norm otherwise.
    pub basis: Vec<DMatrix<Complex<T>>>,
    /// Smallest singular values of the vectorized generator, ascending,
    /// relative to the largest.
    pub smallest_singular_values: Vec<T>,
}

/// Kernel of the vectorized generator. Never fails on a degenerate kernel;
/// see [`steady_state`] for the unique case.
pub fn stationary_kernel<T: Real>(m: &ModelSpec<T>) -> Result<KernelReport<T>> {
    let d = m.dim();
    let svd = vectorized_generator(m).svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(T::zero(), |acc, &s| acc.max(s));
    let threshold = smax * real::<T>(KERNEL_TOL);
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[a].partial_cmp(&sigma[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut basis = Vec::new();
    for &i in order.iter().take_while(|&&i| sigma[i] < threshold) {
        let v: Vec<Complex<T>> = v_t.row(i).iter().map(|z| z.conj()).collect();
        let mat = DMatrix::from_column_slice(d, d, &v);
        let tr = mat.trace();
        let scaled = if cabs(tr) > real::<T>(1e-8) * mat.norm() { mat / tr } else { mat.unscale(mat.norm()) };
        basis.push(scaled);
    }
    let smallest = order.iter().take(basis.len() + 3).map(|&i| sigma[i] / smax).collect();
    Ok(KernelReport { dimension: basis.len(), basis, smallest_singular_values: smallest })
}

/// Unique stationary density matrix.
pub fn steady_state<T: Real>(m: &ModelSpec<T>) -> Result<DensityMatrix<T>> {
    let kernel = stationary_kernel(m)?;
    if kernel.dimension != 1 {
        return Err(Error::NonUniqueSteadyState { kernel_dim: kernel.dimension });
    }
    DensityMatrix::new(hermitian_part(&kernel.basis[0]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityComparison<T: Real> {
    /// `½ ‖ρ_MC - ρ_ref‖₁`.
    pub trace_distance: T,
    /// Frobenius norm of the entrywise standard errors of `ρ_MC`.
    pub aggregate_sigma: T,
    /// Standard errors of the diagonal of `ρ_MC`.
    pub diagonal_stderr: Vec<T>,
    pub rho_mc: DMatrix<Complex<T>>,
    pub n_traj: usize,
    /// Fewer than [`MIN_ENSEMBLE`] trajectories.
    pub insufficient: bool,
}

impl<T: Real> DensityComparison<T> {
    /// `trace_distance <= k · aggregate_sigma + slack` on a sufficient ensemble.
    pub fn passes(&self, k: T, slack: T) -> bool {
        !self.insufficient && self.trace_distance <= k * self.aggregate_sigma + slack
    }
}

/// Ensemble estimate of `ρ_t` against a reference. Nonlinear and weighted
/// paths enter as `Σ w |X><X| / Σ w`; raw linear paths as the plain mean of
/// `|φ><φ|`.
pub fn compare_mc_density<T: Real>(
    ensemble: &[Trajectory<T>],
    t: T,
    rho_ref: &DensityMatrix<T>,
) -> Result<DensityComparison<T>> {
    common_grid(ensemble)?;
    let j = ensemble[0].time_index(t)?;
    let d = rho_ref.dim();
    if ensemble[0].states[j].dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: ensemble[0].states[j].dim() });
    }
    let weight = |tr: &Trajectory<T>| if tr.kind == TrajectoryKind::Linear { T::one() } else { tr.weight };
    let total = ensemble.iter().fold(T::zero(), |acc, tr| acc + weight(tr));
    if total == T::zero() {
        return Err(Error::ZeroWeights);
    }
    let outer = |x: &QuantumState<T>| {
        let v = DVector::from_column_slice(x.coeffs());
        &v * v.adjoint()
    };
    let mut mean = DMatrix::from_element(d, d, czero());
    for tr in ensemble {
        mean += outer(&tr.states[j]) * cplx(weight(tr) / total, T::zero());
    }
    let mut var_re = DMatrix::from_element(d, d, T::zero());
    let mut var_im = DMatrix::from_element(d, d, T::zero());
    for tr in ensemble {
        let w = weight(tr);
        let dev = outer(&tr.states[j]) - &mean;
        for (idx, z) in dev.iter().enumerate() {
            var_re[idx] += w * w * z.re * z.re;
            var_im[idx] += w * w * z.im * z.im;
        }
    }
    let norm2 = total * total;
    let aggregate = (var_re.iter().chain(var_im.iter()).fold(T::zero(), |acc, &v| acc + v) / norm2).sqrt();
    let diagonal_stderr = (0..d).map(|i| (var_re[(i, i)] / norm2).sqrt()).collect();
    let dist = trace_distance(&(&mean - rho_ref.matrix()));
    Ok(DensityComparison {
        trace_distance: dist,
        aggregate_sigma: aggregate,
        diagonal_stderr,
        rho_mc: mean,
        n_traj: ensemble.len(),
        insufficient: ensemble.len() < MIN_ENSEMBLE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::ladder_ops;
    use crate::model::{build_model, preset, Preset};

    fn damped(dim: usize) -> ModelSpec<f64> {
        preset(&Preset::Damped { omega: 1.0, decay: 1.0, thermal: 0.5 }, dim).unwrap()
    }

    #[test]
    fn density_validation() {
        let e0 = QuantumState::<f64>::basis(3, 0).unwrap();
        let rho = DensityMatrix::from_state(&e0).unwrap();
        assert_eq!(rho.population(0), 1.0);
        let mut bad = rho.matrix().clone();
        bad[(0, 0)] = Complex::new(2.0, 0.0);
        assert!(DensityMatrix::new(bad).is_err());
        let mut neg = DMatrix::from_element(2, 2, Complex::new(0.0, 0.0));
        neg[(0, 0)] = Complex::new(1.5, 0.0);
        neg[(1, 1)] = Complex::new(-0.5, 0.0);
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn commuting_state_is_fixed() {
        let l = ladder_ops::<f64>(5).unwrap();
        let m = build_model(5, l.number.clone(), vec![]).unwrap();
        let rho = DensityMatrix::from_state(&QuantumState::basis(5, 0).unwrap()).unwrap();
        assert_eq!(lindblad_rhs(&rho, &m).unwrap().norm(), 0.0);
        let out = evolve_density(&rho, &m, 1.0, 0.01).unwrap();
        assert!((out.matrix() - rho.matrix()).norm() < 1e-12);
    }

    #[test]
    fn decay_from_first_level() {
        let m = damped(12);
        let rho = DensityMatrix::from_state(&QuantumState::basis(12, 1).unwrap()).unwrap();
        let rhs = lindblad_rhs(&rho, &m).unwrap();
        assert!((rhs[(0, 0)].re - 1.5).abs() < 1e-12);
        assert!(rhs.trace().norm() < 1e-12);
        for i in 0..12 {
            for j in 0..12 {
                if i != j {
                    assert_eq!(rhs[(i, j)], Complex::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn vectorized_matches_matrix_form() {
        let m = damped(5);
        let s = vectorized_generator(&m);
        let psi = QuantumState::superposition(5, &[0, 2, 3]).unwrap();
        let rho = DensityMatrix::from_state(&psi).unwrap();
        let v = DVector::from_column_slice(rho.matrix().as_slice());
        let lhs = DMatrix::from_column_slice(5, 5, (&s * v).as_slice());
        assert!((lhs - lindblad_rhs(&rho, &m).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn thermal_steady_state() {
        let m = damped(20);
        let rho = steady_state(&m).unwrap();
        let l = ladder_ops::<f64>(20).unwrap();
        assert!((rho.expectation(&l.number).unwrap() - 0.5).abs() < 1e-6);
        for n in 0..10 {
            assert!((rho.population(n + 1) / rho.population(n) - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hamiltonian_only_kernel_is_degenerate() {
        let l = ladder_ops::<f64>(4).unwrap();
        let m = build_model(4, l.number.clone(), vec![]).unwrap();
        let k = stationary_kernel(&m).unwrap();
        assert!(k.dimension >= 4);
        assert!(matches!(steady_state(&m), Err(Error::NonUniqueSteadyState { .. })));
    }

    #[test]
    fn deterministic_comparison_is_exact() {
        use crate::nsse::ensemble_nsse;
        use crate::trajectory::SolverConfig;
        let l = ladder_ops::<f64>(4).unwrap();
        let m = build_model(4, l.number.clone(), vec![]).unwrap();
        let e1 = QuantumState::basis(4, 1).unwrap();
        let ens = ensemble_nsse(&m, &e1, &SolverConfig::new(0.01, 0.1).with_n_traj(20)).unwrap();
        let rho = DensityMatrix::from_state(&e1).unwrap();
        let cmp = compare_mc_density(&ens, 0.1, &rho).unwrap();
        assert!(cmp.trace_distance < 1e-12);
        assert!(!cmp.insufficient);
        let single = compare_mc_density(&ens[..1], 0.1, &rho).unwrap();
        assert!(single.insufficient && !single.passes(3.0, 1.0));
    }
}
