//! Growth constants of the Lyapunov form
//! `x ↦ 2 Re<Cx, C G x> + Σ_k ‖C L_k x‖²` and the parameter conditions for
//! regularity and stationarity of the oscillator.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::hilbert::{ladder_ops, FockOperator, QuantumState};
use crate::model::{preset, ModelSpec, OscillatorParams, Preset};
use crate::scalar::{cplx, czero, rabs, real, Real};

/// Points of the geometric α grid.
pub const ALPHA_GRID_POINTS: usize = 64;
/// Random unit states used to certify a constant pair.
pub const VERIFY_STATES: usize = 100;
/// Seed of the certification states.
pub const VERIFY_SEED: u64 = 0x5eed_c0de;
/// Growth factor of the tail rate (see [`estimate_h13_constants`]) between
/// consecutive level ranges above which the form is declared unbounded.
pub const UNBOUNDED_GROWTH: f64 = 1.25;

/// `2 Re<Cx, C G x> + Σ_k ‖C L_k x‖²`.
pub fn quadratic_form<T: Real>(c: &FockOperator<T>, m: &ModelSpec<T>, x: &QuantumState<T>) -> Result<T> {
    let cx = c.apply(x)?;
    let cgx = c.apply(&m.drift().apply(x)?)?;
    let mut value = real::<T>(2.0) * cx.inner(&cgx)?.re;
    for l in m.channels() {
        value += c.apply(&l.apply(x)?)?.norm_sqr();
    }
    Ok(value)
}

/// The Hermitian matrix `F = C†C G + G†C†C + Σ_k L_k†C†C L_k` of the form.
pub fn form_operator<T: Real>(c: &FockOperator<T>, m: &ModelSpec<T>) -> FockOperator<T> {
    let c2 = &c.adjoint() * c;
    let g = m.drift();
    let mut f = &(&c2 * g) + &(&g.adjoint() * &c2);
    for l in m.channels() {
        f = &f + &(&(&l.adjoint() * &c2) * l);
    }
    f
}

fn check_levels<T: Real>(m: &ModelSpec<T>, levels: &Range<usize>) -> Result<()> {
    let interior_max = m.interior_max_level();
    match levels.clone().last() {
        Some(level) if level > interior_max => Err(Error::BoundaryLevels { level, interior_max }),
        _ => Ok(()),
    }
}

/// The form at each basis vector `e_j`, `j ∈ levels`.
pub fn drift_form_diagonal<T: Real>(c: &FockOperator<T>, m: &ModelSpec<T>, levels: Range<usize>) -> Result<Vec<T>> {
    if c.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: c.dim() });
    }
    check_levels(m, &levels)?;
    levels.map(|j| quadratic_form(c, m, &QuantumState::basis(m.dim(), j)?)).collect()
}

/// Real diagonal of a reference operator, rejecting anything but a
/// nonnegative diagonal.
fn reference_diagonal<T: Real>(c: &FockOperator<T>) -> Result<Vec<T>> {
    if c.offsets().any(|d| d != 0) {
        return Err(Error::InvalidConfig("reference operator must be diagonal".into()));
    }
    (0..c.dim())
        .map(|j| {
            let z = c.entry(j, j);
            if z.im != T::zero() || z.re < T::zero() {
                Err(Error::InvalidConfig(format!("reference operator entry {j} is not nonnegative")))
            } else {
                Ok(z.re)
            }
        })
        .collect()
}

/// Interior block of `F` as a dense Hermitian matrix.
fn form_block<T: Real>(c: &FockOperator<T>, m: &ModelSpec<T>, n: usize) -> DMatrix<Complex<T>> {
    let dense = form_operator(c, m).restrict(n).to_dense();
    (&dense + dense.adjoint()).scale(real::<T>(0.5))
}

fn is_diagonal<T: Real>(a: &DMatrix<Complex<T>>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == czero()))
}

fn max_eigenvalue<T: Real>(a: &DMatrix<Complex<T>>) -> T {
    let lowest = real::<T>(f64::NEG_INFINITY);
    if is_diagonal(a) {
        return (0..a.nrows()).map(|i| a[(i, i)].re).fold(lowest, |x, y| x.max(y));
    }
    a.clone().symmetric_eigenvalues().iter().copied().fold(lowest, |x, y| x.max(y))
}

/// `max(0, λ_max(F + s·diag(w)))`.
fn shifted_top<T: Real>(f: &DMatrix<Complex<T>>, w: &[T], s: T) -> T {
    let mut a = f.clone();
    for (i, &wi) in w.iter().enumerate() {
        a[(i, i)] += cplx(s * wi, T::zero());
    }
    max_eigenvalue(&a).max(T::zero())
}

fn best_pair<T: Real>(f: &DMatrix<Complex<T>>, c2: &[T]) -> (T, T) {
    let weight: Vec<T> = c2.iter().map(|&v| v + T::one()).collect();
    let ratios: Vec<T> = (0..weight.len()).map(|j| f[(j, j)].re / weight[j]).collect();
    let top = ratios.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let mut candidates = vec![T::zero()];
    if top > T::zero() {
        let hi = real::<T>(10.0) * top;
        let lo = hi * real::<T>(1e-6);
        let q = (hi / lo).powf(T::one() / real::<T>((ALPHA_GRID_POINTS - 2) as f64));
        let mut a = lo;
        for _ in 0..ALPHA_GRID_POINTS - 1 {
            candidates.push(a);
            a *= q;
        }
        candidates.extend(ratios.iter().copied().filter(|&r| r > T::zero()));
    }
    candidates
        .into_iter()
        .map(|alpha| (alpha, shifted_top(f, &weight, -alpha)))
        .fold(None, |best: Option<(T, T)>, (a, b)| match best {
            Some((ba, bb)) if ba + bb < a + b || (ba + bb == a + b && ba <= a) => Some((ba, bb)),
            _ => Some((a, b)),
        })
        .expect("at least one candidate")
}

/// Top eigenvalue of `W^{-1/2} F W^{-1/2}` on levels `lo..hi`, `W = C² + I`.
fn tail_rate<T: Real>(f: &DMatrix<Complex<T>>, c2: &[T], lo: usize, hi: usize) -> T {
    let len = hi - lo;
    let s: Vec<T> = c2[lo..hi].iter().map(|&v| T::one() / (v + T::one()).sqrt()).collect();
    let block = DMatrix::from_fn(len, len, |i, j| f[(lo + i, lo + j)] * cplx(s[i] * s[j], T::zero()));
    max_eigenvalue(&block)
}

/// Random unit vectors supported on the first `n` levels of a `dim`-level space.
fn verification_states<T: Real>(dim: usize, n: usize) -> Vec<QuantumState<T>> {
    let mut rng = ChaCha20Rng::seed_from_u64(VERIFY_SEED);
    (0..VERIFY_STATES)
        .map(|_| {
            let mut v = vec![czero(); dim];
            for z in v.iter_mut().take(n) {
                *z = cplx(T::standard_normal(&mut rng), T::standard_normal(&mut rng));
            }
            QuantumState::from_vec_unchecked(v).normalized().expect("nonzero gaussian vector")
        })
        .collect()
}

/// Basis and random unit states of the block for which `holds` must be true.
fn certify<T: Real>(dim: usize, n: usize, mut holds: impl FnMut(&QuantumState<T>) -> Result<bool>) -> Result<usize> {
    let mut checked = 0;
    let basis = (0..n).map(|j| QuantumState::basis(dim, j)).collect::<Result<Vec<_>>>()?;
    for x in basis.iter().chain(verification_states(dim, n).iter()) {
        if !holds(x)? {
            return Err(Error::UnboundedForm(format!("certification failed on state {checked}")));
        }
        checked += 1;
    }
    Ok(checked)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H13Constants<T: Real> {
    pub alpha: T,
    pub beta: T,
    /// Levels of the interior block used.
    pub levels: usize,
    /// Basis plus random states the pair was certified on.
    pub certified_states: usize,
}

/// Pair `(α, β)` minimizing `α + β` such that every unit `x` on the
/// interior block satisfies `form(x) ≤ α(‖Cx‖² + ‖x‖²) + β`.
///
/// `levels` caps the block size (default: the whole interior). With
/// `W = C² + I`, the tail rate of a level range is the top eigenvalue of
/// `W^{-1/2} F W^{-1/2}` on it, the smallest admissible `α` there when
/// `β = 0`. The form is declared unbounded when the rate on the upper half
/// of the block is positive and exceeds [`UNBOUNDED_GROWTH`] times the rate
/// on the quarter below it.
pub fn estimate_h13_constants<T: Real>(
    c: &FockOperator<T>,
    m: &ModelSpec<T>,
    levels: Option<usize>,
) -> Result<H13Constants<T>> {
    if c.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: c.dim() });
    }
    let diag = reference_diagonal(c)?;
    let interior = m.interior_max_level() + 1;
    let n = levels.unwrap_or(interior);
    if n > interior {
        return Err(Error::BoundaryLevels { level: n - 1, interior_max: interior - 1 });
    }
    if n < 2 {
        return Err(Error::InvalidDimension { dim: n, min: 2 });
    }
    let c2: Vec<T> = diag.iter().map(|&d| d * d).collect();
    let f = form_block(c, m, n);
    let (alpha, beta) = best_pair(&f, &c2[..n]);
    if n >= 4 {
        let upper = tail_rate(&f, &c2, n / 2, n);
        let lower = tail_rate(&f, &c2, n / 4, n / 2);
        if upper > T::zero() && upper > real::<T>(UNBOUNDED_GROWTH) * lower.max(T::zero()) {
            return Err(Error::UnboundedForm(format!(
                "rate relative to C² + I grows from {lower} on levels {}..{} to {upper} on levels {}..{n}",
                n / 4,
                n / 2,
                n / 2
            )));
        }
    }
    let slack = real::<T>(1e-9);
    let certified_states = certify(m.dim(), n, |x| {
        let q = quadratic_form(c, m, x)?;
        let cx = c.apply(x)?.norm_sqr();
        let rhs = alpha * (cx + T::one()) + beta;
        Ok(q <= rhs + slack * (T::one() + rabs(q) + rabs(rhs)))
    })?;
    Ok(H13Constants { alpha, beta, levels: n, certified_states })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovPair<T: Real> {
    /// `D = √α C`.
    pub alpha: T,
    /// Offset with `form(x) ≤ -‖Dx‖² + β(1 + ‖x‖²)`.
    pub beta: T,
    pub d: FockOperator<T>,
    pub certified_states: usize,
}

/// Pair `(C, √α C)` with `α` half the asymptotic decay rate
/// `-limsup F_jj / C_jj²`, read off the top quarter of the interior block.
pub fn lyapunov_pair<T: Real>(c: &FockOperator<T>, m: &ModelSpec<T>) -> Result<LyapunovPair<T>> {
    if c.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: c.dim() });
    }
    let diag = reference_diagonal(c)?;
    let n = m.interior_max_level() + 1;
    let c2: Vec<T> = diag.iter().take(n).map(|&d| d * d).collect();
    let f = form_block(c, m, n);
    let limsup = (n - n.div_ceil(4)..n)
        .filter(|&j| c2[j] > T::zero())
        .map(|j| f[(j, j)].re / c2[j])
        .reduce(|a, b| a.max(b))
        .ok_or_else(|| Error::UnboundedForm("reference operator vanishes near the cutoff".into()))?;
    if !(limsup < T::zero()) {
        return Err(Error::UnboundedForm(format!("form does not decay relative to C² (ratio {limsup})")));
    }
    let alpha = -limsup * real::<T>(0.5);
    let beta = shifted_top(&f, &c2, alpha);
    let d = c.scaled_real(alpha.sqrt());
    let slack = real::<T>(1e-9);
    let certified_states = certify(m.dim(), n, |x| {
        let q = quadratic_form(c, m, x)?;
        let dx = d.apply(x)?.norm_sqr();
        let rhs = -dx + real::<T>(2.0) * beta;
        Ok(q <= rhs + slack * (T::one() + rabs(q) + rabs(dx)))
    })?;
    Ok(LyapunovPair { alpha, beta, d, certified_states })
}

/// `|α_4| ≥ |α_5|`.
pub fn theorem7_predicate<T: Real>(params: &OscillatorParams<T>) -> bool {
    params.alpha_sq(4) >= params.alpha_sq(5)
}

/// `|α_4| > |α_5|`, or `|α_4| = |α_5|` with
/// `|α_2|² - |α_1|² + 4(2p+1)|α_4|² < 0`.
pub fn theorem8_predicate<T: Real>(params: &OscillatorParams<T>, p: u32) -> Result<bool> {
    if p < 4 {
        return Err(Error::OutOfScopePower(p));
    }
    let (a4, a5) = (params.alpha_sq(4), params.alpha_sq(5));
    let margin = params.alpha_sq(2) - params.alpha_sq(1) + real::<T>(4.0 * (2.0 * p as f64 + 1.0)) * a4;
    Ok(a4 > a5 || (a4 == a5 && margin < T::zero()))
}

/// Leading coefficient `4p(|α_5|² - |α_4|²)` of `c_j / j^{2p+1}`.
pub fn leading_coefficient<T: Real>(params: &OscillatorParams<T>, p: u32) -> T {
    real::<T>(4.0 * p as f64) * (params.alpha_sq(5) - params.alpha_sq(4))
}

/// `N^p` on `dim` levels.
pub fn number_power<T: Real>(dim: usize, p: u32) -> Result<FockOperator<T>> {
    Ok(ladder_ops::<T>(dim)?.number.powi(p))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriteriaReport<T: Real> {
    pub p: u32,
    pub dim: usize,
    /// Levels of `cj`.
    pub levels: Range<usize>,
    /// Form at `e_j` with `C = N^p`.
    pub cj: Vec<T>,
    /// `c_j / j^{2p+1}` (0 at `j = 0`).
    pub ratios: Vec<T>,
    /// Richardson estimate `2ρ(j) - ρ(j/2)` of `lim c_j / j^{2p+1}` at the
    /// top level, removing the `1/j` correction.
    pub leading_slope: T,
    /// `4p(|α_5|² - |α_4|²)`.
    pub leading_coefficient: T,
    pub h13: std::result::Result<H13Constants<T>, String>,
    pub theorem7: bool,
    pub theorem8: bool,
}

impl<T: Real> CriteriaReport<T> {
    /// Ratio at level `j` when it lies in the reported range.
    pub fn ratio_at(&self, j: usize) -> Option<T> {
        self.levels.clone().position(|l| l == j).map(|i| self.ratios[i])
    }
}

/// Coefficients, constants and predicates of the oscillator with `C = N^p`.
///
/// `levels` defaults to `0..=interior`; the H1.3 search uses `h13_dim`
/// levels (the interior when `None`).
pub fn criteria_report<T: Real>(
    params: &OscillatorParams<T>,
    p: u32,
    dim: usize,
    levels: Option<Range<usize>>,
    h13_dim: Option<usize>,
) -> Result<CriteriaReport<T>> {
    let theorem8 = theorem8_predicate(params, p)?;
    let m = preset(&Preset::Oscillator(*params), dim)?;
    let c = number_power::<T>(dim, p)?;
    let levels = levels.unwrap_or(0..m.interior_max_level() + 1);
    let cj = drift_form_diagonal(&c, &m, levels.clone())?;
    let ratio = |j: usize, v: T| if j == 0 { T::zero() } else { v / real::<T>(j as f64).powi(2 * p as i32 + 1) };
    let ratios: Vec<T> = levels.clone().zip(&cj).map(|(j, &v)| ratio(j, v)).collect();
    let top = levels.end.saturating_sub(1);
    let leading_slope = match (levels.clone().position(|l| l == top), levels.clone().position(|l| l == top / 2)) {
        (Some(a), Some(b)) if top >= 2 => real::<T>(2.0) * ratios[a] - ratios[b],
        _ => ratios.last().copied().unwrap_or_else(T::zero),
    };
    let h13 = estimate_h13_constants(&c, &m, h13_dim).map_err(|e| e.to_string());
    Ok(CriteriaReport {
        p,
        dim,
        levels,
        cj,
        ratios,
        leading_slope,
        leading_coefficient: leading_coefficient(params, p),
        h13,
        theorem7: theorem7_predicate(params),
        theorem8,
    })
}

/// Convenience for reports: value of `c_j / j^{2p+1}` at one level.
pub fn coefficient_ratio<T: Real>(params: &OscillatorParams<T>, p: u32, dim: usize, j: usize) -> Result<T> {
    let m = preset(&Preset::Oscillator(*params), dim)?;
    let c = number_power::<T>(dim, p)?;
    let v = drift_form_diagonal(&c, &m, j..j + 1)?[0];
    Ok(v / real::<T>(j as f64).powi(2 * p as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;

    fn damped(dim: usize) -> ModelSpec<f64> {
        preset(&Preset::Damped { omega: 1.0, decay: 1.0, thermal: 0.5 }, dim).unwrap()
    }

    #[test]
    fn identity_reference_gives_residual() {
        let m = damped(20);
        let v = drift_form_diagonal(&FockOperator::identity(20), &m, 0..m.interior_max_level() + 1).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn boundary_levels_rejected() {
        let m = damped(20);
        assert_eq!(
            drift_form_diagonal(&FockOperator::identity(20), &m, 0..20),
            Err(Error::BoundaryLevels { level: 19, interior_max: 18 })
        );
    }

    #[test]
    fn free_hamiltonian_constants_vanish() {
        let l = ladder_ops::<f64>(12).unwrap();
        let m = build_model(12, l.number.clone(), vec![]).unwrap();
        let h = estimate_h13_constants(&l.number, &m, None).unwrap();
        assert_eq!((h.alpha, h.beta), (0.0, 0.0));
    }

    #[test]
    fn thermal_constants() {
        let m = damped(40);
        let l = ladder_ops::<f64>(40).unwrap();
        let h = estimate_h13_constants(&l.number, &m, None).unwrap();
        // F_jj = -2j² + 3j + ½; the optimum sits at the ratio of level 1
        assert!((h.alpha - 0.75).abs() < 1e-12);
        assert!(h.beta.abs() < 1e-12);
        assert_eq!(h.certified_states, 39 + VERIFY_STATES);
    }

    #[test]
    fn predicates() {
        let p = OscillatorParams::<f64>::zero();
        assert!(theorem7_predicate(&p.with_alpha(4, 1.0).with_alpha(5, 0.5)));
        assert!(theorem7_predicate(&p));
        assert!(!theorem7_predicate(&p.with_alpha(5, 1.0)));
        let ex3 = p.with_alpha(1, 1.5f64.sqrt()).with_alpha(2, 0.5f64.sqrt());
        assert!(theorem8_predicate(&ex3, 4).unwrap());
        assert!(theorem8_predicate(&p.with_alpha(4, 1.0), 4).unwrap());
        assert!(!theorem8_predicate(&p.with_alpha(4, 1.0).with_alpha(5, 1.0), 4).unwrap());
        assert_eq!(theorem8_predicate(&p, 3), Err(Error::OutOfScopePower(3)));
    }

    #[test]
    fn lyapunov_pair_for_thermal_model() {
        let m = damped(40);
        let l = ladder_ops::<f64>(40).unwrap();
        let pair = lyapunov_pair(&l.number, &m).unwrap();
        assert!(pair.alpha > 0.9 && pair.alpha < 1.0);
        assert!(pair.beta > 2.0 && pair.beta < 2.6);
    }
}
