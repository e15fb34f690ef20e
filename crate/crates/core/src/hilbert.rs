//! Truncated Fock space: complex state vectors and banded sparse operators.
//!
//! The basis is `e_0 .. e_{dim-1}`. Every operator is stored by diagonals
//! (band offset `d = col - row`), which keeps ladder-operator algebra exact
//! and cheap: the product of a band `d1` with a band `d2` lands on band
//! `d1 + d2` and nothing else.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cabs, cone, cplx, czero, real, to_f64, Real};

/// Relative tolerance of the Hermiticity classification.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Tolerance on `|norm^2 - 1|` for a state to count as normalized.
pub const NORMALIZED_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState<T: Real> {
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> QuantumState<T> {
    pub fn new(coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidDimension { dim: 0, min: 1 });
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidConfig("state has non-finite amplitudes".into()));
        }
        Ok(Self { coeffs })
    }

    /// Skips the finiteness scan; the solvers check finiteness themselves.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<Complex<T>>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coeffs: vec![czero(); dim] }
    }

    /// The Fock state `e_level`.
    pub fn basis(dim: usize, level: usize) -> Result<Self> {
        if level >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: level + 1 });
        }
        let mut s = Self::zeros(dim);
        s.coeffs[level] = cone();
        Ok(s)
    }

    /// Equal-weight normalized superposition of the listed Fock levels.
    pub fn superposition(dim: usize, levels: &[usize]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::ZeroInitialState);
        }
        let mut s = Self::zeros(dim);
        for &l in levels {
            if l >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: l + 1 });
            }
            s.coeffs[l] += cone::<T>();
        }
        s.normalized()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.coeffs
    }

    pub fn norm_sqr(&self) -> T {
        norm_sqr(&self.coeffs)
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// `<self, other>`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        check_dim(self.dim(), other.dim())?;
        Ok(inner(&self.coeffs, &other.coeffs))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_normalized(&self) -> bool {
        to_f64(self.norm_sqr() - T::one()).abs() <= NORMALIZED_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() {
            return Err(Error::ZeroInitialState);
        }
        Ok(self.scaled_real(T::one() / n))
    }

    pub fn scaled(&self, factor: Complex<T>) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&z| z * factor).collect() }
    }

    pub fn scaled_real(&self, factor: T) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&z| z * factor).collect() }
    }

    /// `<x, A x>`.
    pub fn expectation(&self, op: &FockOperator<T>) -> Result<Complex<T>> {
        let ax = op.apply(self)?;
        Ok(inner(&self.coeffs, &ax.coeffs))
    }

    /// `|<e_level, x>|^2`.
    pub fn population(&self, level: usize) -> T {
        self.coeffs.get(level).map_or(T::zero(), |z| z.norm_sqr())
    }

    /// Copy into a larger basis, padding with zeros.
    pub fn padded(&self, dim: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(dim.max(self.dim()), czero());
        Self { coeffs }
    }
}

impl<T: Real> Add for &QuantumState<T> {
    type Output = QuantumState<T>;
    fn add(self, rhs: Self) -> QuantumState<T> {
        assert_eq!(self.dim(), rhs.dim(), "state dimension mismatch");
        QuantumState {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &QuantumState<T> {
    type Output = QuantumState<T>;
    fn sub(self, rhs: Self) -> QuantumState<T> {
        assert_eq!(self.dim(), rhs.dim(), "state dimension mismatch");
        QuantumState {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul<&QuantumState<T>> for Complex<T> {
    type Output = QuantumState<T>;
    fn mul(self, rhs: &QuantumState<T>) -> QuantumState<T> {
        rhs.scaled(self)
    }
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

#[inline]
pub(crate) fn inner<T: Real>(x: &[Complex<T>], y: &[Complex<T>]) -> Complex<T> {
    x.iter().zip(y).fold(czero(), |acc, (a, b)| acc + a.conj() * b)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    Hermitian,
    AntiHermitian,
    General,
}

/// Sparse operator on the truncated basis, stored as diagonals.
///
/// Band `d` holds the entries `(i, i + d)`; its vector is indexed by
/// `min(i, i + d)` and has length `dim - |d|`. All-zero bands are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator<T: Real> {
    dim: usize,
    bands: BTreeMap<isize, Vec<Complex<T>>>,
    symmetry: Symmetry,
}

impl<T: Real> FockOperator<T> {
    fn from_bands(dim: usize, mut bands: BTreeMap<isize, Vec<Complex<T>>>) -> Self {
        bands.retain(|_, v| v.iter().any(|z| *z != czero()));
        let mut op = Self { dim, bands, symmetry: Symmetry::General };
        op.symmetry = op.classify();
        op
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_bands(dim, BTreeMap::new())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(vec![cone(); dim])
    }

    pub fn from_diagonal(diag: Vec<Complex<T>>) -> Self {
        let dim = diag.len();
        let mut bands = BTreeMap::new();
        bands.insert(0, diag);
        Self::from_bands(dim, bands)
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        Self::from_diagonal(diag.iter().map(|&x| cplx(x, T::zero())).collect())
    }

    /// Build from `(row, col, value)` triplets; repeated positions add up.
    pub fn from_triplets<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, Complex<T>)>,
    {
        let mut bands: BTreeMap<isize, Vec<Complex<T>>> = BTreeMap::new();
        for (i, j, v) in entries {
            if i >= dim || j >= dim {
                return Err(Error::DimensionMismatch { expected: dim, found: i.max(j) + 1 });
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite operator entry at ({i}, {j})")));
            }
            let d = j as isize - i as isize;
            let band = bands.entry(d).or_insert_with(|| vec![czero(); dim - d.unsigned_abs()]);
            band[i.min(j)] += v;
        }
        Ok(Self::from_bands(dim, bands))
    }

    pub fn from_dense(m: &DMatrix<Complex<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let n = m.nrows();
        Self::from_triplets(
            n,
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| (i, j, m[(i, j)]))
                .filter(|(_, _, v)| *v != czero()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<Complex<T>> {
        let mut m = DMatrix::from_element(self.dim, self.dim, czero());
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_hermitian(&self) -> bool {
        self.symmetry == Symmetry::Hermitian
    }

    /// Stored entries `(row, col, value)`, band by band.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex<T>)> + '_ {
        self.bands.iter().flat_map(|(&d, vals)| {
            vals.iter().enumerate().map(move |(k, &v)| {
                let (i, j) = band_position(d, k);
                (i, j, v)
            })
        })
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        let d = j as isize - i as isize;
        self.bands.get(&d).and_then(|v| v.get(i.min(j)).copied()).unwrap_or_else(czero)
    }

    /// Band offsets present in storage.
    pub fn offsets(&self) -> impl Iterator<Item = isize> + '_ {
        self.bands.keys().copied()
    }

    /// Largest `|col - row|` among stored entries; the number of levels the
    /// operator can shift a state by.
    pub fn max_shift(&self) -> usize {
        self.bands.keys().map(|d| d.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn max_abs(&self) -> T {
        self.entries().map(|(_, _, v)| cabs(v)).fold(T::zero(), |a, b| a.max(b))
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn row_sum_norm(&self) -> T {
        let mut rows = vec![T::zero(); self.dim];
        for (i, _, v) in self.entries() {
            rows[i] += cabs(v);
        }
        rows.into_iter().fold(T::zero(), |a, b| a.max(b))
    }

    /// `max |M_ij - conj(M_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        self.entries()
            .map(|(i, j, v)| cabs(v - self.entry(j, i).conj()))
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn anti_hermitian_defect(&self) -> T {
        self.entries()
            .map(|(i, j, v)| cabs(v + self.entry(j, i).conj()))
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn classify(&self) -> Symmetry {
        let tol = real::<T>(HERMITIAN_TOL) * (T::one() + self.max_abs());
        if self.hermitian_defect() <= tol {
            Symmetry::Hermitian
        } else if self.anti_hermitian_defect() <= tol {
            Symmetry::AntiHermitian
        } else {
            Symmetry::General
        }
    }

    pub fn adjoint(&self) -> Self {
        let bands = self
            .bands
            .iter()
            .map(|(&d, v)| (-d, v.iter().map(|z| z.conj()).collect()))
            .collect();
        Self::from_bands(self.dim, bands)
    }

    pub fn apply(&self, x: &QuantumState<T>) -> Result<QuantumState<T>> {
        check_dim(self.dim, x.dim())?;
        let mut out = vec![czero(); self.dim];
        self.apply_into(x.coeffs(), &mut out);
        Ok(QuantumState::from_vec_unchecked(out))
    }

    /// `out = A x` on raw slices; both must have length `dim`.
    #[inline]
    pub(crate) fn apply_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        out.iter_mut().for_each(|z| *z = czero());
        self.apply_add(x, out, cone());
    }

    /// `out += factor * A x`.
    #[inline]
    pub(crate) fn apply_add(&self, x: &[Complex<T>], out: &mut [Complex<T>], factor: Complex<T>) {
        for (&d, vals) in &self.bands {
            if d >= 0 {
                let d = d as usize;
                for (k, &v) in vals.iter().enumerate() {
                    out[k] += factor * v * x[k + d];
                }
            } else {
                let d = d.unsigned_abs();
                for (k, &v) in vals.iter().enumerate() {
                    out[k + d] += factor * v * x[k];
                }
            }
        }
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        check_dim(self.dim, rhs.dim)?;
        let n = self.dim as isize;
        let mut bands: BTreeMap<isize, Vec<Complex<T>>> = BTreeMap::new();
        for (&da, va) in &self.bands {
            for (&db, vb) in &rhs.bands {
                let dc = da + db;
                if dc.abs() >= n {
                    continue;
                }
                let out = bands.entry(dc).or_insert_with(|| vec![czero(); (n - dc.abs()) as usize]);
                for (ka, &a) in va.iter().enumerate() {
                    let (i, j) = band_position(da, ka);
                    let k = j as isize + db;
                    if k < 0 || k >= n {
                        continue;
                    }
                    let kb = j.min(k as usize);
                    out[i.min(k as usize)] += a * vb[kb];
                }
            }
        }
        Ok(Self::from_bands(self.dim, bands))
    }

    fn zip_bands(&self, rhs: &Self, sign: T) -> Result<Self> {
        check_dim(self.dim, rhs.dim)?;
        let mut bands = self.bands.clone();
        for (&d, vb) in &rhs.bands {
            let out = bands.entry(d).or_insert_with(|| vec![czero(); vb.len()]);
            for (o, &b) in out.iter_mut().zip(vb) {
                *o += b * sign;
            }
        }
        Ok(Self::from_bands(self.dim, bands))
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.zip_bands(rhs, T::one())
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_bands(rhs, -T::one())
    }

    pub fn scaled(&self, factor: Complex<T>) -> Self {
        let bands = self
            .bands
            .iter()
            .map(|(&d, v)| (d, v.iter().map(|&z| z * factor).collect()))
            .collect();
        Self::from_bands(self.dim, bands)
    }

    pub fn scaled_real(&self, factor: T) -> Self {
        self.scaled(cplx(factor, T::zero()))
    }

    pub fn powi(&self, n: u32) -> Self {
        (0..n).fold(Self::identity(self.dim), |acc, _| &acc * self)
    }

    /// Compression `P A P` onto the first `dim` levels.
    pub fn restrict(&self, dim: usize) -> Self {
        let dim = dim.min(self.dim);
        let bands = self
            .bands
            .iter()
            .filter(|(d, _)| d.unsigned_abs() < dim)
            .map(|(&d, v)| (d, v[..dim - d.unsigned_abs()].to_vec()))
            .collect();
        Self::from_bands(dim, bands)
    }

    /// Embed into a larger basis, padding with zeros.
    pub fn embed(&self, dim: usize) -> Self {
        let dim = dim.max(self.dim);
        let bands = self
            .bands
            .iter()
            .map(|(&d, v)| {
                let mut v = v.clone();
                v.resize(dim - d.unsigned_abs(), czero());
                (d, v)
            })
            .collect();
        Self::from_bands(dim, bands)
    }

    /// `A M` for a dense square `M`.
    pub fn mul_dense(&self, m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
        assert_eq!(m.nrows(), self.dim, "dense operand dimension mismatch");
        let mut out = DMatrix::from_element(self.dim, m.ncols(), czero());
        for (i, j, v) in self.entries() {
            for c in 0..m.ncols() {
                out[(i, c)] += v * m[(j, c)];
            }
        }
        out
    }

    /// `M A` for a dense square `M`.
    pub fn dense_mul(&self, m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
        assert_eq!(m.ncols(), self.dim, "dense operand dimension mismatch");
        let mut out = DMatrix::from_element(m.nrows(), self.dim, czero());
        for (i, j, v) in self.entries() {
            for r in 0..m.nrows() {
                out[(r, j)] += m[(r, i)] * v;
            }
        }
        out
    }
}

#[inline]
fn band_position(d: isize, k: usize) -> (usize, usize) {
    if d >= 0 {
        (k, k + d as usize)
    } else {
        (k + d.unsigned_abs(), k)
    }
}

impl<T: Real> Mul for &FockOperator<T> {
    type Output = FockOperator<T>;
    fn mul(self, rhs: Self) -> FockOperator<T> {
        self.try_matmul(rhs).expect("operator dimension mismatch")
    }
}

impl<T: Real> Add for &FockOperator<T> {
    type Output = FockOperator<T>;
    fn add(self, rhs: Self) -> FockOperator<T> {
        self.try_add(rhs).expect("operator dimension mismatch")
    }
}

impl<T: Real> Sub for &FockOperator<T> {
    type Output = FockOperator<T>;
    fn sub(self, rhs: Self) -> FockOperator<T> {
        self.try_sub(rhs).expect("operator dimension mismatch")
    }
}

impl<T: Real> Neg for &FockOperator<T> {
    type Output = FockOperator<T>;
    fn neg(self) -> FockOperator<T> {
        self.scaled_real(-T::one())
    }
}

impl<T: Real> Mul<&FockOperator<T>> for Complex<T> {
    type Output = FockOperator<T>;
    fn mul(self, rhs: &FockOperator<T>) -> FockOperator<T> {
        rhs.scaled(self)
    }
}

/// Annihilation, creation and number operators of one truncated mode.
#[derive(Clone, Debug)]
pub struct Ladder<T: Real> {
    pub annihilation: FockOperator<T>,
    pub creation: FockOperator<T>,
    pub number: FockOperator<T>,
}

/// Ladder operators with a hard cutoff: the creation operator sends the top
/// level to zero, so every operator here is the compression `P A P` of its
/// untruncated counterpart.
pub fn ladder_ops<T: Real>(dim: usize) -> Result<Ladder<T>> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    let sqrt: Vec<Complex<T>> = (1..dim).map(|j| cplx(real::<T>(j as f64).sqrt(), T::zero())).collect();
    let mut lower = BTreeMap::new();
    lower.insert(1, sqrt.clone());
    let mut raise = BTreeMap::new();
    raise.insert(-1, sqrt);
    let annihilation = FockOperator::from_bands(dim, lower);
    let creation = FockOperator::from_bands(dim, raise);
    let levels: Vec<T> = (0..dim).map(|j| real::<T>(j as f64)).collect();
    let number = FockOperator::from_real_diagonal(&levels);
    Ok(Ladder { annihilation, creation, number })
}

/// Position and momentum quadratures `Q = (a + a†)/√2`, `P = i(a† - a)/√2`.
pub fn quadratures<T: Real>(dim: usize) -> Result<(FockOperator<T>, FockOperator<T>)> {
    let l = ladder_ops::<T>(dim)?;
    let s = T::one() / real::<T>(2.0).sqrt();
    let q = (&l.annihilation + &l.creation).scaled_real(s);
    let p = (&l.creation - &l.annihilation).scaled(cplx(T::zero(), s));
    Ok((q, p))
}

pub fn adjoint<T: Real>(op: &FockOperator<T>) -> FockOperator<T> {
    op.adjoint()
}

pub fn apply<T: Real>(op: &FockOperator<T>, x: &QuantumState<T>) -> Result<QuantumState<T>> {
    op.apply(x)
}
