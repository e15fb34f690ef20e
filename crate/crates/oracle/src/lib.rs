//! Brute-force dense reference evaluations for testing the `nsse` crate.
//!
//! Everything here works on row-major `Vec<Complex64>` matrices with naive
//! loops. Operators are read out of the production types entry by entry and
//! never applied through them, so a bug in the sparse kernels cannot leak
//! into the reference values.

use nsse::model::Preset;
use nsse::{Model, Operator, State};
use num_complex::Complex64 as C64;

/// Largest dimension the dense oracles are meant for.
pub const MAX_DIM: usize = 64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub data: Vec<C64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    /// Copy of a sparse operator, read entry by entry.
    pub fn from_operator(op: &Operator) -> Self {
        let n = op.dim();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, op.entry(i, j));
            }
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        Self { n, data: (0..n * n).map(|k| f(k / n, k % n)).collect() }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_fn(self.n, |i, j| c * self.get(i, j))
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.n, x.len());
        (0..self.n)
            .map(|i| {
                let mut acc = C64::new(0.0, 0.0);
                for (j, xj) in x.iter().enumerate() {
                    acc += self.get(i, j) * xj;
                }
                acc
            })
            .collect()
    }

    /// Upper-left `dim × dim` block.
    pub fn truncate(&self, dim: usize) -> Self {
        Self::from_fn(dim, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// `<x, y>`, antilinear in `x`.
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `(a, a†, N)` on `dim` levels written out from their action on the basis.
pub fn naive_ladder(dim: usize) -> (Dense, Dense, Dense) {
    let a = Dense::from_fn(dim, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    let ad = Dense::from_fn(dim, |i, j| if i == j + 1 { C64::new((i as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    let n = Dense::from_fn(dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
    (a, ad, n)
}

/// `Q = (a + a†)/√2`, `P = i(a† - a)/√2`.
pub fn naive_quadratures(dim: usize) -> (Dense, Dense) {
    let (a, ad, _) = naive_ladder(dim);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (a.add(&ad).scale(C64::new(s, 0.0)), ad.sub(&a).scale(I * s))
}

/// Hamiltonian and channels of a model, copied densely.
#[derive(Clone, Debug)]
pub struct DenseModel {
    pub h: Dense,
    pub channels: Vec<Dense>,
}

impl DenseModel {
    pub fn from_model(m: &Model) -> Self {
        Self { h: Dense::from_operator(m.hamiltonian()), channels: m.channels().iter().map(Dense::from_operator).collect() }
    }

    pub fn dim(&self) -> usize {
        self.h.n
    }

    /// `-iH - ½ Σ L†L`.
    pub fn drift(&self) -> Dense {
        let mut g = self.h.scale(-I);
        for l in &self.channels {
            g = g.sub(&l.adjoint().matmul(l).scale(C64::new(0.5, 0.0)));
        }
        g
    }
}

/// Channels of a preset on `dim` levels, from the naive ladder matrices,
/// with zero-coefficient channels dropped in the same order as the preset.
pub fn preset_channels(p: &Preset<f64>, dim: usize) -> Vec<Dense> {
    let ops: Vec<(C64, Dense)> = match *p {
        Preset::Measurement { kappa, sigma, .. } => {
            let (q, mom) = naive_quadratures(dim);
            vec![(C64::new(kappa / sigma, 0.0), q), (C64::new(kappa * sigma, 0.0), mom)]
        }
        _ => {
            let params = p.oscillator_params().expect("oscillator preset");
            let (a, ad, n) = naive_ladder(dim);
            let ops = [a.clone(), ad.clone(), n.clone(), a.matmul(&a), ad.matmul(&ad), n.matmul(&n)];
            params.alpha.iter().copied().zip(ops).collect()
        }
    };
    ops.into_iter().filter(|(c, _)| *c != C64::new(0.0, 0.0)).map(|(c, op)| op.scale(c)).collect()
}

/// Norm leaking through the cutoff at `e_level` of the `dim`-level
/// truncation: `Σ_k Σ_{i ≥ dim} |(L_k e_level)_i|²` with the channels built
/// on enough levels to hold every image.
pub fn truncation_defect(p: &Preset<f64>, dim: usize, level: usize) -> f64 {
    let big = dim + 8;
    let mut e = vec![C64::new(0.0, 0.0); big];
    e[level] = C64::new(1.0, 0.0);
    preset_channels(p, big).iter().map(|l| l.apply(&e)[dim..].iter().map(|z| z.norm_sqr()).sum::<f64>()).sum()
}

/// `2 Re<x, Gx> + Σ ‖L_k x‖²` evaluated densely.
pub fn dense_conservativity(m: &DenseModel, x: &[C64]) -> f64 {
    let g = m.drift();
    2.0 * inner(x, &g.apply(x)).re + m.channels.iter().map(|l| norm_sqr(&l.apply(x))).sum::<f64>()
}

/// Drift and per-channel diffusion of the nonlinear equation at `y`, each
/// term assembled separately.
pub fn dense_field_oracle(y: &[C64], m: &Model) -> (Vec<C64>, Vec<Vec<C64>>) {
    let dm = DenseModel::from_model(m);
    let n = dm.dim();
    let hy = dm.h.apply(y);
    let mut drift: Vec<C64> = hy.iter().map(|v| -I * v).collect();
    let mut diffusion = Vec::with_capacity(dm.channels.len());
    for l in &dm.channels {
        let ly = l.apply(y);
        let ldl_y = l.adjoint().apply(&ly);
        let r = inner(y, &ly).re;
        for i in 0..n {
            drift[i] -= 0.5 * ldl_y[i];
            drift[i] += r * ly[i];
            drift[i] -= 0.5 * r * r * y[i];
        }
        diffusion.push((0..n).map(|i| ly[i] - r * y[i]).collect());
    }
    (drift, diffusion)
}

/// `-i[H, ρ] + Σ_k (L ρ L† - ½ {L†L, ρ})`.
pub fn dense_lindblad_rhs(rho: &Dense, m: &Model) -> Dense {
    let dm = DenseModel::from_model(m);
    let commutator = dm.h.matmul(rho).sub(&rho.matmul(&dm.h));
    let mut out = commutator.scale(-I);
    for l in &dm.channels {
        let ld = l.adjoint();
        let ldl = ld.matmul(l);
        let jump = l.matmul(rho).matmul(&ld);
        let anti = ldl.matmul(rho).add(&rho.matmul(&ldl));
        out = out.add(&jump).sub(&anti.scale(C64::new(0.5, 0.0)));
    }
    out
}

/// `|x><x|`.
pub fn projector(x: &[C64]) -> Dense {
    Dense::from_fn(x.len(), |i, j| x[i] * x[j].conj())
}

/// Solve `A z = b` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn dense_solve(a: &Dense, b: &[C64]) -> Option<Vec<C64>> {
    let n = a.n;
    let mut m = a.clone();
    let mut z = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m.get(i, col).norm().total_cmp(&m.get(j, col).norm()))?;
        if m.get(piv, col).norm() == 0.0 {
            return None;
        }
        for k in 0..n {
            let (u, v) = (m.get(col, k), m.get(piv, k));
            m.set(col, k, v);
            m.set(piv, k, u);
        }
        z.swap(col, piv);
        for row in col + 1..n {
            let f = m.get(row, col) / m.get(col, col);
            for k in col..n {
                let v = m.get(row, k) - f * m.get(col, k);
                m.set(row, k, v);
            }
            z[row] = z[row] - f * z[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = z[row];
        for k in row + 1..n {
            acc -= m.get(row, k) * z[k];
        }
        z[row] = acc / m.get(row, row);
    }
    Some(z)
}

/// Extrapolated limit from estimates at step `h` and `h/2` of a method
/// with error `O(h^order)`.
pub fn richardson(coarse: f64, fine: f64, order: u32) -> f64 {
    let f = 2f64.powi(order as i32);
    (f * fine - coarse) / (f - 1.0)
}

/// Observed convergence order from errors at `h` and `h/2`.
pub fn observed_order(err_coarse: f64, err_fine: f64) -> f64 {
    (err_coarse / err_fine).log2()
}

pub fn to_vec(x: &State) -> Vec<C64> {
    x.coeffs().to_vec()
}

/// `2 Re<Cx, CGx> + Σ ‖C L_k x‖²` evaluated densely.
pub fn dense_quadratic_form(c: &Dense, m: &Model, x: &[C64]) -> f64 {
    let dm = DenseModel::from_model(m);
    let cx = c.apply(x);
    let cgx = c.apply(&dm.drift().apply(x));
    2.0 * inner(&cx, &cgx).re + dm.channels.iter().map(|l| norm_sqr(&c.apply(&l.apply(x)))).sum::<f64>()
}
