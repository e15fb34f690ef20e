//! Open-system model: Hamiltonian, noise channels and the effective drift
//! `G = -iH - ½ Σ L_k† L_k`, plus the oscillator presets.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::hilbert::{ladder_ops, quadratures, FockOperator, QuantumState};
use crate::scalar::{cplx, czero, real, to_f64, Real};

/// Extra levels kept above the cutoff so presets know how their channels act
/// on the top levels of the untruncated space.
const EXTENSION_PAD: usize = 4;

#[derive(Clone, Debug)]
pub struct ModelSpec<T: Real> {
    label: String,
    dim: usize,
    hamiltonian: FockOperator<T>,
    channels: Vec<FockOperator<T>>,
    channel_labels: Vec<String>,
    drift: FockOperator<T>,
    /// Channels built on `dim + EXTENSION_PAD` levels; only presets have them.
    extended: Option<Vec<FockOperator<T>>>,
    ladder_degree: usize,
}

/// `G = -iH - ½ Σ_k L_k† L_k`, accumulated in channel order.
pub fn effective_drift<T: Real>(hamiltonian: &FockOperator<T>, channels: &[FockOperator<T>]) -> FockOperator<T> {
    let half = real::<T>(0.5);
    channels.iter().fold(hamiltonian.scaled(cplx(T::zero(), -T::one())), |g, l| {
        &g - &(&l.adjoint() * l).scaled_real(half)
    })
}

/// Validate operators and derive the effective drift.
pub fn build_model<T: Real>(
    dim: usize,
    hamiltonian: FockOperator<T>,
    channels: Vec<FockOperator<T>>,
) -> Result<ModelSpec<T>> {
    let labels = (1..=channels.len()).map(|k| format!("L{k}")).collect();
    let degree = channels.iter().map(FockOperator::max_shift).max().unwrap_or(0);
    ModelSpec::assemble("custom".into(), dim, hamiltonian, channels, labels, None, degree)
}

impl<T: Real> ModelSpec<T> {
    fn assemble(
        label: String,
        dim: usize,
        hamiltonian: FockOperator<T>,
        channels: Vec<FockOperator<T>>,
        channel_labels: Vec<String>,
        extended: Option<Vec<FockOperator<T>>>,
        ladder_degree: usize,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension { dim, min: 2 });
        }
        for op in std::iter::once(&hamiltonian).chain(&channels) {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: op.dim() });
            }
        }
        if !hamiltonian.is_hermitian() {
            return Err(Error::NonHermitian { asymmetry: to_f64(hamiltonian.hermitian_defect()) });
        }
        let drift = effective_drift(&hamiltonian, &channels);
        Ok(Self { label, dim, hamiltonian, channels, channel_labels, drift, extended, ladder_degree })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &FockOperator<T> {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[FockOperator<T>] {
        &self.channels
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Effective drift `G`.
    pub fn drift(&self) -> &FockOperator<T> {
        &self.drift
    }

    /// Largest ladder degree among the channels (1 for `a`, 2 for `N` or
    /// `a²`, 4 for `N²`); for custom models, the largest band offset.
    pub fn ladder_degree(&self) -> usize {
        self.ladder_degree
    }

    /// Highest level not contaminated by the truncation.
    pub fn interior_max_level(&self) -> usize {
        self.dim.saturating_sub(1 + self.ladder_degree)
    }

    pub fn has_extension(&self) -> bool {
        self.extended.is_some()
    }

    /// Channels on `dim + 4` levels, whose restriction gives [`Self::channels`].
    pub fn extended_channels(&self) -> Option<&[FockOperator<T>]> {
        self.extended.as_deref()
    }

    /// Rebuild `G` from the stored Hamiltonian and channels.
    pub fn recompute_drift(&self) -> FockOperator<T> {
        effective_drift(&self.hamiltonian, &self.channels)
    }

    /// Same model with the Hamiltonian replaced.
    pub fn with_hamiltonian(&self, hamiltonian: FockOperator<T>) -> Result<Self> {
        Self::assemble(
            self.label.clone(),
            self.dim,
            hamiltonian,
            self.channels.clone(),
            self.channel_labels.clone(),
            self.extended.clone(),
            self.ladder_degree,
        )
    }
}

/// `2 Re<x, Gx> + Σ_k ‖L_k x‖²`.
///
/// For preset models `L_k x` is evaluated with the untruncated channel, so
/// the value is the norm leaking through the cutoff: zero for states on
/// interior levels, positive at the top. Custom models only know their
/// truncated channels, for which the identity holds on every state.
pub fn conservativity_residual<T: Real>(m: &ModelSpec<T>, x: &QuantumState<T>) -> Result<T> {
    let gx = m.drift.apply(x)?;
    let drift_part = real::<T>(2.0) * x.inner(&gx)?.re;
    let channel_part = match &m.extended {
        Some(ext) => {
            let xe = x.padded(m.dim + EXTENSION_PAD);
            ext.iter().try_fold(T::zero(), |acc, l| Ok::<_, Error>(acc + l.apply(&xe)?.norm_sqr()))?
        }
        None => m.channels.iter().try_fold(T::zero(), |acc, l| Ok::<_, Error>(acc + l.apply(x)?.norm_sqr()))?,
    };
    Ok(drift_part + channel_part)
}

/// Coefficients of the forced and damped oscillator:
/// `H = iβ1(a† - a) + β2 N + β3 (a†)² a²` with channels
/// `α1 a, α2 a†, α3 N, α4 a², α5 (a†)², α6 N²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams<T: Real> {
    pub beta1: T,
    pub beta2: T,
    pub beta3: T,
    pub alpha: [Complex<T>; 6],
}

impl<T: Real> OscillatorParams<T> {
    pub fn zero() -> Self {
        Self { beta1: T::zero(), beta2: T::zero(), beta3: T::zero(), alpha: [czero(); 6] }
    }

    /// `|α_k|²` with the one-based index of the model definition.
    pub fn alpha_sq(&self, k: usize) -> T {
        self.alpha[k - 1].norm_sqr()
    }

    pub fn with_alpha(mut self, k: usize, value: T) -> Self {
        self.alpha[k - 1] = cplx(value, T::zero());
        self
    }

    fn is_finite(&self) -> bool {
        [self.beta1, self.beta2, self.beta3].iter().all(|b| b.is_finite())
            && self.alpha.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Preset<T: Real> {
    Oscillator(OscillatorParams<T>),
    /// Damped oscillator with frequency `omega`, decay rate `decay` (A) and
    /// thermal occupation `thermal` (ν).
    Damped { omega: T, decay: T, thermal: T },
    /// Two-photon absorption (`alpha4`) and emission (`alpha5`).
    TwoPhoton { beta3: T, alpha4: T, alpha5: T },
    /// Simultaneous position/momentum monitoring with `H = p2 P² + q2 Q²`.
    Measurement { kappa: T, sigma: T, p2: T, q2: T },
}

impl<T: Real> Preset<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Oscillator(_) => "oscillator",
            Preset::Damped { .. } => "damped",
            Preset::TwoPhoton { .. } => "two_photon",
            Preset::Measurement { .. } => "measurement",
        }
    }

    /// Oscillator coefficients, for every preset that is an oscillator.
    pub fn oscillator_params(&self) -> Option<OscillatorParams<T>> {
        match *self {
            Preset::Oscillator(p) => Some(p),
            Preset::Damped { omega, decay, thermal } => {
                let mut p = OscillatorParams::zero();
                p.beta2 = omega;
                p.alpha[0] = cplx((decay * (thermal + T::one())).sqrt(), T::zero());
                p.alpha[1] = cplx((decay * thermal).sqrt(), T::zero());
                Some(p)
            }
            Preset::TwoPhoton { beta3, alpha4, alpha5 } => {
                let mut p = OscillatorParams::zero();
                p.beta3 = beta3;
                p.alpha[3] = cplx(alpha4, T::zero());
                p.alpha[4] = cplx(alpha5, T::zero());
                Some(p)
            }
            Preset::Measurement { .. } => None,
        }
    }

    /// Look a preset up by name; `get` supplies named parameters. Oscillator
    /// coefficients default to zero, `alphaK_im` carries imaginary parts.
    pub fn from_name(name: &str, get: impl Fn(&str) -> Option<T>) -> Result<Self> {
        let need = |key: &'static str| {
            get(key).ok_or_else(|| Error::InvalidConfig(format!("preset `{name}` needs parameter `{key}`")))
        };
        match name {
            "oscillator" => {
                let or0 = |key: &str| get(key).unwrap_or_else(T::zero);
                let mut p = OscillatorParams::zero();
                p.beta1 = or0("beta1");
                p.beta2 = or0("beta2");
                p.beta3 = or0("beta3");
                for k in 1..=6 {
                    p.alpha[k - 1] = cplx(or0(&format!("alpha{k}")), or0(&format!("alpha{k}_im")));
                }
                Ok(Preset::Oscillator(p))
            }
            "damped" => Ok(Preset::Damped { omega: need("omega")?, decay: need("A")?, thermal: need("nu")? }),
            "two_photon" => Ok(Preset::TwoPhoton {
                beta3: get("beta3").unwrap_or_else(T::zero),
                alpha4: need("alpha4")?,
                alpha5: get("alpha5").unwrap_or_else(T::zero),
            }),
            "measurement" => Ok(Preset::Measurement {
                kappa: need("kappa")?,
                sigma: need("sigma")?,
                p2: get("h_p2").unwrap_or_else(T::zero),
                q2: get("h_q2").unwrap_or_else(T::zero),
            }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    fn validate(&self) -> Result<()> {
        fn positive<T: Real>(name: &'static str, v: T) -> Result<()> {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::OutOfDomain { name, value: to_f64(v), domain: "> 0" })
            }
        }
        fn nonnegative<T: Real>(name: &'static str, v: T) -> Result<()> {
            if v >= T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::OutOfDomain { name, value: to_f64(v), domain: ">= 0" })
            }
        }
        match *self {
            Preset::Oscillator(p) => {
                if p.is_finite() {
                    Ok(())
                } else {
                    Err(Error::OutOfDomain { name: "oscillator", value: f64::NAN, domain: "finite" })
                }
            }
            Preset::Damped { omega, decay, thermal } => {
                positive("omega", omega)?;
                positive("A", decay)?;
                positive("nu", thermal)
            }
            Preset::TwoPhoton { beta3, alpha4, alpha5 } => {
                if !beta3.is_finite() {
                    return Err(Error::OutOfDomain { name: "beta3", value: to_f64(beta3), domain: "finite" });
                }
                positive("alpha4", alpha4)?;
                nonnegative("alpha5", alpha5)
            }
            Preset::Measurement { kappa, sigma, p2, q2 } => {
                positive("kappa", kappa)?;
                positive("sigma", sigma)?;
                nonnegative("h_p2", p2)?;
                if q2.is_finite() {
                    Ok(())
                } else {
                    Err(Error::OutOfDomain { name: "h_q2", value: to_f64(q2), domain: "finite" })
                }
            }
        }
    }
}

struct Term<T: Real> {
    label: &'static str,
    coeff: Complex<T>,
    op: FockOperator<T>,
    degree: usize,
}

/// Build a preset model on `dim` levels.
pub fn preset<T: Real>(p: &Preset<T>, dim: usize) -> Result<ModelSpec<T>> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, min: 2 });
    }
    p.validate()?;
    let ext = dim + EXTENSION_PAD;
    let (hamiltonian, terms) = match p {
        Preset::Measurement { kappa, sigma, p2, q2 } => {
            let (q, mom) = quadratures::<T>(ext)?;
            let h = &(&mom * &mom).scaled_real(*p2) + &(&q * &q).scaled_real(*q2);
            let terms = vec![
                Term { label: "Q", coeff: cplx(*kappa / *sigma, T::zero()), op: q, degree: 1 },
                Term { label: "P", coeff: cplx(*kappa * *sigma, T::zero()), op: mom, degree: 1 },
            ];
            (h, terms)
        }
        _ => {
            let params = p.oscillator_params().expect("oscillator preset");
            oscillator_operators(&params, ext)?
        }
    };
    let active: Vec<Term<T>> = terms.into_iter().filter(|t| t.coeff != czero()).collect();
    let extended: Vec<FockOperator<T>> = active.iter().map(|t| t.op.scaled(t.coeff)).collect();
    let channels = extended.iter().map(|l| l.restrict(dim)).collect();
    let labels = active.iter().map(|t| format!("({}) {}", format_coeff(t.coeff), t.label)).collect();
    let degree = active.iter().map(|t| t.degree).max().unwrap_or(0);
    ModelSpec::assemble(
        p.name().to_string(),
        dim,
        hamiltonian.restrict(dim),
        channels,
        labels,
        Some(extended),
        degree,
    )
}

fn format_coeff<T: Real>(c: Complex<T>) -> String {
    if c.im == T::zero() {
        format!("{}", c.re)
    } else {
        format!("{}{:+}i", c.re, c.im)
    }
}

fn oscillator_operators<T: Real>(p: &OscillatorParams<T>, dim: usize) -> Result<(FockOperator<T>, Vec<Term<T>>)> {
    let l = ladder_ops::<T>(dim)?;
    let (a, ad, n) = (&l.annihilation, &l.creation, &l.number);
    let a2 = a * a;
    let ad2 = ad * ad;
    let drive = (ad - a).scaled(cplx(T::zero(), p.beta1));
    let kerr = (&ad2 * &a2).scaled_real(p.beta3);
    let h = &(&drive + &n.scaled_real(p.beta2)) + &kerr;
    let terms = vec![
        Term { label: "a", coeff: p.alpha[0], op: a.clone(), degree: 1 },
        Term { label: "a†", coeff: p.alpha[1], op: ad.clone(), degree: 1 },
        Term { label: "N", coeff: p.alpha[2], op: n.clone(), degree: 2 },
        Term { label: "a²", coeff: p.alpha[3], op: a2, degree: 2 },
        Term { label: "(a†)²", coeff: p.alpha[4], op: ad2, degree: 2 },
        Term { label: "N²", coeff: p.alpha[5], op: n * n, degree: 4 },
    ];
    Ok((h, terms))
}
