//! Observation model for transformer currents.
//!
//! A measured current is split into a magnetization part, polynomial in an
//! effective flux linkage, and a sinusoidal part. Flux linkages and the
//! sinusoid are written as `d/q` components against `sin(w0 t)` and
//! `cos(w0 t)`, plus a slowly varying offset state that absorbs the decaying
//! DC flux. State order:
//!
//! * single-phase: `[L_d, L_q, L_0, i_d, i_q]`
//! * three-phase core: `[L_d, L_q, L_0, L'_d, L'_q, L'_0, i_d, i_q]`
//!
//! Primed states carry the yoke flux of core-type three-phase units.

use std::f64::consts::TAU;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest state dimension supported (three-phase core model).
pub const MAX_STATES: usize = 8;

/// Two-term saturation polynomial `i = beta1 * l + beta2 * l^n` (odd in `l`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub beta1: f64,
    pub beta2: f64,
    pub n: u32,
}

impl Polynomial {
    pub fn new(beta1: f64, beta2: f64, n: u32) -> Result<Self> {
        let p = Self { beta1, beta2, n };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !self.beta1.is_finite() || !self.beta2.is_finite() {
            return Err(Error::Config("polynomial coefficients must be finite".into()));
        }
        if self.n < 1 {
            return Err(Error::Config("polynomial exponent must be >= 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn current(&self, flux: f64) -> f64 {
        magnetization_current(flux, self.beta1, self.beta2, self.n)
    }

    /// Derivative of [`Polynomial::current`] with respect to flux.
    #[inline]
    pub fn slope(&self, flux: f64) -> f64 {
        self.beta1 + self.n as f64 * self.beta2 * flux.abs().powi(self.n as i32 - 1)
    }
}

/// Model variant. The yoke polynomial exists only for three-phase cores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    SinglePhase,
    ThreePhaseCore { yoke: Polynomial },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Fundamental angular frequency [rad/s].
    pub omega0: f64,
    /// Input sampling period [s].
    pub ts: f64,
    /// Limb (or single core) polynomial.
    pub limb: Polynomial,
}

impl ModelConfig {
    pub fn single_phase(omega0: f64, ts: f64, limb: Polynomial) -> Result<Self> {
        let m = Self { variant: Variant::SinglePhase, omega0, ts, limb };
        m.validate()?;
        Ok(m)
    }

    pub fn three_phase(omega0: f64, ts: f64, limb: Polynomial, yoke: Polynomial) -> Result<Self> {
        let m = Self { variant: Variant::ThreePhaseCore { yoke }, omega0, ts, limb };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::Config(format!("omega0 must be positive, got {}", self.omega0)));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::Config(format!("ts must be positive, got {}", self.ts)));
        }
        self.limb.validate()?;
        if let Variant::ThreePhaseCore { yoke } = &self.variant {
            yoke.validate()?;
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        match self.variant {
            Variant::SinglePhase => 5,
            Variant::ThreePhaseCore { .. } => 8,
        }
    }

    /// Fundamental period `2 pi / omega0` [s].
    #[inline]
    pub fn period(&self) -> f64 {
        TAU / self.omega0
    }

    fn yoke(&self) -> Option<&Polynomial> {
        match &self.variant {
            Variant::SinglePhase => None,
            Variant::ThreePhaseCore { yoke } => Some(yoke),
        }
    }
}

macro_rules! fixed_vector {
    ($name:ident) => {
        impl $name {
            pub fn zeros(dim: usize) -> Self {
                assert!(dim <= MAX_STATES, "dimension {dim} exceeds {MAX_STATES}");
                Self { values: [0.0; MAX_STATES], dim }
            }

            pub fn from_slice(values: &[f64]) -> Result<Self> {
                if values.len() != 5 && values.len() != 8 {
                    return Err(Error::InvalidArgument(format!(
                        "expected 5 or 8 entries, got {}",
                        values.len()
                    )));
                }
                let mut v = Self::zeros(values.len());
                v.values[..values.len()].copy_from_slice(values);
                Ok(v)
            }

            #[inline]
            pub fn dim(&self) -> usize {
                self.dim
            }

            #[inline]
            pub fn as_slice(&self) -> &[f64] {
                &self.values[..self.dim]
            }

            #[inline]
            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.values[..self.dim]
            }

            pub fn is_finite(&self) -> bool {
                self.as_slice().iter().all(|v| v.is_finite())
            }

            pub fn dot(&self, other: &[f64]) -> f64 {
                self.as_slice().iter().zip(other).map(|(a, b)| a * b).sum()
            }
        }

        impl Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.as_slice()[i]
            }
        }

        impl IndexMut<usize> for $name {
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.as_mut_slice()[i]
            }
        }
    };
}

/// Filter state `x_k`: flux-linkage components followed by sinusoid components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    values: [f64; MAX_STATES],
    dim: usize,
}

fixed_vector!(StateVector);

impl StateVector {
    pub fn single_phase(lambda_d: f64, lambda_q: f64, lambda_0: f64, i_d: f64, i_q: f64) -> Self {
        let mut x = Self::zeros(5);
        x.values[..5].copy_from_slice(&[lambda_d, lambda_q, lambda_0, i_d, i_q]);
        x
    }

    pub fn lambda_d(&self) -> f64 {
        self.values[0]
    }
    pub fn lambda_q(&self) -> f64 {
        self.values[1]
    }
    pub fn lambda_0(&self) -> f64 {
        self.values[2]
    }
    pub fn i_d(&self) -> f64 {
        self.values[self.dim - 2]
    }
    pub fn i_q(&self) -> f64 {
        self.values[self.dim - 1]
    }

    /// Yoke states `[L'_d, L'_q, L'_0]` for the three-phase model.
    pub fn yoke(&self) -> Option<[f64; 3]> {
        (self.dim == 8).then(|| [self.values[3], self.values[4], self.values[5]])
    }

    /// Amplitude and phase of the sinusoidal current component.
    pub fn sinusoid_peak_phase(&self) -> (f64, f64) {
        (self.i_d().hypot(self.i_q()), self.i_q().atan2(self.i_d()))
    }
}

/// Time-dependent coefficient row `a_k` multiplying the states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientVector {
    values: [f64; MAX_STATES],
    dim: usize,
}

fixed_vector!(CoefficientVector);

impl CoefficientVector {
    /// Builds the row for the given variant from `sin(w0 t)` and `cos(w0 t)`.
    pub fn from_sin_cos(model: &ModelConfig, sin: f64, cos: f64) -> Self {
        let dim = model.dim();
        let mut a = Self::zeros(dim);
        a.values[0] = sin;
        a.values[1] = cos;
        a.values[2] = 1.0;
        if dim == 8 {
            a.values[3] = sin;
            a.values[4] = cos;
            a.values[5] = 1.0;
        }
        a.values[dim - 2] = sin;
        a.values[dim - 1] = cos;
        a
    }

    pub fn a_d(&self) -> f64 {
        self.values[0]
    }
    pub fn a_q(&self) -> f64 {
        self.values[1]
    }
    pub fn a_0(&self) -> f64 {
        self.values[2]
    }
    pub fn c_d(&self) -> f64 {
        self.values[self.dim - 2]
    }
    pub fn c_q(&self) -> f64 {
        self.values[self.dim - 1]
    }
}

/// `w0 t` reduced into `[0, 2 pi)`. The time is first reduced modulo the
/// fundamental period so long runs keep full phase resolution.
#[inline]
pub fn reduced_phase(omega0: f64, t: f64) -> f64 {
    let period = TAU / omega0;
    omega0 * t.rem_euclid(period)
}

pub fn coefficients_at(model: &ModelConfig, t: f64) -> Result<CoefficientVector> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite time {t}")));
    }
    let (sin, cos) = reduced_phase(model.omega0, t).sin_cos();
    Ok(CoefficientVector::from_sin_cos(model, sin, cos))
}

/// `x^n` with odd symmetry for every exponent: `sign(x) * |x|^n`.
#[inline]
pub fn pow_signed(x: f64, n: u32) -> f64 {
    let p = x.abs().powi(n as i32);
    if x < 0.0 {
        -p
    } else {
        p
    }
}

#[inline]
pub fn magnetization_current(lambda: f64, beta1: f64, beta2: f64, n: u32) -> f64 {
    beta1 * lambda + beta2 * pow_signed(lambda, n)
}

fn check_dims(model: &ModelConfig, a: &CoefficientVector, x: &StateVector) -> Result<()> {
    let dim = model.dim();
    if a.dim() != dim || x.dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: model {dim}, coefficients {}, state {}",
            a.dim(),
            x.dim()
        )));
    }
    Ok(())
}

/// Effective limb and (optional) yoke flux linkages `a_m . x_m`.
#[inline]
fn fluxes(model: &ModelConfig, a: &CoefficientVector, x: &StateVector) -> (f64, f64) {
    let a = a.as_slice();
    let x = x.as_slice();
    let limb = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
    let yoke = match model.variant {
        Variant::SinglePhase => 0.0,
        Variant::ThreePhaseCore { .. } => a[3] * x[3] + a[4] * x[4] + a[5] * x[5],
    };
    (limb, yoke)
}

/// Magnetization and sinusoidal parts of `h(a, x)`.
pub fn decompose(model: &ModelConfig, a: &CoefficientVector, x: &StateVector) -> Result<(f64, f64)> {
    check_dims(model, a, x)?;
    let (limb, yoke) = fluxes(model, a, x);
    let mut i_m = model.limb.current(limb);
    if let Some(y) = model.yoke() {
        i_m += y.current(yoke);
    }
    let i_s = a.c_d() * x.i_d() + a.c_q() * x.i_q();
    Ok((i_m, i_s))
}

/// Observation function `h(a, x) = i_m + i_s`.
pub fn observe(model: &ModelConfig, a: &CoefficientVector, x: &StateVector) -> Result<f64> {
    let (i_m, i_s) = decompose(model, a, x)?;
    Ok(i_m + i_s)
}

/// Row Jacobian `dh/dx` in state order.
pub fn jacobian(
    model: &ModelConfig,
    a: &CoefficientVector,
    x: &StateVector,
) -> Result<CoefficientVector> {
    check_dims(model, a, x)?;
    let dim = model.dim();
    let (limb, yoke) = fluxes(model, a, x);
    let mut h = CoefficientVector::zeros(dim);
    let g = model.limb.slope(limb);
    h.values[0] = a.a_d() * g;
    h.values[1] = a.a_q() * g;
    h.values[2] = a.a_0() * g;
    if let Some(y) = model.yoke() {
        let g = y.slope(yoke);
        h.values[3] = a.values[3] * g;
        h.values[4] = a.values[4] * g;
        h.values[5] = a.values[5] * g;
    }
    h.values[dim - 2] = a.c_d();
    h.values[dim - 1] = a.c_q();
    Ok(h)
}

/// Magnetization polynomial published for the 380:220 V, 5 kVA unit.
pub const RATED_LIMB: Polynomial = Polynomial { beta1: 0.054, beta2: 0.039, n: 5 };
