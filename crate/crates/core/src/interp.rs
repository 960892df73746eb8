//! Model-based reconstruction at the solver step.
//!
//! A reconstructed sample is the observation function evaluated with the
//! latest valid state at the high-rate instant. `sin`/`cos` come from a
//! precomputed table when the fundamental period is an integer number of
//! solver steps; otherwise they are evaluated directly from the reduced phase.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::model::{observe, reduced_phase, CoefficientVector, ModelConfig, StateVector};
use crate::validity::Flag;

const COMMENSURATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TrigTable {
    delta_t: f64,
    omega0: f64,
    /// `(sin, cos)` per step over one period; empty in direct mode.
    entries: Vec<(f64, f64)>,
}

impl TrigTable {
    pub fn build(omega0: f64, delta_t: f64) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
        }
        let period = TAU / omega0;
        if !(delta_t > 0.0 && delta_t < period) {
            return Err(Error::Config(format!("solver step {delta_t} must be in (0, {period})")));
        }
        let ratio = period / delta_t;
        let n = ratio.round();
        let entries = if (ratio - n).abs() <= COMMENSURATE_TOL * ratio {
            let n = n as usize;
            (0..n)
                .map(|j| (TAU * j as f64 / n as f64).sin_cos())
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self { delta_t, omega0, entries })
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Table length, or `None` when the direct-evaluation fallback is active.
    pub fn period_len(&self) -> Option<usize> {
        (!self.entries.is_empty()).then_some(self.entries.len())
    }

    pub fn is_tabulated(&self) -> bool {
        !self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    /// Table index of `t` if `t` lies on the solver grid.
    fn grid_index(&self, t: f64) -> Option<usize> {
        if self.entries.is_empty() {
            return None;
        }
        let steps = t / self.delta_t;
        let idx = steps.round();
        if idx < 0.0 || (steps - idx).abs() > 1e-6 {
            return None;
        }
        Some((idx as u64 % self.entries.len() as u64) as usize)
    }

    fn direct(&self, t: f64) -> (f64, f64) {
        reduced_phase(self.omega0, t).sin_cos()
    }
}

/// Block of high-rate samples produced for one input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedBlock {
    pub t_start: f64,
    pub delta_t: f64,
    pub samples: Vec<f64>,
    pub source_sample_index: u64,
}

impl ReconstructedBlock {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |j| self.t_start + j as f64 * self.delta_t)
    }
}

/// Evaluates `count` samples starting at model time `t_start` into `out`.
pub fn reconstruct_into(
    model: &ModelConfig,
    x: &StateVector,
    table: &TrigTable,
    t_start: f64,
    count: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument("reconstruction count must be >= 1".into()));
    }
    out.clear();
    out.reserve(count);
    let base = table.grid_index(t_start);
    for j in 0..count {
        let (sin, cos) = match base {
            Some(i0) => table.entries[(i0 + j) % table.entries.len()],
            None => table.direct(t_start + j as f64 * table.delta_t),
        };
        let a = CoefficientVector::from_sin_cos(model, sin, cos);
        debug_assert!(a.a_d() == a.c_d() && a.a_q() == a.c_q());
        out.push(observe(model, &a, x)?);
    }
    Ok(())
}

/// Reconstructs a block when the estimate is valid; returns
/// [`Error::InvalidEstimate`] for a flagged estimate.
pub fn reconstruct(
    model: &ModelConfig,
    x_valid: &StateVector,
    flag: Flag,
    table: &TrigTable,
    t_start: f64,
    count: usize,
    source_sample_index: u64,
) -> Result<ReconstructedBlock> {
    if flag == Flag::Invalid {
        return Err(Error::InvalidEstimate);
    }
    let mut samples = Vec::new();
    reconstruct_into(model, x_valid, table, t_start, count, &mut samples)?;
    Ok(ReconstructedBlock { t_start, delta_t: table.delta_t, samples, source_sample_index })
}

/// Trapezoidal area `(dt / 2) * sum(y[i+1] + y[i])` of uniformly spaced samples.
pub fn trapezoid_area(samples: &[f64], dt: f64) -> f64 {
    samples.windows(2).map(|w| w[0] + w[1]).sum::<f64>() * 0.5 * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coefficients_at, RATED_LIMB};
    use std::f64::consts::PI;

    #[test]
    fn table_modes() {
        let t60 = TrigTable::build(2.0 * PI * 60.0, 2e-6).unwrap();
        assert!(!t60.is_tabulated());

        let t50 = TrigTable::build(2.0 * PI * 50.0, 2e-6).unwrap();
        assert_eq!(t50.period_len(), Some(10_000));
        let (s, c) = t50.entries()[2500];
        assert!((s - 1.0).abs() < 1e-9 && c.abs() < 1e-9);
        assert_eq!(t50.entries()[0], (0.0, 1.0));
        for (j, &(s, c)) in t50.entries().iter().enumerate().step_by(37) {
            let ph = 2.0 * PI * 50.0 * j as f64 * 2e-6;
            assert!((s - ph.sin()).abs() < 1e-9 && (c - ph.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_steps_rejected() {
        assert!(TrigTable::build(2.0 * PI * 60.0, 0.0).is_err());
        assert!(TrigTable::build(2.0 * PI * 60.0, 0.1).is_err());
        assert!(TrigTable::build(-1.0, 1e-6).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let m = ModelConfig::single_phase(2.0 * PI * 50.0, 2e-4, RATED_LIMB).unwrap();
        let table = TrigTable::build(m.omega0, 2e-6).unwrap();
        let b = reconstruct(&m, &StateVector::zeros(5), Flag::Valid, &table, 0.0, 100, 0).unwrap();
        assert_eq!(b.samples.len(), 100);
        assert!(b.samples.iter().all(|&v| v == 0.0));
        assert_eq!(
            reconstruct(&m, &StateVector::zeros(5), Flag::Invalid, &table, 0.0, 100, 0),
            Err(Error::InvalidEstimate)
        );
    }

    #[test]
    fn native_rate_matches_observe() {
        for f0 in [50.0, 60.0] {
            let m = ModelConfig::single_phase(2.0 * PI * f0, 2e-4, RATED_LIMB).unwrap();
            let table = TrigTable::build(m.omega0, m.ts).unwrap();
            let x = StateVector::single_phase(0.2, 1.3, -0.4, 0.3, 0.25);
            for k in [0u64, 7, 1234, 98_765] {
                let t = k as f64 * m.ts;
                let b = reconstruct(&m, &x, Flag::Valid, &table, t, 1, k).unwrap();
                let direct = observe(&m, &coefficients_at(&m, t).unwrap(), &x).unwrap();
                assert!((b.samples[0] - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trapezoid_area_of_line() {
        assert_eq!(trapezoid_area(&[0.0, 1.0, 2.0], 0.5), 1.0);
        assert_eq!(trapezoid_area(&[4.0], 0.5), 0.0);
    }
}
