//! Adaptive extended Kalman filter over the transformer-current model.
//!
//! States are modeled as a random walk (identity transition). The scalar
//! measurement-noise variance is supplied from outside, normally by the
//! residual window in [`crate::noise`], and is refreshed after each update
//! for use in the next sample's gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CovMatrix;
use crate::model::{coefficients_at, jacobian, observe, CoefficientVector, ModelConfig, StateVector, MAX_STATES};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Initial error covariance, symmetric positive definite.
    pub p0: CovMatrix,
    /// Process-noise covariance, symmetric positive semidefinite.
    pub q: CovMatrix,
    /// Initial measurement-noise variance [A^2].
    pub sigma0_sq: f64,
    /// Residual window length.
    pub m: usize,
    /// Floor applied to the adaptive variance [A^2].
    pub sigma_min_sq: f64,
}

/// Diagonal tuning expressed per state group; see [`FilterConfig::from_tuning`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterTuning {
    /// Nominal current [A]; scales current-state covariances.
    pub i_nom: f64,
    /// Nominal flux linkage [Wb]; scales flux-state covariances.
    pub flux_nom: f64,
    /// `P0 = (p0_factor * i_nom)^2` for current states.
    pub p0_factor: f64,
    /// `P0 = (p0_flux_factor * flux_nom)^2` for flux states.
    pub p0_flux_factor: f64,
    /// `Q = q_factor * scale^2` for sinusoidal flux and current states.
    pub q_factor: f64,
    /// `Q = q_offset_factor * flux_nom^2` for the decaying offset states.
    pub q_offset_factor: f64,
    /// Initial measurement-noise standard deviation as a fraction of `i_nom`.
    pub sigma0_fraction: f64,
    pub m: usize,
    /// Floor as a fraction of `sigma0^2`.
    pub sigma_min_fraction: f64,
}

impl Default for FilterTuning {
    fn default() -> Self {
        Self {
            i_nom: 1.0,
            flux_nom: 1.0,
            p0_factor: 0.1,
            p0_flux_factor: 1.0,
            q_factor: 1e-7,
            q_offset_factor: 1e-5,
            sigma0_fraction: 0.03,
            m: 100,
            sigma_min_fraction: 1e-6,
        }
    }
}

impl FilterConfig {
    /// Diagonal `P0` and `Q` scaled per state: flux states by `flux_nom`,
    /// current states by `i_nom`.
    pub fn from_tuning(model: &ModelConfig, t: &FilterTuning) -> Result<Self> {
        let dim = model.dim();
        let mut p0 = vec![0.0; dim];
        let mut q = vec![0.0; dim];
        for i in 0..dim {
            let is_current = i >= dim - 2;
            let is_offset = i == 2 || (dim == 8 && i == 5);
            let (scale, factor) = if is_current { (t.i_nom, t.p0_factor) } else { (t.flux_nom, t.p0_flux_factor) };
            p0[i] = (factor * scale).powi(2);
            q[i] = if is_offset { t.q_offset_factor * scale * scale } else { t.q_factor * scale * scale };
        }
        let sigma0_sq = (t.sigma0_fraction * t.i_nom).powi(2);
        let cfg = Self {
            p0: CovMatrix::from_diagonal(&p0),
            q: CovMatrix::from_diagonal(&q),
            sigma0_sq,
            m: t.m,
            sigma_min_sq: t.sigma_min_fraction * sigma0_sq,
        };
        cfg.validate(model)?;
        Ok(cfg)
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let dim = model.dim();
        if self.p0.dim() != dim || self.q.dim() != dim {
            return Err(Error::Config(format!(
                "covariance dimension {} / {} does not match model dimension {dim}",
                self.p0.dim(),
                self.q.dim()
            )));
        }
        if !self.p0.is_finite() || !self.p0.is_symmetric(0.0) {
            return Err(Error::Config("P0 must be finite and symmetric".into()));
        }
        if self.p0.definiteness(1e-14) != Some(true) {
            return Err(Error::Config("P0 must be positive definite".into()));
        }
        if !self.q.is_finite() || !self.q.is_symmetric(0.0) {
            return Err(Error::Config("Q must be finite and symmetric".into()));
        }
        if self.q.definiteness(1e-14).is_none() {
            return Err(Error::Config("Q must be positive semidefinite".into()));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::Config("sigma0_sq must be positive".into()));
        }
        if self.m < 2 {
            return Err(Error::Config("window length m must be at least 2".into()));
        }
        if !(self.sigma_min_sq > 0.0 && self.sigma_min_sq.is_finite()) {
            return Err(Error::Config("sigma_min_sq must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_pred: StateVector,
    pub p_pred: CovMatrix,
    pub x_upd: StateVector,
    pub p_upd: CovMatrix,
    /// Measurement-noise variance used for the next gain.
    pub sigma_sq: f64,
    /// Number of samples consumed.
    pub k: u64,
}

/// Per-sample by-products of [`Aekf::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub coefficients: CoefficientVector,
    /// Innovation `i_meas - h(a_k, x_pred)`.
    pub innovation: f64,
    /// `H P_pred H^T + sigma_sq`.
    pub innovation_var: f64,
    /// `H P_pred H^T`, needed by the noise estimator.
    pub hpht: f64,
    /// `h(a_k, x_upd)`.
    pub estimate: f64,
}

impl StepOutput {
    pub fn posterior_residual(&self, i_meas: f64) -> f64 {
        i_meas - self.estimate
    }
}

/// One filter per measured current stream.
#[derive(Debug, Clone)]
pub struct Aekf {
    model: ModelConfig,
    cfg: FilterConfig,
    state: FilterState,
}

impl Aekf {
    pub fn new(model: ModelConfig, cfg: FilterConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate(&model)?;
        let state = Self::initial_state(&model, &cfg);
        Ok(Self { model, cfg, state })
    }

    fn initial_state(model: &ModelConfig, cfg: &FilterConfig) -> FilterState {
        let x = StateVector::zeros(model.dim());
        FilterState {
            x_pred: x,
            p_pred: cfg.p0,
            x_upd: x,
            p_upd: cfg.p0,
            sigma_sq: cfg.sigma0_sq,
            k: 0,
        }
    }

    pub fn reset(&mut self) {
        self.state = Self::initial_state(&self.model, &self.cfg);
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    /// Installs the noise variance for the next gain, clamped to the floor.
    pub fn set_noise_variance(&mut self, sigma_sq: f64) {
        self.state.sigma_sq = sigma_sq.max(self.cfg.sigma_min_sq);
    }

    /// Time used for coefficients of sample `k`.
    #[inline]
    pub fn sample_time(&self, k: u64) -> f64 {
        k as f64 * self.model.ts
    }

    /// `H P_pred H^T + sigma_sq` at the current sample, without mutation.
    pub fn innovation_covariance(&self) -> Result<f64> {
        let a = coefficients_at(&self.model, self.sample_time(self.state.k))?;
        let h = jacobian(&self.model, &a, &self.state.x_pred)?;
        Ok(self.state.p_pred.quad_form(h.as_slice()) + self.state.sigma_sq)
    }

    pub fn step(&mut self, i_meas: f64) -> Result<StepOutput> {
        let k = self.state.k;
        if !i_meas.is_finite() {
            return Err(Error::NonFinite { k, what: "measurement" });
        }
        let model = &self.model;
        let st = &mut self.state;
        let dim = model.dim();

        let a = coefficients_at(model, k as f64 * model.ts)?;
        let h = jacobian(model, &a, &st.x_pred)?;
        let h = h.as_slice();

        let ph = st.p_pred.mul_vec(h);
        let hpht: f64 = h.iter().zip(&ph[..dim]).map(|(a, b)| a * b).sum();
        let s = hpht + st.sigma_sq;
        if !s.is_finite() {
            return Err(Error::NonFinite { k, what: "innovation variance" });
        }
        if s <= 0.0 {
            return Err(Error::Degenerate { k, s });
        }

        let innovation = i_meas - observe(model, &a, &st.x_pred)?;
        let mut gain = [0.0; MAX_STATES];
        for i in 0..dim {
            gain[i] = ph[i] / s;
        }

        let mut x_upd = st.x_pred;
        for i in 0..dim {
            x_upd[i] += gain[i] * innovation;
        }

        // (I - G H) P = P - G (H P)
        let hp = st.p_pred.vec_mul(h);
        let mut p_upd = st.p_pred;
        p_upd.sub_outer(&gain[..dim], &hp[..dim]);
        p_upd.symmetrize();

        if !x_upd.is_finite() {
            return Err(Error::NonFinite { k, what: "state update" });
        }
        if !p_upd.is_finite() {
            return Err(Error::NonFinite { k, what: "covariance update" });
        }

        let estimate = observe(model, &a, &x_upd)?;
        st.x_upd = x_upd;
        st.p_upd = p_upd;
        st.x_pred = x_upd;
        st.p_pred = p_upd;
        st.p_pred.add_assign(&self.cfg.q);
        st.k += 1;

        Ok(StepOutput { coefficients: a, innovation, innovation_var: s, hpht, estimate })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Polynomial, RATED_LIMB};
    use std::f64::consts::PI;

    fn model() -> ModelConfig {
        ModelConfig::single_phase(2.0 * PI * 60.0, 2e-4, RATED_LIMB).unwrap()
    }

    fn cfg(m: &ModelConfig) -> FilterConfig {
        FilterConfig::from_tuning(m, &FilterTuning { i_nom: 13.0, flux_nom: 1.4, ..Default::default() }).unwrap()
    }

    #[test]
    fn init_state_shape() {
        let m = model();
        let f = Aekf::new(m, cfg(&m)).unwrap();
        assert_eq!(f.state().k, 0);
        assert_eq!(f.state().x_pred.dim(), 5);
        assert!(f.state().x_pred.as_slice().iter().all(|&v| v == 0.0));

        let tp = ModelConfig::three_phase(m.omega0, m.ts, RATED_LIMB, RATED_LIMB).unwrap();
        let f = Aekf::new(tp, cfg(&tp)).unwrap();
        assert_eq!(f.state().x_pred.dim(), 8);
    }

    #[test]
    fn asymmetric_p0_rejected() {
        let m = model();
        let mut c = cfg(&m);
        c.p0.set(0, 1, 0.5);
        assert!(matches!(Aekf::new(m, c), Err(Error::Config(_))));
    }

    #[test]
    fn other_invalid_configs_rejected() {
        let m = model();
        let mut c = cfg(&m);
        c.m = 1;
        assert!(Aekf::new(m, c).is_err());
        let mut c = cfg(&m);
        c.sigma0_sq = 0.0;
        assert!(Aekf::new(m, c).is_err());
        let mut c = cfg(&m);
        c.q.set(1, 1, -1.0);
        assert!(Aekf::new(m, c).is_err());
        let mut c = cfg(&m);
        c.p0 = CovMatrix::from_diagonal(&[1.0; 8]);
        assert!(Aekf::new(m, c).is_err());
    }

    #[test]
    fn huge_noise_variance_freezes_state() {
        let m = model();
        let mut f = Aekf::new(m, cfg(&m)).unwrap();
        let meas = 3.0;
        f.set_noise_variance(1e12 * 1e12 * meas * meas);
        let before = f.state().x_pred;
        f.step(meas).unwrap();
        for (a, b) in f.state().x_upd.as_slice().iter().zip(before.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_covariance_never_moves() {
        let m = model();
        let mut c = cfg(&m);
        c.q = CovMatrix::zeros(5);
        let mut f = Aekf::new(m, c).unwrap();
        f.state.p_pred = CovMatrix::zeros(5);
        for k in 0..50 {
            f.step((k as f64).sin() * 5.0).unwrap();
        }
        assert!(f.state().x_upd.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn innovation_covariance_examples() {
        let m = model();
        let mut f = Aekf::new(m, cfg(&m)).unwrap();
        f.state.p_pred = CovMatrix::zeros(5);
        assert_eq!(f.innovation_covariance().unwrap(), f.state().sigma_sq);

        // t = 0, x = 0, beta1 = 1: H = [0, 1, 1, 0, 1].
        let lin = ModelConfig::single_phase(m.omega0, m.ts, Polynomial::new(1.0, 0.0, 5).unwrap()).unwrap();
        let mut f = Aekf::new(lin, cfg(&lin)).unwrap();
        let floor = f.config().sigma_min_sq;
        f.set_noise_variance(0.0);
        assert_eq!(f.state().sigma_sq, floor);
        f.state.p_pred = CovMatrix::from_diagonal(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.innovation_covariance().unwrap(), 1.0 + floor);
    }

    #[test]
    fn degenerate_variance_is_reported() {
        let m = model();
        let mut f = Aekf::new(m, cfg(&m)).unwrap();
        f.state.p_pred = CovMatrix::zeros(5);
        f.state.sigma_sq = -1.0;
        assert!(matches!(f.step(1.0), Err(Error::Degenerate { .. })));
        assert!(matches!(f.step(f64::NAN), Err(Error::NonFinite { .. })));
        f.reset();
        assert!(f.step(1.0).is_ok());
    }
}
