//! Per-stream processing unit: estimator, validity gate, noise estimator and
//! interpolator chained sample by sample.
//!
//! Units share nothing; run one per measured current, on any thread.

use serde::{Deserialize, Serialize};

use crate::aekf::{Aekf, FilterConfig};
use crate::error::{Error, Result};
use crate::interp::{reconstruct_into, ReconstructedBlock, TrigTable};
use crate::model::{decompose, ModelConfig, StateVector};
use crate::noise::ResidualWindow;
use crate::validity::{evaluate, normalize, Flag, ValidityConfig};

/// Relative tolerance on the spacing between consecutive timestamps.
pub const TIMESTAMP_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagPolicy {
    /// Keep reconstructing from the last certified state, marked degraded.
    #[default]
    HoldLastValid,
    /// Emit nothing for uncertified samples.
    Gap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub filter: FilterConfig,
    pub validity: ValidityConfig,
    /// Solver step of the reconstructed stream [s].
    pub delta_t: f64,
    /// Warm-up length [samples].
    pub buffer_len: usize,
    pub flag_policy: FlagPolicy,
    /// When off, the noise variance stays at `sigma0_sq`.
    pub noise_estimator: bool,
}

impl PipelineConfig {
    /// `max(m, two fundamental cycles of samples)`.
    pub fn default_buffer_len(model: &ModelConfig, m: usize) -> usize {
        let cycles = (2.0 * model.period() / model.ts - 1e-9).ceil() as usize;
        m.max(cycles)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.filter.validate(&self.model)?;
        if self.buffer_len < self.filter.m {
            return Err(Error::Config(format!(
                "buffer_len {} must be at least the window length {}",
                self.buffer_len, self.filter.m
            )));
        }
        if !(self.delta_t > 0.0 && self.delta_t <= self.model.ts * (1.0 + 1e-12)) {
            return Err(Error::Config(format!(
                "solver step {} must be in (0, T_s = {}]",
                self.delta_t, self.model.ts
            )));
        }
        if !(self.validity.threshold >= 0.0 && self.validity.threshold.is_finite()) {
            return Err(Error::Config("validity threshold must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Reconstructed samples per input sample, `round(T_s / delta_t)`.
    pub fn block_len(&self) -> usize {
        ((self.model.ts / self.delta_t).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Warmup,
    Valid,
    Invalid,
}

impl Verdict {
    pub fn flag(self) -> Option<Flag> {
        match self {
            Verdict::Warmup => None,
            Verdict::Valid => Some(Flag::Valid),
            Verdict::Invalid => Some(Flag::Invalid),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Warmup => "warmup",
            Verdict::Valid => "0",
            Verdict::Invalid => "1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Valid,
    Degraded,
    Gap,
}

impl Quality {
    pub fn label(self) -> &'static str {
        match self {
            Quality::Valid => "valid",
            Quality::Degraded => "degraded",
            Quality::Gap => "gap",
        }
    }
}

/// Scalar part of an output record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub k: u64,
    pub t: f64,
    pub i_meas: f64,
    /// `h(a_k, x_upd)`.
    pub i_est: f64,
    pub i_m: f64,
    pub i_s: f64,
    /// Innovation `i_meas - h(a_k, x_pred)`.
    pub r_hat: f64,
    /// Posterior residual `i_meas - h(a_k, x_upd)`.
    pub r_post: f64,
    /// Window mean used for normalization (statistics as of `k - 1`).
    pub r_bar: Option<f64>,
    pub r_n: Option<f64>,
    pub verdict: Verdict,
    /// Noise standard deviation in effect for this sample [A].
    pub sigma_hat: f64,
    pub quality: Quality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub summary: SampleSummary,
    /// Present unless `quality` is `Gap`.
    pub block: Option<ReconstructedBlock>,
}

/// Failure of a batch run: records produced before the failing sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFailure {
    pub records: Vec<OutputRecord>,
    pub index: usize,
    pub error: Error,
}

#[derive(Debug, Clone)]
pub struct ProcessingUnit {
    cfg: PipelineConfig,
    filter: Aekf,
    window: ResidualWindow,
    table: TrigTable,
    block_len: usize,
    last_valid: Option<StateVector>,
    last_t: Option<f64>,
    failed: bool,
}

impl ProcessingUnit {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let filter = Aekf::new(cfg.model, cfg.filter.clone())?;
        let window = ResidualWindow::new(cfg.filter.m)?;
        let table = TrigTable::build(cfg.model.omega0, cfg.delta_t)?;
        let block_len = cfg.block_len();
        Ok(Self { cfg, filter, window, table, block_len, last_valid: None, last_t: None, failed: false })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn filter(&self) -> &Aekf {
        &self.filter
    }

    pub fn window(&self) -> &ResidualWindow {
        &self.window
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn last_valid_state(&self) -> Option<&StateVector> {
        self.last_valid.as_ref()
    }

    pub fn reset(&mut self) {
        self.filter.reset();
        self.window.clear();
        self.last_valid = None;
        self.last_t = None;
        self.failed = false;
    }

    fn check_timestamp(&self, t: f64) -> Result<()> {
        let k = self.filter.state().k;
        if !t.is_finite() {
            return Err(Error::Stream { index: k, reason: format!("non-finite timestamp {t}") });
        }
        if let Some(prev) = self.last_t {
            let ts = self.cfg.model.ts;
            let dt = t - prev;
            if dt <= 0.0 {
                return Err(Error::Stream { index: k, reason: format!("timestamp {t} not after {prev}") });
            }
            if (dt - ts).abs() > TIMESTAMP_TOLERANCE * ts {
                return Err(Error::Stream {
                    index: k,
                    reason: format!("spacing {dt} outside T_s = {ts} +/- {}%", TIMESTAMP_TOLERANCE * 100.0),
                });
            }
        }
        Ok(())
    }

    /// Processes one sample, writing any reconstructed samples into `block`
    /// (cleared first; left empty for a gap). Does not allocate once `block`
    /// has reached capacity.
    pub fn process_into(&mut self, t: f64, i_meas: f64, block: &mut Vec<f64>) -> Result<SampleSummary> {
        if self.failed {
            return Err(Error::Failed);
        }
        self.check_timestamp(t)?;
        let k = self.filter.state().k;
        if !i_meas.is_finite() {
            return Err(Error::Stream { index: k, reason: format!("non-finite measurement {i_meas}") });
        }

        let sigma_sq = self.filter.state().sigma_sq;
        let step = match self.filter.step(i_meas) {
            Ok(s) => s,
            Err(e) => {
                self.failed = true;
                return Err(e);
            }
        };
        self.last_t = Some(t);
        let model = &self.cfg.model;
        let x_upd = self.filter.state().x_upd;
        let (i_m, i_s) = decompose(model, &step.coefficients, &x_upd)?;
        let r_hat = step.innovation;
        let sigma_hat = sigma_sq.sqrt();

        // Statistics as of k - 1: read before the new residual enters.
        let warmup = k < self.cfg.buffer_len as u64 || !self.window.is_ready();
        let (r_bar, r_n, verdict) = if warmup {
            (None, None, Verdict::Warmup)
        } else {
            let r_bar = self.window.mean()?;
            let r_n = normalize(r_hat, r_bar, sigma_hat);
            let verdict = match evaluate(r_n, self.cfg.validity.threshold) {
                Flag::Valid => Verdict::Valid,
                Flag::Invalid => Verdict::Invalid,
            };
            (Some(r_bar), Some(r_n), verdict)
        };

        self.window.push(r_hat)?;
        if self.cfg.noise_estimator {
            let var = self.window.variance(step.hpht, self.cfg.filter.sigma0_sq, self.cfg.filter.sigma_min_sq);
            self.filter.set_noise_variance(var);
        }

        let source = match (verdict, self.cfg.flag_policy) {
            (Verdict::Valid, _) => {
                self.last_valid = Some(x_upd);
                Some((x_upd, Quality::Valid))
            }
            (_, FlagPolicy::Gap) => None,
            (Verdict::Warmup, FlagPolicy::HoldLastValid) => Some((x_upd, Quality::Degraded)),
            (Verdict::Invalid, FlagPolicy::HoldLastValid) => self.last_valid.map(|x| (x, Quality::Degraded)),
        };
        let quality = match source {
            Some((x, q)) => {
                reconstruct_into(model, &x, &self.table, k as f64 * model.ts, self.block_len, block)?;
                q
            }
            None => {
                block.clear();
                Quality::Gap
            }
        };

        Ok(SampleSummary {
            k,
            t,
            i_meas,
            i_est: step.estimate,
            i_m,
            i_s,
            r_hat,
            r_post: step.posterior_residual(i_meas),
            r_bar,
            r_n,
            verdict,
            sigma_hat,
            quality,
        })
    }

    pub fn process_sample(&mut self, t: f64, i_meas: f64) -> Result<OutputRecord> {
        let mut samples = Vec::with_capacity(self.block_len);
        let summary = self.process_into(t, i_meas, &mut samples)?;
        let block = (summary.quality != Quality::Gap).then_some(ReconstructedBlock {
            t_start: t,
            delta_t: self.cfg.delta_t,
            samples,
            source_sample_index: summary.k,
        });
        Ok(OutputRecord { summary, block })
    }

    /// Runs `(t, i)` samples in order; the first error aborts the run.
    pub fn run_stream(&mut self, samples: &[(f64, f64)]) -> std::result::Result<Vec<OutputRecord>, StreamFailure> {
        let mut records = Vec::with_capacity(samples.len());
        for (index, &(t, i)) in samples.iter().enumerate() {
            match self.process_sample(t, i) {
                Ok(r) => records.push(r),
                Err(error) => return Err(StreamFailure { records, index, error }),
            }
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aekf::FilterTuning;
    use crate::model::RATED_LIMB;
    use std::f64::consts::PI;

    fn cfg(policy: FlagPolicy) -> PipelineConfig {
        let model = ModelConfig::single_phase(2.0 * PI * 60.0, 2e-4, RATED_LIMB).unwrap();
        let filter =
            FilterConfig::from_tuning(&model, &FilterTuning { i_nom: 13.0, flux_nom: 1.4, ..Default::default() })
                .unwrap();
        PipelineConfig {
            model,
            buffer_len: PipelineConfig::default_buffer_len(&model, filter.m),
            filter,
            validity: ValidityConfig::new(0.01).unwrap(),
            delta_t: 2e-6,
            flag_policy: policy,
            noise_estimator: true,
        }
    }

    #[test]
    fn default_buffer_len_is_two_cycles() {
        let c = cfg(FlagPolicy::Gap);
        assert_eq!(c.buffer_len, 167);
        assert_eq!(c.block_len(), 100);
    }

    #[test]
    fn short_buffer_rejected() {
        let mut c = cfg(FlagPolicy::Gap);
        c.buffer_len = 50;
        assert!(matches!(ProcessingUnit::new(c), Err(Error::Config(_))));
        let mut c = cfg(FlagPolicy::Gap);
        c.delta_t = 1e-3;
        assert!(ProcessingUnit::new(c).is_err());
    }

    #[test]
    fn warmup_records() {
        let mut u = ProcessingUnit::new(cfg(FlagPolicy::HoldLastValid)).unwrap();
        for k in 0..167 {
            let r = u.process_sample(k as f64 * 2e-4, 0.1).unwrap();
            assert_eq!(r.summary.verdict, Verdict::Warmup);
            assert!(r.summary.r_n.is_none());
            assert_eq!(r.summary.quality, Quality::Degraded);
            assert_eq!(r.block.unwrap().samples.len(), 100);
        }
        let r = u.process_sample(167.0 * 2e-4, 0.1).unwrap();
        assert!(r.summary.r_n.is_some());
    }

    #[test]
    fn timestamp_errors_preserve_unit() {
        let mut u = ProcessingUnit::new(cfg(FlagPolicy::Gap)).unwrap();
        u.process_sample(0.0, 1.0).unwrap();
        assert!(matches!(u.process_sample(0.0, 1.0), Err(Error::Stream { .. })));
        assert!(matches!(u.process_sample(5e-4, 1.0), Err(Error::Stream { .. })));
        assert!(matches!(u.process_sample(2e-4, f64::NAN), Err(Error::Stream { .. })));
        assert!(!u.is_failed());
        assert_eq!(u.process_sample(2.01e-4, 1.0).unwrap().summary.k, 1);
    }

    #[test]
    fn empty_stream() {
        let mut u = ProcessingUnit::new(cfg(FlagPolicy::Gap)).unwrap();
        assert!(u.run_stream(&[]).unwrap().is_empty());
    }

    #[test]
    fn run_stream_reports_position() {
        let mut u = ProcessingUnit::new(cfg(FlagPolicy::Gap)).unwrap();
        let samples = [(0.0, 1.0), (2e-4, 1.0), (9e-4, 1.0)];
        let f = u.run_stream(&samples).unwrap_err();
        assert_eq!(f.index, 2);
        assert_eq!(f.records.len(), 2);
    }
}
