//! Acceptance checks and the independent oracles behind them.
//!
//! Each check builds its own scenario with fixed seeds, runs the production
//! code path and compares against a reference computed without it.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::aekf::{Aekf, FilterConfig, FilterTuning};
use crate::error::Result;
use crate::interp::trapezoid_area;
use crate::model::{coefficients_at, jacobian, observe, ModelConfig, Polynomial, StateVector, RATED_LIMB};
use crate::noise::ResidualWindow;
use crate::pipeline::{FlagPolicy, PipelineConfig, ProcessingUnit, Verdict};
use crate::synth::{
    downsample, measure, simulate_steinmetz, synth_analytic, MixingWeights, ScenarioConfig, TransformerParams, Waveform,
};
use crate::validity::{threshold_for, ValidityConfig};

pub const RHO: f64 = 0.01;
pub const NOISE_FRACTION: f64 = 0.03;
const TS: f64 = 2e-4;
/// Truth step for model-matched synthesis; four per measurement sample.
const ANALYTIC_STEP: f64 = 5e-5;
const ANALYTIC_DECIMATION: usize = 4;

/// Yoke polynomial used for three-phase checks.
pub const YOKE: Polynomial = Polynomial { beta1: 0.027, beta2: 0.0195, n: 5 };
pub const MIXING: [f64; 5] = [0.7, 0.2, 0.1, 0.3, 0.15];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "criterion {} {:<32} {}  {} ({:.2} s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.seconds
        )
    }
}

/// Stated runtime limits [s] by criterion.
fn runtime_limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(1.0),
        2 => Some(5.0),
        4 => Some(30.0),
        6 => Some(60.0),
        _ => None,
    }
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> (bool, String)) -> CriterionReport {
    let start = Instant::now();
    let (mut passed, mut detail) = f();
    let seconds = start.elapsed().as_secs_f64();
    if let Some(limit) = runtime_limit(id) {
        if seconds >= limit {
            passed = false;
            detail.push_str(&format!("; runtime {seconds:.2} s over the {limit} s limit"));
        }
    }
    CriterionReport { id, name, passed, detail, seconds }
}

fn failed(e: impl std::fmt::Display) -> (bool, String) {
    (false, format!("error: {e}"))
}

// ---------------------------------------------------------------------------
// Oracles

/// Central finite difference of the observation function.
pub fn finite_difference_jacobian(model: &ModelConfig, t: f64, x: &StateVector) -> Result<Vec<f64>> {
    let a = coefficients_at(model, t)?;
    let mut out = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut plus = *x;
        let mut minus = *x;
        plus[i] += h;
        minus[i] -= h;
        out.push((observe(model, &a, &plus)? - observe(model, &a, &minus)?) / (2.0 * h));
    }
    Ok(out)
}

/// Window statistics recomputed from scratch each sample, counting the
/// additions spent on the sums.
#[derive(Debug, Clone)]
pub struct NaiveWindow {
    m: usize,
    values: VecDeque<f64>,
    pub ops: u64,
}

impl NaiveWindow {
    pub fn new(m: usize) -> Self {
        Self { m, values: VecDeque::with_capacity(m + 1), ops: 0 }
    }

    pub fn push(&mut self, r: f64) {
        self.values.push_back(r);
        if self.values.len() > self.m {
            self.values.pop_front();
        }
    }

    /// `(sum, sum of squares)` of the buffered residuals.
    pub fn sums(&mut self) -> (f64, f64) {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for &v in &self.values {
            s += v;
            s2 += v * v;
        }
        self.ops += 2 * self.values.len() as u64;
        (s, s2)
    }

    pub fn abs_sums(&self) -> (f64, f64) {
        (self.values.iter().map(|v| v.abs()).sum(), self.values.iter().map(|v| v * v).sum())
    }
}

/// Plain linear Kalman filter for the `beta2 = 0` model, written against
/// nalgebra with its own coefficient evaluation.
pub struct LinearKf {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    q: DMatrix<f64>,
    r: f64,
    beta1: f64,
    omega0: f64,
    ts: f64,
    k: u64,
}

impl LinearKf {
    pub fn new(beta1: f64, omega0: f64, ts: f64, p0: DMatrix<f64>, q: DMatrix<f64>, r: f64) -> Self {
        let n = p0.nrows();
        Self { x: DVector::zeros(n), p: p0, q, r, beta1, omega0, ts, k: 0 }
    }

    fn row(&self) -> DVector<f64> {
        let (s, c) = (self.omega0 * self.k as f64 * self.ts).sin_cos();
        DVector::from_vec(vec![self.beta1 * s, self.beta1 * c, self.beta1, s, c])
    }

    pub fn step(&mut self, z: f64) {
        let h = self.row();
        let ph = &self.p * &h;
        let s = h.dot(&ph) + self.r;
        let g = ph / s;
        let innovation = z - h.dot(&self.x);
        self.x += &g * innovation;
        let hp = h.transpose() * &self.p;
        self.p -= &g * hp;
        self.p = (&self.p + self.p.transpose()) * 0.5;
        self.p += &self.q;
        self.k += 1;
    }
}

// ---------------------------------------------------------------------------
// Scenario helpers

pub fn rated_model() -> ModelConfig {
    ModelConfig::single_phase(2.0 * PI * 60.0, TS, RATED_LIMB).expect("valid model")
}

pub fn three_phase_model() -> ModelConfig {
    ModelConfig::three_phase(2.0 * PI * 60.0, TS, RATED_LIMB, YOKE).expect("valid model")
}

/// Default tuning scaled to the transformer and scenario.
pub fn tuning_for(params: &TransformerParams, sc: &ScenarioConfig) -> FilterTuning {
    FilterTuning { i_nom: params.i_nom, flux_nom: sc.lambda_m(), ..FilterTuning::default() }
}

pub fn pipeline_for(model: ModelConfig, tuning: &FilterTuning, delta_t: f64, policy: FlagPolicy) -> Result<PipelineConfig> {
    let filter = FilterConfig::from_tuning(&model, tuning)?;
    Ok(PipelineConfig {
        model,
        buffer_len: PipelineConfig::default_buffer_len(&model, filter.m),
        filter,
        validity: ValidityConfig::new(RHO)?,
        delta_t,
        flag_policy: policy,
        noise_estimator: true,
    })
}

/// Scenario for model-matched synthesis at four truth samples per
/// measurement sample.
pub fn analytic_scenario(seed: u64, duration: f64) -> ScenarioConfig {
    ScenarioConfig { sim_step: ANALYTIC_STEP, duration, noise_fraction: NOISE_FRACTION, seed, ..Default::default() }
}

/// Residual flux that cancels the decaying term for this scenario.
pub fn steady_residual_flux(sc: &ScenarioConfig) -> f64 {
    sc.lambda_m() * (sc.alpha - sc.phi).sin()
}

fn binomial_bounds(n: usize) -> (f64, f64) {
    let half = 3.0 * (RHO * (1.0 - RHO) / n as f64).sqrt();
    (RHO - half, RHO + half)
}

#[derive(Debug, Clone, Copy, Default)]
struct FlagStats {
    n: usize,
    flags: usize,
    sum: f64,
    sum_sq: f64,
}

impl FlagStats {
    fn add(&mut self, r_n: f64, verdict: Verdict) {
        self.n += 1;
        self.sum += r_n;
        self.sum_sq += r_n * r_n;
        if verdict == Verdict::Invalid {
            self.flags += 1;
        }
    }
    fn rate(&self) -> f64 {
        self.flags as f64 / self.n.max(1) as f64
    }
    fn mean(&self) -> f64 {
        self.sum / self.n.max(1) as f64
    }
    fn variance(&self) -> f64 {
        self.sum_sq / self.n.max(1) as f64 - self.mean().powi(2)
    }
}

/// Flag statistics over the first `n` post-warm-up samples.
fn post_warmup_stats(unit: &mut ProcessingUnit, meas: &Waveform, n: usize) -> Result<FlagStats> {
    let mut stats = FlagStats::default();
    let mut block = Vec::with_capacity(unit.block_len());
    for (&t, &v) in meas.time.iter().zip(&meas.value) {
        let s = unit.process_into(t, v, &mut block)?;
        if let Some(r_n) = s.r_n {
            stats.add(r_n, s.verdict);
            if stats.n == n {
                break;
            }
        }
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Criteria

pub fn jacobian_fidelity() -> CriterionReport {
    timed(1, "jacobian fidelity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        let mut bad = 0;
        for (model, trials) in [(rated_model(), 100), (three_phase_model(), 100)] {
            for _ in 0..trials {
                let dim = model.dim();
                let mut x = StateVector::zeros(dim);
                for i in 0..dim {
                    // Operating envelope: flux within +-2 Wb, currents within +-i_nom.
                    let half = if i >= dim - 2 { TransformerParams::rated_5kva().i_nom } else { 2.0 };
                    x[i] = (2.0 * rng.random::<f64>() - 1.0) * half;
                }
                let t = rng.random::<f64>();
                let a = coefficients_at(&model, t).expect("finite t");
                let h = jacobian(&model, &a, &x).expect("dims");
                let fd = finite_difference_jacobian(&model, t, &x).expect("dims");
                for (an, num) in h.as_slice().iter().zip(&fd) {
                    let err = (an - num).abs();
                    let ok = err <= 1e-6 * an.abs() || err <= 1e-9;
                    if !ok {
                        bad += 1;
                    }
                    if an.abs() > 1e-3 {
                        worst = worst.max(err / an.abs());
                    }
                }
            }
        }
        (bad == 0, format!("{bad} entries out of tolerance; worst relative error {worst:.2e}"))
    })
}

/// Recursive and naive window statistics agree at every step; returns the
/// largest scaled deviation.
pub fn recursive_vs_naive(residuals: &[f64], m: usize) -> Result<f64> {
    let mut rec = ResidualWindow::new(m)?;
    let mut naive = NaiveWindow::new(m);
    let mut worst = 0.0f64;
    for &r in residuals {
        rec.push(r)?;
        naive.push(r);
        let (s, s2) = naive.sums();
        let (abs_s, abs_s2) = naive.abs_sums();
        worst = worst.max((rec.sum() - s).abs() / (1.0 + abs_s));
        worst = worst.max((rec.sum_sq() - s2).abs() / (1.0 + abs_s2));
        if rec.is_ready() {
            let mean = rec.mean()?;
            worst = worst.max((mean - s / m as f64).abs() / (1.0 + abs_s / m as f64));
            let var = rec.raw_variance(0.0).expect("ready");
            worst = worst.max((var - s2 / m as f64).abs() / (1.0 + abs_s2 / m as f64));
        }
    }
    Ok(worst)
}

/// Steady-state additions per sample for the recursive and naive windows.
pub fn ops_per_sample(m: usize, samples: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rec = ResidualWindow::new(m).expect("m >= 2");
    let mut naive = NaiveWindow::new(m);
    for _ in 0..m {
        let r: f64 = rng.sample(StandardNormal);
        rec.push(r).expect("finite");
        naive.push(r);
    }
    let (r0, n0) = (rec.ops(), naive.ops);
    for _ in 0..samples {
        let r: f64 = rng.sample(StandardNormal);
        rec.push(r).expect("finite");
        naive.push(r);
        naive.sums();
    }
    ((rec.ops() - r0) as f64 / samples as f64, (naive.ops - n0) as f64 / samples as f64)
}

pub fn recursive_statistics() -> CriterionReport {
    timed(2, "recursive statistics", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let residuals: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let worst = match recursive_vs_naive(&residuals, 100) {
            Ok(w) => w,
            Err(e) => return failed(e),
        };
        let costs: Vec<(usize, f64, f64)> =
            [10, 100, 1000].iter().map(|&m| { let (r, n) = ops_per_sample(m, 5000); (m, r, n) }).collect();
        let flat = costs.iter().all(|c| c.1 == costs[0].1);
        let linear = costs.iter().all(|c| (c.2 - 2.0 * c.0 as f64).abs() < 1e-9);
        let ok = worst <= 1e-9 && flat && linear;
        let cost_text: Vec<String> = costs.iter().map(|c| format!("m={}: {}/{}", c.0, c.1, c.2)).collect();
        (ok, format!("max deviation {worst:.2e}; ops/sample recursive/naive {}", cost_text.join(", ")))
    })
}

/// Anchor and monotonicity of a threshold function.
pub fn check_threshold(f: impl Fn(f64) -> Result<f64>) -> (bool, String) {
    let anchor = match f(0.01) {
        Ok(t) => t,
        Err(e) => return failed(e),
    };
    let grid: Vec<f64> = (0..50).map(|i| 10f64.powf(-6.0 + 6.0 * i as f64 / 50.0)).collect();
    let values: Result<Vec<f64>> = grid.iter().map(|&r| f(r)).collect();
    let values = match values {
        Ok(v) => v,
        Err(e) => return failed(e),
    };
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let ok = (anchor - 2.575).abs() <= 0.002 && monotone;
    (ok, format!("T(0.01) = {anchor:.6}; strictly decreasing over grid: {monotone}"))
}

pub fn threshold_anchor() -> CriterionReport {
    timed(3, "threshold anchor", || check_threshold(threshold_for))
}

pub fn false_alarm_calibration() -> CriterionReport {
    timed(4, "false-alarm calibration", || {
        let n = 50_000;
        let params = TransformerParams::rated_5kva();
        let mut sc = analytic_scenario(1, (n as f64 + 400.0) * TS);
        sc.lambda_r = steady_residual_flux(&sc);
        let model = rated_model();
        let run = || -> Result<FlagStats> {
            let truth = synth_analytic(&model, &params, &sc, None)?;
            let meas = measure(&truth.current, &sc, params.i_nom)?;
            let cfg = pipeline_for(model, &tuning_for(&params, &sc), TS, FlagPolicy::HoldLastValid)?;
            post_warmup_stats(&mut ProcessingUnit::new(cfg)?, &meas, n)
        };
        match run() {
            Ok(st) => {
                let (lo, hi) = binomial_bounds(st.n);
                let ok = st.n == n && (lo..=hi).contains(&st.rate());
                (ok, format!(
                    "N = {}, flag rate {:.5} (bounds [{lo:.5}, {hi:.5}]); r_N mean {:.4}, variance {:.4}",
                    st.n, st.rate(), st.mean(), st.variance()
                ))
            }
            Err(e) => failed(e),
        }
    })
}

/// Tracking error and flag rate over cycles 3-10 of a model-matched inrush.
pub fn inrush_tracking_run(seed: u64) -> Result<(f64, f64)> {
    let params = TransformerParams::rated_5kva();
    // alpha - phi = pi/2 with no residual flux: full offset.
    let sc = ScenarioConfig { alpha: PI, lambda_r: 0.0, ..analytic_scenario(seed, 11.0 / 60.0) };
    let model = rated_model();
    let truth = synth_analytic(&model, &params, &sc, None)?;
    let meas = measure(&truth.current, &sc, params.i_nom)?;
    let mut unit = ProcessingUnit::new(pipeline_for(model, &tuning_for(&params, &sc), TS, FlagPolicy::HoldLastValid)?)?;
    let period = 1.0 / sc.frequency;
    let (mut e2, mut ne) = (0.0, 0usize);
    let mut stats = FlagStats::default();
    let mut block = Vec::with_capacity(unit.block_len());
    for (j, (&t, &v)) in meas.time.iter().zip(&meas.value).enumerate() {
        let s = unit.process_into(t, v, &mut block)?;
        let cycle = ((t - sc.switch_on) / period + 1e-9).floor();
        if (2.0..10.0).contains(&cycle) {
            let e = s.i_est - truth.current.value[j * ANALYTIC_DECIMATION];
            e2 += e * e;
            ne += 1;
            if let Some(r_n) = s.r_n {
                stats.add(r_n, s.verdict);
            }
        }
    }
    Ok(((e2 / ne as f64).sqrt(), stats.rate()))
}

/// MSE of the first 500 normalized residuals after switching the Steinmetz
/// model at `alpha_deg`, with the filter already running beforehand.
pub fn steinmetz_switching_mse(alpha_deg: f64, seed: u64) -> Result<f64> {
    let params = TransformerParams::rated_5kva();
    let sc = ScenarioConfig {
        alpha: alpha_deg.to_radians(),
        switch_on: 0.1,
        duration: 0.21,
        noise_fraction: NOISE_FRACTION,
        seed,
        ..Default::default()
    };
    let sim = simulate_steinmetz(&params, &sc)?;
    let meas = measure(&sim.current, &sc, params.i_nom)?;
    let model = rated_model();
    let mut unit = ProcessingUnit::new(pipeline_for(model, &tuning_for(&params, &sc), TS, FlagPolicy::HoldLastValid)?)?;
    let mut block = Vec::new();
    let (mut sum, mut n) = (0.0, 0usize);
    for (&t, &v) in meas.time.iter().zip(&meas.value) {
        let s = unit.process_into(t, v, &mut block)?;
        if t >= sc.switch_on - 1e-9 {
            if let Some(r_n) = s.r_n {
                sum += r_n * r_n;
                n += 1;
                if n == 500 {
                    break;
                }
            }
        }
    }
    Ok(sum / n as f64)
}

pub const INRUSH_SEEDS: std::ops::RangeInclusive<u64> = 1..=8;

pub fn inrush_tracking() -> CriterionReport {
    timed(5, "inrush tracking", || {
        let sigma = NOISE_FRACTION * TransformerParams::rated_5kva().i_nom;
        let mut ok = true;
        let mut parts = Vec::new();
        for seed in INRUSH_SEEDS {
            match inrush_tracking_run(seed) {
                Ok((rms, rate)) => {
                    let pass = rms < 0.5 * sigma && rate <= 3.0 * RHO;
                    ok &= pass;
                    parts.push(format!("s{seed}:{:.3}/{:.3}{}", rms / sigma, rate, if pass { "" } else { "!" }));
                }
                Err(e) => return failed(e),
            }
        }
        let mut mses = Vec::new();
        for alpha in [0.0, 45.0, 90.0] {
            match steinmetz_switching_mse(alpha, 1) {
                Ok(mse) => {
                    ok &= mse <= 2.0;
                    mses.push(format!("{alpha}deg:{mse:.3}"));
                }
                Err(e) => return failed(e),
            }
        }
        (ok, format!(
            "rms/sigma and flag rate per seed (limits 0.5, {:.2}) {}; Steinmetz MSE (limit 2.0) {}",
            3.0 * RHO,
            parts.join(" "),
            mses.join(" ")
        ))
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AreaComparison {
    pub reference: f64,
    pub noiseless: f64,
    pub noisy: f64,
    pub reconstructed: f64,
}

impl AreaComparison {
    pub fn relative(&self, v: f64) -> f64 {
        (v - self.reference).abs() / self.reference.abs()
    }
}

/// Areas of one cycle starting at `t_start`, reference at the simulation
/// step and measurements at the sampling period.
pub fn cycle_areas(
    reference: &Waveform,
    noiseless: &Waveform,
    noisy: &Waveform,
    reconstructed: &[f64],
    t_start: f64,
    frequency: f64,
) -> AreaComparison {
    let dt = reference.step().expect("two samples");
    let ts = noisy.step().expect("two samples");
    let j0 = (t_start / dt).round() as usize;
    let j1 = j0 + (1.0 / (frequency * dt)).floor() as usize;
    let k0 = (t_start / ts).round() as usize;
    let k1 = k0 + (1.0 / (frequency * ts)).floor() as usize;
    AreaComparison {
        reference: trapezoid_area(&reference.value[j0..=j1], dt),
        noiseless: trapezoid_area(&noiseless.value[k0..=k1], ts),
        noisy: trapezoid_area(&noisy.value[k0..=k1], ts),
        reconstructed: trapezoid_area(&reconstructed[j0..=j1], dt),
    }
}

pub const AREA_CYCLE_START: f64 = 2.0;

pub fn reconstruction_areas(seed: u64) -> Result<AreaComparison> {
    let params = TransformerParams::rated_5kva();
    let sc = ScenarioConfig {
        alpha: 0.0,
        lambda_r: 0.0,
        duration: AREA_CYCLE_START + 1.5 / 60.0,
        noise_fraction: NOISE_FRACTION,
        seed,
        ..Default::default()
    };
    let sim = simulate_steinmetz(&params, &sc)?;
    let clean = downsample(&sim.current, sc.decimation()?)?;
    let meas = measure(&sim.current, &sc, params.i_nom)?;
    let mut unit = ProcessingUnit::new(pipeline_for(
        rated_model(),
        &tuning_for(&params, &sc),
        sc.sim_step,
        FlagPolicy::HoldLastValid,
    )?)?;
    let mut recon = Vec::with_capacity(sim.current.len() + 100);
    let mut block = Vec::with_capacity(unit.block_len());
    for (&t, &v) in meas.time.iter().zip(&meas.value) {
        unit.process_into(t, v, &mut block)?;
        recon.extend_from_slice(&block);
    }
    Ok(cycle_areas(&sim.current, &clean, &meas, &recon, AREA_CYCLE_START, sc.frequency))
}

pub fn reconstruction_benefit() -> CriterionReport {
    timed(6, "reconstruction benefit", || match reconstruction_areas(1) {
        Ok(a) => {
            let (rec, noisy) = (a.relative(a.reconstructed), a.relative(a.noisy));
            let ok = rec <= 0.0265 && rec * 3.0 <= noisy;
            (ok, format!(
                "area ref {:.6e}; relative error reconstructed {:.2}% (limit 2.65%), noisy {:.2}%, noiseless {:.2}%",
                a.reference,
                100.0 * rec,
                100.0 * noisy,
                100.0 * a.relative(a.noiseless)
            ))
        }
        Err(e) => failed(e),
    })
}

pub fn covariance_health() -> CriterionReport {
    timed(7, "covariance health", || {
        let steps = 100_000;
        let params = TransformerParams::rated_5kva();
        let sc = ScenarioConfig { alpha: PI, ..analytic_scenario(3, (steps as f64 + 2.0) * TS) };
        let model = rated_model();
        let run = || -> Result<(usize, f64)> {
            let truth = synth_analytic(&model, &params, &sc, None)?;
            let meas = measure(&truth.current, &sc, params.i_nom)?;
            let cfg = pipeline_for(model, &tuning_for(&params, &sc), TS, FlagPolicy::HoldLastValid)?;
            let floor = cfg.filter.sigma_min_sq;
            let mut unit = ProcessingUnit::new(cfg)?;
            let mut block = Vec::with_capacity(unit.block_len());
            let mut violations = 0;
            let mut min_sigma = f64::INFINITY;
            for (&t, &v) in meas.time.iter().zip(&meas.value).take(steps) {
                let s = unit.process_into(t, v, &mut block)?;
                let st = unit.filter().state();
                let healthy = st.p_upd.asymmetry() == 0.0
                    && st.p_upd.diagonal().all(|d| d >= 0.0)
                    && st.p_pred.diagonal().all(|d| d >= 0.0)
                    && st.p_upd.is_finite()
                    && st.x_upd.is_finite()
                    && st.sigma_sq >= floor
                    && s.i_est.is_finite();
                if !healthy {
                    violations += 1;
                }
                min_sigma = min_sigma.min(st.sigma_sq / floor);
            }
            Ok((violations, min_sigma))
        };
        match run() {
            Ok((v, min_ratio)) => {
                (v == 0, format!("{v} unhealthy steps of {steps}; min sigma^2 / floor {min_ratio:.3e}"))
            }
            Err(e) => failed(e),
        }
    })
}

/// Largest per-state deviation between the filter on a linear model and
/// the independent linear Kalman filter.
pub fn linear_oracle_deviation(steps: usize) -> Result<f64> {
    let params = TransformerParams::rated_5kva();
    let lin = Polynomial::new(RATED_LIMB.beta1, 0.0, RATED_LIMB.n)?;
    let model = ModelConfig::single_phase(2.0 * PI * 60.0, TS, lin)?;
    let sc = ScenarioConfig { alpha: FRAC_PI_2, ..analytic_scenario(4, (steps as f64 + 2.0) * TS) };
    let truth = synth_analytic(&model, &params, &sc, None)?;
    let meas = measure(&truth.current, &sc, params.i_nom)?;
    let cfg = FilterConfig::from_tuning(&model, &tuning_for(&params, &sc))?;
    let p0 = DMatrix::from_fn(5, 5, |i, j| cfg.p0.get(i, j));
    let q = DMatrix::from_fn(5, 5, |i, j| cfg.q.get(i, j));
    let mut oracle = LinearKf::new(lin.beta1, model.omega0, TS, p0, q, cfg.sigma0_sq);
    let mut filter = Aekf::new(model, cfg)?;
    let mut worst = 0.0f64;
    for &z in meas.value.iter().take(steps) {
        filter.step(z)?;
        oracle.step(z);
        let x = filter.state().x_upd;
        for i in 0..5 {
            worst = worst.max((x[i] - oracle.x[i]).abs());
        }
    }
    Ok(worst)
}

pub fn linear_oracle() -> CriterionReport {
    timed(8, "linear-KF oracle", || match linear_oracle_deviation(10_000) {
        Ok(d) => (d <= 1e-10, format!("max state deviation {d:.3e} over 10000 steps (limit 1e-10)")),
        Err(e) => failed(e),
    })
}

pub fn three_phase_tracking() -> CriterionReport {
    timed(9, "three-phase variant", || {
        let n = 50_000;
        let params = TransformerParams::rated_5kva();
        let sc = analytic_scenario(9, (n as f64 + 400.0) * TS);
        let model = three_phase_model();
        let run = || -> Result<FlagStats> {
            let w = MixingWeights::new(MIXING)?;
            let truth = synth_analytic(&model, &params, &sc, Some(&w))?;
            let meas = measure(&truth.current, &sc, params.i_nom)?;
            let cfg = pipeline_for(model, &tuning_for(&params, &sc), TS, FlagPolicy::HoldLastValid)?;
            post_warmup_stats(&mut ProcessingUnit::new(cfg)?, &meas, n)
        };
        match run() {
            Ok(st) => {
                let (lo, hi) = binomial_bounds(st.n);
                let var = st.variance();
                let ok = st.n == n && (0.7..=1.5).contains(&var) && (lo..=hi).contains(&st.rate());
                (ok, format!(
                    "N = {}, r_N variance {var:.4} (limits [0.7, 1.5]), flag rate {:.5} (bounds [{lo:.5}, {hi:.5}])",
                    st.n,
                    st.rate()
                ))
            }
            Err(e) => failed(e),
        }
    })
}

pub fn run_all() -> Vec<CriterionReport> {
    vec![
        jacobian_fidelity(),
        recursive_statistics(),
        threshold_anchor(),
        false_alarm_calibration(),
        inrush_tracking(),
        reconstruction_benefit(),
        covariance_health(),
        linear_oracle(),
        three_phase_tracking(),
    ]
}
