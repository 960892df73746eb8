//! Ground-truth current waveforms.
//!
//! Two generators:
//!
//! * [`synth_analytic`] builds currents that lie exactly in the observer's
//!   model class, together with the true state trajectory.
//! * [`simulate_steinmetz`] integrates the single-phase Steinmetz equivalent
//!   circuit with the trapezoidal rule and a nonlinear magnetizing branch.
//!
//! Plus decimation and Gaussian noise injection for building measurements.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coefficients_at, decompose, ModelConfig, Polynomial, StateVector, Variant, RATED_LIMB};

/// Single-phase transformer constants. Winding and core values are referred
/// to the H (high-voltage) side except `r_x`/`l_x`, which are given in X-side
/// ohms and henries and referred through `turns_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerParams {
    pub r_h: f64,
    pub r_x: f64,
    pub l_h: f64,
    pub l_x: f64,
    pub r_c: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n: u32,
    /// `V_H / V_X`.
    pub turns_ratio: f64,
    /// Nominal current of the energized (H) winding [A].
    pub i_nom: f64,
}

impl TransformerParams {
    /// 380:220 V, 5 kVA, 60 Hz unit.
    pub fn rated_5kva() -> Self {
        Self {
            r_h: 0.43,
            r_x: 0.14,
            l_h: 810e-6,
            l_x: 270e-6,
            r_c: 1310.0,
            beta1: RATED_LIMB.beta1,
            beta2: RATED_LIMB.beta2,
            n: RATED_LIMB.n,
            turns_ratio: 380.0 / 220.0,
            i_nom: 5000.0 / 380.0,
        }
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial { beta1: self.beta1, beta2: self.beta2, n: self.n }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.r_h, self.r_x, self.l_h, self.l_x, self.r_c, self.turns_ratio, self.i_nom];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("transformer resistances, inductances, ratio and i_nom must be positive".into()));
        }
        if self.n < 1 || !self.beta1.is_finite() || !self.beta2.is_finite() {
            return Err(Error::Config("invalid magnetization polynomial".into()));
        }
        Ok(())
    }
}

/// Secondary-side load, in X-side units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Load {
    Open,
    /// Series R-L load [ohm, H].
    Impedance { r: f64, l: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Fundamental frequency [Hz].
    pub frequency: f64,
    /// Source RMS voltage [V].
    pub v_rms: f64,
    /// Source phase at switch-on [rad].
    pub alpha: f64,
    /// Impedance angle [rad]; flux phase is `alpha - phi`.
    pub phi: f64,
    /// Residual flux [Wb].
    pub lambda_r: f64,
    /// Decay constant of the flux offset [s] (analytic synthesis).
    pub tau: f64,
    /// Decay constant of the yoke offset [s] (three-phase synthesis).
    pub tau_yoke: f64,
    /// Yoke flux amplitude relative to limb flux (three-phase synthesis).
    pub yoke_flux_ratio: f64,
    pub load: Load,
    pub switch_on: f64,
    pub switch_off: Option<f64>,
    /// Simulated span [s].
    pub duration: f64,
    /// Simulation (truth) step [s].
    pub sim_step: f64,
    /// Measurement sampling rate [Hz].
    pub output_rate: f64,
    /// Noise standard deviation as a fraction of the nominal current.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            frequency: 60.0,
            v_rms: 380.0,
            alpha: 0.0,
            phi: FRAC_PI_2,
            lambda_r: 0.0,
            tau: 0.5,
            tau_yoke: 0.5,
            yoke_flux_ratio: 0.5,
            load: Load::Open,
            switch_on: 0.0,
            switch_off: None,
            duration: 1.0,
            sim_step: 2e-6,
            output_rate: 5000.0,
            noise_fraction: 0.03,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn omega0(&self) -> f64 {
        TAU * self.frequency
    }

    /// Steady-state flux amplitude `V_peak / w0`.
    pub fn lambda_m(&self) -> f64 {
        self.v_rms * std::f64::consts::SQRT_2 / self.omega0()
    }

    /// Integer ratio between simulation rate and measurement rate.
    pub fn decimation(&self) -> Result<usize> {
        let r = 1.0 / (self.sim_step * self.output_rate);
        let n = r.round();
        if n < 1.0 || (r - n).abs() > 1e-6 * r {
            return Err(Error::Config(format!(
                "output period must be an integer multiple of the simulation step (ratio {r})"
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.frequency, self.v_rms, self.tau, self.tau_yoke, self.duration, self.sim_step, self.output_rate];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "frequency, v_rms, tau, tau_yoke, duration, sim_step and output_rate must be positive".into(),
            ));
        }
        if self.sim_step >= 0.5 / self.output_rate {
            return Err(Error::Config("sim_step must be below half the output period".into()));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(Error::Config("noise_fraction must be >= 0".into()));
        }
        if !(self.switch_on >= 0.0) || self.switch_off.is_some_and(|off| !(off > self.switch_on)) {
            return Err(Error::Config("switching times must satisfy 0 <= on < off".into()));
        }
        if !(0.0..=1.0).contains(&self.yoke_flux_ratio) {
            return Err(Error::Config("yoke_flux_ratio must be in [0, 1]".into()));
        }
        if let Load::Impedance { r, l } = self.load {
            if !(r >= 0.0 && l >= 0.0 && r + l > 0.0) {
                return Err(Error::Config("load impedance must be non-negative and nonzero".into()));
            }
        }
        Ok(())
    }

    fn sample_count(&self) -> usize {
        (self.duration / self.sim_step).round() as usize + 1
    }
}

/// Limb/yoke mixing weights of the three-phase magnetization current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingWeights {
    pub k: [f64; 5],
}

impl MixingWeights {
    pub fn new(k: [f64; 5]) -> Result<Self> {
        if k.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("mixing weights must lie in [0, 1], got {k:?}")));
        }
        Ok(Self { k })
    }
}

/// Uniformly sampled signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Waveform {
    pub time: Vec<f64>,
    pub value: Vec<f64>,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn step(&self) -> Option<f64> {
        (self.time.len() >= 2).then(|| self.time[1] - self.time[0])
    }
}

/// Flux linkage `lambda_m sin(w0 t + theta) + lambda_0 exp(-t / tau)`.
pub fn flux_linkage(t: f64, omega0: f64, lambda_m: f64, theta: f64, lambda_0: f64, tau: f64) -> f64 {
    lambda_m * (omega0 * t + theta).sin() + lambda_0 * (-t / tau).exp()
}

/// Initial offset `lambda_r - lambda_m sin(theta)` of the decaying term.
pub fn offset_flux(lambda_r: f64, lambda_m: f64, theta: f64) -> f64 {
    lambda_r - lambda_m * theta.sin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticOutput {
    pub current: Waveform,
    pub i_m: Vec<f64>,
    pub i_s: Vec<f64>,
    pub states: Vec<StateVector>,
}

/// Sinusoidal current drawn by the core-loss resistance and an optional
/// load: `(peak, phase)` relative to the switch-on instant.
fn sinusoid_component(params: &TransformerParams, sc: &ScenarioConfig) -> (f64, f64) {
    let v_peak = sc.v_rms * std::f64::consts::SQRT_2;
    let w = sc.omega0();
    // Core-loss current in phase with the source voltage.
    let (mut re, mut im) = (v_peak / params.r_c, 0.0);
    if let Load::Impedance { r, l } = sc.load {
        let a2 = params.turns_ratio * params.turns_ratio;
        let zr = (params.r_x + r) * a2;
        let zx = w * (params.l_x + l) * a2;
        let z2 = zr * zr + zx * zx;
        re += v_peak * zr / z2;
        im -= v_peak * zx / z2;
    }
    (re.hypot(im), sc.alpha + im.atan2(re))
}

/// Model-matched synthesis at the simulation step. The current is evaluated
/// through the observation function from the true states, so it equals
/// `h(a(t), x(t))` exactly.
pub fn synth_analytic(
    model: &ModelConfig,
    params: &TransformerParams,
    sc: &ScenarioConfig,
    weights: Option<&MixingWeights>,
) -> Result<AnalyticOutput> {
    sc.validate()?;
    params.validate()?;
    let three_phase = matches!(model.variant, Variant::ThreePhaseCore { .. });
    if three_phase != weights.is_some() {
        return Err(Error::Config("mixing weights are required for, and only for, the three-phase model".into()));
    }
    if (model.omega0 - sc.omega0()).abs() > 1e-9 * model.omega0 {
        return Err(Error::Config("model and scenario frequencies differ".into()));
    }

    let w = sc.omega0();
    let lambda_m = sc.lambda_m();
    // Phases referred to t = 0 rather than to switch-on.
    let shift = -w * sc.switch_on;
    let theta = sc.alpha - sc.phi;
    let (is_peak, is_phase) = sinusoid_component(params, sc);

    // (d, q, offset-at-switch-on) of the mixed limb and yoke fluxes.
    let limb_phase = |p: usize| theta - TAU * p as f64 / 3.0;
    let component = |ph: f64, scale: f64| {
        let offset = offset_flux(sc.lambda_r, lambda_m, ph);
        (scale * lambda_m * (ph + shift).cos(), scale * lambda_m * (ph + shift).sin(), scale * offset)
    };
    let mix = |terms: &[(f64, (f64, f64, f64))]| {
        terms.iter().fold((0.0, 0.0, 0.0), |acc, (k, c)| (acc.0 + k * c.0, acc.1 + k * c.1, acc.2 + k * c.2))
    };
    let (limb, yoke) = match weights {
        None => (component(theta, 1.0), (0.0, 0.0, 0.0)),
        Some(mw) => {
            let k = mw.k;
            let limb = mix(&[
                (k[0], component(limb_phase(0), 1.0)),
                (k[1], component(limb_phase(1), 1.0)),
                (k[2], component(limb_phase(2), 1.0)),
            ]);
            let yoke = mix(&[
                (k[3], component(limb_phase(0), sc.yoke_flux_ratio)),
                (k[4], component(limb_phase(1), sc.yoke_flux_ratio)),
            ]);
            (limb, yoke)
        }
    };

    let dim = model.dim();
    let n = sc.sample_count();
    let mut out = AnalyticOutput {
        current: Waveform { time: Vec::with_capacity(n), value: Vec::with_capacity(n) },
        i_m: Vec::with_capacity(n),
        i_s: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
    };
    for j in 0..n {
        let t = j as f64 * sc.sim_step;
        let mut x = StateVector::zeros(dim);
        let energized = t >= sc.switch_on && sc.switch_off.is_none_or(|off| t < off);
        if energized {
            let rel = t - sc.switch_on;
            x[0] = limb.0;
            x[1] = limb.1;
            x[2] = limb.2 * (-rel / sc.tau).exp();
            if dim == 8 {
                x[3] = yoke.0;
                x[4] = yoke.1;
                x[5] = yoke.2 * (-rel / sc.tau_yoke).exp();
            }
            x[dim - 2] = is_peak * (is_phase + shift).cos();
            x[dim - 1] = is_peak * (is_phase + shift).sin();
        }
        let a = coefficients_at(model, t)?;
        let (i_m, i_s) = decompose(model, &a, &x)?;
        out.current.time.push(t);
        out.current.value.push(i_m + i_s);
        out.i_m.push(i_m);
        out.i_s.push(i_s);
        out.states.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteinmetzOutput {
    /// Terminal (source-side) current.
    pub current: Waveform,
    /// Nonlinear magnetizing-branch current.
    pub i_m: Vec<f64>,
    /// Core-loss resistance current.
    pub i_s: Vec<f64>,
    pub flux: Vec<f64>,
    /// Source voltage.
    pub voltage: Vec<f64>,
    /// Largest per-step nonlinear solve residual, in flux units [Wb].
    pub max_solve_residual: f64,
}

const MAX_SOLVE_ITERS: usize = 100;

/// Trapezoidal-rule simulation of the Steinmetz model energized from the H
/// winding: source, `R_H`/`L_H`, then `R_C` in parallel with the nonlinear
/// inductor `i = beta1 l + beta2 pow_signed(l, n)`, then the referred X
/// winding and load. Before switch-on the core holds `lambda_r`.
pub fn simulate_steinmetz(params: &TransformerParams, sc: &ScenarioConfig) -> Result<SteinmetzOutput> {
    params.validate()?;
    sc.validate()?;
    if sc.sim_step > 10e-6 {
        return Err(Error::Config("Steinmetz simulation step must be <= 10 us".into()));
    }
    let h = sc.sim_step;
    let w = sc.omega0();
    let v_peak = sc.v_rms * std::f64::consts::SQRT_2;
    let poly = params.polynomial();
    let lambda_scale = sc.lambda_m().max(1e-3);
    let tol = 1e-10 * lambda_scale;

    let (r1, l1) = (params.r_h, params.l_h);
    let a2 = params.turns_ratio * params.turns_ratio;
    let secondary = match sc.load {
        Load::Open => None,
        Load::Impedance { r, l } => Some(((params.r_x + r) * a2, (params.l_x + l) * a2)),
    };
    let d1 = l1 + 0.5 * h * r1;
    let d2 = secondary.map(|(r2, l2)| l2 + 0.5 * h * r2);

    let closed = |t: f64| t >= sc.switch_on && sc.switch_off.is_none_or(|off| t < off);
    let source = |t: f64| if closed(t) { v_peak * (w * (t - sc.switch_on) + sc.alpha).sin() } else { 0.0 };

    let n = sc.sample_count();
    let mut out = SteinmetzOutput {
        current: Waveform { time: Vec::with_capacity(n), value: Vec::with_capacity(n) },
        i_m: Vec::with_capacity(n),
        i_s: Vec::with_capacity(n),
        flux: Vec::with_capacity(n),
        voltage: Vec::with_capacity(n),
        max_solve_residual: 0.0,
    };

    let mut lam = sc.lambda_r;
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    let mut vm = 0.0;
    let mut started = false;

    for j in 0..n {
        let t = j as f64 * h;
        if j > 0 && started {
            let t_prev = t - h;
            let v_prev = source(t_prev);
            let on = closed(t);
            let v_next = source(t);
            let vm_of = |y: f64| 2.0 * (y - lam) / h - vm;
            let i1_of = |y: f64| {
                if on {
                    (l1 * i1 + 0.5 * h * (v_next + v_prev - r1 * i1 - vm_of(y) - vm)) / d1
                } else {
                    0.0
                }
            };
            let i2_of = |y: f64| match (secondary, d2) {
                (Some((r2, l2)), Some(d2)) => (l2 * i2 + 0.5 * h * (vm_of(y) + vm - r2 * i2)) / d2,
                _ => 0.0,
            };
            let residual = |y: f64| i1_of(y) - vm_of(y) / params.r_c - poly.current(y) - i2_of(y);
            let slope = |y: f64| {
                let mut s = -2.0 / (h * params.r_c) - poly.slope(y);
                if on {
                    s -= 1.0 / d1;
                }
                if let Some(d2) = d2 {
                    s -= 1.0 / d2;
                }
                s
            };
            let y = solve_monotone(residual, slope, lam + h * vm, tol).ok_or(Error::Simulation { step: j })?;
            let res = (residual(y) / slope(y)).abs();
            out.max_solve_residual = out.max_solve_residual.max(res);
            let vm_new = vm_of(y);
            i1 = i1_of(y);
            i2 = i2_of(y);
            vm = vm_new;
            lam = y;
        } else if !started && closed(t) {
            started = true;
            // KCL with zero series current fixes the initial branch voltage.
            vm = -params.r_c * poly.current(lam);
        }
        let i_core = poly.current(lam);
        let i_loss = vm / params.r_c;
        out.current.time.push(t);
        out.current.value.push(i1);
        out.i_m.push(i_core);
        out.i_s.push(i_loss);
        out.flux.push(lam);
        out.voltage.push(source(t));
    }
    Ok(out)
}

/// Root of a strictly decreasing function by safeguarded Newton iteration.
fn solve_monotone(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, guess: f64, tol: f64) -> Option<f64> {
    let f0 = f(guess);
    if f0 == 0.0 {
        return Some(guess);
    }
    // Bracket: f(lo) > 0 > f(hi).
    let mut step = tol.max(1e-9) * 1e3;
    let (mut lo, mut hi);
    if f0 > 0.0 {
        lo = guess;
        hi = guess + step;
        while f(hi) > 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            if !hi.is_finite() {
                return None;
            }
        }
    } else {
        hi = guess;
        lo = guess - step;
        while f(lo) < 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            if !lo.is_finite() {
                return None;
            }
        }
    }
    let mut y = guess.clamp(lo, hi);
    for _ in 0..MAX_SOLVE_ITERS {
        let fy = f(y);
        if fy == 0.0 {
            return Some(y);
        }
        if fy > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let mut next = y - fy / df(y);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= tol * 1e-3 || hi - lo <= tol * 1e-3 {
            return Some(next);
        }
        y = next;
    }
    None
}

/// Keeps every `ratio`-th sample starting at index 0.
pub fn downsample(w: &Waveform, ratio: usize) -> Result<Waveform> {
    if ratio < 1 {
        return Err(Error::InvalidArgument("decimation ratio must be >= 1".into()));
    }
    Ok(Waveform {
        time: w.time.iter().step_by(ratio).copied().collect(),
        value: w.value.iter().step_by(ratio).copied().collect(),
    })
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `sigma`.
pub fn add_noise(w: &Waveform, sigma: f64, seed: u64) -> Result<Waveform> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(w.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Waveform {
        time: w.time.clone(),
        value: w.value.iter().map(|v| v + normal.sample(&mut rng)).collect(),
    })
}

/// Decimated, noise-contaminated measurement of a truth waveform.
pub fn measure(truth: &Waveform, sc: &ScenarioConfig, i_nom: f64) -> Result<Waveform> {
    let dec = downsample(truth, sc.decimation()?)?;
    add_noise(&dec, sc.noise_fraction * i_nom, sc.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::observe;
    use std::f64::consts::PI;

    fn sp_model(sc: &ScenarioConfig) -> ModelConfig {
        ModelConfig::single_phase(sc.omega0(), 1.0 / sc.output_rate, RATED_LIMB).unwrap()
    }

    #[test]
    fn flux_linkage_examples() {
        let w = 2.0 * PI * 60.0;
        let (lm, th, l0, tau) = (1.4, 0.3, -0.7, 0.5);
        assert_eq!(flux_linkage(0.0, w, lm, th, l0, tau), lm * th.sin() + l0);
        let t = 20.0 * tau;
        let pure = lm * (w * t + th).sin();
        assert!((flux_linkage(t, w, lm, th, l0, tau) - pure).abs() <= 1e-8 * l0.abs());

        // Worst-case offset: theta = pi/2, no residual flux.
        let l0 = offset_flux(0.0, lm, FRAC_PI_2);
        assert_eq!(l0, -lm);
        let peak = (0..2000)
            .map(|i| flux_linkage(i as f64 * 1e-5, w, lm, FRAC_PI_2, l0, 100.0).abs())
            .fold(0.0, f64::max);
        assert!((peak - 2.0 * lm).abs() < 0.01 * lm, "{peak}");
    }

    #[test]
    fn analytic_zero_amplitude_is_zero() {
        let sc = ScenarioConfig { v_rms: 1e-300, duration: 0.01, ..Default::default() };
        let p = TransformerParams { r_c: 1e300, ..TransformerParams::rated_5kva() };
        let out = synth_analytic(&sp_model(&sc), &p, &sc, None).unwrap();
        assert!(out.current.value.iter().all(|v| v.abs() < 1e-200));
    }

    #[test]
    fn analytic_linear_no_decay_is_sinusoid() {
        // Voltage peak at switch-on gives no offset; flux and loss current
        // are then in quadrature, so the peak combines in root-sum-square.
        let sc = ScenarioConfig { alpha: FRAC_PI_2, duration: 0.05, ..Default::default() };
        let p = TransformerParams::rated_5kva();
        let lin = ModelConfig::single_phase(sc.omega0(), 2e-4, Polynomial::new(0.054, 0.0, 5).unwrap()).unwrap();
        let out = synth_analytic(&lin, &p, &sc, None).unwrap();
        let peak = out.current.value.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let expect = (0.054 * sc.lambda_m()).hypot(sc.v_rms * 2f64.sqrt() / p.r_c);
        assert!((peak - expect).abs() < 1e-4 * expect);
        assert!(out.states.iter().all(|x| x.lambda_0().abs() < 1e-12));

        // In-phase alignment: pure i_s and flux term with theta = Theta.
        let peak_aligned = 0.054 * sc.lambda_m() + 1.0;
        let x = StateVector::single_phase(0.054f64.recip() * 0.0 + sc.lambda_m(), 0.0, 0.0, 1.0, 0.0);
        let a = coefficients_at(&lin, 0.25 / 60.0).unwrap();
        assert!((observe(&lin, &a, &x).unwrap() - peak_aligned).abs() < 1e-9);
    }

    #[test]
    fn analytic_matches_observation_function() {
        let sc = ScenarioConfig { duration: 0.05, switch_on: 0.01, ..Default::default() };
        let m = sp_model(&sc);
        let out = synth_analytic(&m, &TransformerParams::rated_5kva(), &sc, None).unwrap();
        for (j, x) in out.states.iter().enumerate().step_by(97) {
            let t = out.current.time[j];
            let a = coefficients_at(&m, t).unwrap();
            assert_eq!(observe(&m, &a, x).unwrap(), out.current.value[j]);
            assert_eq!(out.i_m[j] + out.i_s[j], out.current.value[j]);
        }
        // Flux of the analytic state equals the closed-form flux linkage.
        let lm = sc.lambda_m();
        let theta = sc.alpha - sc.phi;
        for j in (5000..25000).step_by(1111) {
            let t = out.current.time[j];
            let x = out.states[j];
            let a = coefficients_at(&m, t).unwrap();
            let flux = a.a_d() * x[0] + a.a_q() * x[1] + x[2];
            let expect = flux_linkage(t - sc.switch_on, sc.omega0(), lm, theta, offset_flux(0.0, lm, theta), sc.tau);
            assert!((flux - expect).abs() < 1e-9, "{flux} vs {expect}");
        }
    }

    #[test]
    fn three_phase_without_yoke_matches_single_phase() {
        let sc = ScenarioConfig { duration: 0.03, ..Default::default() };
        let sp = sp_model(&sc);
        let tp = ModelConfig::three_phase(sc.omega0(), sp.ts, RATED_LIMB, Polynomial::new(0.02, 0.01, 5).unwrap()).unwrap();
        let p = TransformerParams::rated_5kva();
        let single = synth_analytic(&sp, &p, &sc, None).unwrap();
        let w = MixingWeights::new([1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let three = synth_analytic(&tp, &p, &sc, Some(&w)).unwrap();
        assert_eq!(single.current, three.current);
    }

    #[test]
    fn variant_and_weights_must_agree() {
        let sc = ScenarioConfig { duration: 0.01, ..Default::default() };
        let sp = sp_model(&sc);
        let w = MixingWeights::new([0.5; 5]).unwrap();
        assert!(synth_analytic(&sp, &TransformerParams::rated_5kva(), &sc, Some(&w)).is_err());
        assert!(MixingWeights::new([1.5, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn decimation_and_noise() {
        let w = Waveform { time: (0..1000).map(|i| i as f64).collect(), value: (0..1000).map(|i| i as f64 * 0.5).collect() };
        assert_eq!(downsample(&w, 1).unwrap(), w);
        let d = downsample(&w, 100).unwrap();
        assert_eq!(d.time, (0..10).map(|i| (i * 100) as f64).collect::<Vec<_>>());
        assert!(downsample(&w, 0).is_err());
        assert_eq!(add_noise(&w, 0.0, 3).unwrap(), w);
        assert_eq!(add_noise(&w, 1.0, 3).unwrap(), add_noise(&w, 1.0, 3).unwrap());
        assert_ne!(add_noise(&w, 1.0, 3).unwrap(), add_noise(&w, 1.0, 4).unwrap());

        let sc = ScenarioConfig::default();
        assert_eq!(sc.decimation().unwrap(), 100);
    }

    #[test]
    fn noise_standard_deviation() {
        let n = 1_000_000;
        let w = Waveform { time: vec![0.0; n], value: vec![0.0; n] };
        let noisy = add_noise(&w, 1.0, 11).unwrap();
        let mean = noisy.value.iter().sum::<f64>() / n as f64;
        let var = noisy.value.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        assert!((0.995..=1.005).contains(&sd), "{sd}");
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioConfig { sim_step: 1e-3, ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { noise_fraction: -0.1, ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { switch_on: 0.2, switch_off: Some(0.1), ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { sim_step: 3e-6, ..Default::default() }.decimation().is_err());
    }
}
