//! File-based commands behind the command-line harness.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{AppConfig, Engine};
use crate::error::{Error, Result};
use crate::interp::trapezoid_area;
use crate::io::{self, RecordWriter, SampleRecord};
use crate::pipeline::{ProcessingUnit, SampleSummary};
use crate::synth::{downsample, measure, simulate_steinmetz, synth_analytic, Waveform};

pub const TRUTH_FILE: &str = "truth.csv";
pub const MEASUREMENT_FILE: &str = "measurement.csv";
pub const STATES_FILE: &str = "states.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const RECONSTRUCTED_FILE: &str = "reconstructed.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Stream id written into synthesized measurement files.
pub const SYNTH_STREAM: &str = "synth";

const STATE_NAMES: [&str; 8] = [
    "lambda_d [Wb]",
    "lambda_q [Wb]",
    "lambda_0 [Wb]",
    "yoke_d [Wb]",
    "yoke_q [Wb]",
    "yoke_0 [Wb]",
    "i_d [A]",
    "i_q [A]",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub truth: PathBuf,
    pub measurement: PathBuf,
    pub states: PathBuf,
}

/// Synthesizes the configured scenario into `out_dir`.
pub fn cmd_synth(cfg: &AppConfig, out_dir: &Path) -> Result<SynthFiles> {
    std::fs::create_dir_all(out_dir)?;
    let files = SynthFiles {
        truth: out_dir.join(TRUTH_FILE),
        measurement: out_dir.join(MEASUREMENT_FILE),
        states: out_dir.join(STATES_FILE),
    };
    let sc = &cfg.scenario;
    let truth_header = ["time [s]", "current [A]", "i_m [A]", "i_s [A]"];
    let current = match cfg.synth.engine {
        Engine::Steinmetz => {
            let sim = simulate_steinmetz(&cfg.transformer, sc)?;
            let rows = (0..sim.current.len())
                .map(|j| [sim.current.time[j], sim.current.value[j], sim.i_m[j], sim.i_s[j]]);
            io::write_table(&files.truth, &truth_header, rows)?;
            let rows = (0..sim.current.len())
                .map(|j| [sim.current.time[j], sim.flux[j], sim.voltage[j]]);
            io::write_table(&files.states, &["time [s]", "flux [Wb]", "voltage [V]"], rows)?;
            sim.current
        }
        Engine::Analytic => {
            let model = cfg.model_config()?;
            let out = synth_analytic(&model, &cfg.transformer, sc, cfg.mixing()?.as_ref())?;
            let rows = (0..out.current.len())
                .map(|j| [out.current.time[j], out.current.value[j], out.i_m[j], out.i_s[j]]);
            io::write_table(&files.truth, &truth_header, rows)?;
            let names: Vec<&str> = match model.dim() {
                5 => [&STATE_NAMES[..3], &STATE_NAMES[6..]].concat(),
                _ => STATE_NAMES.to_vec(),
            };
            let header: Vec<&str> = std::iter::once("time [s]").chain(names).collect();
            let rows = out.states.iter().zip(&out.current.time).map(|(x, &t)| {
                std::iter::once(t).chain(x.as_slice().iter().copied()).collect::<Vec<f64>>()
            });
            io::write_table(&files.states, &header, rows)?;
            out.current
        }
    };
    let meas = measure(&current, sc, cfg.transformer.i_nom)?;
    io::write_samples(&files.measurement, &meas, SYNTH_STREAM)?;
    Ok(files)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AreaSummary {
    pub t_start: f64,
    pub duration: f64,
    pub reference: f64,
    pub noiseless: f64,
    pub noisy: f64,
    /// `None` when the window contains gaps.
    pub reconstructed: Option<f64>,
    pub relative_error_noiseless: f64,
    pub relative_error_noisy: f64,
    pub relative_error_reconstructed: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StreamSummary {
    pub stream_id: String,
    pub samples: usize,
    pub post_warmup: usize,
    pub flags: usize,
    pub flag_rate: f64,
    /// Mean of `r_n^2` over the MSE window.
    pub mse: Option<f64>,
    pub mse_count: usize,
    pub mse_start: f64,
    pub area: Option<AreaSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub seed: u64,
    pub input: PathBuf,
    pub reference: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: AppConfig,
    pub streams: Vec<StreamSummary>,
}

/// Flag rate and MSE from a stream's summaries.
pub fn summarize(stream_id: &str, summaries: &[SampleSummary], mse_start: f64, mse_window: usize) -> StreamSummary {
    let post: Vec<&SampleSummary> = summaries.iter().filter(|s| s.r_n.is_some()).collect();
    let flags = post.iter().filter(|s| s.verdict == crate::pipeline::Verdict::Invalid).count();
    let window: Vec<f64> = post
        .iter()
        .filter(|s| s.t >= mse_start - 1e-12)
        .take(mse_window)
        .map(|s| s.r_n.unwrap_or(0.0).powi(2))
        .collect();
    StreamSummary {
        stream_id: stream_id.to_string(),
        samples: summaries.len(),
        post_warmup: post.len(),
        flags,
        flag_rate: if post.is_empty() { 0.0 } else { flags as f64 / post.len() as f64 },
        mse: (!window.is_empty()).then(|| window.iter().sum::<f64>() / window.len() as f64),
        mse_count: window.len(),
        mse_start,
        area: None,
    }
}

/// Index range `[i0, i1]` of a uniform series covering `[t0, t0 + span]`.
fn span_indices(t_first: f64, step: f64, len: usize, t0: f64, span: f64) -> Option<(usize, usize)> {
    let i0 = ((t0 - t_first) / step).round();
    let i1 = i0 + (span / step + 1e-9).floor();
    (i0 >= 0.0 && (i1 as usize) < len).then_some((i0 as usize, i1 as usize))
}

fn relative(v: f64, reference: f64) -> f64 {
    (v - reference).abs() / reference.abs()
}

/// Areas over `[t0, t0 + span]` of the reference, the decimated reference,
/// the noisy input and the reconstruction (`None` entries are gaps).
pub fn compare_areas(
    reference: &Waveform,
    noisy: &Waveform,
    recon_t0: f64,
    recon_dt: f64,
    reconstructed: &[Option<f64>],
    t0: f64,
    span: f64,
) -> Result<AreaSummary> {
    let dt = reference.step().ok_or_else(|| Error::InvalidArgument("reference needs two samples".into()))?;
    let ts = noisy.step().ok_or_else(|| Error::InvalidArgument("input needs two samples".into()))?;
    let out_of_range = |what: &str| Error::InvalidArgument(format!("area window [{t0}, {}] outside the {what}", t0 + span));
    let (j0, j1) = span_indices(reference.time[0], dt, reference.len(), t0, span).ok_or_else(|| out_of_range("reference"))?;
    let (k0, k1) = span_indices(noisy.time[0], ts, noisy.len(), t0, span).ok_or_else(|| out_of_range("input"))?;
    let (r0, r1) =
        span_indices(recon_t0, recon_dt, reconstructed.len(), t0, span).ok_or_else(|| out_of_range("reconstruction"))?;
    let ratio = (ts / dt).round() as usize;
    let offset = ((noisy.time[0] - reference.time[0]) / dt).round() as usize;
    let clean = downsample(&Waveform { time: reference.time[offset..].to_vec(), value: reference.value[offset..].to_vec() }, ratio)?;
    let reference_area = trapezoid_area(&reference.value[j0..=j1], dt);
    let noiseless = trapezoid_area(&clean.value[k0..=k1.min(clean.len() - 1)], ts);
    let noisy_area = trapezoid_area(&noisy.value[k0..=k1], ts);
    let recon: Option<Vec<f64>> = reconstructed[r0..=r1].iter().copied().collect();
    let recon_area = recon.map(|v| trapezoid_area(&v, recon_dt));
    Ok(AreaSummary {
        t_start: t0,
        duration: span,
        reference: reference_area,
        noiseless,
        noisy: noisy_area,
        reconstructed: recon_area,
        relative_error_noiseless: relative(noiseless, reference_area),
        relative_error_noisy: relative(noisy_area, reference_area),
        relative_error_reconstructed: recon_area.map(|a| relative(a, reference_area)),
    })
}

/// Runs the pipeline over an input file, one unit per stream id, writing
/// records, the reconstructed stream and a manifest into `out_dir`.
pub fn cmd_run(cfg: &AppConfig, input: &Path, out_dir: &Path, reference: Option<&Path>) -> Result<RunManifest> {
    let samples = io::read_samples(input)?;
    let reference_wave = reference.map(io::read_waveform).transpose()?;
    std::fs::create_dir_all(out_dir)?;
    let pcfg = cfg.pipeline_config()?;
    let delta_t = pcfg.delta_t;

    let mut order: Vec<String> = Vec::new();
    let mut by_stream: HashMap<String, Vec<&SampleRecord>> = HashMap::new();
    for s in &samples {
        by_stream.entry(s.stream_id.clone()).or_insert_with(|| {
            order.push(s.stream_id.clone());
            Vec::new()
        }).push(s);
    }

    let records_path = out_dir.join(RECORDS_FILE);
    let recon_path = out_dir.join(RECONSTRUCTED_FILE);
    let mut records = RecordWriter::new(BufWriter::new(File::create(&records_path)?))?;
    let mut recon_out = BufWriter::new(File::create(&recon_path)?);
    writeln!(recon_out, "{}", io::RECON_HEADER.join(","))?;

    let mut streams = Vec::new();
    for id in &order {
        let input_samples = &by_stream[id];
        let mut unit = ProcessingUnit::new(pcfg.clone())?;
        let mut block = Vec::with_capacity(unit.block_len());
        let mut summaries = Vec::with_capacity(input_samples.len());
        let mut recon: Vec<Option<f64>> = Vec::new();
        for (i, s) in input_samples.iter().enumerate() {
            let summary = unit.process_into(s.timestamp, s.value, &mut block).map_err(|e| match e {
                Error::Stream { reason, .. } => Error::Stream { index: i as u64, reason: format!("stream {id:?}: {reason}") },
                other => other,
            })?;
            records.write(id, &summary)?;
            io::recon_lines(id, &summary, &block, delta_t, &mut recon_out)?;
            if reference_wave.is_some() {
                if block.is_empty() {
                    recon.extend(std::iter::repeat_n(None, unit.block_len()));
                } else {
                    recon.extend(block.iter().map(|&v| Some(v)));
                }
            }
            summaries.push(summary);
        }
        let mse_start = cfg.run.mse_start.unwrap_or(cfg.scenario.switch_on);
        let mut summary = summarize(id, &summaries, mse_start, cfg.run.mse_window);
        if let (Some(refw), Some(first)) = (&reference_wave, input_samples.first()) {
            let noisy = Waveform {
                time: input_samples.iter().map(|s| s.timestamp).collect(),
                value: input_samples.iter().map(|s| s.value).collect(),
            };
            let period = 1.0 / cfg.model.frequency.unwrap_or(cfg.scenario.frequency);
            let span = cfg.run.area_cycles * period;
            let last = noisy.time[noisy.len() - 1];
            let t0 = cfg.run.area_start.unwrap_or_else(|| {
                let ts = pcfg.model.ts;
                ((last - span - ts - first.timestamp) / ts).floor() * ts + first.timestamp
            });
            summary.area = Some(compare_areas(refw, &noisy, first.timestamp, delta_t, &recon, t0, span)?);
        }
        streams.push(summary);
    }
    records.finish()?;
    recon_out.flush()?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.scenario.seed,
        input: input.to_path_buf(),
        reference: reference.map(Path::to_path_buf),
        outputs: vec![records_path, recon_path, manifest_path.clone()],
        config: *cfg,
        streams,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&manifest_path, json)?;
    Ok(manifest)
}
