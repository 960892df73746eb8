//! Comma-separated file formats.
//!
//! Every file starts with a header row whose column names carry units in
//! brackets. Numbers are written with Rust's shortest round-trip formatting,
//! so a write-then-read reproduces every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::{OutputRecord, Quality, SampleSummary, Verdict};
use crate::synth::Waveform;

pub const SAMPLE_HEADER: [&str; 3] = ["timestamp [s]", "value [A]", "stream_id"];

pub const RECORD_HEADER: [&str; 14] = [
    "stream_id",
    "k",
    "time [s]",
    "i_meas [A]",
    "i_est [A]",
    "i_m [A]",
    "i_s [A]",
    "r_hat [A]",
    "r_post [A]",
    "r_bar [A]",
    "r_n [1]",
    "flag",
    "sigma_hat [A]",
    "quality",
];

pub const RECON_HEADER: [&str; 5] = ["stream_id", "time [s]", "value [A]", "quality", "source_k"];

/// One measured sample on the wire or in a file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub timestamp: f64,
    pub value: f64,
    pub stream_id: String,
}

impl SampleRecord {
    /// Parses `timestamp,value,stream_id`; the stream id may be omitted.
    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let mut parts = line.trim_end_matches(['\r', '\n']).splitn(3, ',');
        let ts = parts.next().unwrap_or("").trim();
        let value = parts.next().ok_or("missing value field")?.trim();
        let stream_id = parts.next().unwrap_or("").trim().to_string();
        let timestamp: f64 = ts.parse().map_err(|_| format!("bad timestamp {ts:?}"))?;
        let value: f64 = value.parse().map_err(|_| format!("bad value {value:?}"))?;
        if !timestamp.is_finite() || !value.is_finite() {
            return Err("non-finite number".into());
        }
        Ok(Self { timestamp, value, stream_id })
    }
}

/// Formats an `f64` so that parsing the text returns the same value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes a numeric table with the given header.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|&v| num(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table, returning its header and rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Data { row: i + 2, reason: e.to_string() })?);
    }
    Ok((header, rows))
}

pub fn write_waveform(path: &Path, w: &Waveform, value_column: &str) -> Result<()> {
    write_table(path, &["time [s]", value_column], w.time.iter().zip(&w.value).map(|(&t, &v)| [t, v]))
}

/// Reads the first two columns of a table as a waveform.
pub fn read_waveform(path: &Path) -> Result<Waveform> {
    let (_, rows) = read_table(path)?;
    let mut w = Waveform { time: Vec::with_capacity(rows.len()), value: Vec::with_capacity(rows.len()) };
    for (i, row) in rows.iter().enumerate() {
        if row.len() < 2 {
            return Err(Error::Data { row: i + 2, reason: "expected at least two columns".into() });
        }
        w.time.push(row[0]);
        w.value.push(row[1]);
    }
    Ok(w)
}

pub fn write_samples(path: &Path, w: &Waveform, stream_id: &str) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", SAMPLE_HEADER.join(","))?;
    for (&t, &v) in w.time.iter().zip(&w.value) {
        writeln!(out, "{},{},{stream_id}", num(t), num(v))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads sample records, checking that timestamps increase strictly within
/// each stream id.
pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_samples(&text)
}

pub fn parse_samples(text: &str) -> Result<Vec<SampleRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_start().starts_with("timestamp") => {}
        _ => return Err(Error::Data { row: 1, reason: format!("expected header {:?}", SAMPLE_HEADER.join(",")) }),
    }
    let mut out: Vec<SampleRecord> = Vec::new();
    let mut last: std::collections::HashMap<String, f64> = Default::default();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let rec = SampleRecord::parse_line(line).map_err(|reason| Error::Data { row, reason })?;
        if let Some(&prev) = last.get(&rec.stream_id) {
            if rec.timestamp <= prev {
                return Err(Error::Data { row, reason: format!("timestamp {} not after {prev}", rec.timestamp) });
            }
        }
        last.insert(rec.stream_id.clone(), rec.timestamp);
        out.push(rec);
    }
    Ok(out)
}

/// Fields of one output-record row, in [`RECORD_HEADER`] order.
pub fn record_fields(stream_id: &str, s: &SampleSummary) -> [String; 14] {
    [
        stream_id.to_string(),
        s.k.to_string(),
        num(s.t),
        num(s.i_meas),
        num(s.i_est),
        num(s.i_m),
        num(s.i_s),
        num(s.r_hat),
        num(s.r_post),
        opt(s.r_bar),
        opt(s.r_n),
        s.verdict.label().to_string(),
        num(s.sigma_hat),
        s.quality.label().to_string(),
    ]
}

/// Per-sample output table writer.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(RECORD_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, stream_id: &str, s: &SampleSummary) -> Result<()> {
        self.inner.write_record(record_fields(stream_id, s))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Lines of the reconstructed stream for one input sample. A record without
/// samples becomes a single marker line with an empty value, `gap` or
/// `warmup`.
pub fn recon_lines(stream_id: &str, s: &SampleSummary, block: &[f64], delta_t: f64, out: &mut impl Write) -> Result<()> {
    if s.quality == Quality::Gap {
        let marker = if s.verdict == Verdict::Warmup { "warmup" } else { "gap" };
        writeln!(out, "{stream_id},{},,{marker},{}", num(s.t), s.k)?;
        return Ok(());
    }
    for (j, &v) in block.iter().enumerate() {
        writeln!(out, "{stream_id},{},{},{},{}", num(s.t + j as f64 * delta_t), num(v), s.quality.label(), s.k)?;
    }
    Ok(())
}

/// Wire format of the streaming mode: `quality,timestamp,value,stream_id`,
/// with the value empty on marker lines.
pub fn stream_lines(stream_id: &str, s: &SampleSummary, block: &[f64], delta_t: f64, out: &mut impl Write) -> Result<()> {
    if s.quality == Quality::Gap {
        let marker = if s.verdict == Verdict::Warmup { "warmup" } else { "gap" };
        writeln!(out, "{marker},{},,{stream_id}", num(s.t))?;
        return Ok(());
    }
    for (j, &v) in block.iter().enumerate() {
        writeln!(out, "{},{},{},{stream_id}", s.quality.label(), num(s.t + j as f64 * delta_t), num(v))?;
    }
    Ok(())
}

/// Convenience for tests and bindings: the record rows as strings.
pub fn records_to_rows(stream_id: &str, records: &[OutputRecord]) -> Vec<[String; 14]> {
    records.iter().map(|r| record_fields(stream_id, &r.summary)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 13.157894736842104, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn parse_sample_lines() {
        let r = SampleRecord::parse_line("0.0002,-1.5,phase-a").unwrap();
        assert_eq!(r, SampleRecord { timestamp: 2e-4, value: -1.5, stream_id: "phase-a".into() });
        assert_eq!(SampleRecord::parse_line("1,2").unwrap().stream_id, "");
        assert!(SampleRecord::parse_line("x,2,a").is_err());
        assert!(SampleRecord::parse_line("1").is_err());
        assert!(SampleRecord::parse_line("1,NaN,a").is_err());
    }

    #[test]
    fn sample_file_errors_report_rows() {
        let ok = parse_samples("timestamp [s],value [A],stream_id\n0,1,a\n1,2,a\n0.5,3,b\n").unwrap();
        assert_eq!(ok.len(), 3);
        assert_eq!(
            parse_samples("timestamp [s],value [A],stream_id\n0,1,a\n0,2,a\n"),
            Err(Error::Data { row: 3, reason: "timestamp 0 not after 0".into() })
        );
        assert!(matches!(parse_samples("t,v\n"), Err(Error::Data { row: 1, .. })));
        assert!(matches!(
            parse_samples("timestamp [s],value [A],stream_id\n0,1,a\n0.1,oops,a\n"),
            Err(Error::Data { row: 3, .. })
        ));
    }
}
