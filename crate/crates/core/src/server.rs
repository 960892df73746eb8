//! Line-oriented TCP ingestion.
//!
//! Each connection carries one stream of `timestamp,value,stream_id` lines
//! and gets its own processing unit. A reader thread parses lines into a
//! bounded queue; a worker drains it and writes
//! `quality,timestamp,value,stream_id` lines back. A full queue closes the
//! connection with an `ERR` line rather than blocking the sender.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{sync_channel, TrySendError};
use std::thread;

use crate::io::{stream_lines, SampleRecord};
use crate::pipeline::{PipelineConfig, ProcessingUnit};

pub const DEFAULT_QUEUE: usize = 1024;

enum Msg {
    Sample { line: usize, rec: SampleRecord },
    Error(String),
}

/// Accepts connections until the listener fails.
pub fn serve(listener: TcpListener, cfg: PipelineConfig, queue: usize) -> std::io::Result<()> {
    for conn in listener.incoming() {
        let conn = conn?;
        let cfg = cfg.clone();
        thread::spawn(move || {
            let _ = handle_connection(conn, cfg, queue);
        });
    }
    Ok(())
}

/// Serves one connection to completion.
pub fn handle_connection(conn: TcpStream, cfg: PipelineConfig, queue: usize) -> std::io::Result<()> {
    let reader = BufReader::new(conn.try_clone()?);
    let writer = conn.try_clone()?;
    let (tx, rx) = sync_channel::<Msg>(queue.max(1));

    let read_side = thread::spawn(move || {
        let mut stream_id: Option<String> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let msg = match line {
                Err(_) => break,
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => match SampleRecord::parse_line(&l) {
                    Err(_) => Msg::Error(format!("ERR parse {lineno}")),
                    Ok(rec) => match &stream_id {
                        Some(id) if *id != rec.stream_id => {
                            Msg::Error(format!("ERR stream-id {lineno}: expected {id:?}, got {:?}", rec.stream_id))
                        }
                        _ => {
                            stream_id.get_or_insert_with(|| rec.stream_id.clone());
                            Msg::Sample { line: lineno, rec }
                        }
                    },
                },
            };
            let stop = matches!(msg, Msg::Error(_));
            match tx.try_send(msg) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) => {
                    // The worker will see the error after draining what it has.
                    let _ = tx.send(Msg::Error(format!("ERR backpressure {lineno}: queue of {queue} samples full")));
                    break;
                }
                Err(TrySendError::Disconnected(_)) => break,
            }
            if stop {
                break;
            }
        }
    });

    let mut out = BufWriter::new(writer);
    let mut unit = match ProcessingUnit::new(cfg) {
        Ok(u) => u,
        Err(e) => {
            writeln!(out, "ERR config: {e}")?;
            out.flush()?;
            return conn.shutdown(std::net::Shutdown::Both);
        }
    };
    let delta_t = unit.config().delta_t;
    let mut block = Vec::with_capacity(unit.block_len());
    for msg in rx {
        match msg {
            Msg::Sample { line, rec } => match unit.process_into(rec.timestamp, rec.value, &mut block) {
                Ok(s) => {
                    if stream_lines(&rec.stream_id, &s, &block, delta_t, &mut out).is_err() {
                        break;
                    }
                    out.flush()?;
                }
                Err(e) => {
                    writeln!(out, "ERR stream {line}: {e}")?;
                    break;
                }
            },
            Msg::Error(text) => {
                writeln!(out, "{text}")?;
                break;
            }
        }
    }
    out.flush()?;
    drop(out);
    let _ = conn.shutdown(std::net::Shutdown::Both);
    let _ = read_side.join();
    Ok(())
}
