use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream};

use xfmr_integrity::app::{cmd_run, cmd_synth};
use xfmr_integrity::config::AppConfig;
use xfmr_integrity::io::{num, read_samples, SampleRecord};
use xfmr_integrity::server::serve;

fn config() -> AppConfig {
    AppConfig::parse("[scenario]\nduration = 0.06\n").unwrap()
}

fn start(cfg: &AppConfig) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let pcfg = cfg.pipeline_config().unwrap();
    std::thread::spawn(move || serve(listener, pcfg, 4096));
    addr
}

fn exchange(addr: std::net::SocketAddr, input: &str) -> Vec<String> {
    let mut conn = TcpStream::connect(addr).unwrap();
    conn.write_all(input.as_bytes()).unwrap();
    conn.shutdown(Shutdown::Write).unwrap();
    BufReader::new(conn).lines().map(Result::unwrap).collect()
}

fn wire(samples: &[SampleRecord]) -> String {
    samples.iter().map(|s| format!("{},{},{}\n", num(s.timestamp), num(s.value), s.stream_id)).collect()
}

#[test]
fn one_sample_yields_one_block() {
    let addr = start(&config());
    let lines = exchange(addr, "0,0.5,feeder-1\n");
    assert_eq!(lines.len(), 100);
    assert!(lines.iter().all(|l| l.starts_with("degraded,") && l.ends_with(",feeder-1")));
}

#[test]
fn malformed_line_reports_its_number() {
    let addr = start(&config());
    let lines = exchange(addr, "0,0.5,a\n0.0002,oops,a\n");
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[100], "ERR parse 2");
    let lines = exchange(addr, "0,0.5,a\n0.0002,0.5,b\n");
    assert!(lines.last().unwrap().starts_with("ERR stream-id 2"));
}

#[test]
fn stream_output_matches_batch_run() {
    let cfg = config();
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_synth(&cfg, dir.path()).unwrap();
    let samples = read_samples(&files.measurement).unwrap();
    cmd_run(&cfg, &files.measurement, &dir.path().join("run"), None).unwrap();
    let batch: Vec<String> = std::fs::read_to_string(dir.path().join("run/reconstructed.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{},{},{},{}", f[3], f[1], f[2], f[0])
        })
        .collect();

    let addr = start(&cfg);
    let streamed = exchange(addr, &wire(&samples));
    assert_eq!(streamed.len(), batch.len());
    assert_eq!(streamed, batch);
}

#[test]
fn concurrent_connections_are_independent() {
    let cfg = config();
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_synth(&cfg, dir.path()).unwrap();
    let a = read_samples(&files.measurement).unwrap();
    let b: Vec<SampleRecord> =
        a.iter().map(|s| SampleRecord { value: -s.value, stream_id: "other".into(), ..s.clone() }).collect();
    let addr = start(&cfg);
    let alone = exchange(addr, &wire(&a));
    let (wa, wb) = (wire(&a), wire(&b));
    let ta = std::thread::spawn(move || exchange(addr, &wa));
    let tb = std::thread::spawn(move || exchange(addr, &wb));
    let (ra, rb) = (ta.join().unwrap(), tb.join().unwrap());
    assert_eq!(ra, alone);
    assert_eq!(rb.len(), alone.len());
    assert!(rb.iter().all(|l| l.ends_with(",other")));
}
