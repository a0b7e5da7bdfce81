//! Local stand-in for the forecast endpoint, for offline demos and tests.
//!
//! Serves deterministic synthetic values for any coordinate, variable list
//! and date range in the same JSON shape as the upstream API. Cells listed in
//! `null_cells` are returned as `null`; the first `fail_first` requests get
//! HTTP 503.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::{NaiveDate, TimeDelta};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Default)]
pub struct FixtureConfig {
    /// `(variable, hour index from start_date)` cells served as `null`.
    pub null_cells: Vec<(String, usize)>,
    pub fail_first: usize,
    /// Answer every request with HTTP 503.
    pub always_fail: bool,
}

pub struct FixtureServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start(config: FixtureConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (req, st) = (requests.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if st.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let n = req.fetch_add(1, Ordering::SeqCst);
                let _ = serve(stream, &config, n);
            }
        });
        Ok(Self {
            addr,
            requests,
            stop,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/forecast", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' if i + 2 < bytes.len() => {
                let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).ok();
                match hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                    Some(b) => {
                        out.push(b);
                        i += 2;
                    }
                    None => out.push(b'%'),
                }
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn respond(mut stream: TcpStream, status: &str, body: &str) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

/// Smooth, coordinate-dependent synthetic value.
pub fn synthetic_value(variable: &str, lat: f64, lon: f64, hour_index: usize) -> f64 {
    let seed = variable.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let base = (seed % 97) as f64;
    let amp = 1.0 + (seed % 13) as f64;
    let phase = (seed % 24) as f64;
    let t = hour_index as f64;
    let v = base + amp * (std::f64::consts::TAU * (t + phase) / 24.0).sin() + 0.3 * (t / 37.0).cos() + 0.05 * lat - 0.02 * lon;
    (v * 100.0).round() / 100.0
}

fn serve(stream: TcpStream, config: &FixtureConfig, n: usize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    if config.always_fail || n < config.fail_first {
        return respond(stream, "503 Service Unavailable", r#"{"error":true,"reason":"overloaded"}"#);
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("/");
    let query = target.split_once('?').map(|(_, q)| q).unwrap_or("");
    let params: BTreeMap<String, String> = query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (percent_decode(k), percent_decode(v)))
        .collect();
    let bad = |reason: &str| json!({"error": true, "reason": reason}).to_string();
    let (Some(lat), Some(lon)) = (
        params.get("latitude").and_then(|v| v.parse::<f64>().ok()),
        params.get("longitude").and_then(|v| v.parse::<f64>().ok()),
    ) else {
        return respond(stream, "400 Bad Request", &bad("latitude and longitude required"));
    };
    let dates = (
        params.get("start_date").and_then(|v| NaiveDate::parse_from_str(v, "%Y-%m-%d").ok()),
        params.get("end_date").and_then(|v| NaiveDate::parse_from_str(v, "%Y-%m-%d").ok()),
    );
    let (Some(start), Some(end)) = dates else {
        return respond(stream, "400 Bad Request", &bad("start_date and end_date required"));
    };
    if params.get("timezone").map(String::as_str) != Some("UTC") {
        return respond(stream, "400 Bad Request", &bad("timezone must be UTC"));
    }
    let variables: Vec<&str> = params.get("hourly").map(|v| v.split(',').collect()).unwrap_or_default();
    let hours = ((end - start).num_days() + 1).max(0) as usize * 24;
    let t0 = start.and_hms_opt(0, 0, 0).expect("midnight");
    let times: Vec<Value> = (0..hours)
        .map(|h| Value::String((t0 + TimeDelta::hours(h as i64)).format("%Y-%m-%dT%H:%M").to_string()))
        .collect();
    let mut hourly = Map::new();
    hourly.insert("time".into(), Value::Array(times));
    for var in &variables {
        let values: Vec<Value> = (0..hours)
            .map(|h| {
                if config.null_cells.iter().any(|(v, k)| v == var && *k == h) {
                    Value::Null
                } else {
                    json!(synthetic_value(var, lat, lon, h))
                }
            })
            .collect();
        hourly.insert(var.to_string(), Value::Array(values));
    }
    let body = json!({
        "latitude": lat,
        "longitude": lon,
        "timezone": "UTC",
        "hourly": Value::Object(hourly),
    });
    respond(stream, "200 OK", &body.to_string())
}
