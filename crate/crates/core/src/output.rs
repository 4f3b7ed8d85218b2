//! Result serialization: TXT, CSV and JSON Lines with selectable fields.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::IpAddr;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine as _;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("unknown output field `{name}` (valid fields: {})", FIELDS.join(", "))]
    UnknownField { name: String },
    #[error("unknown output format `{0}` (expected txt, csv or jsonl)")]
    UnknownFormat(String),
    #[error("cannot open `{path}`: {source}")]
    Open { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Txt,
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = OutputError;

    fn from_str(s: &str) -> Result<Self, OutputError> {
        match s.to_ascii_lowercase().as_str() {
            "txt" | "text" => Ok(Format::Txt),
            "csv" => Ok(Format::Csv),
            "jsonl" | "json" | "ndjson" => Ok(Format::Jsonl),
            _ => Err(OutputError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Txt => "txt",
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

/// One classified reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplyRecord {
    /// Source of the reply.
    pub saddr: IpAddr,
    /// Destination of the reply (the scanner).
    pub daddr: IpAddr,
    /// Destination of the probe that caused the reply; differs from `saddr`
    /// for ICMP errors sent by routers.
    pub target: Option<IpAddr>,
    pub sport: Option<u16>,
    pub dport: Option<u16>,
    /// Outcome class, or the reject reason for records written because of
    /// `--output-all`.
    pub outcome: String,
    pub probe: &'static str,
    pub success: bool,
    pub validated: bool,
    pub repeat: bool,
    pub ttl: Option<u8>,
    pub rtt: Option<Duration>,
    pub detail: Option<String>,
    pub payload: Vec<u8>,
    /// Receive time relative to scan start.
    pub timestamp: Duration,
}

/// Field registry, in default CSV order.
pub const FIELDS: [&str; 15] = [
    "saddr",
    "daddr",
    "target",
    "sport",
    "dport",
    "outcome",
    "probe",
    "success",
    "validated",
    "repeat",
    "ttl",
    "rtt",
    "detail",
    "payload",
    "timestamp",
];

const DEFAULT_STRUCTURED: [&str; 9] = [
    "saddr", "daddr", "sport", "dport", "outcome", "probe", "success", "ttl", "timestamp",
];

/// Validates a comma-separated field selection.
pub fn parse_fields(list: &str) -> Result<Vec<String>, OutputError> {
    let fields: Vec<String> = list
        .split(',')
        .map(|f| f.trim().to_string())
        .filter(|f| !f.is_empty())
        .collect();
    for f in &fields {
        if !FIELDS.contains(&f.as_str()) {
            return Err(OutputError::UnknownField { name: f.clone() });
        }
    }
    Ok(fields)
}

pub fn default_fields(format: Format) -> Vec<String> {
    match format {
        Format::Txt => vec!["saddr".into()],
        _ => DEFAULT_STRUCTURED.iter().map(|s| s.to_string()).collect(),
    }
}

enum Value {
    Text(String),
    Int(u64),
    Float(f64),
    Bool(bool),
    Bytes(Vec<u8>),
    Null,
}

impl ReplyRecord {
    fn value(&self, field: &str) -> Value {
        let opt_ip = |a: Option<IpAddr>| a.map_or(Value::Null, |a| Value::Text(a.to_string()));
        let opt_int = |v: Option<u64>| v.map_or(Value::Null, Value::Int);
        match field {
            "saddr" => Value::Text(self.saddr.to_string()),
            "daddr" => Value::Text(self.daddr.to_string()),
            "target" => opt_ip(self.target),
            "sport" => opt_int(self.sport.map(u64::from)),
            "dport" => opt_int(self.dport.map(u64::from)),
            "outcome" => Value::Text(self.outcome.clone()),
            "probe" => Value::Text(self.probe.to_string()),
            "success" => Value::Bool(self.success),
            "validated" => Value::Bool(self.validated),
            "repeat" => Value::Bool(self.repeat),
            "ttl" => opt_int(self.ttl.map(u64::from)),
            "rtt" => self
                .rtt
                .map_or(Value::Null, |d| Value::Float(d.as_secs_f64() * 1000.0)),
            "detail" => self.detail.clone().map_or(Value::Null, Value::Text),
            "payload" => Value::Bytes(self.payload.clone()),
            "timestamp" => Value::Float(self.timestamp.as_secs_f64()),
            other => unreachable!("field `{other}` passed validation"),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    use fmt::Write as _;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Value {
    fn to_text(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format!("{v:.6}"),
            Value::Bool(b) => u8::from(*b).to_string(),
            Value::Bytes(b) => hex(b),
            Value::Null => String::new(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Text(s) => J::String(s.clone()),
            Value::Int(v) => J::from(*v),
            Value::Float(v) => J::from(*v),
            Value::Bool(b) => J::Bool(*b),
            Value::Bytes(b) => J::String(base64::engine::general_purpose::STANDARD.encode(b)),
            Value::Null => J::Null,
        }
    }
}

/// Destination for results and, in dry-run mode, built frames.
pub trait ResultSink: Send {
    fn write_record(&mut self, record: &ReplyRecord) -> io::Result<()>;
    /// Dry-run output: one built frame.
    fn write_frame(&mut self, frame: &[u8]) -> io::Result<()>;
    /// Flushes and returns the number of rows written (header excluded).
    fn finish(&mut self) -> io::Result<u64>;
}

enum Encoder<W: Write> {
    Txt(W),
    Csv(Box<csv::Writer<W>>),
    Jsonl(W),
}

/// Formatting sink over any writer.
pub struct FormatSink<W: Write + Send> {
    encoder: Encoder<W>,
    fields: Vec<String>,
    rows: u64,
    header_pending: bool,
}

impl<W: Write + Send> FormatSink<W> {
    /// `fields` must come from [`parse_fields`] or [`default_fields`].
    pub fn new(writer: W, format: Format, fields: Vec<String>) -> Self {
        let encoder = match format {
            Format::Txt => Encoder::Txt(writer),
            Format::Csv => Encoder::Csv(Box::new(csv::WriterBuilder::new().from_writer(writer))),
            Format::Jsonl => Encoder::Jsonl(writer),
        };
        FormatSink {
            encoder,
            fields,
            rows: 0,
            header_pending: format == Format::Csv,
        }
    }

    fn header(&mut self) -> io::Result<()> {
        if std::mem::take(&mut self.header_pending) {
            if let Encoder::Csv(w) = &mut self.encoder {
                w.write_record(&self.fields)?;
            }
        }
        Ok(())
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.header()?;
        match self.encoder {
            Encoder::Txt(w) | Encoder::Jsonl(w) => Ok(w),
            Encoder::Csv(w) => (*w).into_inner().map_err(|e| e.into_error()),
        }
    }
}

impl<W: Write + Send> ResultSink for FormatSink<W> {
    fn write_record(&mut self, record: &ReplyRecord) -> io::Result<()> {
        self.header()?;
        let values = self.fields.iter().map(|f| record.value(f));
        match &mut self.encoder {
            Encoder::Txt(w) => {
                let line: Vec<String> = values.map(|v| v.to_text()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            Encoder::Csv(w) => {
                let row: Vec<String> = values.map(|v| v.to_text()).collect();
                w.write_record(&row)?;
            }
            Encoder::Jsonl(w) => {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .fields
                    .iter()
                    .cloned()
                    .zip(values.map(|v| v.to_json()))
                    .collect();
                serde_json::to_writer(&mut *w, &obj)?;
                w.write_all(b"\n")?;
            }
        }
        self.rows += 1;
        Ok(())
    }

    fn write_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        let line = hex(frame);
        match &mut self.encoder {
            Encoder::Txt(w) => writeln!(w, "{line}")?,
            Encoder::Csv(w) => w.write_record([line])?,
            Encoder::Jsonl(w) => writeln!(w, "{}", serde_json::json!({ "frame": line }))?,
        }
        self.rows += 1;
        Ok(())
    }

    fn finish(&mut self) -> io::Result<u64> {
        self.header()?;
        match &mut self.encoder {
            Encoder::Txt(w) | Encoder::Jsonl(w) => w.flush()?,
            Encoder::Csv(w) => w.flush()?,
        }
        Ok(self.rows)
    }
}

/// Opens a sink on `path` (`-` for stdout).
pub fn open_sink(
    format: Format,
    fields: Option<Vec<String>>,
    path: &str,
) -> Result<Box<dyn ResultSink>, OutputError> {
    let fields = fields.unwrap_or_else(|| default_fields(format));
    for f in &fields {
        if !FIELDS.contains(&f.as_str()) {
            return Err(OutputError::UnknownField { name: f.clone() });
        }
    }
    if path == "-" {
        return Ok(Box::new(FormatSink::new(BufWriter::new(io::stdout()), format, fields)));
    }
    let file = File::create(path).map_err(|source| OutputError::Open {
        path: path.to_string(),
        source,
    })?;
    Ok(Box::new(FormatSink::new(BufWriter::new(file), format, fields)))
}

/// Discards everything but counts rows.
#[derive(Debug, Default)]
pub struct NullSink {
    rows: u64,
}

impl ResultSink for NullSink {
    fn write_record(&mut self, _: &ReplyRecord) -> io::Result<()> {
        self.rows += 1;
        Ok(())
    }

    fn write_frame(&mut self, _: &[u8]) -> io::Result<()> {
        self.rows += 1;
        Ok(())
    }

    fn finish(&mut self) -> io::Result<u64> {
        Ok(self.rows)
    }
}

/// Keeps records and frames in memory; clones share the same storage.
#[derive(Clone, Debug, Default)]
pub struct CollectSink {
    inner: Arc<Mutex<Collected>>,
}

#[derive(Debug, Default)]
pub struct Collected {
    pub records: Vec<ReplyRecord>,
    pub frames: Vec<Vec<u8>>,
}

impl CollectSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<ReplyRecord> {
        self.inner.lock().unwrap().records.clone()
    }

    pub fn frames(&self) -> Vec<Vec<u8>> {
        self.inner.lock().unwrap().frames.clone()
    }
}

impl ResultSink for CollectSink {
    fn write_record(&mut self, record: &ReplyRecord) -> io::Result<()> {
        self.inner.lock().unwrap().records.push(record.clone());
        Ok(())
    }

    fn write_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        self.inner.lock().unwrap().frames.push(frame.to_vec());
        Ok(())
    }

    fn finish(&mut self) -> io::Result<u64> {
        let c = self.inner.lock().unwrap();
        Ok((c.records.len() + c.frames.len()) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u8) -> ReplyRecord {
        ReplyRecord {
            saddr: format!("192.0.2.{i}").parse().unwrap(),
            daddr: "198.51.100.1".parse().unwrap(),
            target: None,
            sport: Some(80),
            dport: Some(40000),
            outcome: "synack".into(),
            probe: "tcp_syn",
            success: true,
            validated: true,
            repeat: false,
            ttl: Some(57),
            rtt: None,
            detail: Some("a,\"b\"".into()),
            payload: vec![0xde, 0xad],
            timestamp: Duration::from_millis(1500),
        }
    }

    fn fields(s: &str) -> Vec<String> {
        parse_fields(s).unwrap()
    }

    #[test]
    fn csv_header_then_rows() {
        let mut sink = FormatSink::new(Vec::new(), Format::Csv, fields("saddr,outcome"));
        sink.write_record(&record(1)).unwrap();
        sink.write_record(&record(2)).unwrap();
        assert_eq!(sink.finish().unwrap(), 2);
        let out = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        assert_eq!(out, "saddr,outcome\n192.0.2.1,synack\n192.0.2.2,synack\n");
    }

    #[test]
    fn csv_empty_has_header_only() {
        let mut sink = FormatSink::new(Vec::new(), Format::Csv, default_fields(Format::Csv));
        assert_eq!(sink.finish().unwrap(), 0);
        let out = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        assert_eq!(out.lines().count(), 1);
    }

    #[test]
    fn csv_escaping_round_trips() {
        let mut sink = FormatSink::new(Vec::new(), Format::Csv, fields("detail,payload"));
        sink.write_record(&record(1)).unwrap();
        let out = sink.into_inner().unwrap();
        let mut reader = csv::Reader::from_reader(out.as_slice());
        let row = reader.records().next().unwrap().unwrap();
        assert_eq!(&row[0], "a,\"b\"");
        assert_eq!(&row[1], "dead");
    }

    #[test]
    fn txt_is_address_per_line() {
        let mut sink = FormatSink::new(Vec::new(), Format::Txt, default_fields(Format::Txt));
        sink.write_record(&record(7)).unwrap();
        assert_eq!(sink.into_inner().unwrap(), b"192.0.2.7\n");
    }

    #[test]
    fn jsonl_lines_are_objects() {
        let mut sink = FormatSink::new(Vec::new(), Format::Jsonl, fields("saddr,payload,rtt,ttl"));
        sink.write_record(&record(3)).unwrap();
        sink.write_record(&record(4)).unwrap();
        let out = String::from_utf8(sink.into_inner().unwrap()).unwrap();
        for line in out.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["payload"], "3q0=");
            assert!(v["rtt"].is_null());
            assert_eq!(v["ttl"], 57);
        }
        assert_eq!(out.lines().count(), 2);
    }

    #[test]
    fn unknown_field_lists_valid_ones() {
        let err = parse_fields("saddr,bogus").unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("outcome"));
        assert!("xml".parse::<Format>().is_err());
    }
}
