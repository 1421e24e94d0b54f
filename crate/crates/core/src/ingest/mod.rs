//! Trace ingestion: hex system logs, classic pcap and raw corpus directories.

mod corpus;
mod hexlog;
mod pcap;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{scan_stream, ParseMode};

pub use corpus::{read_corpus_dir, write_corpus_dir};
pub use hexlog::{parse_hex_log, write_hex_log, HexLogReport};
pub use pcap::{export_pcap, import_pcap, PcapError, LINKTYPE_USER0, PCAP_MAGIC, PCAP_MAGIC_NANOS, SNAPLEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Baseband to host ("rx" in logs).
    ChipToHost,
    /// Host to baseband ("tx" in logs).
    HostToChip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    /// Microseconds since the Unix epoch.
    pub timestamp_us: Option<u64>,
    pub direction: Option<Direction>,
    #[serde(with = "hex::serde")]
    pub bytes: Vec<u8>,
}

impl TraceRecord {
    pub fn new(index: usize, bytes: Vec<u8>) -> Self {
        TraceRecord { index, timestamp_us: None, direction: None, bytes }
    }
}

/// Builds records from raw packets, numbering them in order.
pub fn records_from_packets<I: IntoIterator<Item = Vec<u8>>>(packets: I) -> Vec<TraceRecord> {
    packets.into_iter().enumerate().map(|(i, b)| TraceRecord::new(i, b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Hex,
    Pcap,
    /// Directory with one raw packet per file.
    Dir,
    /// Concatenated packets in one binary file.
    Raw,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Pcap { path: PathBuf, source: PcapError },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

/// Picks a format from the path and its content: directories are corpora,
/// pcap magic (either byte order) means pcap, UTF-8 text means hex log and
/// anything else is a raw packet stream.
pub fn detect_format(path: &Path, head: &[u8]) -> TraceFormat {
    if path.is_dir() {
        return TraceFormat::Dir;
    }
    if head.len() >= 4 {
        let magic = u32::from_le_bytes([head[0], head[1], head[2], head[3]]);
        if [PCAP_MAGIC, PCAP_MAGIC_NANOS, PCAP_MAGIC.swap_bytes(), PCAP_MAGIC_NANOS.swap_bytes()].contains(&magic) {
            return TraceFormat::Pcap;
        }
    }
    if std::str::from_utf8(head).is_ok() {
        TraceFormat::Hex
    } else {
        TraceFormat::Raw
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedTrace {
    pub format: TraceFormat,
    pub records: Vec<TraceRecord>,
    /// Hex-log lines, or raw-stream bytes, that yielded no packet.
    pub skipped: usize,
}

/// Reads a trace from disk, auto-detecting the format unless one is given.
pub fn load_trace(path: &Path, format: Option<TraceFormat>) -> Result<LoadedTrace, IngestError> {
    if format == Some(TraceFormat::Dir) || (format.is_none() && path.is_dir()) {
        let records = read_corpus_dir(path)?;
        return Ok(LoadedTrace { format: TraceFormat::Dir, records, skipped: 0 });
    }
    let data = fs::read(path).map_err(io_err(path))?;
    let format = format.unwrap_or_else(|| detect_format(path, &data));
    let (records, skipped) = match format {
        TraceFormat::Pcap => {
            let records = import_pcap(&data).map_err(|source| IngestError::Pcap { path: path.to_path_buf(), source })?;
            (records, 0)
        }
        TraceFormat::Hex => {
            let report = parse_hex_log(&String::from_utf8_lossy(&data));
            (report.records, report.skipped)
        }
        TraceFormat::Raw => {
            let packets: Vec<Vec<u8>> = scan_stream(&data, ParseMode::Lenient)
                .iter()
                .filter(|e| e.packet().is_some())
                .map(|e| data[e.offset..e.offset + e.consumed()].to_vec())
                .collect();
            let skipped = data.len() - packets.iter().map(Vec::len).sum::<usize>();
            (records_from_packets(packets), skipped)
        }
        TraceFormat::Dir => unreachable!("handled above"),
    };
    Ok(LoadedTrace { format, records, skipped })
}

/// Writes records in the format implied by the path: `.pcap` is pcap,
/// `.log`, `.txt` and `.hex` are hex logs, anything else is a corpus directory.
pub fn save_trace(path: &Path, records: &[TraceRecord]) -> Result<TraceFormat, IngestError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pcap") => {
            let bytes = export_pcap(records).map_err(|source| IngestError::Pcap { path: path.to_path_buf(), source })?;
            fs::write(path, bytes).map_err(io_err(path))?;
            Ok(TraceFormat::Pcap)
        }
        Some("log" | "txt" | "hex") => {
            fs::write(path, write_hex_log(records)).map_err(io_err(path))?;
            Ok(TraceFormat::Hex)
        }
        _ => {
            write_corpus_dir(path, records)?;
            Ok(TraceFormat::Dir)
        }
    }
}
