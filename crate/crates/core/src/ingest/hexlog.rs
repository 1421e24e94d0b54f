use std::fmt::Write as _;

use super::{Direction, TraceRecord};

const MAGIC_HEX: &[u8] = b"dec07eab";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HexLogReport {
    pub records: Vec<TraceRecord>,
    /// Lines without a hex run containing the magic.
    pub skipped: usize,
    /// 1-based line numbers whose packet had an odd nibble count.
    pub odd_lines: Vec<usize>,
}

/// A run of hex digits, possibly interrupted by single whitespace gaps.
struct Run {
    start: usize,
    nibbles: Vec<u8>,
}

fn hex_runs(line: &str) -> Vec<Run> {
    let bytes = line.as_bytes();
    let mut runs = Vec::new();
    let mut current: Option<Run> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_hexdigit() {
            current.get_or_insert_with(|| Run { start: i, nibbles: Vec::new() }).nibbles.push(b.to_ascii_lowercase());
        } else if b.is_ascii_whitespace() && current.is_some() {
            let next = bytes[i..].iter().position(|c| !c.is_ascii_whitespace()).map(|p| bytes[i + p]);
            if !next.is_some_and(|c| c.is_ascii_hexdigit()) {
                runs.extend(current.take());
            }
        } else {
            runs.extend(current.take());
        }
        i += 1;
    }
    runs.extend(current);
    runs
}

fn direction(prefix: &str) -> Option<Direction> {
    let lower = prefix.to_ascii_lowercase();
    match (lower.contains("rx"), lower.contains("tx")) {
        (true, false) => Some(Direction::ChipToHost),
        (false, true) => Some(Direction::HostToChip),
        _ => None,
    }
}

fn nibble(c: u8) -> u8 {
    match c {
        b'0'..=b'9' => c - b'0',
        _ => c - b'a' + 10,
    }
}

/// Extracts ARI packets from system-log text. Each line contributes at most
/// one record: the longest hex run containing the magic, cut at the magic
/// (which may sit at any nibble position).
pub fn parse_hex_log(text: &str) -> HexLogReport {
    let mut report = HexLogReport::default();
    for (lineno, line) in text.lines().enumerate() {
        let best = hex_runs(line)
            .into_iter()
            .filter_map(|run| {
                let at = run.nibbles.windows(MAGIC_HEX.len()).position(|w| w == MAGIC_HEX)?;
                Some((run, at))
            })
            .max_by(|(a, _), (b, _)| a.nibbles.len().cmp(&b.nibbles.len()).then(b.start.cmp(&a.start)));
        let Some((run, at)) = best else {
            report.skipped += 1;
            continue;
        };
        let mut nibbles = &run.nibbles[at..];
        if nibbles.len() % 2 == 1 {
            nibbles = &nibbles[..nibbles.len() - 1];
            report.odd_lines.push(lineno + 1);
        }
        let bytes = nibbles.chunks(2).map(|p| (nibble(p[0]) << 4) | nibble(p[1])).collect();
        report.records.push(TraceRecord {
            index: report.records.len(),
            timestamp_us: None,
            direction: direction(&line[..run.start]),
            bytes,
        });
    }
    report
}

/// Renders records as one `ari rx:`/`ari tx:`/`ari:` line each.
pub fn write_hex_log(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let tag = match r.direction {
            Some(Direction::ChipToHost) => "ari rx",
            Some(Direction::HostToChip) => "ari tx",
            None => "ari",
        };
        let _ = writeln!(out, "{tag}: {}", hex::encode(&r.bytes));
    }
    out
}
