//! Classic libpcap files carrying raw ARI packets on the first user link type.

use thiserror::Error;

use super::TraceRecord;

pub const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
pub const PCAP_MAGIC_NANOS: u32 = 0xA1B2_3C4D;
pub const SNAPLEN: u32 = 65535;
/// DLT_USER0, the link type the generated Wireshark script binds to.
pub const LINKTYPE_USER0: u32 = 147;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PcapError {
    #[error("record {index} is {len} bytes, above the snap length")]
    TooLarge { index: usize, len: usize },
    #[error("record {index} timestamp does not fit in 32-bit seconds")]
    TimestampRange { index: usize },
    #[error("not a classic pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("truncated global header")]
    TruncatedHeader,
    #[error("unsupported link type {0}, expected {LINKTYPE_USER0}")]
    LinkType(u32),
    #[error("truncated record at offset {offset}")]
    TruncatedRecord { offset: usize },
}

/// Serializes records into a little-endian classic pcap file. Absent
/// timestamps are written as zero.
pub fn export_pcap(records: &[TraceRecord]) -> Result<Vec<u8>, PcapError> {
    let payload: usize = records.iter().map(|r| RECORD_HEADER_LEN + r.bytes.len()).sum();
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + payload);
    out.extend(PCAP_MAGIC.to_le_bytes());
    out.extend(2u16.to_le_bytes());
    out.extend(4u16.to_le_bytes());
    out.extend(0i32.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out.extend(SNAPLEN.to_le_bytes());
    out.extend(LINKTYPE_USER0.to_le_bytes());
    for (index, r) in records.iter().enumerate() {
        if r.bytes.len() > SNAPLEN as usize {
            return Err(PcapError::TooLarge { index, len: r.bytes.len() });
        }
        let us = r.timestamp_us.unwrap_or(0);
        let secs = u32::try_from(us / 1_000_000).map_err(|_| PcapError::TimestampRange { index })?;
        let len = r.bytes.len() as u32;
        out.extend(secs.to_le_bytes());
        out.extend(((us % 1_000_000) as u32).to_le_bytes());
        out.extend(len.to_le_bytes());
        out.extend(len.to_le_bytes());
        out.extend_from_slice(&r.bytes);
    }
    Ok(out)
}

/// Reads a classic pcap file in either byte order. Nanosecond files are
/// truncated to microseconds. A zero timestamp imports as absent.
pub fn import_pcap(data: &[u8]) -> Result<Vec<TraceRecord>, PcapError> {
    if data.len() < 4 {
        return Err(PcapError::TruncatedHeader);
    }
    let raw = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
    let (big_endian, nanos) = match raw {
        PCAP_MAGIC => (false, false),
        PCAP_MAGIC_NANOS => (false, true),
        m if m == PCAP_MAGIC.swap_bytes() => (true, false),
        m if m == PCAP_MAGIC_NANOS.swap_bytes() => (true, true),
        m => return Err(PcapError::BadMagic(m)),
    };
    let word = |at: usize| {
        let b = [data[at], data[at + 1], data[at + 2], data[at + 3]];
        if big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    };
    if data.len() < GLOBAL_HEADER_LEN {
        return Err(PcapError::TruncatedHeader);
    }
    let network = word(20);
    if network != LINKTYPE_USER0 {
        return Err(PcapError::LinkType(network));
    }

    let mut records = Vec::new();
    let mut at = GLOBAL_HEADER_LEN;
    while at < data.len() {
        if data.len() - at < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedRecord { offset: at });
        }
        let (secs, frac, incl) = (word(at) as u64, word(at + 4) as u64, word(at + 8) as usize);
        let body = at + RECORD_HEADER_LEN;
        if data.len() - body < incl {
            return Err(PcapError::TruncatedRecord { offset: at });
        }
        let us = secs * 1_000_000 + if nanos { frac / 1000 } else { frac };
        records.push(TraceRecord {
            index: records.len(),
            timestamp_us: (us != 0).then_some(us),
            direction: None,
            bytes: data[body..body + incl].to_vec(),
        });
        at = body + incl;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_export_is_global_header() {
        let bytes = export_pcap(&[]).unwrap();
        assert_eq!(hex::encode(&bytes), "d4c3b2a1020004000000000000000000ffff000093000000");
    }

    #[test]
    fn one_packet_size_and_lengths() {
        let mut r = TraceRecord::new(0, vec![0xDE, 0xC0, 0x7E, 0xAB, 0, 0, 0, 0, 0, 0, 0, 0]);
        r.timestamp_us = Some(1_600_000_000_123_456);
        let bytes = export_pcap(&[r.clone()]).unwrap();
        assert_eq!(bytes.len(), 52);
        assert_eq!(&bytes[32..36], &12u32.to_le_bytes());
        assert_eq!(&bytes[36..40], &12u32.to_le_bytes());
        assert_eq!(import_pcap(&bytes).unwrap(), vec![r]);
    }

    #[test]
    fn errors() {
        assert_eq!(import_pcap(b"\0\0\0\0"), Err(PcapError::BadMagic(0)));
        let mut bytes = export_pcap(&[TraceRecord::new(0, vec![1, 2, 3])]).unwrap();
        bytes.pop();
        assert_eq!(import_pcap(&bytes), Err(PcapError::TruncatedRecord { offset: 24 }));
        assert!(matches!(export_pcap(&[TraceRecord::new(0, vec![0; 70000])]), Err(PcapError::TooLarge { .. })));
    }
}
