//! ARI header and TLV wire format.
//!
//! The 12-byte header is two 48-bit rows. Several fields are split across
//! non-adjacent bit chunks; each chunk's position is listed in [`layout`] and
//! the chunks are composed into plain integers on parse. Reserved and
//! trailer bits are kept verbatim so that serializing a parsed packet gives
//! back the original bytes.
//!
//! TLVs follow the header back to back: a 4-byte TLV header carrying a split
//! 12-bit type, a 3-bit version and a split 14-bit length, then the value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{extract_bits, insert_bits, BitError, BitSpan};

/// On-wire packet start marker.
pub const MAGIC: [u8; 4] = [0xDE, 0xC0, 0x7E, 0xAB];
pub const HEADER_LEN: usize = 12;
pub const TLV_HEADER_LEN: usize = 4;

pub const MAX_GROUP: u8 = 63;
pub const MAX_SEQUENCE: u16 = 2047;
pub const MAX_PAYLOAD_LEN: u16 = 32767;
pub const MAX_MESSAGE_TYPE: u16 = 1023;
pub const MAX_TLV_TYPE: u16 = 4095;
pub const MAX_TLV_VERSION: u8 = 7;
pub const MAX_TLV_LEN: usize = 16383;

/// Bit positions of every header and TLV chunk.
pub mod layout {
    use crate::bits::BitSpan;

    const ROW1: usize = 48;

    pub const MAGIC: BitSpan = BitSpan::at_bit(0, 32);
    pub const GROUP_LO: BitSpan = BitSpan::at_bit(32, 5);
    pub const RESERVED_A: BitSpan = BitSpan::at_bit(37, 3);
    pub const SEQ_LO: BitSpan = BitSpan::at_bit(40, 7);
    pub const GROUP_HI: BitSpan = BitSpan::at_bit(47, 1);
    pub const LEN_LO: BitSpan = BitSpan::at_bit(ROW1, 7);
    pub const SEQ_MID: BitSpan = BitSpan::at_bit(ROW1 + 7, 1);
    pub const LEN_HI: BitSpan = BitSpan::at_bit(ROW1 + 8, 8);
    pub const TYPE_HI: BitSpan = BitSpan::at_bit(ROW1 + 16, 2);
    pub const RESERVED_B: BitSpan = BitSpan::at_bit(ROW1 + 18, 3);
    pub const SEQ_HI: BitSpan = BitSpan::at_bit(ROW1 + 21, 3);
    pub const TYPE_LO: BitSpan = BitSpan::at_bit(ROW1 + 24, 8);
    pub const TRAILER: BitSpan = BitSpan::at_bit(ROW1 + 32, 16);

    /// TLV chunks, relative to the start of the TLV.
    pub const TLV_TYPE_LO: BitSpan = BitSpan::at_bit(0, 7);
    pub const TLV_RESERVED_A: BitSpan = BitSpan::at_bit(7, 1);
    pub const TLV_VERSION: BitSpan = BitSpan::at_bit(8, 3);
    pub const TLV_TYPE_HI: BitSpan = BitSpan::at_bit(11, 5);
    pub const TLV_LEN_LO: BitSpan = BitSpan::at_bit(16, 6);
    pub const TLV_RESERVED_B: BitSpan = BitSpan::at_bit(22, 2);
    pub const TLV_LEN_HI: BitSpan = BitSpan::at_bit(24, 8);

    /// Header chunks per composite field, low-order chunk first.
    pub const GROUP: &[BitSpan] = &[GROUP_LO, GROUP_HI];
    pub const SEQUENCE: &[BitSpan] = &[SEQ_LO, SEQ_MID, SEQ_HI];
    pub const LENGTH: &[BitSpan] = &[LEN_LO, LEN_HI];
    pub const MESSAGE_TYPE: &[BitSpan] = &[TYPE_LO, TYPE_HI];
    pub const TLV_TYPE: &[BitSpan] = &[TLV_TYPE_LO, TLV_TYPE_HI];
    pub const TLV_LENGTH: &[BitSpan] = &[TLV_LEN_LO, TLV_LEN_HI];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("bad magic {found:02x?}, expected de c0 7e ab")]
    BadMagic { found: Vec<u8> },
    #[error("header must be exactly {HEADER_LEN} bytes, got {actual}")]
    HeaderLength { actual: usize },
    #[error("truncated packet: header declares {declared} bytes in total, {available} available")]
    Truncated { declared: usize, available: usize },
    #[error("malformed TLV at byte offset {offset}")]
    TlvBounds { offset: usize },
    #[error("{field} value {value} exceeds its {bits}-bit field")]
    FieldRange { field: &'static str, value: u64, bits: u32 },
    #[error("header length {declared} does not match payload size {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error(transparent)]
    Bits(#[from] BitError),
}

/// Reads a composite field from its chunks, low-order chunk first.
pub fn read_composite(bytes: &[u8], chunks: &[BitSpan]) -> Result<u64, BitError> {
    let mut value = 0u64;
    let mut shift = 0u32;
    for span in chunks {
        value |= extract_bits(bytes, *span)? << shift;
        shift += span.bit_length;
    }
    Ok(value)
}

/// Inverse of [`read_composite`].
pub fn write_composite(bytes: &mut [u8], chunks: &[BitSpan], value: u64) -> Result<(), BitError> {
    let mut rest = value;
    for span in chunks {
        insert_bits(bytes, *span, rest & span.mask())?;
        rest >>= span.bit_length;
    }
    if rest != 0 {
        let bits = chunks.iter().map(|s| s.bit_length).sum();
        return Err(BitError::ValueTooWide { value, bit_length: bits });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AriHeader {
    pub group: u8,
    pub sequence: u16,
    /// Payload bytes following the header.
    pub length: u16,
    pub message_type: u16,
    pub reserved_a: u8,
    pub reserved_b: u8,
    pub trailer: u16,
}

impl AriHeader {
    pub fn new(group: u8, message_type: u16) -> Self {
        AriHeader { group, message_type, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let checks: [(&'static str, u64, u32); 6] = [
            ("group", self.group as u64, 6),
            ("sequence", self.sequence as u64, 11),
            ("length", self.length as u64, 15),
            ("message_type", self.message_type as u64, 10),
            ("reserved_a", self.reserved_a as u64, 3),
            ("reserved_b", self.reserved_b as u64, 3),
        ];
        for (field, value, bits) in checks {
            if value >> bits != 0 {
                return Err(CodecError::FieldRange { field, value, bits });
            }
        }
        Ok(())
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<AriHeader, CodecError> {
    if bytes.len() != HEADER_LEN {
        return Err(CodecError::HeaderLength { actual: bytes.len() });
    }
    if bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic { found: bytes[..4].to_vec() });
    }
    Ok(AriHeader {
        group: read_composite(bytes, layout::GROUP)? as u8,
        sequence: read_composite(bytes, layout::SEQUENCE)? as u16,
        length: read_composite(bytes, layout::LENGTH)? as u16,
        message_type: read_composite(bytes, layout::MESSAGE_TYPE)? as u16,
        reserved_a: extract_bits(bytes, layout::RESERVED_A)? as u8,
        reserved_b: extract_bits(bytes, layout::RESERVED_B)? as u8,
        trailer: extract_bits(bytes, layout::TRAILER)? as u16,
    })
}

pub fn serialize_header(header: &AriHeader) -> Result<[u8; HEADER_LEN], CodecError> {
    header.validate()?;
    let mut out = [0u8; HEADER_LEN];
    out[..4].copy_from_slice(&MAGIC);
    write_composite(&mut out, layout::GROUP, header.group as u64)?;
    write_composite(&mut out, layout::SEQUENCE, header.sequence as u64)?;
    write_composite(&mut out, layout::LENGTH, header.length as u64)?;
    write_composite(&mut out, layout::MESSAGE_TYPE, header.message_type as u64)?;
    insert_bits(&mut out, layout::RESERVED_A, header.reserved_a as u64)?;
    insert_bits(&mut out, layout::RESERVED_B, header.reserved_b as u64)?;
    insert_bits(&mut out, layout::TRAILER, header.trailer as u64)?;
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tlv {
    pub type_id: u16,
    pub version: u8,
    /// Bit 7 of the TLV header.
    pub reserved_a: u8,
    /// Bits 22-23 of the TLV header.
    pub reserved_b: u8,
    #[serde(with = "hex::serde")]
    pub value: Vec<u8>,
}

impl Tlv {
    pub fn new(type_id: u16, version: u8, value: Vec<u8>) -> Self {
        Tlv { type_id, version, value, ..Default::default() }
    }

    pub fn encoded_len(&self) -> usize {
        TLV_HEADER_LEN + self.value.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<(), CodecError> {
        let checks: [(&'static str, u64, u32); 5] = [
            ("tlv type_id", self.type_id as u64, 12),
            ("tlv version", self.version as u64, 3),
            ("tlv reserved_a", self.reserved_a as u64, 1),
            ("tlv reserved_b", self.reserved_b as u64, 2),
            ("tlv length", self.value.len() as u64, 14),
        ];
        for (field, value, bits) in checks {
            if value >> bits != 0 {
                return Err(CodecError::FieldRange { field, value, bits });
            }
        }
        let mut head = [0u8; TLV_HEADER_LEN];
        write_composite(&mut head, layout::TLV_TYPE, self.type_id as u64)?;
        write_composite(&mut head, layout::TLV_LENGTH, self.value.len() as u64)?;
        insert_bits(&mut head, layout::TLV_VERSION, self.version as u64)?;
        insert_bits(&mut head, layout::TLV_RESERVED_A, self.reserved_a as u64)?;
        insert_bits(&mut head, layout::TLV_RESERVED_B, self.reserved_b as u64)?;
        out.extend_from_slice(&head);
        out.extend_from_slice(&self.value);
        Ok(())
    }
}

/// Decoded fields of a 4-byte TLV header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TlvHeader {
    pub type_id: u16,
    pub version: u8,
    pub length: usize,
    pub reserved_a: u8,
    pub reserved_b: u8,
}

/// Decodes the TLV header at the start of `bytes` (at least 4 bytes).
pub fn parse_tlv_header(bytes: &[u8]) -> Result<TlvHeader, BitError> {
    Ok(TlvHeader {
        type_id: read_composite(bytes, layout::TLV_TYPE)? as u16,
        version: extract_bits(bytes, layout::TLV_VERSION)? as u8,
        length: read_composite(bytes, layout::TLV_LENGTH)? as usize,
        reserved_a: extract_bits(bytes, layout::TLV_RESERVED_A)? as u8,
        reserved_b: extract_bits(bytes, layout::TLV_RESERVED_B)? as u8,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Undecodable payload tails become [`AriPacket::residue`].
    #[default]
    Lenient,
    /// Undecodable payload tails are an error.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LengthPolicy {
    /// Fail if `header.length` disagrees with the payload.
    #[default]
    Verify,
    /// Overwrite `header.length` with the payload size.
    Recompute,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AriPacket {
    pub header: AriHeader,
    pub tlvs: Vec<Tlv>,
    #[serde(with = "hex::serde")]
    pub residue: Vec<u8>,
}

impl AriPacket {
    pub fn new(header: AriHeader, tlvs: Vec<Tlv>) -> Self {
        AriPacket { header, tlvs, residue: Vec::new() }
    }

    pub fn payload_len(&self) -> usize {
        self.tlvs.iter().map(Tlv::encoded_len).sum::<usize>() + self.residue.len()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.header.length as usize
    }

    /// Byte offset of every TLV from the packet start.
    pub fn tlv_offsets(&self) -> Vec<usize> {
        self.tlvs
            .iter()
            .scan(HEADER_LEN, |at, tlv| {
                let start = *at;
                *at += tlv.encoded_len();
                Some(start)
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CodecError> {
        serialize_packet(self, LengthPolicy::Verify)
    }
}

/// Parses one packet from the front of `bytes`. Bytes beyond the declared
/// packet length are ignored.
pub fn parse_packet(bytes: &[u8], mode: ParseMode) -> Result<AriPacket, CodecError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(CodecError::BadMagic { found: bytes[..4].to_vec() });
        }
        return Err(CodecError::Truncated { declared: HEADER_LEN, available: bytes.len() });
    }
    let header = parse_header(&bytes[..HEADER_LEN])?;
    let total = HEADER_LEN + header.length as usize;
    if bytes.len() < total {
        return Err(CodecError::Truncated { declared: total, available: bytes.len() });
    }

    let mut tlvs = Vec::new();
    let mut at = HEADER_LEN;
    while total - at >= TLV_HEADER_LEN {
        let th = parse_tlv_header(&bytes[at..total])?;
        let end = at + TLV_HEADER_LEN + th.length;
        if end > total {
            break;
        }
        tlvs.push(Tlv {
            type_id: th.type_id,
            version: th.version,
            reserved_a: th.reserved_a,
            reserved_b: th.reserved_b,
            value: bytes[at + TLV_HEADER_LEN..end].to_vec(),
        });
        at = end;
    }

    if at < total && mode == ParseMode::Strict {
        return Err(CodecError::TlvBounds { offset: at });
    }
    Ok(AriPacket { header, tlvs, residue: bytes[at..total].to_vec() })
}

pub fn serialize_packet(packet: &AriPacket, policy: LengthPolicy) -> Result<Vec<u8>, CodecError> {
    let payload = packet.payload_len();
    let mut header = packet.header;
    match policy {
        LengthPolicy::Verify if header.length as usize != payload => {
            return Err(CodecError::LengthMismatch { declared: header.length as usize, actual: payload });
        }
        LengthPolicy::Verify => {}
        LengthPolicy::Recompute => {
            if payload > MAX_PAYLOAD_LEN as usize {
                return Err(CodecError::FieldRange { field: "length", value: payload as u64, bits: 15 });
            }
            header.length = payload as u16;
        }
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(&serialize_header(&header)?);
    for tlv in &packet.tlvs {
        tlv.write_to(&mut out)?;
    }
    out.extend_from_slice(&packet.residue);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanOutcome {
    Packet(AriPacket),
    Failure(CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanEntry {
    /// Byte offset of the magic that started this entry.
    pub offset: usize,
    pub outcome: ScanOutcome,
}

impl ScanEntry {
    /// Input bytes attributed to this entry: the whole packet on success,
    /// the single byte at `offset` on failure.
    pub fn consumed(&self) -> usize {
        match &self.outcome {
            ScanOutcome::Packet(p) => p.encoded_len(),
            ScanOutcome::Failure(_) => 1,
        }
    }

    pub fn packet(&self) -> Option<&AriPacket> {
        match &self.outcome {
            ScanOutcome::Packet(p) => Some(p),
            ScanOutcome::Failure(_) => None,
        }
    }
}

fn find_magic(bytes: &[u8], from: usize) -> Option<usize> {
    bytes
        .get(from..)?
        .windows(MAGIC.len())
        .position(|w| w == MAGIC)
        .map(|p| p + from)
}

/// Splits a capture stream into packets, resynchronizing on the magic after
/// garbage or failed parses. Bytes between entries are skipped.
pub fn scan_stream(bytes: &[u8], mode: ParseMode) -> Vec<ScanEntry> {
    let mut entries = Vec::new();
    let mut at = 0;
    while let Some(start) = find_magic(bytes, at) {
        let outcome = match parse_packet(&bytes[start..], mode) {
            Ok(p) => ScanOutcome::Packet(p),
            Err(e) => ScanOutcome::Failure(e),
        };
        let entry = ScanEntry { offset: start, outcome };
        at = start + entry.consumed();
        entries.push(entry);
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header_bytes(post_magic: [u8; 8]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&post_magic);
        b
    }

    #[test]
    fn zero_header() {
        let h = parse_header(&header_bytes([0; 8])).unwrap();
        assert_eq!(h, AriHeader::default());
        assert_eq!(serialize_header(&h).unwrap().to_vec(), header_bytes([0; 8]));
    }

    #[test]
    fn sample_group_bits() {
        let h = parse_header(&header_bytes([0x38, 0, 0, 0, 0, 0, 0, 0])).unwrap();
        assert_eq!(h.group, 7);
        let bytes = serialize_header(&AriHeader::new(7, 0)).unwrap();
        assert_eq!(bytes[4], 0x38);
    }

    #[test]
    fn g_bit_is_group_high_bit() {
        let h = parse_header(&header_bytes([0x00, 0x01, 0, 0, 0, 0, 0, 0])).unwrap();
        assert_eq!(h.group, 32);
        assert_eq!(h.sequence, 0);
    }

    #[test]
    fn header_errors() {
        assert_eq!(parse_header(&[0; 11]), Err(CodecError::HeaderLength { actual: 11 }));
        assert!(matches!(parse_header(&[0; 12]), Err(CodecError::BadMagic { .. })));
        let too_wide = AriHeader { group: 64, ..Default::default() };
        assert!(matches!(serialize_header(&too_wide), Err(CodecError::FieldRange { field: "group", .. })));
        let too_wide = AriHeader { sequence: 2048, ..Default::default() };
        assert!(matches!(serialize_header(&too_wide), Err(CodecError::FieldRange { field: "sequence", .. })));
    }

    #[test]
    fn sample_tlv_bits() {
        let mut bytes = serialize_header(&AriHeader { length: 6, ..Default::default() }).unwrap().to_vec();
        bytes.extend_from_slice(&[0x04, 0x20, 0x08, 0x00, 0x00, 0x00]);
        let p = parse_packet(&bytes, ParseMode::Strict).unwrap();
        assert_eq!(p.tlvs, vec![Tlv::new(2, 1, vec![0, 0])]);
        assert!(p.residue.is_empty());
        assert_eq!(p.to_bytes().unwrap(), bytes);
        assert_eq!(bytes.len(), 18);
    }

    #[test]
    fn header_only_packet() {
        let bytes = header_bytes([0; 8]);
        let p = parse_packet(&bytes, ParseMode::Strict).unwrap();
        assert!(p.tlvs.is_empty() && p.residue.is_empty());
        let empty = serialize_packet(&AriPacket::default(), LengthPolicy::Verify).unwrap();
        assert_eq!(empty, bytes);
    }

    #[test]
    fn residue_vs_strict() {
        let mut bytes = serialize_header(&AriHeader { length: 5, ..Default::default() }).unwrap().to_vec();
        // TLV header declaring 63 value bytes, only one follows
        bytes.extend_from_slice(&[0x04, 0x20, 0x3F, 0x00, 0xAA]);
        let p = parse_packet(&bytes, ParseMode::Lenient).unwrap();
        assert!(p.tlvs.is_empty());
        assert_eq!(p.residue, bytes[12..].to_vec());
        assert_eq!(p.to_bytes().unwrap(), bytes);
        assert_eq!(parse_packet(&bytes, ParseMode::Strict), Err(CodecError::TlvBounds { offset: 12 }));
    }

    #[test]
    fn truncated_packet() {
        let mut bytes = serialize_header(&AriHeader { length: 10, ..Default::default() }).unwrap().to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(
            parse_packet(&bytes, ParseMode::Lenient),
            Err(CodecError::Truncated { declared: 22, available: 15 })
        );
    }

    #[test]
    fn length_policy() {
        let mut p = AriPacket::new(AriHeader::default(), vec![Tlv::new(1, 0, vec![9; 3])]);
        assert_eq!(p.to_bytes(), Err(CodecError::LengthMismatch { declared: 0, actual: 7 }));
        let bytes = serialize_packet(&p, LengthPolicy::Recompute).unwrap();
        p.header.length = 7;
        assert_eq!(p.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn scan_skips_garbage_and_inner_magic() {
        let inner = Tlv::new(5, 0, MAGIC.to_vec());
        let pkt = serialize_packet(&AriPacket::new(AriHeader::default(), vec![inner]), LengthPolicy::Recompute).unwrap();
        let mut stream = vec![0x11; 7];
        stream.extend_from_slice(&pkt);
        let entries = scan_stream(&stream, ParseMode::Lenient);
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].offset, 7);
        assert!(entries[0].packet().is_some());
        assert!(scan_stream(&[], ParseMode::Lenient).is_empty());
    }

    #[test]
    fn scan_resumes_after_failure() {
        let good = serialize_packet(&AriPacket::default(), LengthPolicy::Verify).unwrap();
        // magic followed by a header that claims far more payload than exists
        let mut bad = serialize_header(&AriHeader { length: 300, ..Default::default() }).unwrap().to_vec();
        bad.truncate(12);
        let mut stream = bad.clone();
        stream.extend_from_slice(&good);
        let entries = scan_stream(&stream, ParseMode::Lenient);
        assert_eq!(entries.len(), 2);
        assert!(matches!(entries[0].outcome, ScanOutcome::Failure(CodecError::Truncated { .. })));
        assert_eq!(entries[1].offset, 12);
    }

    proptest! {
        #[test]
        fn header_round_trip(post in proptest::array::uniform8(any::<u8>())) {
            let bytes = header_bytes(post);
            let h = parse_header(&bytes).unwrap();
            prop_assert_eq!(serialize_header(&h).unwrap().to_vec(), bytes);
        }
    }

    #[test]
    fn width_safety_exhaustive() {
        for g in 0..=MAX_GROUP {
            let h = AriHeader { group: g, ..Default::default() };
            assert_eq!(parse_header(&serialize_header(&h).unwrap()).unwrap(), h);
        }
        for s in 0..=MAX_SEQUENCE {
            let h = AriHeader { sequence: s, ..Default::default() };
            assert_eq!(parse_header(&serialize_header(&h).unwrap()).unwrap(), h);
        }
        for t in 0..=MAX_MESSAGE_TYPE {
            let h = AriHeader { message_type: t, ..Default::default() };
            assert_eq!(parse_header(&serialize_header(&h).unwrap()).unwrap(), h);
        }
        for l in (0..=MAX_PAYLOAD_LEN).step_by(7).chain([MAX_PAYLOAD_LEN]) {
            let h = AriHeader { length: l, ..Default::default() };
            assert_eq!(parse_header(&serialize_header(&h).unwrap()).unwrap(), h);
        }
        for len in (0..=MAX_TLV_LEN).step_by(13).chain([MAX_TLV_LEN]) {
            let mut out = Vec::new();
            Tlv::new(MAX_TLV_TYPE, 7, vec![0; len]).write_to(&mut out).unwrap();
            let th = parse_tlv_header(&out).unwrap();
            assert_eq!((th.type_id, th.version, th.length), (MAX_TLV_TYPE, 7, len));
        }
    }
}
