use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_header, FuzzCase, FuzzError};
use crate::bits::{extract_bits, insert_bits, BitSpan};
use crate::defs::DefinitionRegistry;
use crate::packet::{
    layout, parse_packet, read_composite, AriPacket, ParseMode, HEADER_LEN, MAX_PAYLOAD_LEN, MAX_TLV_LEN,
    MAX_TLV_TYPE, MAX_TLV_VERSION, TLV_HEADER_LEN,
};

/// One recorded edit. Applying the list in order to the parent packet
/// reproduces the case (before sequence fixing).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mutation {
    BitFlip {
        bit: usize,
        old: u8,
        new: u8,
    },
    Field {
        bit: usize,
        width: u32,
        old: u64,
        new: u64,
    },
    /// Replaces `old` at `offset` with `new`; an empty `old` is an insertion.
    Bytes {
        offset: usize,
        #[serde(with = "hex::serde")]
        old: Vec<u8>,
        #[serde(with = "hex::serde")]
        new: Vec<u8>,
    },
}

impl Mutation {
    /// Applies the edit, checking that the recorded old contents match.
    pub fn apply(&self, bytes: &mut Vec<u8>) -> bool {
        match self {
            Mutation::BitFlip { bit, old, new } => set_checked(bytes, BitSpan::at_bit(*bit, 1), *old as u64, *new as u64),
            Mutation::Field { bit, width, old, new } => set_checked(bytes, BitSpan::at_bit(*bit, *width), *old, *new),
            Mutation::Bytes { offset, old, new } => {
                let end = offset + old.len();
                if bytes.get(*offset..end) != Some(old.as_slice()) {
                    return false;
                }
                bytes.splice(*offset..end, new.iter().copied());
                true
            }
        }
    }
}

fn set_checked(bytes: &mut [u8], span: BitSpan, old: u64, new: u64) -> bool {
    extract_bits(bytes, span) == Ok(old) && insert_bits(bytes, span, new).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TlvAction {
    CorruptValue,
    /// Declared length moved by 1 to 8 without moving any bytes.
    LengthSkew,
    SubstituteType,
    BumpVersion,
    Append,
    HeaderField,
}

pub(crate) struct Edit {
    pub bytes: Vec<u8>,
    pub mutations: Vec<Mutation>,
    pub action: Option<TlvAction>,
}

impl Edit {
    fn into_case(self) -> FuzzCase {
        FuzzCase { case_index: 0, parent: 0, bytes: self.bytes, mutations: self.mutations, seq_fixed: false, action: self.action }
    }

    fn set(&mut self, span: BitSpan, new: u64) {
        let old = extract_bits(&self.bytes, span).expect("span inside packet");
        if old != new {
            insert_bits(&mut self.bytes, span, new).expect("value fits span");
            self.mutations.push(Mutation::Field { bit: span.start_bit(), width: span.bit_length, old, new });
        }
    }

    fn set_composite(&mut self, chunks: &[BitSpan], shift: usize, value: u64) {
        let mut rest = value;
        for chunk in chunks {
            let span = chunk.shifted(shift);
            self.set(span, rest & span.mask());
            rest >>= span.bit_length;
        }
    }

    fn splice(&mut self, offset: usize, old_len: usize, new: Vec<u8>) {
        let old = self.bytes.splice(offset..offset + old_len, new.iter().copied()).collect();
        self.mutations.push(Mutation::Bytes { offset, old, new });
    }
}

/// Flips `flips` distinct bits at positions `>= min_bit` (fewer if the
/// packet has fewer candidate bits).
pub(crate) fn flip_bits<R: Rng + ?Sized>(packet: &[u8], flips: u32, min_bit: usize, rng: &mut R) -> Edit {
    let mut edit = Edit { bytes: packet.to_vec(), mutations: Vec::new(), action: None };
    let candidates = (packet.len() * 8).saturating_sub(min_bit);
    let amount = (flips as usize).min(candidates);
    let mut picks = index::sample(rng, candidates, amount).into_vec();
    picks.sort_unstable();
    for p in picks {
        let bit = min_bit + p;
        let byte = &mut edit.bytes[bit / 8];
        let old = (*byte >> (7 - bit % 8)) & 1;
        *byte ^= 0x80 >> (bit % 8);
        edit.mutations.push(Mutation::BitFlip { bit, old, new: old ^ 1 });
    }
    edit
}

/// Flips `flips` uniformly chosen bits after the magic.
pub fn mutate_bitflip<R: Rng + ?Sized>(packet: &[u8], flips: u32, rng: &mut R) -> Result<FuzzCase, FuzzError> {
    check_header(packet)?;
    if flips == 0 {
        return Err(FuzzError::Config("flips per packet must be at least 1".into()));
    }
    Ok(flip_bits(packet, flips, 32, rng).into_case())
}

fn xor_nonzero<R: Rng + ?Sized>(old: u64, width: u32, rng: &mut R) -> u64 {
    let mask = (1u64 << width) - 1;
    old ^ rng.random_range(1..=mask)
}

fn pick_type<R: Rng + ?Sized>(type_ids: &[u16], current: Option<u16>, rng: &mut R) -> u16 {
    let others: Vec<u16> = type_ids.iter().copied().filter(|&t| Some(t) != current).collect();
    if !others.is_empty() {
        return others[rng.random_range(0..others.len())];
    }
    match current {
        Some(c) => xor_nonzero(c as u64, 12, rng) as u16,
        None => rng.random_range(0..=MAX_TLV_TYPE),
    }
}

fn header_field<R: Rng + ?Sized>(edit: &mut Edit, rng: &mut R) {
    let fields: [(&[_], u32); 4] = [
        (layout::GROUP, 6),
        (layout::MESSAGE_TYPE, 10),
        (&[layout::TRAILER], 16),
        (&[layout::RESERVED_A, layout::RESERVED_B], 6),
    ];
    let (chunks, width) = fields[rng.random_range(0..fields.len())];
    let old = read_composite(&edit.bytes, chunks).expect("header present");
    edit.set_composite(chunks, 0, xor_nonzero(old, width, rng));
}

/// Structure-aware edit of an already parsed packet.
pub(crate) fn tlv_edit<R: Rng + ?Sized>(
    bytes: &[u8],
    parsed: &AriPacket,
    type_ids: &[u16],
    preserve_header: bool,
    rng: &mut R,
) -> Edit {
    let mut edit = Edit { bytes: bytes.to_vec(), mutations: Vec::new(), action: None };
    let payload_len = parsed.header.length as usize;

    if parsed.tlvs.is_empty() {
        let room = MAX_PAYLOAD_LEN as usize - payload_len;
        if room >= TLV_HEADER_LEN {
            let value_len = rng.random_range(0..=8usize.min(room - TLV_HEADER_LEN));
            let type_id = pick_type(type_ids, None, rng);
            let version = rng.random_range(0..=MAX_TLV_VERSION);
            let value: Vec<u8> = (0..value_len).map(|_| rng.random()).collect();
            let mut tlv = Vec::new();
            crate::packet::Tlv::new(type_id, version, value).write_to(&mut tlv).expect("fields in range");
            let added = tlv.len();
            edit.splice(HEADER_LEN + payload_len, 0, tlv);
            edit.set_composite(layout::LENGTH, 0, (payload_len + added) as u64);
            edit.action = Some(TlvAction::Append);
        } else if !preserve_header {
            header_field(&mut edit, rng);
            edit.action = Some(TlvAction::HeaderField);
        } else {
            let at = HEADER_LEN + rng.random_range(0..payload_len);
            let old = bytes[at];
            edit.splice(at, 1, vec![xor_nonzero(old as u64, 8, rng) as u8]);
            edit.action = Some(TlvAction::CorruptValue);
        }
        return edit;
    }

    let i = rng.random_range(0..parsed.tlvs.len());
    let tlv = &parsed.tlvs[i];
    let off = parsed.tlv_offsets()[i];

    let mut actions = vec![TlvAction::LengthSkew, TlvAction::SubstituteType, TlvAction::BumpVersion];
    if !tlv.value.is_empty() {
        actions.push(TlvAction::CorruptValue);
    }
    if !preserve_header {
        actions.push(TlvAction::HeaderField);
    }
    let action = actions[rng.random_range(0..actions.len())];
    edit.action = Some(action);

    match action {
        TlvAction::CorruptValue => {
            let len = tlv.value.len();
            let count = rng.random_range(1..=len.min(4));
            let mut picks = index::sample(rng, len, count).into_vec();
            picks.sort_unstable();
            for p in picks {
                let at = off + TLV_HEADER_LEN + p;
                let new = xor_nonzero(bytes[at] as u64, 8, rng) as u8;
                edit.splice(at, 1, vec![new]);
            }
        }
        TlvAction::LengthSkew => {
            let declared = tlv.value.len() as i64;
            let delta = rng.random_range(1..=8i64);
            let grow = rng.random_bool(0.5);
            let mut new = if grow { declared + delta } else { declared - delta };
            if !(0..=MAX_TLV_LEN as i64).contains(&new) {
                new = if grow { declared - delta } else { declared + delta };
            }
            edit.set_composite(layout::TLV_LENGTH, off, new as u64);
        }
        TlvAction::SubstituteType => {
            let new = pick_type(type_ids, Some(tlv.type_id), rng);
            edit.set_composite(layout::TLV_TYPE, off, new as u64);
        }
        TlvAction::BumpVersion => {
            let new = (tlv.version + 1) & MAX_TLV_VERSION;
            edit.set(layout::TLV_VERSION.shifted(off), new as u64);
        }
        TlvAction::HeaderField => header_field(&mut edit, rng),
        TlvAction::Append => unreachable!("only chosen for packets without TLVs"),
    }
    edit
}

/// Applies one structure-aware action to a TLV of `packet`, or appends a TLV
/// when it has none. Replacement type ids come from the registry when one is
/// given. With `preserve_header` only the header length may change.
pub fn mutate_tlv_aware<R: Rng + ?Sized>(
    packet: &[u8],
    reg: Option<&DefinitionRegistry>,
    preserve_header: bool,
    rng: &mut R,
) -> Result<FuzzCase, FuzzError> {
    let parsed = parse_packet(packet, ParseMode::Lenient)?;
    let type_ids = reg.map(DefinitionRegistry::tlv_type_ids).unwrap_or_default();
    Ok(tlv_edit(packet, &parsed, &type_ids, preserve_header, rng).into_case())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{parse_tlv_header, AriHeader, Tlv, MAGIC};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn packet(tlvs: Vec<Tlv>) -> Vec<u8> {
        let p = AriPacket::new(AriHeader::new(9, 0x101), tlvs);
        crate::packet::serialize_packet(&p, crate::packet::LengthPolicy::Recompute).unwrap()
    }

    fn replay(parent: &[u8], case: &FuzzCase) -> Vec<u8> {
        let mut b = parent.to_vec();
        for m in &case.mutations {
            assert!(m.apply(&mut b));
        }
        b
    }

    #[test]
    fn single_flip_after_magic() {
        let input = packet(vec![]);
        for seed in 0..200 {
            let case = mutate_bitflip(&input, 1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let diff: Vec<usize> =
                (0..input.len() * 8).filter(|&b| (input[b / 8] ^ case.bytes[b / 8]) & (0x80 >> (b % 8)) != 0).collect();
            assert_eq!(diff.len(), 1);
            assert!(diff[0] >= 32);
            assert_eq!(&case.bytes[..4], &MAGIC);
            assert_eq!(replay(&input, &case), case.bytes);
        }
    }

    #[test]
    fn bitflip_preconditions_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(mutate_bitflip(&packet(vec![]), 0, &mut rng), Err(FuzzError::Config(_))));
        assert!(matches!(mutate_bitflip(&[0xDE, 0xC0], 1, &mut rng), Err(FuzzError::ShortPacket(2))));
        let p = packet(vec![Tlv::new(1, 0, vec![1, 2, 3])]);
        let a = mutate_bitflip(&p, 5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = mutate_bitflip(&p, 5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mutations.len(), 5);
    }

    #[test]
    fn length_grow_leaves_value_alone() {
        let input = packet(vec![Tlv::new(2, 1, vec![0xAA, 0xBB])]);
        let mut found = 0;
        for seed in 0..500 {
            let case = mutate_tlv_aware(&input, None, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            if case.action != Some(TlvAction::LengthSkew) {
                continue;
            }
            let declared = parse_tlv_header(&case.bytes[12..]).unwrap().length;
            if declared > 2 {
                found += 1;
                assert!((3..=10).contains(&declared));
                assert_eq!(&case.bytes[16..], &[0xAA, 0xBB]);
                assert_eq!(case.bytes.len(), input.len());
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn empty_packet_gets_one_tlv() {
        let input = packet(vec![]);
        for seed in 0..50 {
            let case = mutate_tlv_aware(&input, None, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(case.action, Some(TlvAction::Append));
            let parsed = parse_packet(&case.bytes, ParseMode::Strict).unwrap();
            assert_eq!(parsed.tlvs.len(), 1);
            assert_eq!(replay(&input, &case), case.bytes);
        }
    }

    #[test]
    fn preserved_header_only_changes_length_bits() {
        let length_bits: Vec<usize> = layout::LENGTH.iter().flat_map(|s| s.start_bit()..s.end_bit()).collect();
        let inputs = [packet(vec![]), packet(vec![Tlv::new(5, 2, vec![1, 2, 3, 4]), Tlv::new(6, 0, vec![])])];
        for input in &inputs {
            for seed in 0..300 {
                let case = mutate_tlv_aware(input, None, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                for bit in 0..HEADER_LEN * 8 {
                    let span = BitSpan::at_bit(bit, 1);
                    if extract_bits(input, span) != extract_bits(&case.bytes, span) {
                        assert!(length_bits.contains(&bit), "seed {seed} bit {bit}");
                    }
                }
                assert_eq!(replay(input, &case), case.bytes);
            }
        }
    }

    #[test]
    fn substitutions_come_from_registry() {
        let reg = crate::defs::load_registry(
            br#"{"version_label":"t","groups":[{"id":1,"name":"g","messages":[{"type":1,"name":"m","tlvs":[
                {"index":1,"type":40,"codec":"uint","name":"a","mandatory":false},
                {"index":2,"type":41,"codec":"uint","name":"b","mandatory":false}]}]}]}"#,
        )
        .unwrap();
        let input = packet(vec![Tlv::new(40, 0, vec![1])]);
        let mut seen = 0;
        for seed in 0..200 {
            let case = mutate_tlv_aware(&input, Some(&reg), false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            if case.action == Some(TlvAction::SubstituteType) {
                seen += 1;
                assert_eq!(parse_tlv_header(&case.bytes[12..]).unwrap().type_id, 41);
            }
            assert_eq!(replay(&input, &case), case.bytes);
        }
        assert!(seen > 0);
    }

    #[test]
    fn mutation_json_shape() {
        let m = Mutation::Bytes { offset: 3, old: vec![], new: vec![0xAB] };
        let j = serde_json::to_string(&m).unwrap();
        assert_eq!(j, r#"{"kind":"bytes","offset":3,"old":"","new":"ab"}"#);
        assert_eq!(serde_json::from_str::<Mutation>(&j).unwrap(), m);
    }
}
