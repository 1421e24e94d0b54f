//! Seed-addressed mutation of ARI packets with sequence fixing and replay logs.

mod campaign;
mod mutate;
mod signature;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitError;
use crate::packet::{layout, write_composite, CodecError, HEADER_LEN, MAGIC, MAX_SEQUENCE};

pub use campaign::{
    case_file_name, generate_campaign, read_manifest, replay_case, verify_replay, write_campaign, Campaign, CaseRecord,
    CorpusEntry, Manifest, MANIFEST_FILE,
};
pub use mutate::{mutate_bitflip, mutate_tlv_aware, Mutation, TlvAction};
pub use signature::{crash_signature, CrashSignature, STACK_DIGEST_FRAMES};

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("packet is {0} bytes, shorter than the 12-byte header")]
    ShortPacket(usize),
    #[error("packet does not start with the ARI magic")]
    BadMagic,
    #[error("corpus packet {index}: {source}")]
    Corpus { index: usize, source: Box<FuzzError> },
    #[error("packet does not parse: {0}")]
    Unparseable(#[from] CodecError),
    #[error(transparent)]
    Bits(#[from] BitError),
    #[error("replay of case {0} does not reproduce its bytes")]
    ReplayMismatch(u64),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Flip random bits anywhere after the magic.
    Bitflip,
    /// One structure-aware edit of a TLV (or the header, unless preserved).
    TlvAware,
    /// Replay the corpus and flip bits in the payload of a subset of packets.
    CorpusReplayMutate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Ordered,
    /// A fresh seeded shuffle of the corpus on every pass.
    Unordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub seed: u64,
    pub strategy: Strategy,
    pub count: u64,
    /// Probability that a replayed packet is mutated.
    pub mutation_rate: f64,
    pub flips_per_packet: u32,
    pub preserve_header: bool,
    pub order: Order,
    pub fix_sequence: bool,
}

impl CampaignConfig {
    /// Defaults: every packet mutated, except a quarter for corpus replay;
    /// one flip; header preserved; ordered replay; sequence fixing on.
    pub fn new(seed: u64, strategy: Strategy, count: u64) -> Self {
        CampaignConfig {
            seed,
            strategy,
            count,
            mutation_rate: if strategy == Strategy::CorpusReplayMutate { 0.25 } else { 1.0 },
            flips_per_packet: 1,
            preserve_header: true,
            order: Order::Ordered,
            fix_sequence: true,
        }
    }

    pub fn validate(&self) -> Result<(), FuzzError> {
        if self.count == 0 {
            return Err(FuzzError::Config("count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(FuzzError::Config(format!("mutation rate {} outside [0, 1]", self.mutation_rate)));
        }
        if self.flips_per_packet == 0 && self.strategy != Strategy::TlvAware {
            return Err(FuzzError::Config("flips per packet must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzCase {
    pub case_index: u64,
    /// Index of the corpus packet this case was derived from.
    pub parent: usize,
    #[serde(with = "hex::serde")]
    pub bytes: Vec<u8>,
    pub mutations: Vec<Mutation>,
    pub seq_fixed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<TlvAction>,
}

/// 11-bit sequence counter for one direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SequenceTracker {
    next: u16,
}

impl SequenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(next: u16) -> Self {
        SequenceTracker { next: next & MAX_SEQUENCE }
    }

    pub fn next(&self) -> u16 {
        self.next
    }

    fn advance(&mut self) -> u16 {
        let current = self.next;
        self.next = (self.next + 1) & MAX_SEQUENCE;
        current
    }
}

pub(crate) fn check_header(bytes: &[u8]) -> Result<(), FuzzError> {
    if bytes.len() < HEADER_LEN {
        return Err(FuzzError::ShortPacket(bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err(FuzzError::BadMagic);
    }
    Ok(())
}

/// Stamps `tracker.next` into the sequence field and advances the tracker.
pub fn fix_sequence(bytes: &[u8], tracker: &mut SequenceTracker) -> Result<Vec<u8>, FuzzError> {
    check_header(bytes)?;
    let mut out = bytes.to_vec();
    write_composite(&mut out, layout::SEQUENCE, tracker.advance() as u64)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::extract_bits;
    use crate::packet::{parse_header, read_composite};
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn header() -> Vec<u8> {
        let mut h = MAGIC.to_vec();
        h.extend([0; 8]);
        h
    }

    #[test]
    fn tracker_counts_and_wraps() {
        let mut t = SequenceTracker::starting_at(5);
        let out = fix_sequence(&header(), &mut t).unwrap();
        assert_eq!(parse_header(&out).unwrap().sequence, 5);
        assert_eq!(t.next(), 6);

        let mut t = SequenceTracker::starting_at(2047);
        let out = fix_sequence(&header(), &mut t).unwrap();
        assert_eq!(read_composite(&out, layout::SEQUENCE).unwrap(), 2047);
        assert_eq!(t.next(), 0);
    }

    #[test]
    fn bad_input() {
        let mut t = SequenceTracker::new();
        assert!(matches!(fix_sequence(&[0; 12], &mut t), Err(FuzzError::BadMagic)));
        assert!(matches!(fix_sequence(&MAGIC, &mut t), Err(FuzzError::ShortPacket(4))));
        assert_eq!(t.next(), 0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CampaignConfig::new(1, Strategy::Bitflip, 1);
        assert!(cfg.validate().is_ok());
        cfg.flips_per_packet = 0;
        assert!(cfg.validate().is_err());
        cfg = CampaignConfig::new(1, Strategy::Bitflip, 0);
        assert!(cfg.validate().is_err());
        cfg = CampaignConfig::new(1, Strategy::TlvAware, 1);
        cfg.mutation_rate = 1.5;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn only_sequence_bits_change(tail in proptest::collection::vec(any::<u8>(), 8..40), next in 0u16..2048) {
            let mut input = MAGIC.to_vec();
            input.extend(tail);
            let out = fix_sequence(&input, &mut SequenceTracker::starting_at(next)).unwrap();
            let seq_bits: Vec<usize> = layout::SEQUENCE.iter().flat_map(|s| s.start_bit()..s.end_bit()).collect();
            for bit in 0..input.len() * 8 {
                let span = crate::bits::BitSpan::at_bit(bit, 1);
                if !seq_bits.contains(&bit) {
                    prop_assert_eq!(extract_bits(&input, span).unwrap(), extract_bits(&out, span).unwrap());
                }
            }
            prop_assert_eq!(read_composite(&out, layout::SEQUENCE).unwrap(), next as u64);
        }
    }
}
