use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mutate::{flip_bits, tlv_edit, Edit, Mutation, TlvAction};
use super::{check_header, fix_sequence, CampaignConfig, FuzzCase, FuzzError, Order, SequenceTracker, Strategy};
use crate::defs::DefinitionRegistry;
use crate::packet::{layout, parse_packet, write_composite, AriPacket, ParseMode, HEADER_LEN, MAX_SEQUENCE};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Stream id reserved for the unordered-replay shuffle; case streams use the
/// case index.
const SHUFFLE_STREAM: u64 = u64::MAX;

/// Lazy, deterministic stream of fuzz cases. Case `n` draws from ChaCha8
/// seeded with the campaign seed on stream `n`, so any case can be
/// regenerated without the ones before it (unordered parent choice aside).
pub struct Campaign<'a> {
    corpus: &'a [Vec<u8>],
    parsed: Vec<Option<AriPacket>>,
    type_ids: Vec<u16>,
    cfg: CampaignConfig,
    next: u64,
    tracker: SequenceTracker,
    shuffle_rng: ChaCha8Rng,
    order: Vec<usize>,
}

/// Validates the corpus and config and returns the case stream.
pub fn generate_campaign<'a>(
    corpus: &'a [Vec<u8>],
    cfg: &CampaignConfig,
    reg: Option<&DefinitionRegistry>,
) -> Result<Campaign<'a>, FuzzError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(FuzzError::EmptyCorpus);
    }
    let wrap = |index: usize| move |e: FuzzError| FuzzError::Corpus { index, source: Box::new(e) };
    let mut parsed = Vec::with_capacity(corpus.len());
    for (i, packet) in corpus.iter().enumerate() {
        check_header(packet).map_err(wrap(i))?;
        parsed.push(if cfg.strategy == Strategy::TlvAware {
            Some(parse_packet(packet, ParseMode::Lenient).map_err(|e| wrap(i)(e.into()))?)
        } else {
            None
        });
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    Ok(Campaign {
        corpus,
        parsed,
        type_ids: reg.map(DefinitionRegistry::tlv_type_ids).unwrap_or_default(),
        cfg: cfg.clone(),
        next: 0,
        tracker: SequenceTracker::new(),
        shuffle_rng,
        order: (0..corpus.len()).collect(),
    })
}

impl Campaign<'_> {
    fn parent(&mut self, index: u64) -> usize {
        let n = self.corpus.len() as u64;
        let slot = (index % n) as usize;
        if self.cfg.order == Order::Unordered && slot == 0 {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.shuffle_rng);
        }
        self.order[slot]
    }

    fn mutate(&self, parent: usize, rng: &mut ChaCha8Rng) -> Edit {
        let packet = &self.corpus[parent];
        match self.cfg.strategy {
            Strategy::Bitflip => flip_bits(packet, self.cfg.flips_per_packet, 32, rng),
            Strategy::TlvAware => {
                let parsed = self.parsed[parent].as_ref().expect("parsed for tlv-aware campaigns");
                tlv_edit(packet, parsed, &self.type_ids, self.cfg.preserve_header, rng)
            }
            Strategy::CorpusReplayMutate => {
                let min_bit = if self.cfg.preserve_header { HEADER_LEN * 8 } else { 32 };
                flip_bits(packet, self.cfg.flips_per_packet, min_bit, rng)
            }
        }
    }
}

impl Iterator for Campaign<'_> {
    type Item = FuzzCase;

    fn next(&mut self) -> Option<FuzzCase> {
        if self.next >= self.cfg.count {
            return None;
        }
        let case_index = self.next;
        self.next += 1;
        let parent = self.parent(case_index);

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(case_index);
        let edit = if rng.random_bool(self.cfg.mutation_rate) {
            self.mutate(parent, &mut rng)
        } else {
            Edit { bytes: self.corpus[parent].clone(), mutations: Vec::new(), action: None }
        };

        let bytes = if self.cfg.fix_sequence {
            fix_sequence(&edit.bytes, &mut self.tracker).expect("magic and header survive mutation")
        } else {
            edit.bytes
        };
        Some(FuzzCase {
            case_index,
            parent,
            bytes,
            mutations: edit.mutations,
            seq_fixed: self.cfg.fix_sequence,
            action: edit.action,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.cfg.count - self.next) as usize;
        (left, Some(left))
    }
}

/// Rebuilds a case from its parent packet and recorded mutations. Sequence
/// fixing stamps `case_index mod 2048`, as a campaign from a fresh tracker does.
pub fn replay_case(parent: &[u8], case: &FuzzCase) -> Result<Vec<u8>, FuzzError> {
    let mut bytes = parent.to_vec();
    for m in &case.mutations {
        if !m.apply(&mut bytes) {
            return Err(FuzzError::ReplayMismatch(case.case_index));
        }
    }
    if case.seq_fixed {
        check_header(&bytes)?;
        write_composite(&mut bytes, layout::SEQUENCE, case.case_index & MAX_SEQUENCE as u64)?;
    }
    Ok(bytes)
}

/// Checks that every case replays to its recorded bytes.
pub fn verify_replay(corpus: &[Vec<u8>], cases: &[FuzzCase]) -> Result<(), FuzzError> {
    for case in cases {
        let parent = corpus.get(case.parent).ok_or(FuzzError::ReplayMismatch(case.case_index))?;
        if replay_case(parent, case)? != case.bytes {
            return Err(FuzzError::ReplayMismatch(case.case_index));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub name: String,
    pub sha256: String,
}

impl CorpusEntry {
    pub fn new(name: impl Into<String>, bytes: &[u8]) -> Self {
        CorpusEntry { name: name.into(), sha256: hex::encode(Sha256::digest(bytes)) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_index: u64,
    pub parent: usize,
    pub file: String,
    pub mutations: Vec<Mutation>,
    pub seq_fixed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<TlvAction>,
}

/// Replay log written next to the case files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: CampaignConfig,
    pub corpus: Vec<CorpusEntry>,
    pub cases: Vec<CaseRecord>,
}

impl Manifest {
    /// Regenerates every case from `corpus`, which must match the recorded
    /// corpus digests.
    pub fn replay(&self, corpus: &[Vec<u8>]) -> Result<Vec<FuzzCase>, FuzzError> {
        if corpus.len() != self.corpus.len()
            || corpus.iter().zip(&self.corpus).any(|(b, e)| CorpusEntry::new("", b).sha256 != e.sha256)
        {
            return Err(FuzzError::Config("corpus does not match the manifest".into()));
        }
        self.cases
            .iter()
            .map(|r| {
                let mut case = FuzzCase {
                    case_index: r.case_index,
                    parent: r.parent,
                    bytes: Vec::new(),
                    mutations: r.mutations.clone(),
                    seq_fixed: r.seq_fixed,
                    action: r.action,
                };
                let parent = corpus.get(r.parent).ok_or(FuzzError::ReplayMismatch(r.case_index))?;
                case.bytes = replay_case(parent, &case)?;
                Ok(case)
            })
            .collect()
    }
}

pub fn case_file_name(case_index: u64) -> String {
    format!("case_{case_index:06}.bin")
}

/// Writes one file per case plus `manifest.json` into `dir`.
pub fn write_campaign<I: IntoIterator<Item = FuzzCase>>(
    dir: &Path,
    cfg: &CampaignConfig,
    corpus: Vec<CorpusEntry>,
    cases: I,
) -> Result<Manifest, FuzzError> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    for case in cases {
        let file = case_file_name(case.case_index);
        fs::write(dir.join(&file), &case.bytes)?;
        records.push(CaseRecord {
            case_index: case.case_index,
            parent: case.parent,
            file,
            mutations: case.mutations,
            seq_fixed: case.seq_fixed,
            action: case.action,
        });
    }
    let manifest = Manifest { config: cfg.clone(), corpus, cases: records };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, FuzzError> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
}
