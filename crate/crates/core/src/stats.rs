//! Corpus statistics: n-gram rarity, dissimilarity subsampling and group
//! frequencies.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::defs::DefinitionRegistry;
use crate::packet::{parse_header, HEADER_LEN};

pub const DEFAULT_NGRAM: usize = 3;
pub const DEFAULT_RARITY: u32 = 1;
/// Histogram bucket name for packets whose header does not parse.
pub const UNPARSEABLE: &str = "<unparseable>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("n-gram length must be at least 1")]
    ZeroNgram,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("must keep at least one packet")]
    ZeroKeep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RarityScore {
    pub index: usize,
    /// Occurrences of n-grams in this packet that are rare corpus-wide.
    pub score: u32,
}

/// Scores each packet by how many of its n-gram occurrences have a
/// corpus-wide frequency of at most `rarity_threshold`.
pub fn ngram_rarity_score<P: AsRef<[u8]>>(
    trace: &[P],
    n: usize,
    rarity_threshold: u32,
) -> Result<Vec<RarityScore>, StatsError> {
    if n == 0 {
        return Err(StatsError::ZeroNgram);
    }
    if trace.is_empty() {
        return Err(StatsError::EmptyTrace);
    }
    let mut freq: HashMap<&[u8], u32> = HashMap::new();
    for p in trace {
        for gram in p.as_ref().windows(n) {
            *freq.entry(gram).or_default() += 1;
        }
    }
    Ok(trace
        .iter()
        .enumerate()
        .map(|(index, p)| RarityScore {
            index,
            score: p.as_ref().windows(n).filter(|g| freq[g] <= rarity_threshold).count() as u32,
        })
        .collect())
}

/// Indices of the `n_keep` highest-scoring packets, ties to the earlier
/// packet, returned in trace order.
pub fn subsample_indices(scores: &[RarityScore], n_keep: usize) -> Result<Vec<usize>, StatsError> {
    if n_keep == 0 {
        return Err(StatsError::ZeroKeep);
    }
    let mut ranked: Vec<&RarityScore> = scores.iter().collect();
    ranked.sort_by(|a, b| b.score.cmp(&a.score).then(a.index.cmp(&b.index)));
    let mut keep: Vec<usize> = ranked.iter().take(n_keep).map(|s| s.index).collect();
    keep.sort_unstable();
    Ok(keep)
}

/// Keeps the most dissimilar packets per `scores`, preserving trace order.
pub fn subsample_dissimilar<P: Clone>(trace: &[P], n_keep: usize, scores: &[RarityScore]) -> Result<Vec<P>, StatsError> {
    Ok(subsample_indices(scores, n_keep)?.into_iter().filter_map(|i| trace.get(i).cloned()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Group(u8),
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupBucket {
    pub key: GroupKey,
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GroupHistogram {
    /// Most frequent first; equal counts by group id, unparseable last.
    pub buckets: Vec<GroupBucket>,
    pub total: usize,
    /// Fewest buckets that together hold at least 95% of the packets.
    pub coverage_95: usize,
}

impl GroupHistogram {
    pub fn count(&self, name: &str) -> Option<usize> {
        self.buckets.iter().find(|b| b.name == name).map(|b| b.count)
    }
}

/// Counts packets per header group, naming groups from the registry. Only
/// the 12-byte header has to decode for a packet to count under its group.
pub fn group_histogram<P: AsRef<[u8]>>(trace: &[P], reg: &DefinitionRegistry) -> GroupHistogram {
    let mut counts: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for p in trace {
        let header = p.as_ref().get(..HEADER_LEN).map(parse_header);
        let key = match header {
            Some(Ok(h)) => GroupKey::Group(h.group),
            _ => GroupKey::Unparseable,
        };
        *counts.entry(key).or_default() += 1;
    }
    let mut buckets: Vec<GroupBucket> = counts
        .into_iter()
        .map(|(key, count)| {
            let name = match key {
                GroupKey::Group(id) => reg.group(id).map_or_else(|| id.to_string(), |g| g.name.clone()),
                GroupKey::Unparseable => UNPARSEABLE.to_string(),
            };
            GroupBucket { key, name, count }
        })
        .collect();
    buckets.sort_by(|a, b| b.count.cmp(&a.count).then(a.key.cmp(&b.key)));

    let total = trace.len();
    let mut covered = 0;
    let coverage_95 = buckets
        .iter()
        .position(|b| {
            covered += b.count;
            covered * 100 >= total * 95
        })
        .map_or(0, |i| i + 1);
    GroupHistogram { buckets, total, coverage_95 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defs::{Definitions, GroupDef};

    /// Brute-force reference: count each n-gram by scanning the whole corpus.
    fn oracle(trace: &[Vec<u8>], n: usize, threshold: u32) -> Vec<u32> {
        let all: Vec<&[u8]> = trace.iter().flat_map(|p| p.windows(n)).collect();
        trace
            .iter()
            .map(|p| p.windows(n).filter(|g| all.iter().filter(|h| h == &g).count() as u32 <= threshold).count() as u32)
            .collect()
    }

    #[test]
    fn uniform_corpus_scores_zero() {
        let trace = vec![vec![1u8, 2, 3, 4, 5]; 10];
        assert!(ngram_rarity_score(&trace, 3, 1).unwrap().iter().all(|s| s.score == 0));
    }

    #[test]
    fn unique_packet_stands_out() {
        let mut trace = vec![vec![7u8; 20]; 9];
        trace.push((100..120).collect());
        let scores = ngram_rarity_score(&trace, 3, 1).unwrap();
        assert_eq!(scores[9].score, 18);
        assert!(scores[..9].iter().all(|s| s.score == 0));
        assert_eq!(scores.iter().map(|s| s.score).collect::<Vec<_>>(), oracle(&trace, 3, 1));
        assert_eq!(subsample_dissimilar(&trace, 1, &scores).unwrap(), vec![trace[9].clone()]);
    }

    #[test]
    fn small_cases() {
        assert_eq!(ngram_rarity_score(&[vec![9u8]], 1, 1).unwrap()[0].score, 1);
        assert_eq!(ngram_rarity_score(&[vec![9u8]], 4, 1).unwrap()[0].score, 0);
        assert_eq!(ngram_rarity_score::<Vec<u8>>(&[], 3, 1), Err(StatsError::EmptyTrace));
        assert_eq!(ngram_rarity_score(&[vec![1u8]], 0, 1), Err(StatsError::ZeroNgram));
    }

    #[test]
    fn subsample_keeps_order_and_ties() {
        let scores: Vec<RarityScore> =
            [3, 1, 3, 0, 2].iter().enumerate().map(|(index, &score)| RarityScore { index, score }).collect();
        assert_eq!(subsample_indices(&scores, 3).unwrap(), [0, 2, 4]);
        assert_eq!(subsample_indices(&scores, 1).unwrap(), [0]);
        assert_eq!(subsample_indices(&scores, 10).unwrap(), [0, 1, 2, 3, 4]);
        assert_eq!(subsample_indices(&scores, 0), Err(StatsError::ZeroKeep));
    }

    fn packet(group: u8) -> Vec<u8> {
        crate::packet::AriPacket::new(crate::packet::AriHeader::new(group, 1), vec![]).to_bytes().unwrap()
    }

    #[test]
    fn histogram_names_and_coverage() {
        let reg = DefinitionRegistry::new(Definitions {
            version_label: "t".into(),
            groups: vec![GroupDef { id: 9, name: "net_cell".into(), messages: vec![] }],
            ..Default::default()
        })
        .unwrap();
        let mut trace: Vec<Vec<u8>> = (0..96).map(|_| packet(9)).collect();
        trace.extend([packet(1), packet(2), packet(2), vec![0u8; 3]]);
        let h = group_histogram(&trace, &reg);
        assert_eq!(h.count("net_cell"), Some(96));
        assert_eq!(h.count("2"), Some(2));
        assert_eq!(h.count(UNPARSEABLE), Some(1));
        assert_eq!(h.buckets.iter().map(|b| b.count).sum::<usize>(), h.total);
        assert_eq!(h.coverage_95, 1);

        let empty = group_histogram::<Vec<u8>>(&[], &reg);
        assert!(empty.buckets.is_empty());
        assert_eq!(empty.coverage_95, 0);
    }
}
