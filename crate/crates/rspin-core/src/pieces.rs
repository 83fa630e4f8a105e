//! Acoustic pieces: BPE over deduplicated discrete units.
//!
//! Frame-level unit sequences are first run-length collapsed so no two
//! adjacent entries are equal, then byte-pair encoding is learned over the
//! reduced corpus. Encoded sequences carry per-token frame counts so they can
//! be expanded back to frame rate as pseudo labels.
//!
//! Conventions fixed here (and mirrored by the brute-force oracle in the
//! tests): pair counts never span utterance boundaries, a pair must occur at
//! least twice to be merged, count ties break toward the lexicographically
//! smallest (left, right) pair, and merges replace occurrences left to right
//! without overlap.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Frame-level discrete units, one per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSequence(Vec<u32>);

impl UnitSequence {
    pub fn new(units: Vec<u32>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::EmptyInput("unit sequence"));
        }
        Ok(Self(units))
    }

    pub fn units(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Run-length collapsed units: adjacent entries differ, and `run_lengths`
/// records how many frames each entry covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupSequence {
    units: Vec<u32>,
    run_lengths: Vec<u32>,
}

impl DedupSequence {
    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn run_lengths(&self) -> &[u32] {
        &self.run_lengths
    }

    /// Total frame count covered by the runs.
    pub fn frame_count(&self) -> usize {
        self.run_lengths.iter().map(|&r| r as usize).sum()
    }

    /// Expands back to one unit per frame; exact inverse of [`deduplicate`].
    pub fn expand(&self) -> UnitSequence {
        let mut out = Vec::with_capacity(self.frame_count());
        for (&u, &r) in self.units.iter().zip(&self.run_lengths) {
            out.extend(std::iter::repeat_n(u, r as usize));
        }
        UnitSequence(out)
    }
}

/// Collapses identical consecutive units, recording run lengths.
pub fn deduplicate(s: &UnitSequence) -> DedupSequence {
    let mut units = Vec::new();
    let mut run_lengths: Vec<u32> = Vec::new();
    for &u in s.units() {
        match units.last() {
            Some(&last) if last == u => *run_lengths.last_mut().unwrap() += 1,
            _ => {
                units.push(u);
                run_lengths.push(1);
            }
        }
    }
    DedupSequence { units, run_lengths }
}

/// One BPE merge: (left, right) becomes `new_id` at the given rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeRule {
    pub rank: u32,
    pub left: u32,
    pub right: u32,
    pub new_id: u32,
}

/// Ordered merge rules plus the vocabulary bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRuleTable {
    pub rules: Vec<MergeRule>,
    pub base_vocab: u32,
    pub nominal_size: u32,
}

impl MergeRuleTable {
    /// Validates rank ordering, id assignment, and pair uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, r) in self.rules.iter().enumerate() {
            if r.rank != i as u32 {
                return Err(Error::invalid(format!(
                    "rule {i} has rank {}, expected {i}",
                    r.rank
                )));
            }
            if r.new_id != self.base_vocab + r.rank {
                return Err(Error::invalid(format!(
                    "rule {i} assigns id {} but base_vocab + rank = {}",
                    r.new_id,
                    self.base_vocab + r.rank
                )));
            }
            if !seen.insert((r.left, r.right)) {
                return Err(Error::invalid(format!(
                    "duplicate merge pair ({}, {})",
                    r.left, r.right
                )));
            }
        }
        Ok(())
    }
}

/// Learns merge rules over a deduplicated corpus.
///
/// Repeatedly merges the most frequent adjacent pair (ties to the smallest
/// pair) until `nominal_size - base_vocab` merges are recorded or no pair
/// occurs at least twice. Pair counts are kept per corpus but only pairs
/// inside a single utterance count.
pub fn learn_bpe(
    corpus: &[DedupSequence],
    base_vocab: u32,
    nominal_size: u32,
) -> Result<MergeRuleTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("BPE corpus"));
    }
    if nominal_size <= base_vocab {
        return Err(Error::invalid(format!(
            "nominal size {nominal_size} must exceed base vocabulary {base_vocab}"
        )));
    }
    for seq in corpus {
        if let Some(&bad) = seq.units().iter().find(|&&u| u >= base_vocab) {
            return Err(Error::invalid(format!(
                "unit {bad} exceeds base vocabulary {base_vocab}"
            )));
        }
    }

    let mut seqs: Vec<Vec<u32>> = corpus.iter().map(|s| s.units().to_vec()).collect();
    let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for seq in &seqs {
        for w in seq.windows(2) {
            *counts.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }

    let max_merges = nominal_size - base_vocab;
    let mut rules = Vec::new();
    for rank in 0..max_merges {
        // BTreeMap iterates in key order, so the first maximum is the
        // lexicographically smallest pair among ties.
        let best = counts
            .iter()
            .filter(|(_, &c)| c >= 2)
            .fold(None::<((u32, u32), u64)>, |acc, (&pair, &c)| match acc {
                Some((_, best_c)) if best_c >= c => acc,
                _ => Some((pair, c)),
            });
        let Some(((left, right), _)) = best else {
            break;
        };
        let new_id = base_vocab + rank;
        for seq in seqs.iter_mut() {
            if !contains_pair(seq, left, right) {
                continue;
            }
            // Local recount: cheaper than tracking neighbor deltas and
            // immune to overlap corner cases.
            subtract_pair_counts(&mut counts, seq);
            merge_pair_in_place(seq, left, right, new_id);
            add_pair_counts(&mut counts, seq);
        }
        counts.remove(&(left, right));
        rules.push(MergeRule {
            rank,
            left,
            right,
            new_id,
        });
    }
    let table = MergeRuleTable {
        rules,
        base_vocab,
        nominal_size,
    };
    table.validate()?;
    Ok(table)
}

fn contains_pair(seq: &[u32], left: u32, right: u32) -> bool {
    seq.windows(2).any(|w| w[0] == left && w[1] == right)
}

fn subtract_pair_counts(counts: &mut BTreeMap<(u32, u32), u64>, seq: &[u32]) {
    for w in seq.windows(2) {
        if let Some(c) = counts.get_mut(&(w[0], w[1])) {
            *c -= 1;
            if *c == 0 {
                counts.remove(&(w[0], w[1]));
            }
        }
    }
}

fn add_pair_counts(counts: &mut BTreeMap<(u32, u32), u64>, seq: &[u32]) {
    for w in seq.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
}

/// Replaces (left, right) with new_id, scanning left to right.
fn merge_pair_in_place(seq: &mut Vec<u32>, left: u32, right: u32, new_id: u32) {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
            out.push(new_id);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    *seq = out;
}

/// Applies merges in rank order, tracking frames per encoded token.
/// Returns (tokens, segment frame lengths); the lengths sum to the original
/// frame count.
pub fn encode(s: &DedupSequence, rules: &MergeRuleTable) -> Result<(Vec<u32>, Vec<u32>)> {
    if let Some(&bad) = s.units().iter().find(|&&u| u >= rules.base_vocab) {
        return Err(Error::invalid(format!(
            "unit {bad} exceeds base vocabulary {}",
            rules.base_vocab
        )));
    }
    let mut tokens: Vec<(u32, u32)> = s
        .units()
        .iter()
        .zip(s.run_lengths())
        .map(|(&u, &r)| (u, r))
        .collect();
    for rule in &rules.rules {
        if !tokens
            .windows(2)
            .any(|w| w[0].0 == rule.left && w[1].0 == rule.right)
        {
            continue;
        }
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            if i + 1 < tokens.len() && tokens[i].0 == rule.left && tokens[i + 1].0 == rule.right {
                out.push((rule.new_id, tokens[i].1 + tokens[i + 1].1));
                i += 2;
            } else {
                out.push(tokens[i]);
                i += 1;
            }
        }
        tokens = out;
    }
    let ids = tokens.iter().map(|t| t.0).collect();
    let lens = tokens.iter().map(|t| t.1).collect();
    Ok((ids, lens))
}

/// Repeats each encoded token over the frames it covers.
pub fn expand_to_frames(encoded: &[u32], segment_lengths: &[u32]) -> Result<Vec<u32>> {
    if encoded.len() != segment_lengths.len() {
        return Err(Error::shape(format!(
            "{} tokens vs {} segment lengths",
            encoded.len(),
            segment_lengths.len()
        )));
    }
    let total: usize = segment_lengths.iter().map(|&r| r as usize).sum();
    let mut out = Vec::with_capacity(total);
    for (&t, &r) in encoded.iter().zip(segment_lengths) {
        out.extend(std::iter::repeat_n(t, r as usize));
    }
    Ok(out)
}

/// Number of distinct token ids appearing in an encoded corpus.
pub fn actual_vocab_used(encoded_corpus: &[Vec<u32>]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for seq in encoded_corpus {
        seen.extend(seq.iter().copied());
    }
    seen.len()
}

/// Bijection from the token ids used in a corpus to a dense [0, V) range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    forward: BTreeMap<u32, u32>,
    inverse: Vec<u32>,
}

impl IdMap {
    pub fn map(&self, id: u32) -> Option<u32> {
        self.forward.get(&id).copied()
    }

    pub fn unmap(&self, dense: u32) -> Option<u32> {
        self.inverse.get(dense as usize).copied()
    }

    /// Dense vocabulary size V.
    pub fn len(&self) -> usize {
        self.inverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inverse.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.forward.iter().map(|(&k, &v)| (k, v))
    }
}

/// Remaps a corpus of encoded ids onto [0, V) where V is the number of
/// distinct ids actually used. Ids keep their relative order.
pub fn remap_labels(encoded_corpus: &[Vec<u32>]) -> (Vec<Vec<u32>>, IdMap) {
    let mut used = std::collections::BTreeSet::new();
    for seq in encoded_corpus {
        used.extend(seq.iter().copied());
    }
    let inverse: Vec<u32> = used.into_iter().collect();
    let forward: BTreeMap<u32, u32> = inverse
        .iter()
        .enumerate()
        .map(|(dense, &orig)| (orig, dense as u32))
        .collect();
    let remapped = encoded_corpus
        .iter()
        .map(|seq| seq.iter().map(|id| forward[id]).collect())
        .collect();
    (remapped, IdMap { forward, inverse })
}

// --- file formats -----------------------------------------------------------

/// Reads a unit corpus: UTF-8 text, one utterance per line, space-separated
/// decimal unit ids.
pub fn read_unit_corpus(path: &Path) -> Result<Vec<UnitSequence>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut units = Vec::new();
        for tok in line.split_whitespace() {
            let v: u32 = tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("'{tok}' is not an unsigned integer unit id"),
            })?;
            units.push(v);
        }
        out.push(UnitSequence::new(units).map_err(|_| Error::Parse {
            line: i + 1,
            msg: "empty utterance".to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("unit corpus"));
    }
    Ok(out)
}

pub fn write_unit_corpus(path: &Path, corpus: &[Vec<u32>]) -> Result<()> {
    let mut text = String::new();
    for seq in corpus {
        let line: Vec<String> = seq.iter().map(|u| u.to_string()).collect();
        writeln!(text, "{}", line.join(" ")).expect("string write");
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes a rule table: a metadata line `base_vocab=<int> nominal=<int>`,
/// a header `rank\tleft\tright\tnew`, then one row per merge.
pub fn write_rules_tsv(path: &Path, table: &MergeRuleTable) -> Result<()> {
    let mut text = String::new();
    writeln!(
        text,
        "base_vocab={} nominal={}",
        table.base_vocab, table.nominal_size
    )
    .expect("string write");
    writeln!(text, "rank\tleft\tright\tnew").expect("string write");
    for r in &table.rules {
        writeln!(text, "{}\t{}\t{}\t{}", r.rank, r.left, r.right, r.new_id).expect("string write");
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_rules_tsv(path: &Path) -> Result<MergeRuleTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines.next().ok_or(Error::EmptyInput("rule table"))?;
    let mut base_vocab = None;
    let mut nominal = None;
    for field in meta.split_whitespace() {
        if let Some(v) = field.strip_prefix("base_vocab=") {
            base_vocab = v.parse::<u32>().ok();
        } else if let Some(v) = field.strip_prefix("nominal=") {
            nominal = v.parse::<u32>().ok();
        }
    }
    let (base_vocab, nominal_size) = match (base_vocab, nominal) {
        (Some(b), Some(n)) => (b, n),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected 'base_vocab=<int> nominal=<int>'".to_string(),
            })
        }
    };
    match lines.next() {
        Some((_, h)) if h.trim() == "rank\tleft\tright\tnew" => {}
        _ => {
            return Err(Error::Parse {
                line: 2,
                msg: "expected header 'rank\\tleft\\tright\\tnew'".to_string(),
            })
        }
    }
    let mut rules = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<u32> {
            s.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("'{s}' is not an unsigned integer"),
            })
        };
        rules.push(MergeRule {
            rank: parse(fields[0])?,
            left: parse(fields[1])?,
            right: parse(fields[2])?,
            new_id: parse(fields[3])?,
        });
    }
    let table = MergeRuleTable {
        rules,
        base_vocab,
        nominal_size,
    };
    table.validate()?;
    Ok(table)
}
