//! Entity-mention detection, human review round-trip, and corpus pruning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::stats::median;
use crate::stimuli::Entity;

/// Characters of context kept on each side of a mention in review exports.
pub const REVIEW_CONTEXT_CHARS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Token must begin with the surname stem.
    #[default]
    StemPrefix,
    /// Token must equal the surname.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatcherConfig {
    #[serde(default)]
    pub mode: MatchMode,
    /// Characters dropped from the end of each surname part to form the stem.
    #[serde(default)]
    pub suffix_strip: usize,
}

fn normalize(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase()
}

/// Byte ranges of word tokens; hyphens join parts of one token.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        let inside = c.is_alphanumeric() || c == '-' || is_combining_mark(c);
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..text.len());
    }
    out.into_iter()
        .filter_map(|r| {
            let tok = &text[r.clone()];
            let lead = tok.len() - tok.trim_start_matches('-').len();
            let trail = tok.len() - tok.trim_end_matches('-').len();
            let r = r.start + lead..r.end - trail;
            (!r.is_empty()).then_some(r)
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Pattern {
    key: String,
    parts: Vec<String>,
}

/// Matches surnames (possibly hyphenated) against word tokens.
#[derive(Debug, Clone)]
pub struct SurnameMatcher {
    patterns: Vec<Pattern>,
    mode: MatchMode,
}

impl SurnameMatcher {
    /// `surnames` are `(key, surname)` pairs; keys are reported back on match.
    pub fn new<'a, I>(surnames: I, config: &MatcherConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut patterns = Vec::new();
        for (key, surname) in surnames {
            let norm = normalize(surname.trim());
            if norm.is_empty() {
                return Err(Error::invalid(format!("entity {key} has an empty surname")));
            }
            let parts = norm
                .split('-')
                .map(|part| {
                    let chars: Vec<char> = part.chars().collect();
                    let keep = match config.mode {
                        MatchMode::Exact => chars.len(),
                        MatchMode::StemPrefix => chars.len().saturating_sub(config.suffix_strip).max(1),
                    };
                    chars[..keep.min(chars.len())].iter().collect::<String>()
                })
                .collect::<Vec<_>>();
            if parts.iter().any(String::is_empty) {
                return Err(Error::invalid(format!("surname `{surname}` has an empty part")));
            }
            patterns.push(Pattern {
                key: key.to_string(),
                parts,
            });
        }
        Ok(Self {
            patterns,
            mode: config.mode,
        })
    }

    pub fn from_entities(entities: &[Entity], config: &MatcherConfig) -> Result<Self> {
        Self::new(
            entities.iter().map(|e| (e.id.as_str(), e.surname.as_str())),
            config,
        )
    }

    fn token_matches(&self, pattern: &Pattern, token: &str) -> bool {
        let parts: Vec<&str> = token.split('-').collect();
        if parts.len() != pattern.parts.len() {
            return false;
        }
        parts.iter().zip(&pattern.parts).all(|(t, p)| match self.mode {
            MatchMode::Exact => t == p,
            MatchMode::StemPrefix => t.starts_with(p.as_str()),
        })
    }

    /// All `(pattern index, byte span)` matches in `text`, in text order.
    pub fn find(&self, text: &str) -> Vec<(usize, Range<usize>)> {
        let mut out = Vec::new();
        for span in token_spans(text) {
            let token = normalize(&text[span.clone()]);
            for (i, p) in self.patterns.iter().enumerate() {
                if self.token_matches(p, &token) {
                    out.push((i, span.clone()));
                }
            }
        }
        out
    }

    /// Keys with at least one match in `text`, deduplicated, in pattern order.
    pub fn matched_keys(&self, text: &str) -> Vec<&str> {
        let hit: BTreeSet<usize> = self.find(text).into_iter().map(|(i, _)| i).collect();
        hit.into_iter().map(|i| self.patterns[i].key.as_str()).collect()
    }

    pub fn key(&self, index: usize) -> &str {
        &self.patterns[index].key
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionStatus {
    Candidate,
    Confirmed,
    Rejected,
}

impl MentionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MentionStatus::Candidate => "candidate",
            MentionStatus::Confirmed => "confirmed",
            MentionStatus::Rejected => "rejected",
        }
    }
}

impl FromStr for MentionStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "candidate" => Ok(MentionStatus::Candidate),
            "confirmed" => Ok(MentionStatus::Confirmed),
            "rejected" => Ok(MentionStatus::Rejected),
            other => Err(Error::invalid(format!(
                "unknown mention status `{other}` (expected candidate, confirmed or rejected)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub snippet_id: String,
    pub matched_token: String,
    /// Byte range in the snippet's `clean_text`.
    pub byte_span: (usize, usize),
    pub status: MentionStatus,
}

/// Mentions per entity. Every audited entity has an entry, possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MentionIndex {
    pub entity_ids: Vec<String>,
    pub mentions: BTreeMap<String, Vec<Mention>>,
}

impl MentionIndex {
    pub fn for_entity(&self, entity_id: &str) -> &[Mention] {
        self.mentions.get(entity_id).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mention)> {
        self.entity_ids
            .iter()
            .flat_map(move |e| self.for_entity(e).iter().map(move |m| (e.as_str(), m)))
    }

    /// Distinct snippet ids with a confirmed mention of `entity_id`.
    pub fn confirmed_snippets(&self, entity_id: &str) -> BTreeSet<&str> {
        self.for_entity(entity_id)
            .iter()
            .filter(|m| m.status == MentionStatus::Confirmed)
            .map(|m| m.snippet_id.as_str())
            .collect()
    }

    pub fn all_confirmed_snippets(&self) -> BTreeSet<&str> {
        self.iter()
            .filter(|(_, m)| m.status == MentionStatus::Confirmed)
            .map(|(_, m)| m.snippet_id.as_str())
            .collect()
    }

    /// Promote every candidate to confirmed; rejected mentions stay rejected.
    pub fn auto_confirm(mut self) -> Self {
        for m in self.mentions.values_mut().flatten() {
            if m.status == MentionStatus::Candidate {
                m.status = MentionStatus::Confirmed;
            }
        }
        self
    }
}

pub fn detect_mentions(
    corpus: &Corpus,
    entities: &[Entity],
    config: &MatcherConfig,
) -> Result<MentionIndex> {
    let matcher = SurnameMatcher::from_entities(entities, config)?;
    let per_snippet: Vec<Vec<(usize, Mention)>> = corpus
        .snippets
        .par_iter()
        .map(|s| {
            matcher
                .find(&s.clean_text)
                .into_iter()
                .map(|(i, span)| {
                    (
                        i,
                        Mention {
                            snippet_id: s.id.clone(),
                            matched_token: s.clean_text[span.clone()].to_string(),
                            byte_span: (span.start, span.end),
                            status: MentionStatus::Candidate,
                        },
                    )
                })
                .collect()
        })
        .collect();

    let mut mentions: BTreeMap<String, Vec<Mention>> =
        entities.iter().map(|e| (e.id.clone(), Vec::new())).collect();
    for (i, m) in per_snippet.into_iter().flatten() {
        mentions.get_mut(matcher.key(i)).expect("entity key").push(m);
    }
    Ok(MentionIndex {
        entity_ids: entities.iter().map(|e| e.id.clone()).collect(),
        mentions,
    })
}

fn context_window(text: &str, span: (usize, usize)) -> String {
    let before: String = {
        let mut chars: Vec<char> = text[..span.0].chars().rev().take(REVIEW_CONTEXT_CHARS).collect();
        chars.reverse();
        chars.into_iter().collect()
    };
    let after: String = text[span.1..].chars().take(REVIEW_CONTEXT_CHARS).collect();
    format!("{before}{}{after}", &text[span.0..span.1])
}

/// Review CSV with one row per (entity, snippet) pair. `matched_token`
/// joins distinct matched forms with `|`.
pub fn export_review<W: Write>(index: &MentionIndex, corpus: &Corpus, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Backend(format!("review export: {e}"));
    w.write_record(["entity_id", "snippet_id", "matched_token", "context", "status"])
        .map_err(io)?;
    for entity in &index.entity_ids {
        let mut groups: Vec<(&str, Vec<&Mention>)> = Vec::new();
        for m in index.for_entity(entity) {
            match groups.last_mut() {
                Some((sid, ms)) if *sid == m.snippet_id => ms.push(m),
                _ => groups.push((&m.snippet_id, vec![m])),
            }
        }
        for (sid, ms) in groups {
            let mut tokens: Vec<&str> = Vec::new();
            for m in &ms {
                if !tokens.contains(&m.matched_token.as_str()) {
                    tokens.push(&m.matched_token);
                }
            }
            let context = corpus
                .get(sid)
                .map(|s| context_window(&s.clean_text, ms[0].byte_span))
                .unwrap_or_default();
            w.write_record([
                entity.as_str(),
                sid,
                &tokens.join("|"),
                &context,
                ms[0].status.as_str(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Backend(format!("review export: {e}")))?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ReviewRecord {
    entity_id: String,
    snippet_id: String,
    status: String,
}

/// Apply statuses from an edited review CSV. Pairs missing from the file
/// keep their current status.
pub fn import_review<R: Read>(index: &MentionIndex, reader: R, source: &str) -> Result<MentionIndex> {
    let mut out = index.clone();
    let mut rdr = csv::Reader::from_reader(reader);
    for (i, rec) in rdr.deserialize::<ReviewRecord>().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            record: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let status: MentionStatus = rec.status.parse().map_err(|e: Error| err(e.to_string()))?;
        let list = out
            .mentions
            .get_mut(&rec.entity_id)
            .ok_or_else(|| err(format!("unknown entity `{}`", rec.entity_id)))?;
        let mut hit = false;
        for m in list.iter_mut().filter(|m| m.snippet_id == rec.snippet_id) {
            m.status = status;
            hit = true;
        }
        if !hit {
            return Err(err(format!(
                "snippet `{}` has no mention of `{}`",
                rec.snippet_id, rec.entity_id
            )));
        }
    }
    Ok(out)
}

/// Remove every snippet with at least one confirmed mention.
pub fn prune(corpus: &Corpus, index: &MentionIndex) -> Corpus {
    let drop = index.all_confirmed_snippets();
    let before = corpus.len();
    let snippets: Vec<_> = corpus
        .snippets
        .iter()
        .filter(|s| !drop.contains(s.id.as_str()))
        .cloned()
        .collect();
    let removed = before - snippets.len();
    let mut out = Corpus {
        snippets,
        provenance: corpus.provenance.clone(),
    };
    let fraction = if before == 0 { 0.0 } else { removed as f64 / before as f64 };
    out.note(format!(
        "pruned {removed} of {before} snippets ({:.2}%)",
        fraction * 100.0
    ));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionStats {
    pub per_entity: BTreeMap<String, usize>,
    /// Distinct snippets with any confirmed mention.
    pub total: usize,
    pub min: usize,
    pub max: usize,
    pub median: f64,
}

/// Confirmed-mention counts (distinct snippets) per entity. With no entities
/// the aggregates are 0.
pub fn mention_stats(index: &MentionIndex) -> MentionStats {
    let per_entity: BTreeMap<String, usize> = index
        .entity_ids
        .iter()
        .map(|e| (e.clone(), index.confirmed_snippets(e).len()))
        .collect();
    let counts: Vec<f64> = per_entity.values().map(|&c| c as f64).collect();
    MentionStats {
        total: index.all_confirmed_snippets().len(),
        min: per_entity.values().copied().min().unwrap_or(0),
        max: per_entity.values().copied().max().unwrap_or(0),
        median: median(&counts).unwrap_or(0.0),
        per_entity,
    }
}

/// Upper end of the annotation scale (0–4).
pub const ANNOTATION_MAX: f64 = 4.0;

/// Per entity, the mean of `rating / 4 · 100` over confirmed snippets;
/// `None` for entities without confirmed mentions.
pub fn mean_mention_valence(
    annotations: &HashMap<String, f64>,
    index: &MentionIndex,
) -> Result<BTreeMap<String, Option<f64>>> {
    let mut out = BTreeMap::new();
    for e in &index.entity_ids {
        let snippets = index.confirmed_snippets(e);
        let mut sum = 0.0;
        for sid in &snippets {
            let r = *annotations.get(*sid).ok_or_else(|| {
                Error::invalid(format!("confirmed snippet `{sid}` ({e}) has no annotation"))
            })?;
            if !(0.0..=ANNOTATION_MAX).contains(&r) {
                return Err(Error::invalid(format!(
                    "annotation {r} for `{sid}` outside [0, {ANNOTATION_MAX}]"
                )));
            }
            sum += r / ANNOTATION_MAX * 100.0;
        }
        out.insert(
            e.clone(),
            (!snippets.is_empty()).then(|| sum / snippets.len() as f64),
        );
    }
    Ok(out)
}

/// Copy mention counts (and mention valence when given) onto entities.
pub fn apply_mention_stats(
    entities: &mut [Entity],
    stats: &MentionStats,
    valence: Option<&BTreeMap<String, Option<f64>>>,
) {
    for e in entities {
        if let Some(&c) = stats.per_entity.get(&e.id) {
            e.mention_count = c as u32;
        }
        if let Some(v) = valence.and_then(|m| m.get(&e.id)) {
            e.mean_mention_valence = *v;
        }
    }
}
