//! Scorer contract, built-in scorers, and score tables.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{load_lexicon, no_stem, score_text_vad, AffectiveLexicon};
use crate::pruning::{MatcherConfig, SurnameMatcher};
use crate::stimuli::{Condition, Entity, Stimulus};
use crate::util::{fnv1a, splitmix64};

/// A valence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct UnitValence(f64);

impl UnitValence {
    pub fn new(v: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&v) {
            Ok(Self(v))
        } else {
            Err(Error::Contract(format!("valence {v} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A valence in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Valence100(f64);

impl Valence100 {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn rescale(v: UnitValence) -> Valence100 {
    Valence100(v.0 * 100.0)
}

/// Any model producing a valence per text. `predict` returns raw values;
/// callers go through [`score_batch`], which enforces the contract.
pub trait Scorer: Send + Sync {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>>;
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        (**self).predict(texts)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        (**self).predict(texts)
    }
}

pub fn score_batch(scorer: &dyn Scorer, texts: &[String]) -> Result<Vec<UnitValence>> {
    if texts.is_empty() {
        return Err(Error::invalid("no texts to score"));
    }
    let raw = scorer.predict(texts)?;
    if raw.len() != texts.len() {
        return Err(Error::Contract(format!(
            "scorer returned {} values for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            UnitValence::new(v).map_err(|_| Error::Contract(format!("valence {v} at index {i} outside [0, 1]")))
        })
        .collect()
}

/// Mean matched valence mapped linearly onto `[0, 1]`; 0.5 when nothing matches.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    lexicon: AffectiveLexicon,
}

impl LexiconScorer {
    pub fn new(lexicon: AffectiveLexicon) -> Self {
        Self { lexicon }
    }

    pub fn score(&self, text: &str) -> f64 {
        let lex = &self.lexicon;
        match score_text_vad(text, lex, no_stem).means {
            Some(m) => (m.valence - lex.scale_min) / (lex.scale_max - lex.scale_min),
            None => 0.5,
        }
    }
}

impl Scorer for LexiconScorer {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }
}

/// Adds `δ` to a base scorer for texts mentioning a biased surname.
/// Texts naming several biased surnames receive the sum of their offsets.
pub struct SyntheticBiasedScorer {
    base: Box<dyn Scorer>,
    matcher: SurnameMatcher,
    deltas: HashMap<String, f64>,
}

impl SyntheticBiasedScorer {
    pub fn new(base: Box<dyn Scorer>, bias: &BTreeMap<String, f64>) -> Result<Self> {
        if let Some((s, d)) = bias.iter().find(|(_, d)| !(-1.0..=1.0).contains(*d)) {
            return Err(Error::invalid(format!("bias {d} for {s} outside [-1, 1]")));
        }
        let matcher = SurnameMatcher::new(
            bias.keys().map(|s| (s.as_str(), s.as_str())),
            &MatcherConfig::default(),
        )?;
        Ok(Self {
            base,
            matcher,
            deltas: bias.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        })
    }

    fn offset(&self, text: &str) -> f64 {
        self.matcher
            .matched_keys(text)
            .into_iter()
            .map(|k| self.deltas[k])
            .sum()
    }
}

impl Scorer for SyntheticBiasedScorer {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        let base = self.base.predict(texts)?;
        Ok(base
            .into_iter()
            .zip(texts)
            .map(|(b, t)| {
                let d = self.offset(t);
                if d == 0.0 { b } else { (b + d).clamp(0.0, 1.0) }
            })
            .collect())
    }
}

/// Deterministic pseudo-random scores `center ± amplitude`, keyed by text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScorer {
    pub center: f64,
    pub amplitude: f64,
    pub salt: u64,
}

impl NoiseScorer {
    pub fn score(&self, text: &str) -> f64 {
        let u = (splitmix64(fnv1a(text) ^ self.salt) >> 11) as f64 / (1u64 << 53) as f64;
        (self.center + self.amplitude * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }
}

impl Scorer for NoiseScorer {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }
}

/// Precomputed scores from a `text,valence` CSV.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    scores: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct TableRecord {
    text: String,
    valence: f64,
}

impl TableScorer {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, &path.display().to_string())
    }

    pub fn parse<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut scores = HashMap::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, rec) in rdr.deserialize::<TableRecord>().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                path: source.to_string(),
                record: i + 1,
                message: e.to_string(),
            })?;
            if scores.insert(rec.text.clone(), rec.valence).is_some() {
                return Err(Error::Duplicate {
                    kind: "scored text",
                    key: rec.text,
                });
            }
        }
        Ok(Self { scores })
    }
}

impl Scorer for TableScorer {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                self.scores
                    .get(t)
                    .copied()
                    .ok_or_else(|| Error::Contract(format!("no score for text {i}: `{t}`")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_batch_size() -> usize {
    64
}
fn default_timeout_secs() -> f64 {
    30.0
}
fn default_retries() -> usize {
    3
}
fn default_parallelism() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_size: default_batch_size(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            parallelism: default_parallelism(),
        }
    }
}

/// JSON-over-HTTP client for `POST <endpoint>/score`.
pub struct RemoteScorer {
    config: RemoteConfig,
    url: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    valence: Vec<f64>,
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let base = config.endpoint.trim_end_matches('/');
        let host = base
            .strip_prefix("http://")
            .or_else(|| base.strip_prefix("https://"))
            .unwrap_or("");
        if host.is_empty() {
            return Err(Error::Config(format!("endpoint `{}` is not an http(s) URL", config.endpoint)));
        }
        if config.batch_size == 0 || config.parallelism == 0 {
            return Err(Error::Config("batch_size and parallelism must be positive".into()));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            url: format!("{base}/score"),
            config,
            agent,
        })
    }

    fn post(&self, texts: &[String]) -> std::result::Result<Vec<f64>, (bool, String)> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(ScoreRequest { texts })
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let transient = status == 429 || status >= 500;
            return Err((transient, format!("HTTP {status}")));
        }
        let body: ScoreResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("bad response body: {e}")))?;
        Ok(body.valence)
    }

    fn batch(&self, offset: usize, texts: &[String]) -> Result<Vec<f64>> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            match self.post(texts) {
                Ok(v) => {
                    if v.len() != texts.len() {
                        return Err(Error::Contract(format!(
                            "backend returned {} scores for batch of {} at offset {offset}",
                            v.len(),
                            texts.len()
                        )));
                    }
                    if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                        return Err(Error::Contract(format!(
                            "valence {} at index {} outside [0, 1]",
                            v[i],
                            offset + i
                        )));
                    }
                    return Ok(v);
                }
                Err((false, msg)) => {
                    return Err(Error::Backend(format!("{}: {msg}", self.url)));
                }
                Err((true, msg)) => last = msg,
            }
        }
        Err(Error::Backend(format!(
            "{} unreachable after {} attempts: {last}",
            self.url,
            self.config.retries + 1
        )))
    }
}

impl Scorer for RemoteScorer {
    fn predict(&self, texts: &[String]) -> Result<Vec<f64>> {
        let chunks: Vec<(usize, &[String])> = texts
            .chunks(self.config.batch_size)
            .enumerate()
            .map(|(i, c)| (i * self.config.batch_size, c))
            .collect();
        let results: Mutex<Vec<Option<Result<Vec<f64>>>>> =
            Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.config.parallelism.min(chunks.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(offset, chunk)) = chunks.get(i) else { break };
                    let r = self.batch(offset, chunk);
                    let failed = r.is_err();
                    results.lock().expect("result lock")[i] = Some(r);
                    if failed {
                        next.store(chunks.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results.into_inner().expect("result lock") {
            match r {
                Some(r) => out.extend(r?),
                None => return Err(Error::Backend("batch abandoned after an earlier failure".into())),
            }
        }
        Ok(out)
    }
}

fn default_center() -> f64 {
    0.5
}
fn default_amplitude() -> f64 {
    0.01
}
fn default_scale_min() -> f64 {
    AffectiveLexicon::DEFAULT_SCALE.0
}
fn default_scale_max() -> f64 {
    AffectiveLexicon::DEFAULT_SCALE.1
}

/// Declarative scorer description used by config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    Remote(RemoteConfig),
    Lexicon {
        path: PathBuf,
        #[serde(default = "default_scale_min")]
        scale_min: f64,
        #[serde(default = "default_scale_max")]
        scale_max: f64,
    },
    Table {
        path: PathBuf,
    },
    Noise {
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        salt: u64,
    },
    /// `base` shifted by `bias[surname]`, or by `party_bias[party]` for every
    /// entity of that party.
    Biased {
        base: Box<ScorerSpec>,
        #[serde(default)]
        bias: BTreeMap<String, f64>,
        #[serde(default)]
        party_bias: BTreeMap<String, f64>,
    },
}

impl ScorerSpec {
    /// Resolve relative paths against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        match self {
            ScorerSpec::Lexicon { path, .. } | ScorerSpec::Table { path } => {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
            ScorerSpec::Biased { base, .. } => base.resolve_paths(dir),
            _ => {}
        }
    }

    pub fn build(&self, entities: &[Entity]) -> Result<Box<dyn Scorer>> {
        Ok(match self {
            ScorerSpec::Remote(c) => Box::new(RemoteScorer::new(c.clone())?),
            ScorerSpec::Lexicon {
                path,
                scale_min,
                scale_max,
            } => Box::new(LexiconScorer::new(load_lexicon(path, (*scale_min, *scale_max))?)),
            ScorerSpec::Table { path } => Box::new(TableScorer::load(path)?),
            ScorerSpec::Noise {
                center,
                amplitude,
                salt,
            } => Box::new(NoiseScorer {
                center: *center,
                amplitude: *amplitude,
                salt: *salt,
            }),
            ScorerSpec::Biased {
                base,
                bias,
                party_bias,
            } => {
                let mut all = bias.clone();
                for (party, d) in party_bias {
                    let members: Vec<&Entity> = entities.iter().filter(|e| e.party.0 == *party).collect();
                    if members.is_empty() {
                        return Err(Error::Config(format!("party_bias names `{party}` but no entity belongs to it")));
                    }
                    for e in members {
                        *all.entry(e.surname.clone()).or_insert(0.0) += d;
                    }
                }
                Box::new(SyntheticBiasedScorer::new(base.build(entities)?, &all)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub entity_id: String,
    pub condition: Condition,
    pub template_id: Option<String>,
    pub valence100: f64,
}

/// Score every stimulus, keeping stimulus order.
pub fn probe(scorer: &dyn Scorer, stimuli: &[Stimulus]) -> Result<Vec<ScoreRow>> {
    let texts: Vec<String> = stimuli.iter().map(|s| s.text.clone()).collect();
    let scores = score_batch(scorer, &texts)?;
    Ok(stimuli
        .iter()
        .zip(scores)
        .map(|(s, v)| ScoreRow {
            entity_id: s.entity_id.clone(),
            condition: s.condition,
            template_id: s.template_id.clone(),
            valence100: rescale(v).value(),
        })
        .collect())
}

pub fn write_score_rows<W: Write>(rows: &[ScoreRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Backend(format!("score table write: {e}"));
    w.write_record(["entity_id", "condition", "template_id", "valence100"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.entity_id.as_str(),
            r.condition.as_str(),
            r.template_id.as_deref().unwrap_or(""),
            &r.valence100.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Backend(format!("score table write: {e}")))?;
    Ok(())
}

#[derive(Deserialize)]
struct ScoreRecord {
    entity_id: String,
    condition: String,
    template_id: String,
    valence100: f64,
}

pub fn read_score_rows<R: Read>(reader: R, source: &str) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ScoreRecord>().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            record: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let condition = rec.condition.parse().map_err(|e: Error| err(e.to_string()))?;
        if !(0.0..=100.0).contains(&rec.valence100) {
            return Err(err(format!("valence100 {} outside [0, 100]", rec.valence100)));
        }
        out.push(ScoreRow {
            entity_id: rec.entity_id,
            condition,
            template_id: (!rec.template_id.is_empty()).then_some(rec.template_id),
            valence100: rec.valence100,
        });
    }
    Ok(out)
}

/// Per-(entity, condition) template means on the 0–100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
    pub means: BTreeMap<String, BTreeMap<Condition, f64>>,
}

impl ScoreTable {
    pub fn get(&self, entity_id: &str, condition: Condition) -> Option<f64> {
        self.means.get(entity_id)?.get(&condition).copied()
    }

    pub fn conditions(&self) -> Vec<Condition> {
        let mut out: Vec<Condition> = self.means.values().flat_map(|m| m.keys().copied()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Values for `condition` in `entity_ids` order.
    pub fn column(&self, entity_ids: &[String], condition: Condition) -> Result<Vec<f64>> {
        entity_ids
            .iter()
            .map(|e| {
                self.get(e, condition).ok_or_else(|| {
                    Error::invalid(format!("no {condition} score for entity {e}"))
                })
            })
            .collect()
    }
}

/// Every entity must have at least one row for each condition present.
pub fn aggregate_scores(rows: Vec<ScoreRow>) -> Result<ScoreTable> {
    let mut acc: BTreeMap<String, BTreeMap<Condition, (f64, usize)>> = BTreeMap::new();
    for r in &rows {
        let cell = acc
            .entry(r.entity_id.clone())
            .or_default()
            .entry(r.condition)
            .or_insert((0.0, 0));
        cell.0 += r.valence100;
        cell.1 += 1;
    }
    let conditions: Vec<Condition> = {
        let mut c: Vec<Condition> = acc.values().flat_map(|m| m.keys().copied()).collect();
        c.sort();
        c.dedup();
        c
    };
    for (e, m) in &acc {
        if let Some(c) = conditions.iter().find(|c| !m.contains_key(c)) {
            return Err(Error::invalid(format!("entity {e} has no {c} scores")));
        }
    }
    let means = acc
        .into_iter()
        .map(|(e, m)| {
            (
                e,
                m.into_iter()
                    .map(|(c, (sum, n))| (c, sum / n as f64))
                    .collect(),
            )
        })
        .collect();
    Ok(ScoreTable { rows, means })
}
