//! Probe entities and counterfactual stimulus rendering.
//!
//! Each entity is probed three ways: the bare full name, the name embedded
//! in neutral sentences, and the name embedded in political sentences.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NAME_PLACEHOLDER: &str = "[Name]";

pub const DEFAULT_ENTITIES_CSV: &str = include_str!("../data/entities.csv");
pub const DEFAULT_TEMPLATES_CSV: &str = include_str!("../data/templates.csv");

/// Ordered set of party labels. The first label is the default regression
/// reference level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartySet {
    pub labels: Vec<String>,
    /// `(alias, canonical)` pairs accepted when parsing.
    #[serde(default)]
    pub aliases: Vec<(String, String)>,
}

impl Default for PartySet {
    fn default() -> Self {
        Self {
            labels: ["ZP", "3D", "K", "KO", "Left"].map(String::from).to_vec(),
            aliases: vec![("TD".into(), "3D".into())],
        }
    }
}

impl PartySet {
    pub fn with_extra(mut self, extra: impl IntoIterator<Item = String>) -> Self {
        for label in extra {
            if !self.labels.contains(&label) {
                self.labels.push(label);
            }
        }
        self
    }

    pub fn parse(&self, raw: &str) -> Result<Party> {
        let raw = raw.trim();
        let canonical = self
            .aliases
            .iter()
            .find(|(alias, _)| alias == raw)
            .map_or(raw, |(_, c)| c.as_str());
        if self.labels.iter().any(|l| l == canonical) {
            Ok(Party(canonical.to_string()))
        } else {
            Err(Error::invalid(format!(
                "unknown party label `{raw}` (known: {})",
                self.labels.join(", ")
            )))
        }
    }

    pub fn index_of(&self, party: &Party) -> Option<usize> {
        self.labels.iter().position(|l| *l == party.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Party(pub String);

impl Party {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Man,
    Woman,
}

impl Gender {
    /// Regression coding: woman = 1, man = 0.
    pub fn code(self) -> f64 {
        match self {
            Gender::Man => 0.0,
            Gender::Woman => 1.0,
        }
    }
}

/// One poll's answer for an entity. `value = None` is a "don't know" /
/// "difficult to say" answer, recoded to the scale midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustResponse {
    pub scale: u8,
    pub value: Option<f64>,
}

impl FromStr for TrustResponse {
    type Err = Error;

    /// `scale:value`, e.g. `5:3.4`; `dk` (or empty value) means don't know.
    fn from_str(s: &str) -> Result<Self> {
        let (scale, value) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("trust survey `{s}` is not scale:value")))?;
        let scale: u8 = scale
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad trust scale in `{s}`")))?;
        let value = match value.trim() {
            "" | "dk" | "DK" => None,
            v => Some(
                v.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad trust value in `{s}`")))?,
            ),
        };
        Ok(TrustResponse { scale, value })
    }
}

impl fmt::Display for TrustResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Some(v) => write!(f, "{}:{v}", self.scale),
            None => write!(f, "{}:dk", self.scale),
        }
    }
}

/// Mean over surveys of each response min-max mapped onto [0, 1]; on a
/// `1..=k` scale the value `v` maps to `(v − 1) / (k − 1)`.
pub fn normalize_trust(responses: &[TrustResponse]) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::invalid("no trust survey responses"));
    }
    let mut total = 0.0;
    for r in responses {
        if !matches!(r.scale, 3 | 5) {
            return Err(Error::invalid(format!(
                "trust scale must be 3 or 5 points, got {}",
                r.scale
            )));
        }
        let k = f64::from(r.scale);
        let v = r.value.unwrap_or((k + 1.0) / 2.0);
        if !(1.0..=k).contains(&v) {
            return Err(Error::invalid(format!(
                "trust value {v} outside 1..={}",
                r.scale
            )));
        }
        total += (v - 1.0) / (k - 1.0);
    }
    Ok(total / responses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub full_name: String,
    pub surname: String,
    pub party: Party,
    pub gender: Gender,
    pub trust_raw: Vec<TrustResponse>,
    pub trust: Option<f64>,
    pub mention_count: u32,
    /// Mean annotated valence (0–100) of training texts mentioning the entity.
    pub mean_mention_valence: Option<f64>,
}

impl Entity {
    pub fn new(
        id: impl Into<String>,
        full_name: impl Into<String>,
        surname: impl Into<String>,
        party: Party,
        gender: Gender,
        mention_count: u32,
    ) -> Result<Self> {
        let e = Self {
            id: id.into(),
            full_name: full_name.into(),
            surname: surname.into(),
            party,
            gender,
            trust_raw: Vec::new(),
            trust: None,
            mention_count,
            mean_mention_valence: None,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn with_trust(mut self, responses: Vec<TrustResponse>) -> Result<Self> {
        self.trust = if responses.is_empty() {
            None
        } else {
            Some(normalize_trust(&responses)?)
        };
        self.trust_raw = responses;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.surname.trim().is_empty() {
            return Err(Error::invalid(format!("entity {}: empty surname", self.id)));
        }
        if !self.full_name.contains(&self.surname) {
            return Err(Error::invalid(format!(
                "entity {}: surname `{}` not found in `{}`",
                self.id, self.surname, self.full_name
            )));
        }
        if self.trust.is_some() != !self.trust_raw.is_empty() {
            return Err(Error::invalid(format!(
                "entity {}: trust score and survey data out of sync",
                self.id
            )));
        }
        if let Some(v) = self.mean_mention_valence {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "entity {}: mean mention valence {v} outside [0, 100]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct EntityRecord {
    id: String,
    full_name: String,
    surname: String,
    party: String,
    gender: String,
    mention_count: String,
    #[serde(default)]
    trust_surveys: Option<String>,
    #[serde(default)]
    mean_mention_valence: Option<String>,
}

pub fn load_entities(path: &Path, parties: &PartySet) -> Result<Vec<Entity>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_entities(file, &path.display().to_string(), parties)
}

/// Write entities in the same CSV layout `parse_entities` reads.
pub fn write_entities<W: std::io::Write>(entities: &[Entity], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Backend(format!("entity write: {e}"));
    w.write_record([
        "id",
        "full_name",
        "surname",
        "party",
        "gender",
        "mention_count",
        "trust_surveys",
        "mean_mention_valence",
    ])
    .map_err(io)?;
    for e in entities {
        let trust = e.trust_raw.iter().map(ToString::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            e.id.as_str(),
            &e.full_name,
            &e.surname,
            e.party.as_str(),
            match e.gender {
                Gender::Man => "0",
                Gender::Woman => "1",
            },
            &e.mention_count.to_string(),
            &trust,
            &e.mean_mention_valence.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Backend(format!("entity write: {e}")))?;
    Ok(())
}

/// The twenty shipped probe entities. Parties and genders are public;
/// mention counts, trust surveys and mention valences are synthetic.
pub fn default_entities() -> Vec<Entity> {
    parse_entities(DEFAULT_ENTITIES_CSV.as_bytes(), "<builtin entities>", &PartySet::default())
        .expect("shipped entity fixture parses")
}

pub fn parse_entities<R: Read>(reader: R, source: &str, parties: &PartySet) -> Result<Vec<Entity>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.deserialize::<EntityRecord>().enumerate() {
        let record = i + 1;
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            record,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let party = parties.parse(&rec.party).map_err(|e| err(e.to_string()))?;
        let gender = match rec.gender.trim() {
            "0" => Gender::Man,
            "1" => Gender::Woman,
            g => return Err(err(format!("gender must be 0 or 1, got `{g}`"))),
        };
        let mention_count: i64 = rec
            .mention_count
            .trim()
            .parse()
            .map_err(|_| err(format!("bad mention_count `{}`", rec.mention_count)))?;
        if mention_count < 0 {
            return Err(err(format!("negative mention_count {mention_count}")));
        }
        let mention_count = u32::try_from(mention_count)
            .map_err(|_| err(format!("mention_count {mention_count} too large")))?;
        let trust_raw = rec
            .trust_surveys
            .as_deref()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.split(';').map(str::parse).collect::<Result<Vec<TrustResponse>>>())
            .transpose()
            .map_err(|e| err(e.to_string()))?
            .unwrap_or_default();
        let mean_mention_valence = rec
            .mean_mention_valence
            .as_deref()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad mean_mention_valence `{s}`"))))
            .transpose()?;

        if !seen.insert(rec.id.clone()) {
            return Err(Error::Duplicate {
                kind: "entity id",
                key: rec.id,
            });
        }
        let mut entity = Entity::new(
            rec.id,
            rec.full_name.trim(),
            rec.surname.trim(),
            party,
            gender,
            mention_count,
        )
        .and_then(|e| e.with_trust(trust_raw))
        .map_err(|e| err(e.to_string()))?;
        entity.mean_mention_valence = mean_mention_valence;
        entity.validate().map_err(|e| err(e.to_string()))?;
        out.push(entity);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Neutral,
    Political,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    RawName,
    Neutral,
    Political,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::RawName, Condition::Neutral, Condition::Political];

    pub fn all() -> Vec<Condition> {
        Condition::ALL.to_vec()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::RawName => "raw_name",
            Condition::Neutral => "neutral",
            Condition::Political => "political",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw_name" => Ok(Condition::RawName),
            "neutral" => Ok(Condition::Neutral),
            "political" => Ok(Condition::Political),
            other => Err(Error::invalid(format!("unknown condition `{other}`"))),
        }
    }
}

impl From<TemplateKind> for Condition {
    fn from(k: TemplateKind) -> Self {
        match k {
            TemplateKind::Neutral => Condition::Neutral,
            TemplateKind::Political => Condition::Political,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub kind: TemplateKind,
    pub text: String,
}

impl Template {
    pub fn new(id: impl Into<String>, kind: TemplateKind, text: impl Into<String>) -> Result<Self> {
        let t = Self {
            id: id.into(),
            kind,
            text: text.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self.text.matches(NAME_PLACEHOLDER).count() {
            1 => Ok(()),
            n => Err(Error::invalid(format!(
                "template {} must contain exactly one {NAME_PLACEHOLDER}, found {n}",
                self.id
            ))),
        }
    }
}

pub fn load_templates(path: &Path) -> Result<Vec<Template>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_templates(file, &path.display().to_string())
}

/// The eight neutral and eight political Polish probe sentences.
pub fn default_templates() -> Vec<Template> {
    parse_templates(DEFAULT_TEMPLATES_CSV.as_bytes(), "<builtin templates>")
        .expect("shipped template fixture parses")
}

pub fn parse_templates<R: Read>(reader: R, source: &str) -> Result<Vec<Template>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.deserialize::<Template>().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            record: i + 1,
            message,
        };
        let t = rec.map_err(|e| err(e.to_string()))?;
        t.validate().map_err(|e| err(e.to_string()))?;
        if !seen.insert(t.id.clone()) {
            return Err(Error::Duplicate {
                kind: "template id",
                key: t.id,
            });
        }
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub entity_id: String,
    pub condition: Condition,
    pub template_id: Option<String>,
    pub text: String,
}

pub fn raw_name_stimulus(entity: &Entity) -> Stimulus {
    Stimulus {
        entity_id: entity.id.clone(),
        condition: Condition::RawName,
        template_id: None,
        text: entity.full_name.clone(),
    }
}

/// Substitute the entity's full name verbatim (no inflection) for the placeholder.
pub fn render_stimulus(template: &Template, entity: &Entity) -> Result<Stimulus> {
    template.validate()?;
    Ok(Stimulus {
        entity_id: entity.id.clone(),
        condition: template.kind.into(),
        template_id: Some(template.id.clone()),
        text: template.text.replacen(NAME_PLACEHOLDER, &entity.full_name, 1),
    })
}

/// Entities outer, templates inner; each entity contributes its raw-name
/// stimulus followed by one stimulus per template.
pub fn build_stimulus_matrix(entities: &[Entity], templates: &[Template]) -> Result<Vec<Stimulus>> {
    let mut out = Vec::with_capacity(entities.len() * (1 + templates.len()));
    for e in entities {
        out.push(raw_name_stimulus(e));
        for t in templates {
            out.push(render_stimulus(t, e)?);
        }
    }
    Ok(out)
}
