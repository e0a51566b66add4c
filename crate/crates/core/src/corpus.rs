//! Corpus ingestion, cleaning, sentence splitting and language filtering.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LINK_SENTINEL: &str = "_link_";
pub const USER_SENTINEL: &str = "_user_";
pub const DEFAULT_MAX_LEN: usize = 280;

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").expect("url pattern"));
static USER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@+\w+").expect("user pattern"));

/// Leading scrape timestamps such as `2021-03-04 12:33` or `04.03.2021`.
pub const DEFAULT_DATE_PREFIX: &str =
    r"^(?:\s*\d{1,4}[-./]\d{1,2}[-./]\d{1,4}(?:[ T]\d{1,2}:\d{2}(?::\d{2})?)?(?:\s+|$))+";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Twitter,
    Youtube,
    Facebook,
    Other,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Twitter => "twitter",
            Platform::Youtube => "youtube",
            Platform::Facebook => "facebook",
            Platform::Other => "other",
        }
    }
}

impl FromStr for Platform {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().to_lowercase().as_str() {
            "twitter" | "x" => Platform::Twitter,
            "youtube" => Platform::Youtube,
            "facebook" => Platform::Facebook,
            _ => Platform::Other,
        })
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSnippet {
    pub id: String,
    pub platform: Platform,
    pub raw_text: String,
    pub clean_text: String,
}

impl TextSnippet {
    pub fn new(id: impl Into<String>, platform: Platform, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            platform,
            clean_text: text.clone(),
            raw_text: text,
        }
    }

    /// Length of `clean_text` in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.clean_text.chars().count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub format: Option<String>,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub snippets: Vec<TextSnippet>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn from_snippets(snippets: Vec<TextSnippet>) -> Result<Self> {
        let corpus = Self {
            snippets,
            provenance: Provenance::default(),
        };
        corpus.check_unique_ids()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TextSnippet> {
        self.snippets.iter().find(|s| s.id == id)
    }

    pub fn note(&mut self, step: impl Into<String>) {
        self.provenance.steps.push(step.into());
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.snippets.len());
        for s in &self.snippets {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Duplicate {
                    kind: "snippet id",
                    key: s.id.clone(),
                });
            }
        }
        Ok(())
    }

    /// CSV with header `id,platform,text,clean_text`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Backend(format!("csv write: {e}"));
        w.write_record(["id", "platform", "text", "clean_text"]).map_err(io)?;
        for s in &self.snippets {
            w.write_record([s.id.as_str(), s.platform.as_str(), &s.raw_text, &s.clean_text])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Backend(format!("csv write: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(CorpusFormat::Csv),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            CorpusFormat::Csv => "csv",
            CorpusFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    platform: Option<String>,
    text: Option<String>,
    #[serde(default)]
    clean_text: Option<String>,
}

impl RawRecord {
    fn into_snippet(self) -> std::result::Result<TextSnippet, String> {
        let id = self.id.ok_or("missing `id`")?;
        let platform = self.platform.ok_or("missing `platform`")?;
        let text = self.text.ok_or("missing `text`")?;
        let mut s = TextSnippet::new(id, platform.parse().unwrap_or(Platform::Other), text);
        if let Some(clean) = self.clean_text {
            s.clean_text = clean;
        }
        Ok(s)
    }
}

/// Load `id,platform,text` records. A `clean_text` column, when present
/// (as written by [`Corpus::write_csv`]), is kept; otherwise
/// `clean_text = text`.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let snippets = match format {
        CorpusFormat::Csv => read_csv_records(file, &source)?,
        CorpusFormat::Jsonl => read_jsonl_records(BufReader::new(file), &source)?,
    };
    let mut corpus = Corpus::from_snippets(snippets)?;
    corpus.provenance.source = Some(source);
    corpus.provenance.format = Some(format.as_str().to_string());
    corpus.note(format!("loaded {} snippets", corpus.len()));
    Ok(corpus)
}

fn read_csv_records<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<TextSnippet>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: source.into(),
            record: 0,
            message: e.to_string(),
        })?
        .clone();
    for required in ["id", "platform", "text"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse {
                path: source.into(),
                record: 0,
                message: format!("header lacks `{required}` column"),
            });
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<RawRecord>().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.into(),
            record: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        out.push(rec.into_snippet().map_err(err)?);
    }
    Ok(out)
}

fn read_jsonl_records<R: BufRead>(reader: R, source: &str) -> Result<Vec<TextSnippet>> {
    let mut out = Vec::new();
    let mut record = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        record += 1;
        let err = |message: String| Error::Parse {
            path: source.into(),
            record,
            message,
        };
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        out.push(rec.into_snippet().map_err(err)?);
    }
    Ok(out)
}

/// Text normalizer: strips a leading scrape-date artifact, then replaces
/// links with `_link_` and @-handles with `_user_`.
#[derive(Debug, Clone)]
pub struct Cleaner {
    date_prefix: Option<Regex>,
}

impl Default for Cleaner {
    fn default() -> Self {
        Self {
            date_prefix: Some(Regex::new(DEFAULT_DATE_PREFIX).expect("date pattern")),
        }
    }
}

impl Cleaner {
    /// `pattern` should be anchored with `^`; `None` disables date stripping.
    pub fn with_date_prefix(pattern: Option<&str>) -> Result<Self> {
        let date_prefix = pattern
            .map(|p| Regex::new(p).map_err(|e| Error::invalid(format!("date pattern: {e}"))))
            .transpose()?;
        Ok(Self { date_prefix })
    }

    pub fn clean(&self, text: &str) -> String {
        let text = match &self.date_prefix {
            Some(re) => re.replace(text, ""),
            None => text.into(),
        };
        let text = URL_RE.replace_all(&text, LINK_SENTINEL);
        USER_RE.replace_all(&text, USER_SENTINEL).into_owned()
    }

    pub fn clean_corpus(&self, mut corpus: Corpus) -> Corpus {
        for s in &mut corpus.snippets {
            s.clean_text = self.clean(&s.clean_text);
        }
        corpus.note("cleaned links, user handles and date prefixes");
        corpus
    }
}

/// [`Cleaner::clean`] with the default date pattern.
pub fn clean_text(text: &str) -> String {
    static DEFAULT: LazyLock<Cleaner> = LazyLock::new(Cleaner::default);
    DEFAULT.clean(text)
}

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub max_len: usize,
    pub terminators: Vec<char>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            terminators: vec!['.', '!', '?'],
        }
    }
}

/// Split `text` after every terminator that is followed by whitespace.
/// Pieces are trimmed; empty pieces are skipped.
pub fn split_sentences(text: &str, terminators: &[char]) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if terminators.contains(&c) {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let piece = text[start..end].trim();
                    if !piece.is_empty() {
                        out.push(piece.to_string());
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Facebook snippets become one child per sentence (`<id>#<k>`, k from 1);
/// any snippet whose clean text exceeds `max_len` characters is dropped.
pub fn split_and_limit(snippet: &TextSnippet, config: &SplitConfig) -> Result<Vec<TextSnippet>> {
    if config.max_len == 0 {
        return Err(Error::invalid("max_len must be positive"));
    }
    let fits = |s: &TextSnippet| s.char_len() <= config.max_len;
    if snippet.platform != Platform::Facebook {
        return Ok(if fits(snippet) {
            vec![snippet.clone()]
        } else {
            Vec::new()
        });
    }
    Ok(split_sentences(&snippet.clean_text, &config.terminators)
        .into_iter()
        .enumerate()
        .map(|(k, sentence)| TextSnippet {
            id: format!("{}#{}", snippet.id, k + 1),
            platform: snippet.platform,
            raw_text: snippet.raw_text.clone(),
            clean_text: sentence,
        })
        .filter(fits)
        .collect())
}

pub fn split_corpus(corpus: Corpus, config: &SplitConfig) -> Result<Corpus> {
    let before = corpus.len();
    let mut snippets = Vec::with_capacity(before);
    for s in &corpus.snippets {
        snippets.extend(split_and_limit(s, config)?);
    }
    let mut out = Corpus {
        snippets,
        provenance: corpus.provenance,
    };
    out.check_unique_ids()?;
    out.note(format!(
        "split facebook posts and dropped texts over {} chars: {before} -> {}",
        config.max_len,
        out.len()
    ));
    Ok(out)
}

/// Keep snippets whose clean text satisfies `is_target_language`.
pub fn filter_language<F>(corpus: Corpus, is_target_language: F) -> Corpus
where
    F: Fn(&str) -> bool,
{
    let before = corpus.len();
    let snippets: Vec<TextSnippet> = corpus
        .snippets
        .into_iter()
        .filter(|s| is_target_language(&s.clean_text))
        .collect();
    let mut out = Corpus {
        snippets,
        provenance: corpus.provenance,
    };
    out.note(format!("language filter: {before} -> {}", out.len()));
    out
}

/// Cheap Polish heuristic for the CLI: text contains a Polish diacritic.
pub fn has_polish_diacritic(text: &str) -> bool {
    text.chars().any(|c| "ąćęłńóśźżĄĆĘŁŃÓŚŹŻ".contains(c))
}
