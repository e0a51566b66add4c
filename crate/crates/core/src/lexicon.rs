//! Affective-norms lexicon scoring and emotion-weighted corpus sampling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vad {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectiveLexicon {
    entries: HashMap<String, Vad>,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl AffectiveLexicon {
    pub const DEFAULT_SCALE: (f64, f64) = (1.0, 9.0);

    pub fn new(scale_min: f64, scale_max: f64) -> Result<Self> {
        if !(scale_min < scale_max) {
            return Err(Error::invalid(format!(
                "lexicon scale [{scale_min}, {scale_max}] is empty"
            )));
        }
        Ok(Self {
            entries: HashMap::new(),
            scale_min,
            scale_max,
        })
    }

    pub fn insert(&mut self, word: &str, norms: Vad) -> Result<()> {
        for (dim, v) in [
            ("valence", norms.valence),
            ("arousal", norms.arousal),
            ("dominance", norms.dominance),
        ] {
            if !(self.scale_min..=self.scale_max).contains(&v) {
                return Err(Error::invalid(format!(
                    "{dim} {v} for `{word}` outside [{}, {}]",
                    self.scale_min, self.scale_max
                )));
            }
        }
        let key = fold(word);
        if self.entries.contains_key(&key) {
            return Err(Error::Duplicate {
                kind: "lexicon word",
                key,
            });
        }
        self.entries.insert(key, norms);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&Vad> {
        self.entries.get(&fold(word))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn midpoint(&self) -> f64 {
        (self.scale_min + self.scale_max) / 2.0
    }
}

fn fold(word: &str) -> String {
    word.trim().to_lowercase()
}

#[derive(Debug, Deserialize)]
struct LexiconRecord {
    word: String,
    valence: String,
    arousal: String,
    dominance: String,
}

/// Load a `word,valence,arousal,dominance` CSV; norms must lie in
/// `[scale_min, scale_max]`.
pub fn load_lexicon(path: &Path, scale: (f64, f64)) -> Result<AffectiveLexicon> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(file, &path.display().to_string(), scale)
}

pub fn parse_lexicon<R: std::io::Read>(
    reader: R,
    source: &str,
    (scale_min, scale_max): (f64, f64),
) -> Result<AffectiveLexicon> {
    let mut lex = AffectiveLexicon::new(scale_min, scale_max)?;
    let mut rdr = csv::Reader::from_reader(reader);
    for (i, rec) in rdr.deserialize::<LexiconRecord>().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            record: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num = |name: &str, raw: &str| {
            raw.trim()
                .parse::<f64>()
                .map_err(|_| err(format!("{name} `{raw}` is not a number")))
        };
        let norms = Vad {
            valence: num("valence", &rec.valence)?,
            arousal: num("arousal", &rec.arousal)?,
            dominance: num("dominance", &rec.dominance)?,
        };
        match lex.insert(&rec.word, norms) {
            Err(e @ Error::Duplicate { .. }) => return Err(e),
            Err(e) => return Err(err(e.to_string())),
            Ok(()) => {}
        }
    }
    Ok(lex)
}

/// Mean lexicon norms over matched tokens. `means` is `None` when no token
/// matched, so an unmatched text is never mistaken for a measured zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadScore {
    pub means: Option<Vad>,
    pub matched_words: usize,
}

impl VadScore {
    pub fn is_absent(&self) -> bool {
        self.means.is_none()
    }
}

/// Split on anything that is not a letter, digit, or in-word hyphen/apostrophe.
pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .map(|t| t.trim_matches(|c| c == '-' || c == '\''))
        .filter(|t| !t.is_empty())
}

pub fn score_text_vad<S>(text: &str, lexicon: &AffectiveLexicon, stem: S) -> VadScore
where
    S: Fn(&str) -> String,
{
    let (mut v, mut a, mut d, mut n) = (0.0, 0.0, 0.0, 0usize);
    for token in tokenize(text) {
        if let Some(norms) = lexicon.get(&stem(&token.to_lowercase())) {
            v += norms.valence;
            a += norms.arousal;
            d += norms.dominance;
            n += 1;
        }
    }
    VadScore {
        means: (n > 0).then(|| {
            let k = n as f64;
            Vad {
                valence: v / k,
                arousal: a / k,
                dominance: d / k,
            }
        }),
        matched_words: n,
    }
}

/// Identity stemmer.
pub fn no_stem(token: &str) -> String {
    token.to_string()
}

/// Sum of the three mean dimensions; 0 for texts without lexicon matches.
pub fn emotional_weight(score: &VadScore) -> f64 {
    score
        .means
        .map_or(0.0, |m| m.valence + m.arousal + m.dominance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleStage {
    Weighted,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub weight: f64,
    pub stage: SampleStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightedStage {
    /// Draw without replacement with probability proportional to weight.
    Proportional,
    /// Take the highest weights (ties by corpus order).
    TopK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub corpus: Corpus,
    pub manifest: Vec<ManifestRow>,
}

impl WeightedSample {
    /// Manifest CSV `id,weight,stage`.
    pub fn write_manifest<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Backend(format!("manifest write: {e}"));
        w.write_record(["id", "weight", "stage"]).map_err(io)?;
        for row in &self.manifest {
            let stage = match row.stage {
                SampleStage::Weighted => "weighted",
                SampleStage::Unweighted => "unweighted",
            };
            w.write_record([row.id.as_str(), &row.weight.to_string(), stage])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Backend(format!("manifest write: {e}")))?;
        Ok(())
    }
}

/// Two-stage sample: `n_weighted` snippets by weight, then `n_unweighted`
/// uniformly from the rest. The proportional stage uses exponential keys
/// (`u^(1/w)`, largest first), which matches sequential draws with
/// renormalization.
pub fn weighted_sample(
    corpus: &Corpus,
    weights: &[f64],
    n_weighted: usize,
    n_unweighted: usize,
    seed: u64,
    stage: WeightedStage,
) -> Result<WeightedSample> {
    let n = corpus.len();
    if weights.len() != n {
        return Err(Error::invalid(format!(
            "{} weights for {n} snippets",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!(
            "weight {i} must be finite and non-negative, got {}",
            weights[i]
        )));
    }
    if n_weighted + n_unweighted > n {
        return Err(Error::invalid(format!(
            "requested {} snippets from a corpus of {n}",
            n_weighted + n_unweighted
        )));
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if n_weighted > 0 && positive == 0 {
        return Err(Error::invalid("all weights are zero but a weighted draw was requested"));
    }
    if n_weighted > positive {
        return Err(Error::invalid(format!(
            "only {positive} snippets have positive weight; cannot draw {n_weighted}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = match stage {
        WeightedStage::Proportional => {
            let mut keyed: Vec<(f64, usize)> = weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| {
                    let u: f64 = rng.random::<f64>();
                    // ln(u)/w orders identically to u^(1/w) without underflow.
                    (u.ln() / w, i)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().take(n_weighted).map(|(_, i)| i).collect()
        }
        WeightedStage::TopK => {
            let mut idx: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
            idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
            idx.truncate(n_weighted);
            idx
        }
    };

    let mut taken = vec![false; n];
    for &i in &chosen {
        taken[i] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    let uniform: Vec<usize> = sample(&mut rng, rest.len(), n_unweighted)
        .into_iter()
        .map(|j| rest[j])
        .collect();

    let mut manifest = Vec::with_capacity(n_weighted + n_unweighted);
    let mut snippets = Vec::with_capacity(n_weighted + n_unweighted);
    for (stage, idxs) in [(SampleStage::Weighted, &chosen), (SampleStage::Unweighted, &uniform)] {
        for &i in idxs {
            snippets.push(corpus.snippets[i].clone());
            manifest.push(ManifestRow {
                id: corpus.snippets[i].id.clone(),
                weight: weights[i],
                stage,
            });
        }
    }
    let mut out = Corpus {
        snippets,
        provenance: corpus.provenance.clone(),
    };
    out.note(format!(
        "sampled {n_weighted} weighted ({}) + {n_unweighted} unweighted, seed {seed}",
        match stage {
            WeightedStage::Proportional => "proportional",
            WeightedStage::TopK => "top-k",
        }
    ));
    Ok(WeightedSample {
        corpus: out,
        manifest,
    })
}
