//! One-way random-effects intraclass correlation, ICC(1).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Texts × raters grid; a missing cell means that rater did not rate the text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsMatrix {
    pub text_ids: Vec<String>,
    pub rater_ids: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl RatingsMatrix {
    /// Build from `(text_id, rater_id, rating)` triples. Rows and columns are
    /// ordered by first appearance.
    pub fn from_triples<'a, I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let mut text_idx: BTreeMap<String, usize> = BTreeMap::new();
        let mut rater_idx: BTreeMap<String, usize> = BTreeMap::new();
        let mut text_ids = Vec::new();
        let mut rater_ids = Vec::new();
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        for (t, r, v) in triples {
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite rating for text {t}")));
            }
            let ti = *text_idx.entry(t.to_string()).or_insert_with(|| {
                text_ids.push(t.to_string());
                text_ids.len() - 1
            });
            let ri = *rater_idx.entry(r.to_string()).or_insert_with(|| {
                rater_ids.push(r.to_string());
                rater_ids.len() - 1
            });
            cells.push((ti, ri, v));
        }
        let mut values = vec![vec![None; rater_ids.len()]; text_ids.len()];
        for (ti, ri, v) in cells {
            if values[ti][ri].replace(v).is_some() {
                return Err(Error::Duplicate {
                    kind: "rating",
                    key: format!("{}/{}", text_ids[ti], rater_ids[ri]),
                });
            }
        }
        Ok(Self {
            text_ids,
            rater_ids,
            values,
        })
    }

    /// Complete grid from plain rows (one row per text).
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let k = rows.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            text_ids: (0..rows.len()).map(|i| format!("t{i}")).collect(),
            rater_ids: (0..k).map(|j| format!("r{j}")).collect(),
            values: rows
                .iter()
                .map(|r| (0..k).map(|j| r.get(j).copied()).collect())
                .collect(),
        }
    }

    pub fn ratings_for(&self, text: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[text].iter().flatten().copied()
    }

    /// Per-text mean of the available ratings, keyed by text id.
    pub fn text_means(&self) -> BTreeMap<String, f64> {
        self.text_ids
            .iter()
            .enumerate()
            .filter_map(|(i, id)| {
                let (s, c) = self.ratings_for(i).fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                (c > 0).then(|| (id.clone(), s / c as f64))
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct AnnotationRecord {
    text_id: String,
    rater_id: String,
    valence: String,
}

/// Read `text_id,rater_id,valence` rows; ratings are integers in `0..=max`.
pub fn parse_annotations<R: std::io::Read>(reader: R, source: &str, max: u32) -> Result<RatingsMatrix> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut triples = Vec::new();
    for (i, rec) in rdr.deserialize::<AnnotationRecord>().enumerate() {
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            record: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let v: u32 = rec
            .valence
            .trim()
            .parse()
            .map_err(|_| err(format!("valence `{}` is not an integer", rec.valence)))?;
        if v > max {
            return Err(err(format!("valence {v} outside 0..={max}")));
        }
        triples.push((rec.text_id, rec.rater_id, f64::from(v)));
    }
    if triples.is_empty() {
        return Err(Error::invalid(format!("{source}: no annotations")));
    }
    RatingsMatrix::from_triples(triples.iter().map(|(t, r, v)| (t.as_str(), r.as_str(), *v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccSummary {
    pub icc: f64,
    pub ms_between: f64,
    pub ms_within: f64,
    /// Effective group size; equals k for balanced designs.
    pub k0: f64,
    pub n_texts: usize,
    pub n_ratings: usize,
}

pub fn icc1(ratings: &RatingsMatrix) -> Result<f64> {
    icc1_summary(ratings).map(|s| s.icc)
}

/// `ICC(1) = (MSB − MSW) / (MSB + (k₀ − 1) MSW)` with
/// `k₀ = (N − Σkᵢ²/N) / (n − 1)`.
pub fn icc1_summary(ratings: &RatingsMatrix) -> Result<IccSummary> {
    let groups: Vec<Vec<f64>> = (0..ratings.values.len())
        .map(|i| ratings.ratings_for(i).collect())
        .collect();
    let n = groups.len();
    if n < 2 {
        return Err(Error::invalid("ICC needs at least two texts"));
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::invalid(format!(
            "text {} has fewer than two ratings",
            ratings.text_ids[i]
        )));
    }

    let big_n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / big_n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in &groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let ms_between = ss_between / (n - 1) as f64;
    let ms_within = ss_within / (big_n - n) as f64;
    if ms_between == 0.0 && ms_within == 0.0 {
        return Err(Error::Degenerate(
            "all ratings identical; ICC undefined".into(),
        ));
    }
    let sum_k2: f64 = groups.iter().map(|g| (g.len() * g.len()) as f64).sum();
    let k0 = (big_n as f64 - sum_k2 / big_n as f64) / (n - 1) as f64;
    let icc = (ms_between - ms_within) / (ms_between + (k0 - 1.0) * ms_within);
    Ok(IccSummary {
        icc,
        ms_between,
        ms_within,
        k0,
        n_texts: n,
        n_ratings: big_n,
    })
}
