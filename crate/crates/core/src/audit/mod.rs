//! End-to-end audit: probe scorers, fit the model battery, and assemble reports.

mod figure;
mod output;
mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::{aggregate_scores, probe, ScoreTable, Scorer, ScorerSpec};
use crate::stats::{
    descriptives, design_matrix, permutation_test, pooled_sd, qq_data, wls_fit_named, Descriptives,
    DesignSpec, PermutationConfig, QqPoint, RegressionResult, DEFAULT_N_PERM,
};
use crate::stimuli::{
    build_stimulus_matrix, default_entities, default_templates, load_entities, load_templates,
    Condition, Entity, PartySet, Template,
};
use crate::util::derive_seed;

pub use figure::{figure_scatter, render_svg, write_scatter_csv, ScatterPoint, MIN_MARKER_AREA};
pub use output::write_report;
pub use render::{format_cell, format_p, render_table, RenderedTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSet {
    pub original: ScorerSpec,
    #[serde(default)]
    pub modified: Option<ScorerSpec>,
}

fn default_n_perm() -> usize {
    DEFAULT_N_PERM
}

fn default_outdir() -> PathBuf {
    PathBuf::from("audit_out")
}

/// TOML audit configuration. Entity and template paths default to the
/// shipped fixture; `models` defaults to the full battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub entities: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub scorers: ScorerSet,
    #[serde(default = "DesignSpec::default_battery")]
    pub models: Vec<DesignSpec>,
    #[serde(default = "Condition::all")]
    pub conditions: Vec<Condition>,
    #[serde(default = "default_n_perm")]
    pub n_perm: usize,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    /// Party labels beyond the default five.
    #[serde(default)]
    pub extra_parties: Vec<String>,
}

impl AuditConfig {
    pub fn new(original: ScorerSpec) -> Self {
        Self {
            entities: None,
            templates: None,
            scorers: ScorerSet {
                original,
                modified: None,
            },
            models: DesignSpec::default_battery(),
            conditions: Condition::all(),
            n_perm: DEFAULT_N_PERM,
            outdir: default_outdir(),
            extra_parties: Vec::new(),
        }
    }

    /// Parse TOML; relative input paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.entities, &mut cfg.templates].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        cfg.scorers.original.resolve_paths(dir);
        if let Some(m) = cfg.scorers.modified.as_mut() {
            m.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no models to fit".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::Config("no conditions selected".into()));
        }
        if self.n_perm == 0 {
            return Err(Error::Config("n_perm must be positive".into()));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("model name `{}` used twice", w[0])));
        }
        if let Some(m) = self
            .models
            .iter()
            .find(|m| m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(Error::Config(format!(
                "model name `{}` must be non-empty ASCII letters, digits, `_` or `-`",
                m.name
            )));
        }
        Ok(())
    }

    pub fn parties(&self) -> PartySet {
        PartySet::default().with_extra(self.extra_parties.iter().cloned())
    }

    pub fn load_inputs(&self) -> Result<(Vec<Entity>, Vec<Template>)> {
        let parties = self.parties();
        let entities = match &self.entities {
            Some(p) => load_entities(p, &parties)?,
            None => default_entities(),
        };
        let templates = match &self.templates {
            Some(p) => load_templates(p)?,
            None => default_templates(),
        };
        Ok((entities, templates))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: String,
    pub condition: Condition,
    pub entity_ids: Vec<String>,
    pub result: RegressionResult,
    pub permutation_seed: u64,
    /// Pearson residuals against normal quantiles.
    pub qq: Vec<QqPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedModel {
    pub model: String,
    pub condition: Condition,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub condition: Condition,
    pub party: String,
    pub reference: String,
    pub mean_difference: f64,
    pub pooled_sd: Option<f64>,
    pub cohens_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerReport {
    pub name: String,
    pub descriptives: BTreeMap<Condition, Descriptives>,
    pub scores: ScoreTable,
    pub fits: Vec<ModelFit>,
    pub skipped: Vec<SkippedModel>,
    /// Best affiliation model on raw names by adjusted R².
    pub selected_model: Option<String>,
    pub effect_sizes: Vec<EffectSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    /// Original minus modified, per entity and condition (0–100 scale).
    pub values: BTreeMap<String, BTreeMap<Condition, f64>>,
    pub fits: Vec<ModelFit>,
    pub skipped: Vec<SkippedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: u64,
    pub n_perm: usize,
    pub reference_party: String,
    pub parties: Vec<String>,
    pub retained_entities: Vec<String>,
    pub scorers: Vec<ScorerReport>,
    pub differences: Option<DifferenceReport>,
    pub figure: Vec<ScatterPoint>,
}

/// Build scorers from the config and run the full pipeline.
pub fn run_audit(config: &AuditConfig, seed: u64) -> Result<AuditReport> {
    config.validate()?;
    let (entities, templates) = config.load_inputs()?;
    let original = config.scorers.original.build(&entities)?;
    let modified = config
        .scorers
        .modified
        .as_ref()
        .map(|s| s.build(&entities))
        .transpose()?;
    run_audit_with(config, seed, &entities, &templates, original.as_ref(), modified.as_deref())
}

pub fn run_audit_with(
    config: &AuditConfig,
    seed: u64,
    entities: &[Entity],
    templates: &[Template],
    original: &dyn Scorer,
    modified: Option<&dyn Scorer>,
) -> Result<AuditReport> {
    let parties = config.parties();
    let stimuli = build_stimulus_matrix(entities, templates)?;
    let retained: Vec<String> = entities
        .iter()
        .filter(|e| e.mention_count > 0)
        .map(|e| e.id.clone())
        .collect();
    let reference = config
        .models
        .first()
        .map_or_else(|| "ZP".to_string(), |m| m.reference_party.clone());

    let mut scorers = vec![("original", original)];
    if let Some(m) = modified {
        scorers.push(("modified", m));
    }
    let mut reports = Vec::new();
    for (name, scorer) in scorers {
        let table = aggregate_scores(probe(scorer, &stimuli)?)?;
        reports.push(scorer_report(config, seed, name, table, entities, &parties)?);
    }

    let differences = if reports.len() == 2 {
        let values = valence_diff(&reports[0].scores, &reports[1].scores)?;
        let lookup = |e: &str, c: Condition| values.get(e).and_then(|m| m.get(&c)).copied();
        let (fits, skipped) = fit_battery(config, seed, "difference", entities, &parties, &lookup)?;
        Some(DifferenceReport {
            values,
            fits,
            skipped,
        })
    } else {
        None
    };

    let figure = figure_scatter(&reports[0].scores, entities, &parties)?;
    Ok(AuditReport {
        seed,
        n_perm: config.n_perm,
        reference_party: reference,
        parties: parties.labels.clone(),
        retained_entities: retained,
        scorers: reports,
        differences,
        figure,
    })
}

fn scorer_report(
    config: &AuditConfig,
    seed: u64,
    name: &str,
    scores: ScoreTable,
    entities: &[Entity],
    parties: &PartySet,
) -> Result<ScorerReport> {
    let ids: Vec<String> = entities.iter().map(|e| e.id.clone()).collect();
    let mut desc = BTreeMap::new();
    for &c in &config.conditions {
        desc.insert(c, descriptives(&scores.column(&ids, c)?)?);
    }
    let lookup = |e: &str, c: Condition| scores.get(e, c);
    let (fits, skipped) = fit_battery(config, seed, name, entities, parties, &lookup)?;

    let candidates: Vec<&ModelFit> = fits
        .iter()
        .filter(|f| f.condition == Condition::RawName)
        .filter(|f| config.models.iter().any(|m| m.name == f.model && m.affiliation))
        .collect();
    let selected_model = select_model(&candidates.iter().map(|f| &f.result).collect::<Vec<_>>())
        .map(|i| candidates[i].model.clone());

    let effect_sizes = effect_sizes(config, &scores, entities, parties)?;
    Ok(ScorerReport {
        name: name.to_string(),
        descriptives: desc,
        scores,
        fits,
        skipped,
        selected_model,
        effect_sizes,
    })
}

fn fit_battery<F>(
    config: &AuditConfig,
    seed: u64,
    label: &str,
    entities: &[Entity],
    parties: &PartySet,
    lookup: &F,
) -> Result<(Vec<ModelFit>, Vec<SkippedModel>)>
where
    F: Fn(&str, Condition) -> Option<f64> + Sync,
{
    let jobs: Vec<(Condition, &DesignSpec)> = config
        .conditions
        .iter()
        .flat_map(|&c| config.models.iter().map(move |m| (c, m)))
        .collect();
    let outcomes: Vec<Result<std::result::Result<ModelFit, SkippedModel>>> = jobs
        .par_iter()
        .map(|&(condition, spec)| {
            let skip = |reason: String| {
                Ok(Err(SkippedModel {
                    model: spec.name.clone(),
                    condition,
                    reason,
                }))
            };
            let design = match design_matrix(entities, spec, parties) {
                Ok(d) => d,
                Err(Error::Invalid(msg)) => return skip(msg),
                Err(e) => return Err(e),
            };
            let y: Vec<f64> = design
                .entity_ids
                .iter()
                .map(|e| {
                    lookup(e, condition)
                        .ok_or_else(|| Error::invalid(format!("no {condition} value for entity {e}")))
                })
                .collect::<Result<_>>()?;
            let mut result = match wls_fit_named(&design.x, &y, &design.weights, Some(&design.column_names)) {
                Ok(r) => r,
                Err(e @ (Error::Degenerate(_) | Error::Singular { .. })) => return skip(e.to_string()),
                Err(e) => return Err(e),
            };
            let permutation_seed = derive_seed(seed, &format!("{label}/{condition}/{}", spec.name));
            let perm = permutation_test(
                &design.x,
                &y,
                &design.weights,
                &PermutationConfig::monte_carlo(config.n_perm, permutation_seed),
            )?;
            result.permutation_p = Some(perm.p_value);
            let qq = if result.residual_se > 0.0 && result.n >= 3 {
                qq_data(&result.weighted_residuals, result.residual_se)?
            } else {
                Vec::new()
            };
            Ok(Ok(ModelFit {
                model: spec.name.clone(),
                condition,
                entity_ids: design.entity_ids,
                result,
                permutation_seed,
                qq,
            }))
        })
        .collect();
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            Ok(f) => fits.push(f),
            Err(s) => skipped.push(s),
        }
    }
    Ok((fits, skipped))
}

/// Per (entity, condition): `original − modified`.
pub fn valence_diff(
    original: &ScoreTable,
    modified: &ScoreTable,
) -> Result<BTreeMap<String, BTreeMap<Condition, f64>>> {
    let keys = |t: &ScoreTable| -> Vec<(String, Vec<Condition>)> {
        t.means
            .iter()
            .map(|(e, m)| (e.clone(), m.keys().copied().collect()))
            .collect()
    };
    if keys(original) != keys(modified) {
        return Err(Error::invalid(
            "original and modified score tables cover different entities or conditions",
        ));
    }
    Ok(original
        .means
        .iter()
        .map(|(e, m)| {
            let other = &modified.means[e];
            (e.clone(), m.iter().map(|(c, v)| (*c, v - other[c])).collect())
        })
        .collect())
}

/// Index of the result with the largest adjusted R²; exact ties go to the
/// model with fewer columns, then to the earlier one.
pub fn select_model(results: &[&RegressionResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if !r.adj_r2.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = results[b];
                let better = r.adj_r2 > cur.adj_r2
                    || (r.adj_r2 == cur.adj_r2 && r.n_columns() < cur.n_columns());
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Cohen's d for each non-reference party against the reference, from
/// per-entity means of retained entities.
fn effect_sizes(
    config: &AuditConfig,
    scores: &ScoreTable,
    entities: &[Entity],
    parties: &PartySet,
) -> Result<Vec<EffectSize>> {
    let reference = config
        .models
        .first()
        .map_or("ZP", |m| m.reference_party.as_str());
    let reference = parties.parse(reference)?.0;
    let mut out = Vec::new();
    for &c in &config.conditions {
        let group = |label: &str| -> Vec<f64> {
            entities
                .iter()
                .filter(|e| e.mention_count > 0 && e.party.0 == label)
                .filter_map(|e| scores.get(&e.id, c))
                .collect()
        };
        let ref_vals = group(&reference);
        if ref_vals.is_empty() {
            continue;
        }
        for label in parties.labels.iter().filter(|l| **l != reference) {
            let vals = group(label);
            if vals.is_empty() {
                continue;
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let diff = mean(&vals) - mean(&ref_vals);
            let sd = pooled_sd(&vals, &ref_vals).ok().filter(|s| *s > 0.0);
            out.push(EffectSize {
                condition: c,
                party: label.clone(),
                reference: reference.clone(),
                mean_difference: diff,
                pooled_sd: sd,
                cohens_d: sd.map(|s| diff / s),
            });
        }
    }
    Ok(out)
}
