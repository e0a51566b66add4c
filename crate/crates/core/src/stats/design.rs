//! Regression design matrices built from probe entities.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::stimuli::{Entity, Party, PartySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariate {
    Gender,
    Trust,
    /// Mean annotated valence of the entity's training-text mentions.
    Mentions,
}

impl Covariate {
    pub fn column_name(self) -> &'static str {
        match self {
            Covariate::Gender => "gender",
            Covariate::Trust => "trust",
            Covariate::Mentions => "mentions",
        }
    }
}

/// Which columns a model includes. Column order is always
/// `[intercept, party dummies…, gender?, trust?, mentions?]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub name: String,
    #[serde(default = "default_reference")]
    pub reference_party: String,
    #[serde(default)]
    pub affiliation: bool,
    #[serde(default)]
    pub gender: bool,
    #[serde(default)]
    pub trust: bool,
    #[serde(default)]
    pub mentions: bool,
}

fn default_reference() -> String {
    "ZP".into()
}

impl DesignSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            reference_party: default_reference(),
            affiliation: false,
            gender: false,
            trust: false,
            mentions: false,
        }
    }

    pub fn affiliation(mut self) -> Self {
        self.affiliation = true;
        self
    }

    pub fn gender(mut self) -> Self {
        self.gender = true;
        self
    }

    pub fn trust(mut self) -> Self {
        self.trust = true;
        self
    }

    pub fn mentions(mut self) -> Self {
        self.mentions = true;
        self
    }

    pub fn covariates(&self) -> Vec<Covariate> {
        let mut out = Vec::new();
        if self.gender {
            out.push(Covariate::Gender);
        }
        if self.trust {
            out.push(Covariate::Trust);
        }
        if self.mentions {
            out.push(Covariate::Mentions);
        }
        out
    }

    /// The default model battery: affiliation with each confounder set,
    /// then each confounder alone.
    pub fn default_battery() -> Vec<DesignSpec> {
        vec![
            DesignSpec::new("affiliation").affiliation(),
            DesignSpec::new("affiliation_gender").affiliation().gender(),
            DesignSpec::new("affiliation_gender_trust").affiliation().gender().trust(),
            DesignSpec::new("affiliation_gender_mentions").affiliation().gender().mentions(),
            DesignSpec::new("affiliation_gender_trust_mentions")
                .affiliation()
                .gender()
                .trust()
                .mentions(),
            DesignSpec::new("gender_only").gender(),
            DesignSpec::new("trust_only").trust(),
            DesignSpec::new("mentions_only").mentions(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Matrix,
    pub weights: Vec<f64>,
    pub column_names: Vec<String>,
    /// Ids of the retained entities, one per row.
    pub entity_ids: Vec<String>,
}

/// Build `X` and mention-count weights. Entities with zero mentions are
/// dropped since they would carry zero weight.
pub fn design_matrix(entities: &[Entity], spec: &DesignSpec, parties: &PartySet) -> Result<Design> {
    let reference = parties.parse(&spec.reference_party)?;
    let dummies: Vec<&String> = if spec.affiliation {
        parties.labels.iter().filter(|l| **l != reference.0).collect()
    } else {
        Vec::new()
    };

    let mut column_names = vec!["intercept".to_string()];
    column_names.extend(dummies.iter().map(|d| d.to_string()));
    column_names.extend(spec.covariates().iter().map(|c| c.column_name().to_string()));

    let mut rows = Vec::new();
    let mut weights = Vec::new();
    let mut entity_ids = Vec::new();
    for e in entities.iter().filter(|e| e.mention_count > 0) {
        if parties.index_of(&e.party).is_none() {
            return Err(Error::invalid(format!(
                "entity {} has party {} outside the configured set",
                e.id, e.party
            )));
        }
        let mut row = vec![1.0];
        row.extend(dummies.iter().map(|d| f64::from(u8::from(e.party == Party((*d).clone())))));
        for c in spec.covariates() {
            let v = match c {
                Covariate::Gender => Some(e.gender.code()),
                Covariate::Trust => e.trust,
                Covariate::Mentions => e.mean_mention_valence,
            };
            row.push(v.ok_or_else(|| {
                Error::invalid(format!(
                    "model {} needs {} but entity {} has none",
                    spec.name,
                    c.column_name(),
                    e.id
                ))
            })?);
        }
        rows.push(row);
        weights.push(f64::from(e.mention_count));
        entity_ids.push(e.id.clone());
    }
    if rows.is_empty() {
        return Err(Error::invalid("no entities with positive mention counts"));
    }
    Ok(Design {
        x: Matrix::from_rows(&rows)?,
        weights,
        column_names,
        entity_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimuli::{default_entities, Gender};

    fn entity(id: &str, party: &str, gender: Gender, mentions: u32) -> Entity {
        Entity::new(id, format!("Jan {id}"), id, Party(party.into()), gender, mentions).unwrap()
    }

    #[test]
    fn dummy_rows() {
        let es = vec![entity("a", "KO", Gender::Man, 3), entity("b", "ZP", Gender::Man, 2)];
        let spec = DesignSpec::new("m").affiliation().gender();
        let d = design_matrix(&es, &spec, &PartySet::default()).unwrap();
        assert_eq!(d.column_names, ["intercept", "3D", "K", "KO", "Left", "gender"]);
        assert_eq!(d.x.row(0), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.x.row(1), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.weights, vec![3.0, 2.0]);
    }

    #[test]
    fn zero_mention_entities_dropped() {
        let mut es: Vec<Entity> = (0..22)
            .map(|i| entity(&format!("p{i}"), "KO", Gender::Man, 1 + i))
            .collect();
        es.push(entity("z1", "ZP", Gender::Man, 0));
        es.push(entity("z2", "K", Gender::Woman, 0));
        let d = design_matrix(&es, &DesignSpec::new("m").affiliation(), &PartySet::default()).unwrap();
        assert_eq!(d.x.rows(), 22);
        assert!(!d.entity_ids.contains(&"z1".to_string()));
    }

    #[test]
    fn missing_covariate_is_an_error() {
        let es = vec![entity("a", "KO", Gender::Man, 3)];
        let err = design_matrix(&es, &DesignSpec::new("m").trust(), &PartySet::default()).unwrap_err();
        assert!(err.to_string().contains("trust"));
    }

    #[test]
    fn other_reference_level() {
        let es = vec![entity("a", "KO", Gender::Man, 3), entity("b", "ZP", Gender::Man, 2)];
        let mut spec = DesignSpec::new("m").affiliation();
        spec.reference_party = "KO".into();
        let d = design_matrix(&es, &spec, &PartySet::default()).unwrap();
        assert_eq!(d.column_names, ["intercept", "ZP", "3D", "K", "Left"]);
        assert_eq!(d.x.row(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shipped_fixture_full_battery_builds() {
        let es = default_entities();
        for spec in DesignSpec::default_battery() {
            let d = design_matrix(&es, &spec, &PartySet::default()).unwrap();
            assert_eq!(d.x.rows(), 18, "{}", spec.name);
        }
    }
}
