//! Raw-name valence by party, dot area proportional to mention count.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::ScoreTable;
use crate::stimuli::{Condition, Entity, PartySet};

/// Area given to entities with no mentions so they stay visible.
pub const MIN_MARKER_AREA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub entity_id: String,
    pub label: String,
    pub party: String,
    /// Index of the party in the configured party order.
    pub group: usize,
    pub valence: f64,
    pub mention_count: u32,
    pub area: f64,
    pub zero_mentions: bool,
}

pub fn figure_scatter(scores: &ScoreTable, entities: &[Entity], parties: &PartySet) -> Result<Vec<ScatterPoint>> {
    entities
        .iter()
        .map(|e| {
            let valence = scores
                .get(&e.id, Condition::RawName)
                .ok_or_else(|| Error::invalid(format!("no raw-name score for entity {}", e.id)))?;
            let group = parties
                .index_of(&e.party)
                .ok_or_else(|| Error::invalid(format!("party {} not configured", e.party)))?;
            let zero = e.mention_count == 0;
            Ok(ScatterPoint {
                entity_id: e.id.clone(),
                label: e.full_name.clone(),
                party: e.party.0.clone(),
                group,
                valence,
                mention_count: e.mention_count,
                area: if zero { MIN_MARKER_AREA } else { f64::from(e.mention_count) },
                zero_mentions: zero,
            })
        })
        .collect()
}

pub fn write_scatter_csv<W: Write>(points: &[ScatterPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Backend(format!("figure write: {e}"));
    w.write_record([
        "entity_id",
        "label",
        "party",
        "group",
        "valence",
        "mention_count",
        "area",
        "zero_mentions",
    ])
    .map_err(io)?;
    for p in points {
        w.write_record([
            p.entity_id.as_str(),
            &p.label,
            &p.party,
            &p.group.to_string(),
            &p.valence.to_string(),
            &p.mention_count.to_string(),
            &p.area.to_string(),
            &p.zero_mentions.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Backend(format!("figure write: {e}")))?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const MAX_RADIUS: f64 = 22.0;

/// Self-contained SVG. Zero-mention entities get a hollow minimum marker.
pub fn render_svg(points: &[ScatterPoint], party_labels: &[String]) -> String {
    let groups = party_labels.len().max(1) as f64;
    let band = (WIDTH - 2.0 * MARGIN) / groups;
    let (mut lo, mut hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.valence), b.max(p.valence)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 100.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = (hi - lo) * 0.1;
    let (lo, hi) = (lo - pad, hi + pad);
    let max_area = points.iter().map(|p| p.area).fold(MIN_MARKER_AREA, f64::max);
    let y_of = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = HEIGHT - MARGIN,
        x2 = WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{y}" stroke="black"/>"#,
        y = HEIGHT - MARGIN
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="end">{v:.1}</text>"#,
            x = MARGIN - 6.0,
            y = y_of(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{y:.2}" transform="rotate(-90 14 {y:.2})" text-anchor="middle">valence (0-100)</text>"#,
        y = HEIGHT / 2.0
    );
    for (g, label) in party_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">{}</text>"#,
            escape(label),
            x = MARGIN + (g as f64 + 0.5) * band,
            y = HEIGHT - MARGIN + 18.0
        );
    }
    for p in points {
        let cx = MARGIN + (p.group as f64 + 0.5) * band;
        let cy = y_of(p.valence);
        let r = MAX_RADIUS * (p.area / max_area).sqrt();
        let style = if p.zero_mentions {
            r#"fill="none" stroke="black" stroke-dasharray="2,2""#
        } else {
            r#"fill="steelblue" fill-opacity="0.5" stroke="black""#
        };
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" {style}/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}">{}</text>"#,
            escape(&p.label),
            x = cx + r + 2.0,
            y = cy + 3.0
        );
    }
    s.push_str("</svg>\n");
    s
}
