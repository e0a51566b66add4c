//! Regression tables in plain text and CSV.

use crate::stats::{RegressionResult, Stars};

pub const STAR_LEGEND: &str = "*p<0.1; **p<0.05; ***p<0.01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

/// `"5.83*** (1.31)"`.
pub fn format_cell(coefficient: f64, std_error: f64, p_value: f64) -> String {
    format!(
        "{coefficient:.2}{} ({std_error:.2})",
        Stars::from_p(p_value).as_str()
    )
}

pub fn format_p(p: f64) -> String {
    if !p.is_finite() {
        "NA".into()
    } else if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

/// One column per result; rows are the union of coefficient names in order
/// of first appearance, followed by the fit statistics.
pub fn render_table(title: &str, columns: &[(String, &RegressionResult)]) -> RenderedTable {
    let mut terms: Vec<&str> = Vec::new();
    for (_, r) in columns {
        for n in &r.names {
            if !terms.contains(&n.as_str()) {
                terms.push(n);
            }
        }
    }

    let mut body: Vec<(String, Vec<String>)> = Vec::new();
    for term in &terms {
        let cells = columns
            .iter()
            .map(|(_, r)| match r.names.iter().position(|n| n == term) {
                Some(j) => format_cell(r.coefficients[j], r.std_errors[j], r.p_values[j]),
                None => String::new(),
            })
            .collect();
        body.push((term.to_string(), cells));
    }
    let footer: Vec<(String, Vec<String>)> = vec![
        ("Observations".into(), columns.iter().map(|(_, r)| r.n.to_string()).collect()),
        ("R²".into(), columns.iter().map(|(_, r)| format!("{:.3}", r.r2)).collect()),
        ("Adjusted R²".into(), columns.iter().map(|(_, r)| format!("{:.3}", r.adj_r2)).collect()),
        (
            "Residual Std. Error".into(),
            columns
                .iter()
                .map(|(_, r)| format!("{:.3} (df = {})", r.residual_se, r.df_resid))
                .collect(),
        ),
        (
            "P-value (permutation)".into(),
            columns
                .iter()
                .map(|(_, r)| r.permutation_p.map_or_else(|| "NA".into(), format_p))
                .collect(),
        ),
    ];

    let label_w = body
        .iter()
        .chain(&footer)
        .map(|(l, _)| l.chars().count())
        .max()
        .unwrap_or(0);
    let col_w: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(j, (h, _))| {
            body.iter()
                .chain(&footer)
                .map(|(_, c)| c[j].chars().count())
                .chain([h.chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let width = label_w + col_w.iter().map(|w| w + 2).sum::<usize>();
    let rule = "-".repeat(width);
    let line = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<label_w$}");
        for (c, w) in cells.iter().zip(&col_w) {
            s.push_str(&format!("  {c:>w$}"));
        }
        s.trim_end().to_string()
    };

    let mut text = String::new();
    text.push_str(title);
    text.push('\n');
    text.push_str(&rule);
    text.push('\n');
    let headers: Vec<String> = columns.iter().map(|(h, _)| h.clone()).collect();
    text.push_str(&line("", &headers));
    text.push('\n');
    text.push_str(&rule);
    text.push('\n');
    for (l, c) in &body {
        text.push_str(&line(l, c));
        text.push('\n');
    }
    text.push_str(&rule);
    text.push('\n');
    for (l, c) in &footer {
        text.push_str(&line(l, c));
        text.push('\n');
    }
    text.push_str(&rule);
    text.push('\n');
    text.push_str(&format!("Note: {STAR_LEGEND}\n"));

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string()];
    header.extend(headers);
    w.write_record(&header).expect("in-memory csv");
    for (l, c) in body.iter().chain(&footer) {
        let mut rec = vec![l.clone()];
        rec.extend(c.iter().cloned());
        w.write_record(&rec).expect("in-memory csv");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv");
    RenderedTable { text, csv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{wls_fit_named, Matrix};

    fn fit() -> RegressionResult {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ])
        .unwrap();
        let names = vec!["intercept".to_string(), "KO".to_string()];
        let mut r = wls_fit_named(&x, &[1.0, 3.0, 2.0, 5.0], &[1.0, 2.0, 1.0, 2.0], Some(&names)).unwrap();
        r.permutation_p = Some(0.008);
        r
    }

    #[test]
    fn cells() {
        assert_eq!(format_cell(5.83, 1.31, 0.0004), "5.83*** (1.31)");
        assert_eq!(format_cell(1.0, 0.5, 0.2), "1.00 (0.50)");
        assert_eq!(format_cell(1.0, 0.5, 0.07), "1.00* (0.50)");
        assert_eq!(format_cell(-2.345, 0.5, 0.03), "-2.35** (0.50)");
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.008), "0.008");
        assert_eq!(format_p(0.00001), "<0.001");
        assert_eq!(format_p(f64::NAN), "NA");
    }

    #[test]
    fn table_layout() {
        let r = fit();
        let t = render_table("Model 1", &[("raw_name".into(), &r)]);
        let lines: Vec<&str> = t.text.lines().collect();
        assert_eq!(lines[0], "Model 1");
        for needle in ["intercept", "KO", "Observations", "R²", "Adjusted R²", "Residual Std. Error", "(df = 2)", "P-value (permutation)", "0.008"] {
            assert!(t.text.contains(needle), "{needle}\n{}", t.text);
        }
        assert!(lines.last().unwrap().ends_with(STAR_LEGEND));
        let cell = format_cell(r.coefficients[1], r.std_errors[1], r.p_values[1]);
        assert!(t.text.contains(&cell));
        assert!(t.csv.starts_with("row,raw_name\n"));
        assert!(t.csv.contains(&format!("KO,{cell}")));
    }

    #[test]
    fn stars_match_stored_p_values() {
        let r = fit();
        let t = render_table("m", &[("a".into(), &r)]);
        for (j, name) in r.names.iter().enumerate() {
            let row = t.text.lines().find(|l| l.starts_with(name.as_str())).unwrap();
            let stars = row.matches('*').count();
            assert_eq!(stars, r.stars[j].as_str().len());
        }
    }

    #[test]
    fn multi_column_union() {
        let a = fit();
        let mut b = fit();
        b.names[1] = "KO2".into();
        let t = render_table("m", &[("a".into(), &a), ("b".into(), &b)]);
        assert!(t.csv.lines().any(|l| l.starts_with("KO,") && l.ends_with(',')));
        assert!(t.csv.lines().any(|l| l.starts_with("KO2,,")));
    }
}
