//! Report files under an output directory.

use std::path::{Path, PathBuf};

use super::figure::{render_svg, write_scatter_csv};
use super::render::render_table;
use super::{AuditReport, ModelFit};
use crate::error::{Error, Result};
use crate::stats::QqPoint;

fn tables_for(prefix: &str, fits: &[ModelFit], files: &mut Vec<(String, Vec<u8>)>) {
    let mut models: Vec<&str> = Vec::new();
    for f in fits {
        if !models.contains(&f.model.as_str()) {
            models.push(&f.model);
        }
    }
    for model in models {
        let columns: Vec<(String, &crate::stats::RegressionResult)> = fits
            .iter()
            .filter(|f| f.model == model)
            .map(|f| (f.condition.as_str().to_string(), &f.result))
            .collect();
        let t = render_table(&format!("{prefix}: {model}"), &columns);
        files.push((format!("table_{prefix}_{model}.txt"), t.text.into_bytes()));
        files.push((format!("table_{prefix}_{model}.csv"), t.csv.into_bytes()));
    }
    for f in fits {
        files.push((
            format!("qq_{prefix}_{}_{}.csv", f.condition, f.model),
            qq_csv(&f.qq).into_bytes(),
        ));
    }
}

fn qq_csv(points: &[QqPoint]) -> String {
    let mut s = String::from("theoretical,observed\n");
    for p in points {
        s.push_str(&format!("{},{}\n", p.theoretical, p.observed));
    }
    s
}

/// Render everything in memory, then write: `report.json`,
/// `table_<scorer>_<model>.txt/.csv`, `figure1.csv/.svg` and
/// `qq_<scorer>_<condition>_<model>.csv`. Returns the written paths.
pub fn write_report(report: &AuditReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Backend(format!("report serialization: {e}")))?;
    files.push(("report.json".into(), (json + "\n").into_bytes()));
    for s in &report.scorers {
        tables_for(&s.name, &s.fits, &mut files);
    }
    if let Some(d) = &report.differences {
        tables_for("difference", &d.fits, &mut files);
    }
    let mut fig = Vec::new();
    write_scatter_csv(&report.figure, &mut fig)?;
    files.push(("figure1.csv".into(), fig));
    files.push((
        "figure1.svg".into(),
        render_svg(&report.figure, &report.parties).into_bytes(),
    ));

    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = outdir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
