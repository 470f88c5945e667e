//! `report.md`: a Markdown digest of the manifest and the stage artifacts.
//! Collation only; nothing is recomputed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;

use crate::artifact::{self, Artifact, ArtifactError, Table};
use crate::manifest::{RunManifest, StageStatus, MANIFEST_FILE};

pub const REPORT_FILE: &str = "report.md";

fn cell(raw: &str) -> String {
    let looks_float = raw.contains('.') || raw.contains('e') || raw == "NaN";
    match raw.parse::<f64>() {
        Ok(v) if looks_float && v.is_finite() => format!("{v:.4}"),
        _ => raw.replace('|', "\\|").replace('\n', " "),
    }
}

fn md_table(out: &mut String, headers: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", headers.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(headers.len()));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| cell(c)).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out.push('\n');
}

/// The artifact, or `None` when it has not been produced.
fn optional(a: Artifact, dir: &Path) -> Result<Option<Table>> {
    match a.read(dir) {
        Ok(t) => Ok(Some(t)),
        Err(ArtifactError::Missing { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Render `columns` of the first `limit` rows matching `keep`.
fn section<F>(
    out: &mut String,
    t: Option<&Table>,
    columns: &[&str],
    limit: usize,
    keep: F,
) -> Result<()>
where
    F: Fn(&[String], &Table) -> bool,
{
    let Some(t) = t else {
        out.push_str("_Not available._\n\n");
        return Ok(());
    };
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| t.column(c))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .filter(|r| keep(r, t))
        .take(limit)
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    if rows.is_empty() {
        out.push_str("_No rows._\n\n");
    } else {
        md_table(out, columns, &rows);
    }
    Ok(())
}

fn all(_: &[String], _: &Table) -> bool {
    true
}

pub fn render(dir: &Path) -> Result<String> {
    let manifest: Option<RunManifest> = fs::read_to_string(dir.join(MANIFEST_FILE))
        .ok()
        .map(|t| serde_json::from_str(&t))
        .transpose()?;
    let mut out = String::from("# densitylens report\n\n");
    match &manifest {
        Some(m) => {
            let _ = writeln!(out, "Tool version {}, seed {}.\n", m.version, m.seed);
            out.push_str("## Stages\n\n");
            let rows: Vec<Vec<String>> = m
                .stages
                .iter()
                .filter(|s| s.name != "report")
                .map(|s| {
                    let drops: Vec<String> =
                        s.drops.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                    let status = match s.status {
                        StageStatus::Ok => "ok".to_string(),
                        StageStatus::Failed => {
                            format!("failed: {}", s.error.as_deref().unwrap_or(""))
                        }
                    };
                    vec![
                        s.name.clone(),
                        status,
                        s.unit.clone(),
                        s.rows_in.to_string(),
                        s.rows_out.to_string(),
                        drops.join("; "),
                    ]
                })
                .collect();
            md_table(
                &mut out,
                &["stage", "status", "unit", "rows in", "rows out", "drops"],
                &rows,
            );
            let warnings: Vec<String> = m
                .stages
                .iter()
                .flat_map(|s| s.warnings.iter().map(move |w| format!("- {}: {w}", s.name)))
                .collect();
            if !warnings.is_empty() {
                out.push_str("### Warnings\n\n");
                out.push_str(&warnings.join("\n"));
                out.push_str("\n\n");
            }
            if let Some(agg) = m.stage("aggregate") {
                out.push_str("## Aggregation\n\n");
                let rows: Vec<Vec<String>> = agg
                    .counts
                    .iter()
                    .map(|(k, v)| vec![k.clone(), v.to_string()])
                    .collect();
                md_table(&mut out, &["count", "value"], &rows);
            }
        }
        None => out.push_str("_No manifest found._\n\n"),
    }

    out.push_str("## Classifier\n\n");
    let metrics = optional(artifact::CLASSIFIER_METRICS, dir)?;
    section(
        &mut out,
        metrics.as_ref(),
        &[
            "model",
            "evaluation",
            "n",
            "accuracy",
            "macro_f1",
            "f1_true",
            "f1_false",
        ],
        usize::MAX,
        all,
    )?;

    out.push_str("## Category comparisons (Mann-Whitney U)\n\n");
    let tests = optional(artifact::TESTS, dir)?;
    section(
        &mut out,
        tests.as_ref(),
        &[
            "level", "group_a", "group_b", "n_a", "n_b", "U", "p", "method",
        ],
        usize::MAX,
        all,
    )?;

    out.push_str("## Correlation of CBG sentiment with factors\n\n");
    let corr = optional(artifact::CORRELATIONS, dir)?;
    section(
        &mut out,
        corr.as_ref(),
        &["factor", "n", "pearson", "note"],
        usize::MAX,
        all,
    )?;

    out.push_str("## Salience and valence (all reviews, top 10)\n\n");
    let lsva = optional(artifact::LSVA, dir)?;
    section(
        &mut out,
        lsva.as_ref(),
        &["rank", "word", "salience", "valence", "n_total"],
        10,
        |r, t| {
            t.column("naics_category")
                .map(|c| r[c] == "all")
                .unwrap_or(false)
        },
    )?;

    out.push_str("## PLS regression\n\n");
    let fit = optional(artifact::PLS_FITSTATS, dir)?;
    section(
        &mut out,
        fit.as_ref(),
        &["metric", "value"],
        usize::MAX,
        all,
    )?;
    let coef = optional(artifact::PLS_COEFFICIENTS, dir)?;
    section(
        &mut out,
        coef.as_ref(),
        &[
            "variable",
            "Coeffs",
            "Std. err.",
            "P-value",
            "2.50%",
            "97.50%",
            "stars",
        ],
        usize::MAX,
        all,
    )?;
    if coef.is_some() {
        out.push_str("Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n");
    }
    Ok(out)
}

pub fn write(dir: &Path) -> Result<()> {
    fs::write(dir.join(REPORT_FILE), render(dir)?)?;
    Ok(())
}
