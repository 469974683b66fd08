//! Consolidated machine-readable report: merges the run's tables,
//! manifests, drop reports, and tuning traces into one versioned JSON
//! bundle and validates internal cross-references.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use recaudit_core::domain::AgeGroup;

use crate::tables::read_table;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub manifest_sha256: String,
    /// Stage artifacts keyed by run-relative path.
    pub artifacts: BTreeMap<String, Value>,
    pub missing_artifacts: Vec<String>,
    pub validation_errors: Vec<String>,
}

fn table_to_json(path: &Path) -> anyhow::Result<Value> {
    let (metadata, columns, rows) = read_table(path)?;
    let rows_json: Vec<Value> = rows
        .iter()
        .map(|row| {
            Value::Object(
                columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.clone(), Value::String(v.clone())))
                    .collect(),
            )
        })
        .collect();
    Ok(serde_json::json!({
        "metadata": metadata.into_iter().collect::<BTreeMap<_, _>>(),
        "columns": columns,
        "rows": rows_json,
    }))
}

fn json_file(path: &Path) -> anyhow::Result<Value> {
    let raw = std::fs::read_to_string(path)?;
    serde_json::from_str(&raw).with_context(|| format!("cannot parse {}", path.display()))
}

/// Builds the report for a completed run directory. Artifacts that should
/// exist given the stages that ran are listed when missing; cross-reference
/// violations land in `validation_errors`. Regeneration is idempotent.
pub fn build_report(run_dir: &Path) -> anyhow::Result<Report> {
    let manifest_sha256 = std::fs::read_to_string(run_dir.join("manifest.sha256"))
        .map(|s| s.trim().to_string())
        .unwrap_or_default();
    let mut artifacts = BTreeMap::new();
    let mut missing = Vec::new();
    let mut errors = Vec::new();

    if manifest_sha256.is_empty() {
        missing.push("manifest.sha256".to_string());
    }
    if !run_dir.join("manifest.toml").is_file() {
        missing.push("manifest.toml".to_string());
    } else {
        let raw = std::fs::read_to_string(run_dir.join("manifest.toml"))?;
        artifacts.insert("manifest.toml".into(), Value::String(raw));
    }

    // Stage groups: when the stage's anchor file exists, its sibling
    // artifacts are required.
    let stage_specs: &[(&str, &[&str])] = &[
        ("ingest/summary.json", &[]),
        ("sample/summary.json", &[]),
        ("preprocess/bundle_manifest.json", &[]),
        (
            "explore/agp_table.tsv",
            &[
                "explore/deviation_table.tsv",
                "explore/popularity_table.tsv",
                "explore/genre_significance.tsv",
            ],
        ),
        (
            "rs/per_user_metrics.tsv",
            &[
                "rs/group_metrics.tsv",
                "rs/significance.tsv",
                "rs/run_metadata.json",
            ],
        ),
        ("synth/summary.json", &[]),
    ];

    let load = |rel: &str, artifacts: &mut BTreeMap<String, Value>| -> anyhow::Result<bool> {
        let path = run_dir.join(rel);
        if !path.is_file() {
            return Ok(false);
        }
        let value = if rel.ends_with(".json") {
            json_file(&path)?
        } else {
            table_to_json(&path)?
        };
        artifacts.insert(rel.to_string(), value);
        Ok(true)
    };

    for (anchor, siblings) in stage_specs {
        if !load(anchor, &mut artifacts)? {
            continue;
        }
        for sibling in *siblings {
            if !load(sibling, &mut artifacts)? {
                missing.push(sibling.to_string());
            }
        }
    }

    // Tuning traces travel with the RS stage.
    let tuning_dir = run_dir.join("rs/tuning");
    if tuning_dir.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(&tuning_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let rel = format!(
                "rs/tuning/{}",
                path.file_name().unwrap().to_string_lossy()
            );
            artifacts.insert(rel, json_file(&path)?);
        }
    }

    validate(&artifacts, &mut errors);

    Ok(Report {
        report_version: REPORT_VERSION,
        manifest_sha256,
        artifacts,
        missing_artifacts: missing,
        validation_errors: errors,
    })
}

/// Cross-reference checks over the merged artifacts.
fn validate(artifacts: &BTreeMap<String, Value>, errors: &mut Vec<String>) {
    let rows_of = |rel: &str| -> Option<&Vec<Value>> {
        artifacts.get(rel)?.get("rows")?.as_array()
    };

    // Every group label in any table must be a known group.
    for rel in ["rs/per_user_metrics.tsv", "rs/group_metrics.tsv", "explore/popularity_table.tsv"] {
        if let Some(rows) = rows_of(rel) {
            for row in rows {
                if let Some(group) = row.get("group").and_then(Value::as_str) {
                    if AgeGroup::from_name(group).is_none() {
                        errors.push(format!("{rel}: unknown group '{group}'"));
                    }
                }
            }
        }
    }

    // Per-user rows must reference users counted in the group table.
    if let (Some(per_user), Some(groups)) =
        (rows_of("rs/per_user_metrics.tsv"), rows_of("rs/group_metrics.tsv"))
    {
        let mut cell_counts: BTreeMap<(String, String, String), usize> = BTreeMap::new();
        for row in per_user {
            let key = (
                row.get("recommender").and_then(Value::as_str).unwrap_or("").to_string(),
                row.get("variant").and_then(Value::as_str).unwrap_or("").to_string(),
                row.get("group").and_then(Value::as_str).unwrap_or("").to_string(),
            );
            *cell_counts.entry(key).or_default() += 1;
        }
        for row in groups {
            let key = (
                row.get("recommender").and_then(Value::as_str).unwrap_or("").to_string(),
                row.get("variant").and_then(Value::as_str).unwrap_or("").to_string(),
                row.get("group").and_then(Value::as_str).unwrap_or("").to_string(),
            );
            let declared: usize = row
                .get("n")
                .and_then(Value::as_str)
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let actual = cell_counts.get(&key).copied().unwrap_or(0);
            if declared != actual {
                errors.push(format!(
                    "group_metrics cell {key:?} declares {declared} users, per-user table has {actual}"
                ));
            }
        }
    }
}

/// Writes `report.json`; missing artifacts or validation failures leave the
/// report on disk and surface as an error for a nonzero exit.
pub fn cmd_report(run_dir: &Path) -> anyhow::Result<()> {
    let report = build_report(run_dir)?;
    let path = run_dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "report: {} artifacts, {} missing, {} validation errors -> {}",
        report.artifacts.len(),
        report.missing_artifacts.len(),
        report.validation_errors.len(),
        path.display()
    );
    if !report.missing_artifacts.is_empty() {
        anyhow::bail!("missing artifacts: {}", report.missing_artifacts.join(", "));
    }
    if !report.validation_errors.is_empty() {
        anyhow::bail!("validation errors: {}", report.validation_errors.join("; "));
    }
    Ok(())
}
