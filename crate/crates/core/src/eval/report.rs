//! On-disk artifacts: JSON envelopes and plot-ready CSV tables.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::corrupt::CorruptionSpec;
use super::harness::{EvalReport, SweepAxis, SweepRow};
use crate::error::Result;

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: ToolInfo = ToolInfo {
    name: "specdetect",
    version: crate::VERSION,
};

/// Wraps a result with the tool version and the configuration that produced it.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, T: Serialize> {
    pub tool: &'a ToolInfo,
    pub run_config: &'a C,
    pub result: &'a T,
}

pub fn write_json<C: Serialize, T: Serialize>(
    path: &Path,
    run_config: &C,
    result: &T,
) -> Result<()> {
    let env = Envelope {
        tool: &TOOL,
        run_config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// File-name-safe form of a generator tag.
pub fn sanitize(tag: &str) -> String {
    let s: String = tag
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Writes one `fpr,tpr` CSV per generator into `dir`.
pub fn write_roc_csvs(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (g, roc) in &report.roc {
        fs::write(dir.join(format!("{}.csv", sanitize(g))), roc.to_csv())?;
    }
    Ok(())
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = format!("{axis},average_auc\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.value, r.average_auc));
    }
    out
}

pub fn robustness_csv(rows: &[(CorruptionSpec, EvalReport)]) -> String {
    let mut out = String::from("corruption,level,average_auc\n");
    for (spec, report) in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            spec.kind, spec.level, report.average_auc
        ));
    }
    out
}
