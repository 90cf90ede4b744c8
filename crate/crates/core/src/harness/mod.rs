//! Scenario runner, parameter audit, population model and group generators
//! behind the command-line tool.

pub mod audit;
pub mod gen;
pub mod population;
pub mod scenario;
pub mod sim;

pub use audit::{
    audit_group, load_popular_list, AuditOptions, AuditReport, Finding, RiskGrade, SmoothProbe,
};
pub use gen::{generate_smooth_order_group, shared_group, SHARED_EXPORT_SEED, SHARED_STRONG_SEED};
pub use population::{
    parse_population_spec, simulate_population, GroupBreakdown, PopulationReport, PopulationSpec,
};
pub use scenario::{
    parse_scenario, AttackerSettings, ClientConfig, LogDbSource, ScenarioConfig, ServerConfig,
};
pub use sim::{
    parse_transcript, run_scenario, run_scenario_with, ScenarioReport, TranscriptRecord,
};

use thiserror::Error;

use crate::dlog::DlogError;
use crate::group_math::GroupError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Dlog(#[from] DlogError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl HarnessError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. } | HarnessError::Io { .. })
    }
}

/// Parses `key = value` text with optional `[section]` headers. Keys are
/// returned as `section.key`. `#` starts a comment line.
pub(crate) fn parse_key_values(
    text: &str,
    sections: &[&str],
) -> Result<Vec<(String, String)>, HarnessError> {
    let mut section = String::new();
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !sections.contains(&name) {
                return Err(HarnessError::config(
                    format!("line {}", i + 1),
                    format!("unknown section [{name}]"),
                ));
            }
            section = name.to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(HarnessError::config(
                format!("line {}", i + 1),
                "expected `key = value`",
            ));
        };
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        if out.iter().any(|(existing, _)| *existing == key) {
            return Err(HarnessError::config(key, "given twice"));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_bool(field: &str, v: &str) -> Result<bool, HarnessError> {
    match v {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(HarnessError::config(
            field,
            format!("expected true or false, got `{v}`"),
        )),
    }
}

pub(crate) fn parse_u64(field: &str, v: &str) -> Result<u64, HarnessError> {
    v.replace('_', "").parse().map_err(|_| {
        HarnessError::config(field, format!("expected an unsigned integer, got `{v}`"))
    })
}
