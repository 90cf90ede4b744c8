//! How far one log db reaches across a population of servers.
//!
//! ```text
//! servers = 1000
//! logdb = G1
//! [groups]
//! G1 = 0.37
//! G2 = 0.63
//! ```
//!
//! With `assignment = unique` every server has its own group, named `S1` to
//! `SN`, and `[groups]` must be absent.

use serde::Serialize;

use super::{parse_key_values, parse_u64, HarnessError};

pub const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub servers: u64,
    pub groups: Vec<(String, f64)>,
    pub logdbs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupBreakdown {
    pub id: String,
    pub share: f64,
    pub servers: u64,
    pub has_logdb: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationReport {
    pub servers: u64,
    pub attackable_fraction: f64,
    pub servers_attackable: u64,
    pub db_count: usize,
    pub groups: Vec<GroupBreakdown>,
}

impl PopulationReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "servers {}  log dbs {}  attackable {} ({:.3})\n",
            self.servers, self.db_count, self.servers_attackable, self.attackable_fraction
        );
        let width = self
            .groups
            .iter()
            .map(|g| g.id.len())
            .max()
            .unwrap_or(0)
            .max(5);
        // Unique assignments can list thousands of groups; show those with a db.
        for g in self
            .groups
            .iter()
            .filter(|g| g.has_logdb || self.groups.len() <= 32)
        {
            out.push_str(&format!(
                "{:<width$}  share {:.6}  servers {:>8}  {}\n",
                g.id,
                g.share,
                g.servers,
                if g.has_logdb { "log db" } else { "-" }
            ));
        }
        out
    }
}

pub fn parse_population_spec(text: &str) -> Result<PopulationSpec, HarnessError> {
    let pairs = parse_key_values(text, &["groups"])?;
    let mut servers = None;
    let mut unique = false;
    let mut logdbs = Vec::new();
    let mut groups = Vec::new();
    for (key, v) in &pairs {
        match key.as_str() {
            "servers" => servers = Some(parse_u64(key, v)?),
            "assignment" => {
                unique = match v.as_str() {
                    "unique" => true,
                    "shares" => false,
                    _ => return Err(HarnessError::config(key, "expected `shares` or `unique`")),
                }
            }
            "logdb" => {
                logdbs = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
            }
            k if k.starts_with("groups.") => {
                let share: f64 = v
                    .parse()
                    .ok()
                    .filter(|s: &f64| s.is_finite() && *s >= 0.0)
                    .ok_or_else(|| {
                        HarnessError::config(k, format!("expected a share in [0, 1], got `{v}`"))
                    })?;
                groups.push((k["groups.".len()..].to_string(), share));
            }
            k => return Err(HarnessError::config(k, "unknown key")),
        }
    }
    let servers = servers.ok_or_else(|| HarnessError::config("servers", "required"))?;
    if servers == 0 {
        return Err(HarnessError::config("servers", "must be positive"));
    }
    if unique {
        if !groups.is_empty() {
            return Err(HarnessError::config(
                "groups",
                "not allowed with `assignment = unique`",
            ));
        }
        let share = 1.0 / servers as f64;
        groups = (1..=servers).map(|i| (format!("S{i}"), share)).collect();
    }
    let spec = PopulationSpec {
        servers,
        groups,
        logdbs,
    };
    spec.validate()?;
    Ok(spec)
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.groups.is_empty() {
            return Err(HarnessError::config(
                "groups",
                "at least one group is required",
            ));
        }
        let total: f64 = self.groups.iter().map(|(_, s)| s).sum();
        if (total - 1.0).abs() > SHARE_TOLERANCE {
            return Err(HarnessError::config(
                "groups",
                format!("shares sum to {total}, not 1"),
            ));
        }
        for id in &self.logdbs {
            if !self.groups.iter().any(|(g, _)| g == id) {
                return Err(HarnessError::config(
                    "logdb",
                    format!("unknown group `{id}`"),
                ));
            }
        }
        Ok(())
    }
}

/// The attackable fraction is the sum of the shares of groups with a db.
pub fn simulate_population(spec: &PopulationSpec) -> Result<PopulationReport, HarnessError> {
    spec.validate()?;
    let mut fraction = 0.0;
    let mut breakdown = Vec::with_capacity(spec.groups.len());
    for (id, share) in &spec.groups {
        let has_logdb = spec.logdbs.contains(id);
        if has_logdb {
            fraction += share;
        }
        breakdown.push(GroupBreakdown {
            id: id.clone(),
            share: *share,
            servers: (share * spec.servers as f64).round() as u64,
            has_logdb,
        });
    }
    let mut db_ids = spec.logdbs.clone();
    db_ids.sort();
    db_ids.dedup();
    Ok(PopulationReport {
        servers: spec.servers,
        attackable_fraction: fraction,
        servers_attackable: breakdown
            .iter()
            .filter(|g| g.has_logdb)
            .map(|g| g.servers)
            .sum(),
        db_count: db_ids.len(),
        groups: breakdown,
    })
}
