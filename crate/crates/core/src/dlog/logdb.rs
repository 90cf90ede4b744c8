//! The persisted "log db": factor-base logs for one group.
//!
//! Text format, one item per line:
//!
//! ```text
//! LOGDB 1
//! p <hex>
//! g <hex>
//! q <hex>
//! B <decimal>
//! <prime decimal> <log hex>      (one line per logged factor-base prime)
//! END <entry count>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use num_bigint::BigUint;

use super::smooth::FactorBase;
use super::DlogError;
use crate::group_math::{parse_hex, to_hex, DhGroup, GroupError};

pub const LOGDB_VERSION: u32 = 1;

/// How a LogDb was produced. Not persisted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CreationInfo {
    pub seed: u64,
    pub relation_count: usize,
    pub trials: u64,
    /// Factor-base primes whose recovered log failed verification.
    pub dropped: Vec<u64>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct LogDb {
    group: DhGroup,
    factor_base: FactorBase,
    logs: BTreeMap<u64, BigUint>,
    metadata: Option<CreationInfo>,
}

/// Equality covers the persisted content only; creation metadata is ignored.
impl PartialEq for LogDb {
    fn eq(&self, other: &Self) -> bool {
        self.group == other.group
            && self.factor_base == other.factor_base
            && self.logs == other.logs
    }
}

impl Eq for LogDb {}

impl LogDb {
    pub(crate) fn from_parts(
        group: DhGroup,
        factor_base: FactorBase,
        logs: BTreeMap<u64, BigUint>,
        metadata: Option<CreationInfo>,
    ) -> Self {
        LogDb {
            group,
            factor_base,
            logs,
            metadata,
        }
    }

    pub fn group(&self) -> &DhGroup {
        &self.group
    }

    pub fn factor_base(&self) -> &FactorBase {
        &self.factor_base
    }

    pub fn logs(&self) -> &BTreeMap<u64, BigUint> {
        &self.logs
    }

    pub fn log_of(&self, prime: u64) -> Option<&BigUint> {
        self.logs.get(&prime)
    }

    pub fn metadata(&self) -> Option<&CreationInfo> {
        self.metadata.as_ref()
    }

    pub(crate) fn set_metadata(&mut self, info: CreationInfo) {
        self.metadata = Some(info);
    }

    /// True when this db was built for `p` with generator `g`.
    pub fn covers(&self, p: &BigUint, g: &BigUint) -> bool {
        self.group.p() == p && self.group.g() == g
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "LOGDB {LOGDB_VERSION}");
        let _ = writeln!(out, "p {}", to_hex(self.group.p()));
        let _ = writeln!(out, "g {}", to_hex(self.group.g()));
        let _ = writeln!(out, "q {}", to_hex(self.group.q()));
        let _ = writeln!(out, "B {}", self.factor_base.bound());
        for (prime, log) in &self.logs {
            let _ = writeln!(out, "{prime} {}", to_hex(log));
        }
        let _ = writeln!(out, "END {}", self.logs.len());
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DlogError> {
        let err = |line: usize, message: String| DlogError::Load { line, message };
        let lines: Vec<&str> = text.lines().collect();
        let get = |i: usize| -> Result<&str, DlogError> {
            lines
                .get(i)
                .copied()
                .ok_or_else(|| err(i + 1, "unexpected end of file".into()))
        };

        let header = get(0)?;
        let version = header
            .strip_prefix("LOGDB ")
            .ok_or_else(|| err(1, format!("expected `LOGDB <version>`, found {header:?}")))?;
        if version.trim() != LOGDB_VERSION.to_string() {
            return Err(err(1, format!("unsupported version {:?}", version.trim())));
        }

        let field = |i: usize, key: &str| -> Result<&str, DlogError> {
            let line = get(i)?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .ok_or_else(|| err(i + 1, format!("expected `{key} <value>`, found {line:?}")))
        };
        let hex_field = |i: usize, key: &str| -> Result<BigUint, DlogError> {
            parse_hex(field(i, key)?).map_err(|e| err(i + 1, e.to_string()))
        };
        let p = hex_field(1, "p")?;
        let g = hex_field(2, "g")?;
        let q = hex_field(3, "q")?;
        let bound: u64 = field(4, "B")?
            .trim()
            .parse()
            .map_err(|_| err(5, "B is not a decimal integer".into()))?;
        let group = DhGroup::new(p, g, q).map_err(|e| {
            let line = match e {
                GroupError::NotPrime => 2,
                GroupError::BadGenerator(_) => 3,
                _ => 4,
            };
            err(line, format!("invalid group: {e}"))
        })?;
        let factor_base = FactorBase::new(bound).map_err(|e| err(5, e.to_string()))?;
        if BigUint::from(bound) >= *group.p() {
            return Err(err(5, "factor-base bound must be below p".into()));
        }

        let mut logs = BTreeMap::new();
        let mut i = 5;
        loop {
            let line = get(i)?;
            let lineno = i + 1;
            if let Some(count) = line.strip_prefix("END ") {
                let count: usize = count
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, "END count is not decimal".into()))?;
                if count != logs.len() {
                    return Err(err(
                        lineno,
                        format!(
                            "checksum mismatch: END declares {count} entries, found {}",
                            logs.len()
                        ),
                    ));
                }
                if lines[i + 1..].iter().any(|l| !l.trim().is_empty()) {
                    return Err(err(lineno + 1, "trailing data after END".into()));
                }
                break;
            }
            let (prime, log) = line.split_once(' ').ok_or_else(|| {
                err(
                    lineno,
                    format!("expected `<prime> <log hex>`, found {line:?}"),
                )
            })?;
            let prime: u64 = prime
                .parse()
                .map_err(|_| err(lineno, format!("bad prime {prime:?}")))?;
            if factor_base.index_of(prime).is_none() {
                return Err(err(
                    lineno,
                    format!("{prime} is not a factor-base prime for B = {bound}"),
                ));
            }
            if logs.keys().next_back().is_some_and(|&last| last >= prime) {
                return Err(err(lineno, "entries must be strictly ascending".into()));
            }
            let log = parse_hex(log).map_err(|e| err(lineno, e.to_string()))?;
            let y = group.g().modpow(&log, group.p());
            let f = BigUint::from(prime);
            if log >= *group.q() || (y != f && y != group.p() - &f) {
                return Err(err(
                    lineno,
                    format!("log of {prime} does not verify against the header group"),
                ));
            }
            logs.insert(prime, log);
            i += 1;
        }
        Ok(LogDb {
            group,
            factor_base,
            logs,
            metadata: None,
        })
    }
}

pub fn logdb_save(db: &LogDb, destination: &Path) -> Result<(), DlogError> {
    std::fs::write(destination, db.to_text())
        .map_err(|e| DlogError::Io(format!("{}: {e}", destination.display())))
}

pub fn logdb_load(source: &Path) -> Result<LogDb, DlogError> {
    let text = std::fs::read_to_string(source)
        .map_err(|e| DlogError::Io(format!("{}: {e}", source.display())))?;
    LogDb::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dlog::{precompute_logdb, EngineOptions};
    use crate::group_math::generate_safe_prime;

    fn sample_db() -> LogDb {
        let group = generate_safe_prime(28, 21).unwrap();
        precompute_logdb(&group, None, 4, &EngineOptions::default()).unwrap()
    }

    fn expect_line(result: Result<LogDb, DlogError>, want: usize) {
        match result {
            Err(DlogError::Load { line, .. }) => assert_eq!(line, want),
            other => panic!("expected load error at line {want}, got {other:?}"),
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let db = sample_db();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.logdb");
        logdb_save(&db, &path).unwrap();
        let loaded = logdb_load(&path).unwrap();
        assert_eq!(loaded, db);
        assert!(loaded.metadata().is_none());
        assert_eq!(loaded.to_text(), db.to_text());
    }

    #[test]
    fn text_layout() {
        let db = sample_db();
        let text = db.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "LOGDB 1");
        assert!(
            lines[1].starts_with("p ") && lines[2].starts_with("g ") && lines[3].starts_with("q ")
        );
        assert_eq!(lines[4], format!("B {}", db.factor_base().bound()));
        assert_eq!(*lines.last().unwrap(), format!("END {}", db.logs().len()));
        assert_eq!(lines.len(), 6 + db.logs().len());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = sample_db().to_text();
        let lines: Vec<&str> = text.lines().collect();
        let truncated = lines[..lines.len() - 3].join("\n");
        expect_line(LogDb::from_text(&truncated), lines.len() - 2);
        expect_line(LogDb::from_text(""), 1);
    }

    #[test]
    fn header_p_mismatch_is_rejected() {
        let db = sample_db();
        let other = generate_safe_prime(28, 22).unwrap();
        let text = db.to_text().replacen(
            &format!("p {}", to_hex(db.group().p())),
            &format!("p {}", to_hex(other.p())),
            1,
        );
        // The new header no longer matches q and g, or the entries stop verifying.
        assert!(matches!(
            LogDb::from_text(&text),
            Err(DlogError::Load { .. })
        ));
    }

    #[test]
    fn corrupted_entry_names_its_line() {
        let db = sample_db();
        let text = db.to_text();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let (prime, log) = db.logs().iter().nth(1).unwrap();
        lines[6] = format!("{prime} {}", to_hex(&(log + 1u32)));
        expect_line(LogDb::from_text(&lines.join("\n")), 7);
    }

    #[test]
    fn version_and_checksum_errors() {
        let text = sample_db().to_text();
        expect_line(LogDb::from_text(&text.replacen("LOGDB 1", "LOGDB 2", 1)), 1);
        let n = text.lines().count();
        let bad_end = text.replace(&format!("END {}", n - 6), &format!("END {}", n));
        expect_line(LogDb::from_text(&bad_end), n);
    }
}
