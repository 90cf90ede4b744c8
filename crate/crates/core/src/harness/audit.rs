//! Static checks on a server's Diffie-Hellman parameters.

use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::Serialize;

use super::HarnessError;
use crate::group_math::{
    is_probable_prime, is_safe_prime, measure_magnitude_bits, parse_hex, to_hex, DEFAULT_MR_ROUNDS,
};

/// Desk-scale stand-in for a 2048-bit floor.
pub const DEFAULT_MIN_BITS: u64 = 96;
pub const DEFAULT_SMOOTH_BOUND: u64 = 4096;
pub const DEFAULT_SMALL_COFACTOR_BITS: u64 = 32;

#[derive(Debug, Clone)]
pub struct AuditOptions {
    /// Trial division bound for `(p - 1) / 2`.
    pub smooth_bound: u64,
    /// A leftover cofactor this small still leaves Pohlig-Hellman cheap.
    pub small_cofactor_bits: u64,
    pub min_bits: u64,
    pub popular: Vec<BigUint>,
    /// The group is served under an export-grade suite.
    pub export: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            smooth_bound: DEFAULT_SMOOTH_BOUND,
            small_cofactor_bits: DEFAULT_SMALL_COFACTOR_BITS,
            min_bits: DEFAULT_MIN_BITS,
            popular: Vec::new(),
            export: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SmoothProbe {
    pub bound: u64,
    /// Prime factors of `(p - 1) / 2` up to `bound`, with multiplicity.
    pub factors: Vec<(u64, u32)>,
    #[serde(serialize_with = "hex_value")]
    pub cofactor: BigUint,
}

fn hex_value<S: serde::Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("0x{}", to_hex(v)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    NotPrime,
    GeneratorOutOfRange,
    EncodingMismatch {
        encoded_bits: u64,
        magnitude_bits: u64,
    },
    BelowMinBits {
        magnitude_bits: u64,
        min_bits: u64,
    },
    NotSafePrime,
    PohligHellmanRisk {
        cofactor_bits: u64,
    },
    PopularPrime,
    ExportSuite,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NotPrime => write!(f, "p is not prime"),
            Finding::GeneratorOutOfRange => write!(f, "g is outside [2, p-2]"),
            Finding::EncodingMismatch {
                encoded_bits,
                magnitude_bits,
            } => {
                write!(f, "encoded/magnitude mismatch: {encoded_bits} encoded bits, {magnitude_bits} magnitude bits")
            }
            Finding::BelowMinBits {
                magnitude_bits,
                min_bits,
            } => {
                write!(
                    f,
                    "prime of {magnitude_bits} bits is below the {min_bits}-bit floor"
                )
            }
            Finding::NotSafePrime => write!(f, "(p-1)/2 is composite"),
            Finding::PohligHellmanRisk { cofactor_bits } => {
                write!(
                    f,
                    "Pohlig-Hellman risk: unfactored cofactor of {cofactor_bits} bits"
                )
            }
            Finding::PopularPrime => write!(f, "p appears on the popular-prime list"),
            Finding::ExportSuite => write!(f, "group served under an export-grade suite"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RiskGrade {
    Low,
    Medium,
    High,
}

impl RiskGrade {
    pub fn from_findings(findings: &[Finding]) -> RiskGrade {
        findings
            .iter()
            .map(Self::of)
            .max()
            .unwrap_or(RiskGrade::Low)
    }

    fn of(f: &Finding) -> RiskGrade {
        match f {
            Finding::NotPrime
            | Finding::GeneratorOutOfRange
            | Finding::BelowMinBits { .. }
            | Finding::PohligHellmanRisk { .. }
            | Finding::ExportSuite => RiskGrade::High,
            Finding::EncodingMismatch { .. } | Finding::NotSafePrime | Finding::PopularPrime => {
                RiskGrade::Medium
            }
        }
    }
}

impl fmt::Display for RiskGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskGrade::Low => "LOW",
            RiskGrade::Medium => "MEDIUM",
            RiskGrade::High => "HIGH",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    #[serde(serialize_with = "hex_value")]
    pub p: BigUint,
    #[serde(serialize_with = "hex_value")]
    pub g: BigUint,
    pub encoded_bits: u64,
    pub magnitude_bits: u64,
    pub prime: bool,
    pub safe_prime: bool,
    pub probe: SmoothProbe,
    pub popular: bool,
    pub export: bool,
    pub findings: Vec<Finding>,
    pub grade: RiskGrade,
}

impl AuditReport {
    pub fn to_text(&self) -> String {
        let factors: Vec<String> = self
            .probe
            .factors
            .iter()
            .map(|(r, e)| {
                if *e == 1 {
                    r.to_string()
                } else {
                    format!("{r}^{e}")
                }
            })
            .collect();
        let rows = [
            ("p", format!("0x{}", to_hex(&self.p))),
            ("g", format!("0x{}", to_hex(&self.g))),
            ("encoded bits", self.encoded_bits.to_string()),
            ("magnitude bits", self.magnitude_bits.to_string()),
            ("prime", self.prime.to_string()),
            ("safe prime", self.safe_prime.to_string()),
            ("smooth bound", self.probe.bound.to_string()),
            (
                "small factors",
                if factors.is_empty() {
                    "-".into()
                } else {
                    factors.join(" ")
                },
            ),
            ("cofactor", format!("0x{}", to_hex(&self.probe.cofactor))),
            ("popular", self.popular.to_string()),
            ("export", self.export.to_string()),
            ("grade", self.grade.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        for f in &self.findings {
            out.push_str(&format!("{:<width$}  {f}\n", "finding"));
        }
        out
    }

    pub fn to_records(&self) -> String {
        serde_json::to_string(self).expect("report serializes") + "\n"
    }
}

/// Trial division of `n` by every prime up to `bound`.
pub fn trial_divide(n: &BigUint, bound: u64) -> SmoothProbe {
    let mut rest = n.clone();
    let mut factors = Vec::new();
    let mut d = 2u64;
    while d <= bound && !rest.is_one() && !rest.is_zero() {
        let dd = BigUint::from(d);
        let mut e = 0;
        loop {
            let (quot, rem) = rest.div_rem(&dd);
            if !rem.is_zero() {
                break;
            }
            rest = quot;
            e += 1;
        }
        if e > 0 {
            factors.push((d, e));
        }
        d += if d == 2 { 1 } else { 2 };
    }
    SmoothProbe {
        bound,
        factors,
        cofactor: rest,
    }
}

pub fn audit_group(
    p_encoded: &[u8],
    g: &BigUint,
    opts: &AuditOptions,
) -> Result<AuditReport, HarnessError> {
    let p = BigUint::from_bytes_be(p_encoded);
    let (encoded_bits, magnitude_bits) = measure_magnitude_bits(p_encoded, &p)?;
    let prime = p > BigUint::from(3u32) && is_probable_prime(&p, DEFAULT_MR_ROUNDS);
    let safe_prime = prime && is_safe_prime(&p);
    let half = if p.is_zero() {
        BigUint::zero()
    } else {
        (&p - 1u32) >> 1
    };
    let probe = trial_divide(&half, opts.smooth_bound);
    let popular = opts.popular.contains(&p);
    let mut findings = Vec::new();
    if !prime {
        findings.push(Finding::NotPrime);
    }
    if *g < BigUint::from(2u32) || p < BigUint::from(4u32) || *g > &p - 2u32 {
        findings.push(Finding::GeneratorOutOfRange);
    }
    if encoded_bits != magnitude_bits.div_ceil(8) * 8 {
        findings.push(Finding::EncodingMismatch {
            encoded_bits,
            magnitude_bits,
        });
    }
    if magnitude_bits < opts.min_bits {
        findings.push(Finding::BelowMinBits {
            magnitude_bits,
            min_bits: opts.min_bits,
        });
    }
    if prime && !safe_prime {
        findings.push(Finding::NotSafePrime);
        let cofactor_bits = if probe.cofactor.is_one() {
            0
        } else {
            probe.cofactor.bits()
        };
        if cofactor_bits <= opts.small_cofactor_bits {
            findings.push(Finding::PohligHellmanRisk { cofactor_bits });
        }
    }
    if popular {
        findings.push(Finding::PopularPrime);
    }
    if opts.export {
        findings.push(Finding::ExportSuite);
    }
    let grade = RiskGrade::from_findings(&findings);
    Ok(AuditReport {
        p,
        g: g.clone(),
        encoded_bits,
        magnitude_bits,
        prime,
        safe_prime,
        probe,
        popular,
        export: opts.export,
        findings,
        grade,
    })
}

/// One hex prime per line; `#` starts a comment.
pub fn load_popular_list(path: &Path) -> Result<Vec<BigUint>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = parse_hex(line).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(v);
    }
    Ok(out)
}
