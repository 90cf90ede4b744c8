//! Discrete logarithms in Z_p*.
//!
//! [`bsgs_log`] and [`pohlig_hellman_log`] are exact generic-group solvers.
//! The index-calculus stages ([`ic_select_parameters`], [`ic_sieve_relations`],
//! [`ic_linear_algebra`]) depend on the group only and produce a [`LogDb`];
//! [`ic_descent`] is the cheap per-target stage that consumes it.

mod generic;
mod index_calculus;
mod logdb;
mod modring;
mod smooth;

use thiserror::Error;

pub use generic::{bsgs_log, pohlig_hellman_log, MAX_BSGS_ORDER_BITS};
pub use index_calculus::{
    ic_descent, ic_descent_with, ic_linear_algebra, ic_select_parameters, ic_sieve_relations,
    ic_sieve_relations_with, precompute_logdb, timed, EngineOptions, Relation,
    DEFAULT_DESCENT_BUDGET, INFEASIBLE_TRIALS_PER_RELATION, MAX_SUPPORTED_BITS,
    MIN_FACTOR_BASE_BOUND, MIN_SUPPORTED_BITS, RELATION_MARGIN,
};
pub use logdb::{logdb_load, logdb_save, CreationInfo, LogDb, LOGDB_VERSION};
pub use smooth::{smooth_factor, FactorBase, SmoothnessResult};

pub const MAX_FACTOR_BASE_BOUND: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DlogError {
    #[error("input must be positive")]
    ZeroInput,
    #[error("factor base would be empty")]
    EmptyFactorBase,
    #[error("factor-base bound {bound} is out of range")]
    BoundTooLarge { bound: u64 },
    #[error("{bits}-bit modulus is outside the supported range")]
    UnsupportedSize { bits: u64 },
    #[error("{0} is too large for this solver")]
    TooLarge(&'static str),
    #[error("no logarithm exists in the given subgroup")]
    NotFound,
    #[error("target is not in the subgroup generated by g")]
    NotInSubgroup,
    #[error("bad order factorization: {0}")]
    BadFactorization(&'static str),
    #[error("prime {prime} is not in the factor base")]
    PrimeOutsideFactorBase { prime: u64 },
    #[error("asked for {needed} relations; at least {minimum} are required")]
    TooFewRelationsRequested { needed: usize, minimum: usize },
    #[error(
        "sieving infeasible: {found} relations after {trials} trials (factor base too small for p)"
    )]
    Infeasible { trials: u64, found: usize },
    #[error("linear system is rank-deficient; undetermined primes: {undetermined:?}")]
    NeedsMoreRelations { undetermined: Vec<u64> },
    #[error("relations are inconsistent")]
    InconsistentRelations,
    #[error("descent exhausted its budget of {budget} trials")]
    DescentTimeout { budget: u64 },
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}
