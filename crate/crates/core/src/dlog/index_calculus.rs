//! Index calculus over the order-q subgroup of Z_p* for a safe prime p.
//!
//! The four stages mirror the number field sieve pipeline at desk scale:
//! parameter selection, relation sieving and linear algebra depend on the
//! group alone and produce a [`LogDb`]; descent consumes a LogDb and one
//! target.
//!
//! Log convention: factor-base primes need not lie in the subgroup. Every
//! relation `g^k = prod f^e` is squared into the subgroup, which yields
//! `k = sum e * x_f (mod q)` where `x_f` is the unique exponent with
//! `g^x_f` in `{f, p - f}`. Those are the logs stored in the LogDb.

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::generic::ring_for;
use super::logdb::{CreationInfo, LogDb};
use super::modring::ModRing;
use super::smooth::{factor_over, FactorBase};
use super::DlogError;
use crate::group_math::DhGroup;

/// Relations requested beyond the factor-base size.
pub const RELATION_MARGIN: usize = 10;
/// Default descent budget in candidate trials.
pub const DEFAULT_DESCENT_BUDGET: u64 = 10_000_000;
/// Sieving gives up when fewer than one smooth value turns up per this many
/// trials.
pub const INFEASIBLE_TRIALS_PER_RELATION: u64 = 10_000_000;

pub const MIN_SUPPORTED_BITS: u64 = 20;
pub const MAX_SUPPORTED_BITS: u64 = 96;
pub const MIN_FACTOR_BASE_BOUND: u64 = 30;

const SIEVE_CHUNK_TRIALS: u64 = 4096;
const DESCENT_CHUNK_TRIALS: u64 = 1024;
const MAX_EXTENSION_ROUNDS: usize = 64;

/// One smooth value: `g^k mod p = prod prime^multiplicity`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub k: BigUint,
    pub exponent_vector: BTreeMap<u64, u32>,
}

/// Worker-pool settings shared by sieving and descent. Work is cut into
/// fixed seed-derived chunks merged in chunk order, so results do not depend
/// on the worker count.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub workers: usize,
    pub infeasible_trials_per_relation: u64,
    pub relation_margin: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            workers: 1,
            infeasible_trials_per_relation: INFEASIBLE_TRIALS_PER_RELATION,
            relation_margin: RELATION_MARGIN,
        }
    }
}

impl EngineOptions {
    pub fn with_workers(workers: usize) -> Self {
        EngineOptions {
            workers: workers.max(1),
            ..Default::default()
        }
    }
}

/// `exp(0.5 * sqrt(ln p * ln ln p))` clamped to `[30, 2^20]`.
pub fn ic_select_parameters(group: &DhGroup) -> Result<FactorBase, DlogError> {
    let bits = group.magnitude_bits();
    if !(MIN_SUPPORTED_BITS..=MAX_SUPPORTED_BITS).contains(&bits) {
        return Err(DlogError::UnsupportedSize { bits });
    }
    FactorBase::new(suggested_bound(group.p()))
}

pub(crate) fn suggested_bound(p: &BigUint) -> u64 {
    let ln_p = p.to_f64().unwrap_or(f64::MAX).ln();
    let raw = (0.5 * (ln_p * ln_p.ln()).sqrt()).exp();
    (raw.round() as u64).clamp(MIN_FACTOR_BASE_BOUND, super::MAX_FACTOR_BASE_BOUND)
}

struct Setup {
    p: ModRing,
    q: ModRing,
    g: u128,
}

fn setup(group: &DhGroup, base: &FactorBase) -> Result<Setup, DlogError> {
    let p = ring_for(group)?;
    let q = ModRing::from_big(group.q()).ok_or(DlogError::UnsupportedSize {
        bits: group.magnitude_bits(),
    })?;
    if (base.bound() as u128) >= p.modulus() {
        return Err(DlogError::BoundTooLarge {
            bound: base.bound(),
        });
    }
    let g = group
        .g()
        .to_u128()
        .ok_or(DlogError::TooLarge("generator"))?;
    Ok(Setup { p, q, g })
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Scans `g^k` for `k = k0, k0+1, ...` from a random start and keeps smooth
/// values as sparse exponent vectors over factor-base indices.
fn sieve_chunk(s: &Setup, primes: &[u64], seed: u64, chunk: u64) -> Vec<(u128, Vec<(usize, u32)>)> {
    let mut rng = chunk_rng(seed, chunk);
    let q = s.q.modulus();
    let mut k = rng.gen_range(1..q);
    let mut value = s.p.pow(s.g, k);
    let mut exps = vec![0u32; primes.len()];
    let mut found = Vec::new();
    for _ in 0..SIEVE_CHUNK_TRIALS {
        exps.iter_mut().for_each(|e| *e = 0);
        if factor_over(value, primes, &mut exps) == 1 {
            let sparse = exps
                .iter()
                .enumerate()
                .filter(|(_, e)| **e > 0)
                .map(|(i, e)| (i, *e))
                .collect();
            found.push((k, sparse));
        }
        value = s.p.mul(value, s.g);
        k += 1;
        if k == q {
            k = 1;
            value = s.g;
        }
    }
    found
}

/// Relation collection state that can be resumed, so a rank-deficient system
/// can be topped up without repeating work.
struct RelationCollector<'a> {
    setup: Setup,
    base: &'a FactorBase,
    seed: u64,
    options: EngineOptions,
    next_chunk: u64,
    trials: u64,
    seen: HashSet<u128>,
    rows: Vec<(u128, Vec<(usize, u32)>)>,
}

impl<'a> RelationCollector<'a> {
    fn new(
        group: &DhGroup,
        base: &'a FactorBase,
        seed: u64,
        options: &EngineOptions,
    ) -> Result<Self, DlogError> {
        Ok(RelationCollector {
            setup: setup(group, base)?,
            base,
            seed,
            options: options.clone(),
            next_chunk: 0,
            trials: 0,
            seen: HashSet::new(),
            rows: Vec::new(),
        })
    }

    fn collect_until(&mut self, needed: usize) -> Result<(), DlogError> {
        let workers = self.options.workers.max(1) as u64;
        while self.rows.len() < needed {
            let first = self.next_chunk;
            let chunks: Vec<_> = if workers == 1 {
                vec![sieve_chunk(
                    &self.setup,
                    self.base.primes(),
                    self.seed,
                    first,
                )]
            } else {
                (first..first + workers)
                    .into_par_iter()
                    .map(|c| sieve_chunk(&self.setup, self.base.primes(), self.seed, c))
                    .collect()
            };
            for found in chunks {
                self.next_chunk += 1;
                self.trials += SIEVE_CHUNK_TRIALS;
                for (k, row) in found {
                    if self.rows.len() < needed && self.seen.insert(k) {
                        self.rows.push((k, row));
                    }
                }
                if self.rows.len() >= needed {
                    break;
                }
            }
            let limit = self.options.infeasible_trials_per_relation;
            if self.rows.len() < needed
                && self.trials >= limit.saturating_mul(self.rows.len() as u64 + 1)
            {
                return Err(DlogError::Infeasible {
                    trials: self.trials,
                    found: self.rows.len(),
                });
            }
        }
        Ok(())
    }

    fn relations(&self) -> Vec<Relation> {
        self.rows
            .iter()
            .map(|(k, row)| to_relation(*k, row, self.base))
            .collect()
    }
}

fn to_relation(k: u128, row: &[(usize, u32)], base: &FactorBase) -> Relation {
    Relation {
        k: BigUint::from(k),
        exponent_vector: row.iter().map(|&(i, e)| (base.primes()[i], e)).collect(),
    }
}

/// Collects `needed` distinct relations (distinct `k`).
pub fn ic_sieve_relations(
    group: &DhGroup,
    base: &FactorBase,
    needed: usize,
    rng_seed: u64,
) -> Result<Vec<Relation>, DlogError> {
    ic_sieve_relations_with(group, base, needed, rng_seed, &EngineOptions::default())
}

pub fn ic_sieve_relations_with(
    group: &DhGroup,
    base: &FactorBase,
    needed: usize,
    rng_seed: u64,
    options: &EngineOptions,
) -> Result<Vec<Relation>, DlogError> {
    let minimum = base.len() + options.relation_margin;
    if needed < minimum {
        return Err(DlogError::TooFewRelationsRequested { needed, minimum });
    }
    let mut collector = RelationCollector::new(group, base, rng_seed, options)?;
    collector.collect_until(needed)?;
    Ok(collector.relations())
}

/// Gauss-Jordan elimination of `k = sum e_i x_i (mod q)`. Returns the value
/// of every column, or the list of columns left undetermined.
fn solve_mod_q(
    q: &ModRing,
    columns: usize,
    rows: &[(u128, Vec<(usize, u32)>)],
) -> Result<Vec<u128>, DlogError> {
    let width = columns + 1;
    let mut matrix: Vec<Vec<u128>> = rows
        .iter()
        .map(|(k, row)| {
            let mut dense = vec![0u128; width];
            for &(i, e) in row {
                dense[i] = q.reduce(e as u128);
            }
            dense[columns] = q.reduce(*k);
            dense
        })
        .collect();

    let mut pivot_row_of = vec![None; columns];
    let mut rank = 0;
    for col in 0..columns {
        let Some(pivot) = (rank..matrix.len()).find(|&r| matrix[r][col] != 0) else {
            continue;
        };
        matrix.swap(rank, pivot);
        let inv = q
            .inv(matrix[rank][col])
            .ok_or(DlogError::InconsistentRelations)?;
        for v in matrix[rank][col..].iter_mut() {
            *v = q.mul(*v, inv);
        }
        let pivot_vals = matrix[rank].clone();
        for (r, row) in matrix.iter_mut().enumerate() {
            if r == rank || row[col] == 0 {
                continue;
            }
            let factor = row[col];
            for c in col..width {
                row[c] = q.sub(row[c], q.mul(factor, pivot_vals[c]));
            }
        }
        pivot_row_of[col] = Some(rank);
        rank += 1;
    }
    if matrix[rank..].iter().any(|row| row[columns] != 0) {
        return Err(DlogError::InconsistentRelations);
    }
    let undetermined: Vec<usize> = (0..columns)
        .filter(|&c| pivot_row_of[c].is_none())
        .collect();
    if !undetermined.is_empty() {
        return Err(DlogError::NeedsMoreRelations {
            undetermined: undetermined.iter().map(|&c| c as u64).collect(),
        });
    }
    Ok(pivot_row_of
        .iter()
        .map(|r| matrix[r.unwrap()][columns])
        .collect())
}

/// Solves for the factor-base logs and packages them as a [`LogDb`]. Every
/// recovered log is checked against `g^x in {f, p - f}`; entries failing the
/// check are dropped and reported in the creation info.
pub fn ic_linear_algebra(
    group: &DhGroup,
    base: &FactorBase,
    relations: &[Relation],
) -> Result<LogDb, DlogError> {
    let s = setup(group, base)?;
    let mut rows = Vec::with_capacity(relations.len());
    for rel in relations {
        let k = rel
            .k
            .to_u128()
            .ok_or(DlogError::TooLarge("relation exponent"))?;
        let mut row = Vec::with_capacity(rel.exponent_vector.len());
        for (&prime, &e) in &rel.exponent_vector {
            let idx = base
                .index_of(prime)
                .ok_or(DlogError::PrimeOutsideFactorBase { prime })?;
            row.push((idx, e));
        }
        rows.push((k, row));
    }
    solve_rows(group, base, &s, &rows)
}

fn solve_rows(
    group: &DhGroup,
    base: &FactorBase,
    s: &Setup,
    rows: &[(u128, Vec<(usize, u32)>)],
) -> Result<LogDb, DlogError> {
    let solution = solve_mod_q(&s.q, base.len(), rows).map_err(|e| match e {
        DlogError::NeedsMoreRelations { undetermined } => DlogError::NeedsMoreRelations {
            undetermined: undetermined
                .iter()
                .map(|&c| base.primes()[c as usize])
                .collect(),
        },
        other => other,
    })?;
    let mut logs = BTreeMap::new();
    let mut dropped = Vec::new();
    for (&f, &x) in base.primes().iter().zip(&solution) {
        let y = s.p.pow(s.g, x);
        let f = f as u128;
        if y == f || y == s.p.modulus() - f {
            logs.insert(f as u64, BigUint::from(x));
        } else {
            dropped.push(f as u64);
        }
    }
    let info = CreationInfo {
        relation_count: rows.len(),
        dropped,
        ..Default::default()
    };
    Ok(LogDb::from_parts(
        group.clone(),
        base.clone(),
        logs,
        Some(info),
    ))
}

/// Runs the three group-only stages end to end, topping up relations while
/// the system is rank-deficient.
pub fn precompute_logdb(
    group: &DhGroup,
    bound: Option<u64>,
    rng_seed: u64,
    options: &EngineOptions,
) -> Result<LogDb, DlogError> {
    let started = Instant::now();
    let base = match bound {
        Some(b) => FactorBase::new(b)?,
        None => ic_select_parameters(group)?,
    };
    let mut collector = RelationCollector::new(group, &base, rng_seed, options)?;
    let mut needed = base.len() + options.relation_margin;
    for _ in 0..MAX_EXTENSION_ROUNDS {
        collector.collect_until(needed)?;
        match solve_rows(group, &base, &collector.setup, &collector.rows) {
            Ok(mut db) => {
                let relation_count = collector.rows.len();
                let dropped = db.metadata().map(|m| m.dropped.clone()).unwrap_or_default();
                db.set_metadata(CreationInfo {
                    seed: rng_seed,
                    relation_count,
                    trials: collector.trials,
                    dropped,
                    wall_time: started.elapsed(),
                });
                log::debug!(
                    "precompute: {} primes, {} relations, {} trials, {:?}",
                    base.len(),
                    relation_count,
                    collector.trials,
                    started.elapsed()
                );
                return Ok(db);
            }
            Err(DlogError::NeedsMoreRelations { .. }) => {
                needed += base.len() / 2 + options.relation_margin;
            }
            Err(e) => return Err(e),
        }
    }
    Err(DlogError::NeedsMoreRelations {
        undetermined: Vec::new(),
    })
}

/// Descent: find `s` with `target * g^s` smooth over the logged primes, then
/// `x = sum e_i log f_i - s (mod q)`.
pub fn ic_descent(
    db: &LogDb,
    target: &BigUint,
    rng_seed: u64,
    budget: u64,
) -> Result<BigUint, DlogError> {
    ic_descent_with(db, target, rng_seed, budget, &EngineOptions::default()).map(|(x, _)| x)
}

/// Descent returning the solution together with the number of trials spent.
pub fn ic_descent_with(
    db: &LogDb,
    target: &BigUint,
    rng_seed: u64,
    budget: u64,
    options: &EngineOptions,
) -> Result<(BigUint, u64), DlogError> {
    let group = db.group();
    let s = setup(group, db.factor_base())?;
    let t = target.to_u128().ok_or(DlogError::NotInSubgroup)?;
    if t == 0 || t >= s.p.modulus() || s.p.pow(t, s.q.modulus()) != 1 {
        return Err(DlogError::NotInSubgroup);
    }
    if t == 1 {
        return Ok((BigUint::from(0u32), 0));
    }
    let (primes, logs): (Vec<u64>, Vec<u128>) = db
        .logs()
        .iter()
        .map(|(&f, x)| (f, x.to_u128().unwrap_or(0)))
        .unzip();

    let run_chunk = |chunk: u64| -> Option<u128> {
        let mut rng = chunk_rng(rng_seed, chunk);
        let q = s.q.modulus();
        let mut shift = rng.gen_range(0..q);
        let mut value = s.p.mul(t, s.p.pow(s.g, shift));
        let mut exps = vec![0u32; primes.len()];
        let trials = DESCENT_CHUNK_TRIALS.min(budget - chunk * DESCENT_CHUNK_TRIALS);
        for _ in 0..trials {
            exps.iter_mut().for_each(|e| *e = 0);
            if factor_over(value, &primes, &mut exps) == 1 {
                let mut sum = 0u128;
                for (e, x) in exps.iter().zip(&logs) {
                    if *e > 0 {
                        sum = s.q.add(sum, s.q.mul(*e as u128, *x));
                    }
                }
                return Some(s.q.sub(sum, shift));
            }
            value = s.p.mul(value, s.g);
            shift = s.q.add(shift, 1);
        }
        None
    };

    let workers = options.workers.max(1) as u64;
    let max_chunks = budget.div_ceil(DESCENT_CHUNK_TRIALS);
    let mut chunk = 0u64;
    while chunk < max_chunks {
        let end = (chunk + workers).min(max_chunks);
        let results: Vec<Option<u128>> = if workers == 1 {
            vec![run_chunk(chunk)]
        } else {
            (chunk..end).into_par_iter().map(run_chunk).collect()
        };
        for (offset, r) in results.into_iter().enumerate() {
            if let Some(x) = r {
                if s.p.pow(s.g, x) != t {
                    return Err(DlogError::InconsistentRelations);
                }
                let trials = ((chunk + offset as u64 + 1) * DESCENT_CHUNK_TRIALS).min(budget);
                return Ok((BigUint::from(x), trials));
            }
        }
        chunk = end;
    }
    Err(DlogError::DescentTimeout { budget })
}

/// Convenience timing wrapper used by reports and the amortization checks.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}
