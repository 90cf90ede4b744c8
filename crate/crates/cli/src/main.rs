use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use logjam_core::dlog::{
    ic_descent, logdb_load, logdb_save, precompute_logdb, timed, DlogError, EngineOptions,
    DEFAULT_DESCENT_BUDGET,
};
use logjam_core::group_math::{
    generate_safe_prime, hex_to_padded_bytes, mod_exp, parse_hex, to_hex, DhGroup,
};
use logjam_core::harness::{
    audit_group, generate_smooth_order_group, load_popular_list, parse_population_spec,
    parse_scenario, run_scenario, AuditOptions, HarnessError, LogDbSource, ScenarioConfig,
    SHARED_EXPORT_SEED,
};
use num_bigint::BigUint;

#[derive(Parser)]
#[command(name = "logjam", version, about = "Desk-scale Logjam laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Build a log db for one group.
    Precompute {
        #[arg(long)]
        p: String,
        #[arg(long)]
        g: String,
        /// Factor base bound; chosen from the group size when omitted.
        #[arg(long)]
        bound: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one discrete log with a log db.
    Dlog {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_DESCENT_BUDGET)]
        budget: u64,
    },
    /// Run a scenario without its attacker.
    Handshake {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a scenario with its attacker and print the verdict.
    Attack {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the message transcript here as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Check a group's parameters.
    Audit {
        #[arg(long)]
        p: String,
        #[arg(long)]
        g: String,
        #[arg(long)]
        popular_list: Option<PathBuf>,
        #[arg(long)]
        min_bits: Option<u64>,
        #[arg(long)]
        smooth_bound: Option<u64>,
        /// The group is served under an export-grade suite.
        #[arg(long)]
        export: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Attackable share of a server population.
    Population {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print a safe-prime group, or a weak smooth-order one.
    GenGroup {
        #[arg(long)]
        bits: u64,
        #[arg(long, default_value_t = SHARED_EXPORT_SEED)]
        seed: u64,
        /// p - 1 = 2 * (primes below 2^max-factor-bits).
        #[arg(long)]
        unsafe_smooth: bool,
        #[arg(long, default_value_t = 12)]
        max_factor_bits: u32,
    },
}

enum Failure {
    /// Bad input: exit 2.
    Usage(String),
    /// The requested computation failed: exit 1.
    Domain(String),
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn domain(e: impl Display) -> Failure {
    Failure::Domain(e.to_string())
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            usage(e)
        } else {
            domain(e)
        }
    }
}

fn hex_arg(name: &str, v: &str) -> Result<BigUint, Failure> {
    parse_hex(v).map_err(|e| Failure::Usage(format!("--{name}: {e}")))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Log db paths in a scenario are relative to the scenario file.
fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    let mut cfg = parse_scenario(&read(path)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Some(LogDbSource::File(db)) = cfg.attacker.as_mut().map(|a| &mut a.logdb) {
        if db.is_relative() {
            *db = path.parent().unwrap_or(Path::new(".")).join(&*db);
        }
    }
    Ok(cfg)
}

fn load_db_error(e: DlogError) -> Failure {
    match e {
        DlogError::Io(_) | DlogError::Load { .. } => usage(e),
        e => domain(e),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Precompute {
            p,
            g,
            bound,
            seed,
            workers,
            out,
        } => {
            let group =
                DhGroup::from_safe_prime(hex_arg("p", &p)?, hex_arg("g", &g)?).map_err(usage)?;
            let (db, wall) = timed(|| {
                precompute_logdb(&group, bound, seed, &EngineOptions::with_workers(workers))
            });
            let db = db.map_err(domain)?;
            logdb_save(&db, &out).map_err(usage)?;
            println!(
                "log db for {}-bit p written to {}: {} primes, {:.3} s",
                group.magnitude_bits(),
                out.display(),
                db.logs().len(),
                wall.as_secs_f64()
            );
        }
        Command::Dlog {
            db,
            target,
            seed,
            budget,
        } => {
            let db = logdb_load(&db).map_err(load_db_error)?;
            let target = hex_arg("target", &target)?;
            let x = ic_descent(&db, &target, seed, budget).map_err(domain)?;
            let group = db.group();
            debug_assert_eq!(mod_exp(group.g(), &x, group.p()).ok(), Some(target));
            println!("0x{}", to_hex(&x));
        }
        Command::Handshake { scenario } => {
            let mut cfg = load_scenario(&scenario)?;
            cfg.attacker = None;
            let report = run_scenario(&cfg)?;
            println!("{}", report.summary());
            if !report.client.is_established() || !report.server.is_established() {
                return Err(Failure::Domain("handshake did not complete".into()));
            }
        }
        Command::Attack {
            scenario,
            transcript,
        } => {
            let cfg = load_scenario(&scenario)?;
            if cfg.attacker.is_none() {
                return Err(Failure::Usage(format!(
                    "{}: no [attacker] section",
                    scenario.display()
                )));
            }
            let report = run_scenario(&cfg)?;
            if let Some(o) = &report.outcome {
                for r in &o.log {
                    println!("t={:<8} {:<18} {}", r.time, r.phase, r.detail);
                }
            }
            println!("{}", report.summary());
            if let Some(path) = transcript {
                std::fs::write(&path, report.transcript_jsonl())
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                println!(
                    "transcript: {} records written to {}",
                    report.transcript.len(),
                    path.display()
                );
            }
        }
        Command::Audit {
            p,
            g,
            popular_list,
            min_bits,
            smooth_bound,
            export,
            format,
        } => {
            let encoded =
                hex_to_padded_bytes(&p).map_err(|e| Failure::Usage(format!("--p: {e}")))?;
            let g = hex_arg("g", &g)?;
            let mut opts = AuditOptions {
                export,
                ..Default::default()
            };
            if let Some(path) = popular_list {
                opts.popular = load_popular_list(&path)?;
            }
            if let Some(b) = min_bits {
                opts.min_bits = b;
            }
            if let Some(b) = smooth_bound {
                opts.smooth_bound = b;
            }
            let report = audit_group(&encoded, &g, &opts)?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Records => print!("{}", report.to_records()),
            }
        }
        Command::Population { spec, format } => {
            let spec = parse_population_spec(&read(&spec)?)?;
            let report = logjam_core::harness::simulate_population(&spec)?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Records => println!("{}", serde_json::to_string(&report).map_err(domain)?),
            }
        }
        Command::GenGroup {
            bits,
            seed,
            unsafe_smooth,
            max_factor_bits,
        } => {
            let group = if unsafe_smooth {
                generate_smooth_order_group(bits, max_factor_bits, seed)
            } else {
                generate_safe_prime(bits, seed)
            }
            .map_err(usage)?;
            println!("p = 0x{}", to_hex(group.p()));
            println!("g = 0x{}", to_hex(group.g()));
            println!("q = 0x{}", to_hex(group.q()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
