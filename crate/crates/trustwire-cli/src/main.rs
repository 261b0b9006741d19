//! Command-line front end: key generation, scenario runs, the canonical
//! disclosure table, fault injection, and general-user flows.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use trustwire::handshake::QueryKind;
use trustwire::keyfabric::{generate_keypair, AgencyId};
use trustwire::simharness::{
    build_network, canonical_scenario, inject_fault, report, run_scenario, verify_table1,
    ExchangeOutcome, FaultKind, Scenario,
};

#[derive(Parser)]
#[command(name = "trustwire", version, about = "Trust-graded information exchange simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic key pair and write both halves as text files.
    Keygen {
        /// Modulus size in bits (even, at least 32).
        #[arg(long, default_value_t = 512)]
        bits: u32,
        /// Seed; equal seeds and bits reproduce the identical pair.
        #[arg(long)]
        seed: u64,
        /// Output path for the public half.
        #[arg(long)]
        public: PathBuf,
        /// Output path for the private half.
        #[arg(long)]
        private: PathBuf,
    },
    /// Run a scenario script and print the outcome table.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Print tab-separated lines instead of the aligned table.
        #[arg(long)]
        lines: bool,
    },
    /// Run the embedded canonical scenario and check the disclosure table.
    Table1 {
        #[arg(long)]
        lines: bool,
    },
    /// Register a general user at an agency and print the issued password.
    RegisterUser {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        agency: String,
        #[arg(long)]
        user: String,
        /// Write an updated scenario including the new user here; without it a
        /// newly registered user cannot be used by later invocations.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query an agency's store as a registered general user.
    Query {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        agency: String,
        #[arg(long)]
        user: String,
        #[arg(long)]
        password: String,
        #[arg(long)]
        code: String,
        /// "items" or "activities".
        #[arg(long, default_value = "items")]
        kind: String,
    },
    /// Re-run a scenario with one corrupted row and check the blast radius.
    Inject {
        /// Scenario file; the embedded canonical scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Script row the fault lands on (0-based).
        #[arg(long)]
        row: usize,
        /// One of: flip-byte:K, swap-responses:J, replay-response:J,
        /// wrong-target-key.
        #[arg(long)]
        fault: String,
    },
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    Scenario::from_toml_str(&text).map_err(|e| anyhow!("{e}"))
}

fn parse_kind(raw: &str) -> Result<QueryKind> {
    match raw {
        "items" => Ok(QueryKind::InfoItems),
        "activities" => Ok(QueryKind::Activities),
        other => bail!("kind must be \"items\" or \"activities\", not {other:?}"),
    }
}

fn parse_fault(raw: &str) -> Result<FaultKind> {
    let (name, arg) = match raw.split_once(':') {
        Some((name, arg)) => (name, Some(arg)),
        None => (raw, None),
    };
    let number = |what: &str| -> Result<usize> {
        arg.ok_or_else(|| anyhow!("fault {name} needs :{what}"))?
            .parse()
            .with_context(|| format!("fault {name} wants a numeric {what}"))
    };
    match name {
        "flip-byte" => Ok(FaultKind::FlipByte(number("byte-index")?)),
        "swap-responses" => Ok(FaultKind::SwapResponses(number("row")?)),
        "replay-response" => Ok(FaultKind::ReplayResponse(number("row")?)),
        "wrong-target-key" => {
            if arg.is_some() {
                bail!("wrong-target-key takes no argument");
            }
            Ok(FaultKind::WrongTargetKey)
        }
        other => bail!("unknown fault {other:?}"),
    }
}

fn print_outcomes(outcomes: &[ExchangeOutcome], lines: bool) {
    if lines {
        print!("{}", report::render_lines(outcomes));
    } else {
        print!("{}", report::render_table(outcomes));
    }
}

fn expected_classes(kind: &FaultKind) -> &'static [&'static str] {
    match kind {
        FaultKind::FlipByte(_) => &["integrity", "authentication", "decode"],
        FaultKind::SwapResponses(_) => &["request-correlation", "agency-verification"],
        FaultKind::ReplayResponse(_) => {
            &["request-correlation", "agency-verification", "decode"]
        }
        FaultKind::WrongTargetKey => &["decode"],
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Keygen { bits, seed, public, private } => {
            let pair = generate_keypair(bits, seed).map_err(|e| anyhow!("{e}"))?;
            std::fs::write(&public, pair.public.to_key_text())
                .with_context(|| format!("writing {}", public.display()))?;
            std::fs::write(&private, pair.private.to_key_text())
                .with_context(|| format!("writing {}", private.display()))?;
            println!("wrote {} and {}", public.display(), private.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { scenario, lines } => {
            let scenario = load_scenario(&scenario)?;
            let outcomes = run_scenario(&scenario).map_err(|e| anyhow!("{e}"))?;
            print_outcomes(&outcomes, lines);
            let failures = outcomes.iter().filter(|o| !o.succeeded()).count();
            if failures == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{failures} of {} rows failed", outcomes.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Table1 { lines } => {
            let scenario = canonical_scenario();
            let outcomes = run_scenario(&scenario).map_err(|e| anyhow!("{e}"))?;
            print_outcomes(&outcomes, lines);
            match verify_table1(&scenario, &outcomes) {
                Ok(()) => {
                    println!("table check: ok");
                    Ok(ExitCode::SUCCESS)
                }
                Err(problems) => {
                    eprintln!("table check failed: {problems}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::RegisterUser { scenario: path, agency, user, out } => {
            let mut scenario = load_scenario(&path)?;
            let agency = AgencyId::new(&agency).map_err(|e| anyhow!("{e}"))?;
            let mut network = build_network(&scenario).map_err(|e| anyhow!("{e}"))?;
            if let Some(password) = network.issued_password(&agency, &user) {
                println!("{password}");
                return Ok(ExitCode::SUCCESS);
            }
            let node = network
                .node_mut(&agency)
                .ok_or_else(|| anyhow!("agency {agency} not in scenario"))?;
            let password = node.register_user(&user).map_err(|e| anyhow!("{e}"))?;
            println!("{password}");
            match out {
                Some(out) => {
                    let spec = scenario
                        .agencies
                        .iter_mut()
                        .find(|a| a.id == agency)
                        .expect("agency exists in scenario");
                    spec.users.push(user);
                    std::fs::write(&out, scenario.to_toml_string())
                        .with_context(|| format!("writing {}", out.display()))?;
                    eprintln!("updated scenario written to {}", out.display());
                }
                None => {
                    eprintln!(
                        "note: no --out given, so later invocations will not know this user"
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Query { scenario, agency, user, password, code, kind } => {
            let scenario = load_scenario(&scenario)?;
            let agency = AgencyId::new(&agency).map_err(|e| anyhow!("{e}"))?;
            let kind = parse_kind(&kind)?;
            let network = build_network(&scenario).map_err(|e| anyhow!("{e}"))?;
            let node = network
                .node(&agency)
                .ok_or_else(|| anyhow!("agency {agency} not in scenario"))?;
            match node.user_query(&user, &password, &code, kind) {
                Ok(results) if results.is_empty() => {
                    println!("no results");
                    Ok(ExitCode::SUCCESS)
                }
                Ok(results) => {
                    for result in results {
                        println!("{result}");
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(err) => {
                    eprintln!("{err}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Inject { scenario, row, fault } => {
            let scenario = match scenario {
                Some(path) => load_scenario(&path)?,
                None => canonical_scenario(),
            };
            let kind = parse_fault(&fault)?;
            let clean = run_scenario(&scenario).map_err(|e| anyhow!("{e}"))?;
            let faulted = inject_fault(&scenario, row, kind.clone()).map_err(|e| anyhow!("{e}"))?;
            print_outcomes(&faulted, false);

            let mut targeted = vec![row];
            if let FaultKind::SwapResponses(other) = kind {
                targeted.push(other);
            }
            let expected = expected_classes(&kind);
            let mut ok = true;
            for &index in &targeted {
                match faulted[index].error.as_deref() {
                    Some(class) if expected.contains(&class) => {
                        println!("row {index} rejected with {class}");
                    }
                    Some(class) => {
                        eprintln!("row {index} rejected with unexpected class {class}");
                        ok = false;
                    }
                    None => {
                        eprintln!("row {index} was not rejected");
                        ok = false;
                    }
                }
            }
            for (clean_row, faulted_row) in clean.iter().zip(&faulted) {
                if targeted.contains(&clean_row.index) {
                    continue;
                }
                if clean_row != faulted_row {
                    eprintln!("row {} changed without being targeted", clean_row.index);
                    ok = false;
                }
            }
            if ok {
                println!("fault contained to targeted rows");
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
