//! `civic-cred` command line: key generation, the two demonstration runs, and
//! the transcript audit.
//!
//! Exit codes: 0 on success, 1 on a domain error (including findings under
//! `audit --strict`), 2 on a usage error. All randomness comes from `--seed`,
//! falling back to a config file's seed, then to `CIVIC_CRED_SEED`, then 0.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::auditor::{self, AuditOptions, ModeChoice};
use crate::blindsig::BlindKeyPair;
use crate::credentials::{AttributeId, AttributeKeyDirectory};
use crate::scenarios::{self, ScenarioConfig};
use crate::transcript;

pub const SEED_ENV: &str = "CIVIC_CRED_SEED";
pub const REPORT_FILE: &str = "report.json";
pub const DIRECTORY_FILE: &str = "directory.json";

#[derive(Debug, Parser)]
#[command(name = "civic-cred", version, about = "Blind-signature single-use credentials: keys, demo runs, and linkage audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate attribute signing keys and write the public directory file.
    Keygen(KeygenArgs),
    /// Run the transit-discount scenario.
    DemoTransit(TransitArgs),
    /// Run the decentralized contact-tracing scenario.
    DemoTracing(TracingArgs),
    /// Audit a directory of transcripts for linkage, leaks and double spends.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Issuer name recorded in the directory.
    #[arg(long)]
    pub issuer: String,
    /// Attribute to create a key for; repeat for several.
    #[arg(long = "attribute", required = true)]
    pub attributes: Vec<String>,
    /// Modulus size in bits (even, at least 16).
    #[arg(long, default_value_t = 16)]
    pub bits: u64,
    /// Public exponent.
    #[arg(long, default_value_t = 3)]
    pub exponent: u64,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransitArgs {
    /// JSON scenario config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of citizens.
    #[arg(long)]
    pub citizens: Option<usize>,
    /// Number of transit relying parties.
    #[arg(long)]
    pub rps: Option<usize>,
    /// Credentials each citizen obtains.
    #[arg(long)]
    pub per_citizen: Option<usize>,
    /// Citizens who replay a spent credential.
    #[arg(long)]
    pub cheaters: Option<usize>,
    /// Full gossip round after this many presentations (0 disables gossip).
    #[arg(long)]
    pub gossip_every: Option<usize>,
    /// Issuance quota per citizen and period.
    #[arg(long)]
    pub quota: Option<u32>,
    /// Modulus size in bits.
    #[arg(long)]
    pub bits: Option<u64>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the report, directory file and transcripts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TracingArgs {
    /// JSON scenario config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of agents.
    #[arg(long)]
    pub agents: Option<usize>,
    /// Timeline length in epochs.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Contacts sampled per epoch.
    #[arg(long)]
    pub contacts: Option<usize>,
    /// Number of infected agents.
    #[arg(long)]
    pub infected: Option<usize>,
    /// Infectious window in epochs.
    #[arg(long)]
    pub window: Option<u64>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Auto,
    Exhaustive,
    Algebraic,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Run directory containing *.jsonl transcripts and directory.json.
    pub dir: PathBuf,
    /// Exit with status 1 when the audit has findings.
    #[arg(long)]
    pub strict: bool,
    /// How to decide issuance/presentation consistency.
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
    /// Directory file to use instead of <DIR>/directory.json.
    #[arg(long)]
    pub directory: Option<PathBuf>,
    /// Monte-Carlo trials per key pair for the key-separation check.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Random seed for the key-separation trials.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON audit report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Domain(String),
    #[error("audit findings present")]
    Findings,
}

fn domain(err: impl std::fmt::Display) -> CliError {
    CliError::Domain(err.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { 2 } else { 0 };
        }
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(text) => match text.parse::<u64>() {
            Ok(seed) => Some(seed),
            Err(_) => {
                eprintln!("error: {SEED_ENV} must be an unsigned integer, got {text:?}");
                return 2;
            }
        },
        Err(_) => None,
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, env_seed, &mut stdout) {
        Ok(()) => 0,
        Err(CliError::Findings) => 1,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

pub fn execute(command: Command, env_seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Keygen(args) => keygen(args, env_seed, out),
        Command::DemoTransit(args) => demo_transit(args, env_seed, out),
        Command::DemoTracing(args) => demo_tracing(args, env_seed, out),
        Command::Audit(args) => audit(args, env_seed, out),
    }
}

/// Writes to a sibling temporary file, then renames over the target.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| domain(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn keygen(args: KeygenArgs, env_seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = args.seed.or(env_seed).unwrap_or(0);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut directory = AttributeKeyDirectory::new();
    for label in &args.attributes {
        let attribute = AttributeId::new(label.as_str()).ok_or_else(|| domain("attribute must be non-empty"))?;
        loop {
            let key = BlindKeyPair::generate(args.bits, args.exponent, label, &mut rng).map_err(domain)?;
            match directory.publish(&args.issuer, &attribute, key.public().clone()) {
                Ok(_) => break,
                Err(crate::credentials::CredentialError::SharedModulus { .. }) => continue,
                Err(other) => return Err(domain(other)),
            }
        }
    }
    write_atomic(&args.out, directory.to_json().as_bytes())?;
    writeln!(out, "wrote {} key(s) to {}", directory.len(), args.out.display()).map_err(io_err(&args.out))
}

fn load_config(path: Option<&Path>) -> Result<(ScenarioConfig, bool), CliError> {
    match path {
        None => Ok((ScenarioConfig::default(), false)),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| domain(format!("{}: {e}", path.display())))?;
            let has_seed = value.get("seed").is_some();
            let config = serde_json::from_value(value).map_err(|e| domain(format!("{}: {e}", path.display())))?;
            Ok((config, has_seed))
        }
    }
}

fn resolve_seed(flag: Option<u64>, config: &ScenarioConfig, config_has_seed: bool, env_seed: Option<u64>) -> u64 {
    flag.or(config_has_seed.then_some(config.seed)).or(env_seed).unwrap_or(0)
}

fn demo_transit(args: TransitArgs, env_seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut config, has_seed) = load_config(args.config.as_deref())?;
    config.seed = resolve_seed(args.seed, &config, has_seed, env_seed);
    if let Some(v) = args.citizens {
        config.citizens = v;
    }
    if let Some(v) = args.rps {
        config.relying_parties = v;
    }
    if let Some(v) = args.per_citizen {
        config.credentials_per_citizen = v;
    }
    if let Some(v) = args.cheaters {
        config.cheaters = v;
    }
    if let Some(v) = args.gossip_every {
        config.gossip_every = v;
    }
    if let Some(v) = args.quota {
        config.issuance_quota = v;
    }
    if let Some(v) = args.bits {
        config.key_bits = v;
    }
    let report = scenarios::run_transit_scenario(&config).map_err(domain)?;
    let json = report.to_json();
    match args.out {
        None => out.write_all(json.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
        Some(dir) => {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            write_atomic(&dir.join(REPORT_FILE), json.as_bytes())?;
            write_atomic(&dir.join(DIRECTORY_FILE), report.directory.to_json().as_bytes())?;
            for t in &report.transcripts {
                write_atomic(&dir.join(format!("{}.jsonl", t.node())), t.to_jsonl().as_bytes())?;
            }
            writeln!(
                out,
                "accepts={} double_spend_rejects={} bad_signature_rejects={} presentations={} -> {}",
                report.accepts,
                report.double_spend_rejects,
                report.bad_signature_rejects,
                report.presentations_attempted,
                dir.display()
            )
            .map_err(io_err(&dir))
        }
    }
}

fn demo_tracing(args: TracingArgs, env_seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut config, has_seed) = load_config(args.config.as_deref())?;
    config.seed = resolve_seed(args.seed, &config, has_seed, env_seed);
    if let Some(v) = args.agents {
        config.citizens = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.contacts {
        config.proximity_events = v;
    }
    if let Some(v) = args.infected {
        config.infected = v;
    }
    if let Some(v) = args.window {
        config.window = v;
    }
    let report = scenarios::run_contact_tracing_scenario(&config).map_err(domain)?;
    let json = report.to_json();
    match args.out {
        None => out.write_all(json.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
        Some(dir) => {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            write_atomic(&dir.join(REPORT_FILE), json.as_bytes())?;
            writeln!(
                out,
                "agents={} infected={} exposed={} -> {}",
                report.agents,
                report.bulletin_board.published_seeds.len(),
                report.exposed.len(),
                dir.display()
            )
            .map_err(io_err(&dir))
        }
    }
}

fn audit(args: AuditArgs, env_seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let directory_path = args.directory.clone().unwrap_or_else(|| args.dir.join(DIRECTORY_FILE));
    let entries = if directory_path.exists() || args.directory.is_some() {
        let text = fs::read_to_string(&directory_path).map_err(io_err(&directory_path))?;
        auditor::parse_directory_entries(&text).map_err(domain)?
    } else {
        Vec::new()
    };

    let mut files: Vec<PathBuf> = fs::read_dir(&args.dir)
        .map_err(io_err(&args.dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    files.sort();
    let mut events = Vec::new();
    for file in &files {
        let text = fs::read_to_string(file).map_err(io_err(file))?;
        events.extend(transcript::parse_jsonl(&text).map_err(|e| domain(format!("{}: {e}", file.display())))?);
    }

    let options = AuditOptions {
        mode: match args.mode {
            ModeArg::Auto => ModeChoice::Auto,
            ModeArg::Exhaustive => ModeChoice::Exhaustive,
            ModeArg::Algebraic => ModeChoice::Algebraic,
        },
        key_separation_trials: args.trials,
        seed: args.seed.or(env_seed).unwrap_or(0),
        ..AuditOptions::default()
    };
    let report = auditor::audit(&events, &entries, &[], &options).map_err(domain)?;
    if let Some(path) = &args.out {
        write_atomic(path, report.to_json().as_bytes())?;
    }
    out.write_all(report.summary_table().as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    if args.strict && report.has_findings() {
        return Err(CliError::Findings);
    }
    Ok(())
}
