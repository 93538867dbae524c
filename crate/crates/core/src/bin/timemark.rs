//! `timemark` command-line interface.
//!
//! Exit codes: 0 success or Identified, 1 NoWatermark, 2 Ambiguous, 3 error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use timemark::analysis::{analyze, AnalysisParams};
use timemark::attack::{compare_attack, evaluate_attack, AttackConfig, AttackMode};
use timemark::decoder::{identify_time, CandidateWindowSet, Verdict};
use timemark::encoder::{
    derive_subseed, encode_document, generate_unwatermarked, read_documents, write_documents,
    GenerationRequest,
};
use timemark::experiment::{run_experiment, ExperimentConfig};
use timemark::keychain::{Clock, FixedClock, KeyVault, Role, SystemClock, TimeKey};
use timemark::source::{GreenMassProbe, SyntheticModel};
use timemark::wm::WatermarkConfig;

const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "timemark",
    version,
    about = "Time-bound watermarking for token sequences"
)]
struct Cli {
    /// Vault file.
    #[arg(long, global = true, env = "TIMEMARK_VAULT")]
    vault: Option<PathBuf>,

    /// Wall-clock seconds recorded in audit entries instead of the system time.
    #[arg(long, global = true)]
    now: Option<u64>,

    /// Also print a human-readable table to stderr.
    #[arg(long, global = true)]
    pretty: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a vault with a fresh root key.
    Keyinit {
        /// Derive the root key from this seed instead of OS entropy.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 60)]
        granularity: u64,
        /// Overwrite an existing vault.
        #[arg(long)]
        force: bool,
    },
    /// Move the vault forward by some windows.
    Advance {
        #[arg(long, default_value_t = 1)]
        windows: u64,
    },
    /// Generate documents in the current window.
    Generate(GenerateArgs),
    /// Recover the generation window of a document.
    Identify(IdentifyArgs),
    /// Closed-form error probabilities.
    Analyze(AnalyzeArgs),
    /// End-to-end identification experiment.
    Experiment(ExperimentArgs),
    /// Spoofing-attack simulation.
    Attack(AttackArgs),
}

#[derive(Args, Clone)]
struct WmArgs {
    /// JSON file with a full watermark configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<u32>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    alpha: Option<usize>,
    /// Document length L.
    #[arg(long)]
    length: Option<usize>,
}

impl WmArgs {
    fn resolve(&self) -> anyhow::Result<WatermarkConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).context("parsing watermark config")?
            }
            None => WatermarkConfig::default(),
        };
        if let Some(v) = self.vocab {
            cfg.vocab_size = v;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(p) = self.phi {
            cfg.phi = p;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(l) = self.length {
            cfg.min_length = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    wm: WmArgs,
    /// Window to generate in; must be the vault's current window.
    #[arg(long)]
    window: Option<u64>,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic model concentration gamma.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// Sample from the plain model with no payload and no bias.
    #[arg(long)]
    no_watermark: bool,
    /// Output file for JSON lines (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Debug: write each document's payload and per-position trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    wm: WmArgs,
    /// JSON-lines document file.
    #[arg(long)]
    doc: PathBuf,
    /// Zero-based line of the document in the file.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// First candidate window.
    #[arg(long, requires = "to", conflicts_with_all = ["center", "radius"])]
    from: Option<u64>,
    /// Last candidate window (inclusive).
    #[arg(long, requires = "from")]
    to: Option<u64>,
    /// Center of the candidate windows.
    #[arg(long)]
    center: Option<u64>,
    #[arg(long, default_value_t = 2)]
    radius: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value_t = 2.5)]
    delta: f64,
    /// Green mass g of the unbiased distribution.
    #[arg(long, default_value_t = 0.5)]
    green_mass: f64,
    #[arg(long, default_value_t = 0.65)]
    phi: f64,
    #[arg(long, default_value_t = 5)]
    alpha: u64,
    /// Payload bits n.
    #[arg(long, default_value_t = 63)]
    n: u64,
    /// Correctable errors t.
    #[arg(long, default_value_t = 13)]
    t: u64,
    /// Stage II positions per bit.
    #[arg(long, default_value_t = 10)]
    r2: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    wm: WmArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 2)]
    radius: u64,
    #[arg(long, default_value_t = 0.0, conflicts_with = "target_green_mass")]
    gamma: f64,
    /// Calibrate gamma to this effective green mass instead.
    #[arg(long)]
    target_green_mass: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (all cores when absent).
    #[arg(long)]
    jobs: Option<usize>,
    /// Omit per-trial rows from the JSON output.
    #[arg(long)]
    summary: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Timemark,
    Both,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    /// Corpus documents N.
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    forged: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    vocab: Option<u32>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    window: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Ctx {
    vault: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    pretty: bool,
}

impl Ctx {
    fn vault_path(&self) -> anyhow::Result<&Path> {
        self.vault
            .as_deref()
            .context("no vault given (use --vault or TIMEMARK_VAULT)")
    }

    fn load_vault(&self) -> anyhow::Result<(KeyVault, &Path)> {
        let path = self.vault_path()?;
        if !path.exists() {
            bail!(
                "vault {} does not exist (run keyinit first)",
                path.display()
            );
        }
        let vault = KeyVault::load(path, self.clock.clone())
            .with_context(|| format!("loading vault {}", path.display()))?;
        Ok((vault, path))
    }

    fn table(&self, text: &str) {
        if self.pretty {
            eprint!("{text}");
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct VaultStatus {
    current_index: u64,
    granularity_seconds: u64,
    current_key_digest: String,
}

fn vault_status(vault: &KeyVault) -> VaultStatus {
    let file = vault.to_file();
    VaultStatus {
        current_index: file.current_index,
        granularity_seconds: file.granularity_seconds,
        current_key_digest: file.current_key_digest,
    }
}

fn cmd_keyinit(ctx: &Ctx, seed: Option<u64>, granularity: u64, force: bool) -> anyhow::Result<u8> {
    let path = ctx.vault_path()?;
    if path.exists() && !force {
        bail!(
            "vault {} already exists (use --force to replace it)",
            path.display()
        );
    }
    let root = seed.map_or_else(TimeKey::random, TimeKey::from_seed);
    let vault = KeyVault::new(root, granularity, ctx.clock.clone())?;
    vault.save(path)?;
    let status = vault_status(&vault);
    ctx.table(&format!(
        "vault {} at window {} (key digest {})\n",
        path.display(),
        status.current_index,
        status.current_key_digest
    ));
    print_json(&status)?;
    Ok(0)
}

fn cmd_advance(ctx: &Ctx, windows: u64) -> anyhow::Result<u8> {
    let (mut vault, path) = ctx.load_vault()?;
    for _ in 0..windows {
        vault.advance();
    }
    vault.save(path)?;
    let status = vault_status(&vault);
    ctx.table(&format!("now at window {}\n", status.current_index));
    print_json(&status)?;
    Ok(0)
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn cmd_generate(ctx: &Ctx, args: &GenerateArgs) -> anyhow::Result<u8> {
    let cfg = args.wm.resolve()?;
    let model = SyntheticModel::new(args.model_seed, cfg.vocab_size, args.gamma)?;
    let seeds: Vec<u64> = (0..args.count)
        .map(|i| derive_subseed("cli/generate", args.seed, i))
        .collect();

    let docs = if args.no_watermark {
        seeds
            .iter()
            .map(|&s| generate_unwatermarked(&cfg, &model, s))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let (mut vault, path) = ctx.load_vault()?;
        let window = args.window.unwrap_or_else(|| vault.current_index());
        let key = vault.read_key(Role::Provider, window);
        vault.save(path)?;
        let key = key?;
        let window = vault.current_window();
        let mut traces = Vec::with_capacity(seeds.len());
        let mut docs = Vec::with_capacity(seeds.len());
        for &s in &seeds {
            let req = GenerationRequest {
                window,
                cfg,
                model: &model,
                rng_seed: s,
            };
            let (doc, trace) = encode_document(&req, &key)?;
            docs.push(doc);
            traces.push(trace);
        }
        if let Some(p) = &args.trace {
            let mut w = open_output(Some(p))?;
            for t in &traces {
                serde_json::to_writer(&mut w, t)?;
                writeln!(w)?;
            }
            w.flush()?;
        }
        docs
    };

    let mut out = open_output(args.out.as_deref())?;
    write_documents(&mut out, &docs)?;
    out.flush()?;
    ctx.table(&format!(
        "{} document(s) of {} tokens{}\n",
        docs.len(),
        cfg.min_length,
        if args.no_watermark {
            ", unwatermarked"
        } else {
            ""
        }
    ));
    Ok(0)
}

fn cmd_identify(ctx: &Ctx, args: &IdentifyArgs) -> anyhow::Result<u8> {
    let cfg = args.wm.resolve()?;
    let file = File::open(&args.doc).with_context(|| format!("opening {}", args.doc.display()))?;
    let docs = read_documents(BufReader::new(file))
        .with_context(|| format!("reading documents from {}", args.doc.display()))?;
    let doc = docs.get(args.index).with_context(|| {
        format!(
            "{} holds {} document(s), no index {}",
            args.doc.display(),
            docs.len(),
            args.index
        )
    })?;

    let (mut vault, path) = ctx.load_vault()?;
    let candidates = match (args.from, args.to, args.center) {
        (Some(a), Some(b), _) => CandidateWindowSet::range(a, b)?,
        (_, _, Some(c)) => CandidateWindowSet::centered(c, args.radius)?,
        _ => bail!("give the candidate windows with --from/--to or --center/--radius"),
    };
    let result = identify_time(doc, &candidates, &mut vault, &cfg);
    vault.save(path)?;
    let result = result?;

    if ctx.pretty {
        let mut text = String::new();
        for r in &result.reports {
            text.push_str(&format!(
                "window {:>6}  step1 {:<11} score {:.4}  {:?}\n",
                r.window,
                format!("{:?}", r.step1_status),
                r.score,
                r.decision
            ));
        }
        text.push_str(&format!("verdict: {:?}\n", result.verdict));
        ctx.table(&text);
    }
    print_json(&result)?;
    Ok(match result.verdict {
        Verdict::Identified { .. } => 0,
        Verdict::NoWatermark => 1,
        Verdict::Ambiguous { .. } => 2,
    })
}

fn cmd_analyze(ctx: &Ctx, args: &AnalyzeArgs) -> anyhow::Result<u8> {
    let params = AnalysisParams {
        delta: args.delta,
        green_mass: args.green_mass,
        reps_stage2: args.r2,
        n: args.n,
        t: args.t,
        verify_count: args.alpha * args.n,
        phi: args.phi,
    };
    let report = analyze(&params)?;
    ctx.table(&report.table());
    print_json(&report)?;
    Ok(0)
}

fn cmd_experiment(ctx: &Ctx, args: &ExperimentArgs) -> anyhow::Result<u8> {
    let wm = args.wm.resolve()?;
    let concentration = match args.target_green_mass {
        Some(g) => {
            let probe = GreenMassProbe::new(
                wm.vocab_size,
                wm.delta,
                2000,
                derive_subseed("cli/calibrate", args.seed, 0),
            )?;
            let stats = probe.calibrate(g)?;
            ctx.table(&format!(
                "calibrated gamma {:.4} for effective green mass {:.4}\n",
                stats.concentration, stats.effective_green_mass
            ));
            stats.concentration
        }
        None => args.gamma,
    };
    let cfg = ExperimentConfig {
        trials: args.trials,
        candidate_window_radius: args.radius,
        wm,
        concentration,
        seed: args.seed,
    };
    let mut report = run_experiment(&cfg, args.jobs)?;
    ctx.table(&report.table());
    if args.summary {
        report.rows.clear();
    }
    print_json(&report)?;
    Ok(0)
}

fn cmd_attack(ctx: &Ctx, args: &AttackArgs) -> anyhow::Result<u8> {
    let mut acfg = AttackConfig {
        seed: args.seed,
        ..AttackConfig::default()
    };
    if let Some(v) = args.docs {
        acfg.corpus_docs = v;
    }
    if let Some(v) = args.lambda {
        acfg.lambda = v;
    }
    if let Some(v) = args.forged {
        acfg.forged_docs = v;
    }
    if let Some(v) = args.epochs {
        acfg.epochs = v;
    }
    if let Some(v) = args.vocab {
        acfg.vocab_size = v;
    }
    if let Some(v) = args.gamma {
        acfg.concentration = v;
    }
    if let Some(v) = args.window {
        acfg.target_window = v;
    }
    acfg.validate()?;
    match args.mode {
        ModeArg::Both => {
            let cmp = compare_attack(&acfg)?;
            ctx.table(&cmp.table());
            print_json(&cmp)?;
        }
        ModeArg::Baseline | ModeArg::Timemark => {
            let mode = if matches!(args.mode, ModeArg::Baseline) {
                AttackMode::FixedPayloadBaseline
            } else {
                AttackMode::TimeMark
            };
            let res = evaluate_attack(mode, &acfg)?;
            ctx.table(&format!(
                "{mode:?}: held-out balanced accuracy {:.4} (z = {:.2}), forged passes {}/{}\n",
                res.heldout.balanced, res.heldout.z_score, res.forged_passes, res.forged_docs
            ));
            print_json(&res)?;
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let clock: Arc<dyn Clock> = match cli.now {
        Some(t) => Arc::new(FixedClock(t)),
        None => Arc::new(SystemClock),
    };
    let ctx = Ctx {
        vault: cli.vault,
        clock,
        pretty: cli.pretty,
    };
    match &cli.command {
        Command::Keyinit {
            seed,
            granularity,
            force,
        } => cmd_keyinit(&ctx, *seed, *granularity, *force),
        Command::Advance { windows } => cmd_advance(&ctx, *windows),
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Identify(a) => cmd_identify(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Experiment(a) => cmd_experiment(&ctx, a),
        Command::Attack(a) => cmd_attack(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
