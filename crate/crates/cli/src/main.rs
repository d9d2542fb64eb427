use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use editsim::eval::{Aggregate, Metric};
use editsim::generator::Setting;
use editsim_cli::commands::{self, SynthKind};
use editsim_cli::{exit_code, RunConfig, UsageError};

/// Establish-and-update simulator for knowledge editing.
#[derive(Parser)]
#[command(name = "editsim", version)]
struct Cli {
    /// TOML config file; flags and environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic corpus (and rule file) to start from.
    Synth {
        /// geography, franklin or planted:<k>
        #[arg(long, default_value = "geography")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "EDITSIM_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Mine relation triangles and candidate rules from a corpus.
    Mine(Overrides),
    /// Generate knowledge sets, edit scenarios and question plans.
    Gen(Overrides),
    /// Run the establish-and-update sweep against an adapter.
    Run(Overrides),
    /// Re-aggregate an existing report.
    Report {
        #[arg(long, env = "EDITSIM_OUT_DIR")]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, env = "EDITSIM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Comma-separated: CQ_DT, CQ_UT, ICQ_DT.
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<Setting>>,
    #[arg(long)]
    n_sets: Option<usize>,
    #[arg(long)]
    n_chains: Option<usize>,
    #[arg(long)]
    n_unrelated: Option<usize>,
    #[arg(long)]
    n_copies: Option<usize>,
    #[arg(long)]
    n_edits: Option<usize>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// oracle, told, frozen[:answer], random, memo, lossy:<p>,
    /// forwchain/<spec>, backchain/<spec> or external:<command line>.
    #[arg(long)]
    adapter: Option<String>,
    /// Seconds to wait for each external adapter response.
    #[arg(long, env = "EDITSIM_TIMEOUT")]
    timeout: Option<u64>,
    /// Concurrent sessions; defaults to the number of processors.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    min_support: Option<usize>,
    /// Plausibility label file (JSONL) for `mine`.
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, c: &mut RunConfig) {
        fn set<T>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut c.corpus, self.corpus);
        set(&mut c.rules, self.rules);
        set(&mut c.out_dir, self.out_dir);
        set(&mut c.settings, self.settings);
        set(&mut c.n_sets, self.n_sets);
        set(&mut c.sizes.n_chains, self.n_chains);
        set(&mut c.sizes.n_unrelated, self.n_unrelated);
        set(&mut c.sizes.n_copies, self.n_copies);
        set(&mut c.sizes.n_edits, self.n_edits);
        set(&mut c.sizes.max_retries, self.max_retries);
        set(&mut c.seed, self.seed);
        set(&mut c.adapter, self.adapter);
        set(&mut c.timeout_secs, self.timeout);
        set(&mut c.min_support, self.min_support);
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.labels.is_some() {
            c.labels = self.labels;
        }
    }
}

fn config(path: Option<&PathBuf>, overrides: Overrides) -> anyhow::Result<RunConfig> {
    let mut c = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn parse_kind(s: &str) -> Result<SynthKind, UsageError> {
    match s.split_once(':') {
        None if s == "geography" => Ok(SynthKind::Geography),
        None if s == "franklin" => Ok(SynthKind::Franklin),
        Some(("planted", k)) => k
            .parse()
            .map(SynthKind::Planted)
            .map_err(|_| UsageError(format!("invalid triangle count `{k}`"))),
        _ => Err(UsageError(format!("unknown corpus kind `{s}`"))),
    }
}

fn print_aggregates(aggs: &[Aggregate]) {
    for a in aggs {
        let cells: Vec<String> = Metric::ALL
            .iter()
            .map(|&m| match a.rate(m) {
                Some(v) => format!("{m}={:.1}", v * 100.0),
                None => format!("{m}=-"),
            })
            .collect();
        println!(
            "{:<7} sets={} copies={} failed={} {}",
            a.setting.as_str(),
            a.sets,
            a.copies,
            a.failed,
            cells.join(" ")
        );
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let path = cli.config.as_ref();
    match cli.command {
        Cmd::Synth { kind, seed, out_dir } => {
            for p in commands::synth(parse_kind(&kind)?, seed, &out_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Mine(o) => {
            let c = config(path, o)?;
            let m = commands::mine(&c)?;
            println!("triangles: {}", m.triangles);
            println!("candidate rules: {}", m.candidates);
            if let Some(l) = m.labels {
                println!("rated: {} kept: {} dropped: {}", l.rated, l.kept, l.dropped);
            }
        }
        Cmd::Gen(o) => {
            let c = config(path, o)?;
            let g = commands::gen(&c)?;
            println!("sets: {} written, {} failed", g.bundles.len(), g.manifest.failures.len());
            for f in &g.manifest.failures {
                println!("failed {}: {}", f.item, f.error);
            }
        }
        Cmd::Run(o) => {
            let c = config(path, o)?;
            let r = commands::run(&c)?;
            print_aggregates(&r.aggregates);
            for f in &r.manifest.failures {
                let s = f.setting.map(Setting::as_str).unwrap_or("-");
                println!("failed {} ({s}): {}", f.item, f.error);
            }
        }
        Cmd::Report { out_dir } => {
            let dir = match (out_dir, path) {
                (Some(d), _) => d,
                (None, Some(p)) => RunConfig::load(p)?.out_dir,
                (None, None) => RunConfig::default().out_dir,
            };
            let aggs = commands::report(&dir).with_context(|| format!("cannot re-aggregate {}", dir.display()))?;
            print_aggregates(&aggs);
        }
    }
    Ok(())
}

// Causes whose text the message already contains are skipped.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
