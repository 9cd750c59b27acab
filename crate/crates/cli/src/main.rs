use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memassoc_cli::config::{self, ConfigErrors};
use memassoc_cli::runner::{self, RunError};

#[derive(Parser)]
#[command(name = "memassoc", version, about = "Associative-memory experiments on emulated memristor crossbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(Common),
    /// Check a config file and print the resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Store and recall corrupted digits (continuous if the config says so).
    Demo(Common),
    /// Capacity sweep over the configured rules.
    Capacity(Common),
    /// Capacity against network size, with a power-law fit.
    Scaling(Common),
    /// Retrieval or capacity against the stuck-weight fraction.
    Faults(Common),
    /// Energy and latency of sync, async and two-layer retrieval.
    Cost(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Optional except for `run`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Dataset directory used when no config is given.
    #[arg(long, default_value = "data/mnist")]
    data: PathBuf,
}

/// Config text for a shortcut subcommand: the given file with its
/// experiment kind replaced, or a minimal MNIST config.
fn shortcut_text(kind: &str, c: &Common) -> Result<String, RunError> {
    let mut table = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigErrors(vec![format!("{}: {e}", p.display())]))?;
            text.parse::<toml::Table>().map_err(|e| ConfigErrors(vec![config::syntax_error(&text, &e)]))?
        }
        None => {
            let mut t = toml::Table::new();
            let mut ds = toml::Table::new();
            ds.insert("source".into(), "mnist".into());
            ds.insert("path".into(), c.data.display().to_string().into());
            t.insert("dataset".into(), ds.into());
            t
        }
    };
    let keep = kind == "retrieve"
        && matches!(table.get("experiment").and_then(|v| v.as_str()), Some("continuous" | "store"));
    if !keep {
        table.insert("experiment".into(), kind.into());
    }
    Ok(toml::to_string(&table).expect("table serialises"))
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let (common, text) = match cli.command {
        Command::Validate { config } => {
            let (cfg, _) = runner::load_config(&config)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
            return Ok(());
        }
        Command::Run(c) => {
            let Some(path) = &c.config else {
                return Err(ConfigErrors(vec!["--config is required for run".into()]).into());
            };
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
            (c, text)
        }
        Command::Demo(c) => {
            let t = shortcut_text("retrieve", &c)?;
            (c, t)
        }
        Command::Capacity(c) => {
            let t = shortcut_text("capacity", &c)?;
            (c, t)
        }
        Command::Scaling(c) => {
            let t = shortcut_text("scaling", &c)?;
            (c, t)
        }
        Command::Faults(c) => {
            let t = shortcut_text("faults", &c)?;
            (c, t)
        }
        Command::Cost(c) => {
            let t = shortcut_text("cost", &c)?;
            (c, t)
        }
    };
    let mut cfg = config::validate(&text)?;
    if let Some(s) = common.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(out) = common.out {
        cfg.output = out;
    }
    if let Some(n) = common.threads {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let out = runner::run(&cfg, Some(&text))?;
    println!("wrote {} files to {}", out.files.len(), out.dir.display());
    for (k, v) in &out.summary {
        println!("  {k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
