use clap::{Args, Parser, Subcommand};
use dechist::scenario::{self, Scenario, ScenarioError, ScenarioKind, BUNDLED, OUT_ENV};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dechist", version, about = "Decoherent-histories scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output`, then $DECHIST_OUT, then ./dechist-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Parse and validate a scenario file without running it.
    Validate { file: PathBuf },
    /// List the bundled scenarios.
    ListScenarios,
    /// Print a bundled scenario's JSON.
    ShowScenario { name: String },
    #[command(flatten)]
    Kind(KindCommand),
}

/// Per-kind commands take a bare parameter object; without one they run the
/// bundled default of that kind.
#[derive(Subcommand)]
enum KindCommand {
    Histories(KindArgs),
    Records(KindArgs),
    Lindblad(KindArgs),
    Qsd(KindArgs),
    Qbm(KindArgs),
    Hybrid(KindArgs),
    Timeless(KindArgs),
    Arrival(KindArgs),
    DoubleSlit(KindArgs),
}

#[derive(Args)]
struct KindArgs {
    /// JSON file holding the `parameters` object.
    params: Option<PathBuf>,
    #[command(flatten)]
    opts: RunOpts,
}

impl KindCommand {
    fn split(&self) -> (ScenarioKind, &KindArgs) {
        match self {
            KindCommand::Histories(a) => (ScenarioKind::Histories, a),
            KindCommand::Records(a) => (ScenarioKind::Records, a),
            KindCommand::Lindblad(a) => (ScenarioKind::Lindblad, a),
            KindCommand::Qsd(a) => (ScenarioKind::Qsd, a),
            KindCommand::Qbm(a) => (ScenarioKind::Qbm, a),
            KindCommand::Hybrid(a) => (ScenarioKind::Hybrid, a),
            KindCommand::Timeless(a) => (ScenarioKind::Timeless, a),
            KindCommand::Arrival(a) => (ScenarioKind::Arrival, a),
            KindCommand::DoubleSlit(a) => (ScenarioKind::DoubleSlit, a),
        }
    }
}

fn out_dir(opts: &RunOpts, s: &Scenario) -> PathBuf {
    let base = opts
        .out
        .clone()
        .or_else(|| s.output.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dechist-out"));
    base.join(&s.name)
}

fn execute(mut s: Scenario, opts: &RunOpts) -> Result<(), ScenarioError> {
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    let bundle = match opts.threads {
        Some(0) => return Err(ScenarioError::Invalid(vec![scenario::Issue { path: "--threads".into(), message: "must be at least 1".into() }])),
        Some(k) => s.run_with_threads(k)?,
        None => s.run()?,
    };
    let dir = out_dir(opts, &s);
    let written = scenario::write_bundle(&bundle, &dir)?;
    print!("{bundle}");
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn kind_scenario(kind: ScenarioKind, params: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let default = scenario::default_for(kind)?;
    match params {
        None => Ok(default),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ScenarioError::Io(format!("{}: {e}", p.display())))?;
            Scenario::from_parameters(kind, kind.name(), default.seed, &text)
        }
    }
}

fn main_inner(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Run { file, opts } => execute(Scenario::load(&file)?, &opts),
        Command::Validate { file } => {
            let s = Scenario::load(&file)?;
            println!("{}: valid {} scenario", s.name, s.kind().name());
            Ok(())
        }
        Command::ListScenarios => {
            for b in BUNDLED {
                let s = Scenario::parse(b.text)?;
                println!("{:<28} {:<12} {}", b.name, s.kind().name(), s.description);
            }
            Ok(())
        }
        Command::ShowScenario { name } => {
            let b = scenario::bundled(&name).ok_or_else(|| ScenarioError::Io(format!("no bundled scenario named `{name}`")))?;
            print!("{}", b.text);
            Ok(())
        }
        Command::Kind(k) => {
            let (kind, args) = k.split();
            execute(kind_scenario(kind, args.params.as_deref())?, &args.opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                ScenarioError::Invalid(issues) => {
                    for i in issues {
                        eprintln!("invalid: {}: {}", i.path, i.message);
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
