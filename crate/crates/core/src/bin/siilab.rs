use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use siilab::config::{parse_config, preset_text, ScenarioConfig, PRESETS};
use siilab::scenario::{run_scenario, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Solve,
    VerifySii,
    VerifySolution,
    DualCheck,
    Independence,
    StickyDemo,
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Solve => Command::Solve,
            Cmd::VerifySii => Command::VerifySii,
            Cmd::VerifySolution => Command::VerifySolution,
            Cmd::DualCheck => Command::DualCheck,
            Cmd::Independence => Command::Independence,
            Cmd::StickyDemo => Command::StickyDemo,
            Cmd::All => Command::All,
        }
    }
}

/// Simulate and verify SDEs driven by semimartingales with independent increments.
#[derive(Debug, Parser)]
#[command(name = "siilab", version)]
struct Args {
    command: Cmd,
    /// Scenario file.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped scenario instead of a file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the scenario significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Print the canonical form of the scenario and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(args: &Args) -> Result<ScenarioConfig, String> {
    let (origin, text) = match (&args.config, &args.preset) {
        (Some(p), _) => (p.display().to_string(), std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?),
        (None, Some(name)) => (name.clone(), preset_text(name).expect("validated by clap").to_string()),
        (None, None) => unreachable!("clap requires one"),
    };
    let mut config = parse_config(&text).map_err(|errs| {
        errs.0.iter().map(|e| format!("{origin}:{e}")).collect::<Vec<_>>().join("\n")
    })?;
    if let Some(seed) = args.seed {
        config.mc.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(format!("--alpha must be in (0, 0.5), got {alpha}"));
        }
        config.mc.alpha = alpha;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load(&args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        print!("{}", config.to_canonical());
        return ExitCode::SUCCESS;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run_scenario(&config, args.command.into(), &args.out)) {
        Ok(outcome) => {
            for r in &outcome.reports {
                println!("{r}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
