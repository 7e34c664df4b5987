use clap::{Args, Parser, Subcommand};
use ffbath::protocols::ProtocolKind;
use ffbath_cli::config::{ExperimentConfig, ExperimentKind};
use ffbath_cli::{read_config, run, write_outputs, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ffbath", about = "Driving protocols for an oscillator coupled to a phonon chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy infidelity W against ramp speed, two oscillators.
    FidelitySweep(Common),
    /// Floquet protocol W against 1/Omega at one speed.
    FeConvergence(Common),
    /// <H_S>/T after a ramp across a chain's bandwidth.
    ThermalizationSweep(Common),
    /// Heat-engine heats, work, efficiency and power over (speed, r).
    EngineSweep(Common),
    /// Number variance of the (+) mode against normalized speed.
    CollapseCheck(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; an earlier run's summary file also works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override one config field, e.g. --set params.gamma_sb=0.05
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for the sweep.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated protocol list (ua, cd-exact, cd-weak, rwff, feff, ffp).
    #[arg(long, value_delimiter = ',')]
    protocols: Option<Vec<String>>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::FidelitySweep(c) => (ExperimentKind::FidelitySweep, c),
        Command::FeConvergence(c) => (ExperimentKind::FeConvergence, c),
        Command::ThermalizationSweep(c) => (ExperimentKind::ThermalizationSweep, c),
        Command::EngineSweep(c) => (ExperimentKind::EngineSweep, c),
        Command::CollapseCheck(c) => (ExperimentKind::CollapseCheck, c),
    };
    std::process::exit(execute(kind, common));
}

fn execute(kind: ExperimentKind, c: Common) -> i32 {
    let cfg = match resolve(kind, &c) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    if let Some(n) = c.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("worker pool: {e}");
        }
    }
    let out = run::run(&cfg);
    let written = match write_outputs(&c.out_dir, &cfg, &out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: writing outputs: {e}");
            return EXIT_CONFIG;
        }
    };
    println!("{}", written.csv.display());
    println!("{}", written.json.display());
    for u in &out.undefined {
        log::warn!("undefined: {u}");
    }
    if !out.numerical.is_empty() {
        for e in &out.numerical {
            eprintln!("numerical failure: {e}");
        }
        return EXIT_NUMERICAL;
    }
    EXIT_OK
}

fn resolve(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, String> {
    let text = match &c.config {
        Some(p) => Some(read_config(p).map_err(|e| e.to_string())?),
        None => None,
    };
    let mut cfg = ExperimentConfig::resolve(kind, text.as_deref(), &c.set).map_err(|e| e.to_string())?;
    if let Some(list) = &c.protocols {
        let kinds = list
            .iter()
            .map(|s| ProtocolKind::parse(s.trim()).ok_or_else(|| format!("unknown protocol `{s}`")))
            .collect::<Result<Vec<_>, _>>()?;
        cfg.set_protocols(kinds).map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}
