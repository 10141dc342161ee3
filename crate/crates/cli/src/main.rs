use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Arg, ArgAction, ArgMatches, Command};

use deepsupp_cli::{
    cmd_compare, cmd_corr_dump, cmd_detect, cmd_dump_attention, cmd_evaluate, cmd_features_dump, cmd_synth,
    error_exit_code, RunConfig, RunSummary, KEYS,
};

fn cli() -> Command {
    let mut root = Command::new("deepsupp")
        .about("Support-level detection, evaluation and comparison over per-ticker OHLCV CSV files")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("Flat key=value config file; flags of the same name override it"),
        )
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("More log output (repeatable)"),
        );
    for key in KEYS {
        let flag = key.name.replace('_', "-");
        let mut arg = Arg::new(key.name).long(flag.clone()).value_name("VALUE").global(true).help(key.help);
        if flag != key.name {
            arg = arg.alias(key.name);
        }
        root = root.arg(arg);
    }
    root.subcommand(Command::new("detect").about("Write the support levels of every method on every ticker"))
        .subcommand(Command::new("evaluate").about("Write the evaluation report of every method on every ticker"))
        .subcommand(Command::new("compare").about("Rank methods across the ticker universe"))
        .subcommand(Command::new("dump-attention").about("Write the per-head attention maps of one window"))
        .subcommand(
            Command::new("features")
                .about("Feature matrix inspection")
                .subcommand_required(true)
                .subcommand(Command::new("dump").about("Write raw and scaled feature matrices")),
        )
        .subcommand(
            Command::new("corr")
                .about("Correlation matrix inspection")
                .subcommand_required(true)
                .subcommand(Command::new("dump").about("Write one padded correlation matrix")),
        )
        .subcommand(Command::new("synth").about("Generate synthetic ticker CSV files"))
}

fn run(m: &ArgMatches) -> Result<RunSummary> {
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    let file = m.get_one::<String>("config").map(PathBuf::from);
    let cfg = RunConfig::resolve(file.as_deref(), &overrides)?;
    #[cfg(feature = "parallel")]
    if cfg.jobs > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global()?;
    }
    match m.subcommand() {
        Some(("detect", _)) => cmd_detect(&cfg),
        Some(("evaluate", _)) => cmd_evaluate(&cfg),
        Some(("compare", _)) => cmd_compare(&cfg),
        Some(("dump-attention", _)) => cmd_dump_attention(&cfg),
        Some(("features", _)) => cmd_features_dump(&cfg),
        Some(("corr", _)) => cmd_corr_dump(&cfg),
        Some(("synth", _)) => cmd_synth(&cfg),
        _ => unreachable!("clap requires a subcommand"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&matches) {
        Ok(summary) => {
            print!("{}", summary.report);
            if !summary.failures.is_empty() {
                eprintln!("{} failure(s); see {}", summary.failures.len(), deepsupp_cli::FAILURES_FILE);
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
