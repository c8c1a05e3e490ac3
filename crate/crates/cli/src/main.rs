//! `endreg` command-line interface.
//!
//! ```text
//! endreg generate  [--config FILE] [--KEY VALUE]...
//! endreg train     ...
//! endreg eval      ...   (needs --eval-data, reads --checkpoint)
//! endreg ablate    ...
//! endreg gradcheck ...
//! ```
//!
//! Keys are listed by `endreg <command> --help`; see [`config`] for the file
//! format and [`error::CliError::exit_code`] for exit statuses.

mod commands;
mod config;
mod error;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};

use config::{flag_name, RawConfig, RunConfig, KEYS};
use error::CliError;

const COMMANDS: &[(&str, &str)] = &[
    ("generate", "write the training set and test splits as ENDD files"),
    ("train", "train one model; writes metrics.csv, summary.json and model.endm"),
    ("eval", "evaluate a checkpoint on an ENDD dataset"),
    ("ablate", "train the four regularizer settings over several seeds"),
    ("gradcheck", "finite-difference check of the analytic gradients"),
];

fn cli() -> Command {
    let mut subcommands = Vec::new();
    for &(name, about) in COMMANDS {
        let mut cmd = Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file"),
        );
        for key in KEYS {
            let help = if key.default.is_empty() {
                key.help.to_string()
            } else {
                format!("{} [default: {}]", key.help, key.default)
            };
            cmd = cmd.arg(Arg::new(key.name).long(flag_name(key.name)).value_name("VALUE").help(help));
        }
        subcommands.push(cmd);
    }
    Command::new("endreg")
        .about("Entangling/disentangling feature regularization experiments")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(subcommands)
}

fn run_config(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let file = match matches.get_one::<PathBuf>("config") {
        Some(path) => config::read_file(path)?,
        None => BTreeMap::new(),
    };
    let flags = KEYS
        .iter()
        .filter_map(|k| matches.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    RunConfig::from_raw(&RawConfig::merge(file, flags)?)
}

fn dispatch(name: &str, matches: &ArgMatches) -> Result<(), CliError> {
    let cfg = run_config(matches)?;
    match name {
        "generate" => commands::generate(&cfg),
        "train" => commands::train(&cfg),
        "eval" => commands::eval(&cfg),
        "ablate" => commands::ablate_cmd(&cfg),
        "gradcheck" => commands::gradcheck_cmd(&cfg),
        _ => unreachable!("clap only accepts known subcommands"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match dispatch(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
