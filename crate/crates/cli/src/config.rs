//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names of the subcommand being run (plus the global
//! `seed`), written without the leading dashes; `_` and `-` are interchangeable.
//! Blank lines and lines starting
//! with `#` are ignored. Switches take `true` or `false`. A value from the file
//! is used only when the same flag was not given on the command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, CommandFactory};

use crate::args::Cli;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigFile {
    /// Key, value and the 1-based line number it came from.
    pub entries: BTreeMap<String, (String, usize)>,
}

pub fn parse(text: &str) -> Result<ConfigFile, String> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value`", i + 1));
        };
        let key = k.trim().to_string();
        let mut value = v.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if entries.insert(key.clone(), (value.to_string(), i + 1)).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", i + 1));
        }
    }
    Ok(ConfigFile { entries })
}

/// Extra command-line tokens supplying the file's values for every flag of
/// `subcommand` that `matches` did not get from the command line.
pub fn file_arguments(
    file: &ConfigFile,
    subcommand: &str,
    root_matches: &ArgMatches,
    matches: &ArgMatches,
) -> Result<Vec<OsString>, String> {
    let root = Cli::command();
    let sub = root
        .find_subcommand(subcommand)
        .ok_or_else(|| format!("unknown subcommand `{subcommand}`"))?;
    let mut out = Vec::new();
    for (key, (value, line)) in &file.entries {
        let long = key.replace('_', "-");
        if long == "config" {
            return Err(format!("line {line}: `config` cannot be set from a config file"));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| format!("line {line}: unknown key `{key}` for `{subcommand}`"))?;
        let id = arg.get_id().as_str();
        let given = |m: &ArgMatches| {
            m.ids().any(|i| i.as_str() == id) && m.value_source(id) == Some(ValueSource::CommandLine)
        };
        if given(matches) || given(root_matches) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => out.push(OsString::from(format!("--{long}"))),
                "false" => {}
                _ => return Err(format!("line {line}: `{key}` takes true or false, got `{value}`")),
            }
        } else {
            out.push(OsString::from(format!("--{long}={value}")));
        }
    }
    Ok(out)
}

/// Parses the command line, folding in the `--config` file when one is given.
pub fn parse_command_line(argv: Vec<OsString>) -> Result<Cli, crate::Failure> {
    let loose = Cli::command()
        .ignore_errors(true)
        .try_get_matches_from(argv.clone())
        .map_err(crate::Failure::Usage)?;
    let path = loose.get_one::<std::path::PathBuf>("config").cloned();
    let Some(path) = path else {
        return Cli::try_parse_from_args(argv);
    };
    let (name, sub_matches) = loose
        .subcommand()
        .ok_or_else(|| crate::Failure::validation("a subcommand is required"))?;
    let text = read_config(&path)?;
    let file = parse(&text).map_err(|e| crate::Failure::validation(format!("{}: {e}", path.display())))?;
    let extra = file_arguments(&file, name, &loose, sub_matches)
        .map_err(|e| crate::Failure::validation(format!("{}: {e}", path.display())))?;
    let mut full = argv;
    full.extend(extra);
    Cli::try_parse_from_args(full)
}

fn read_config(path: &Path) -> Result<String, crate::Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| crate::Failure::validation(format!("cannot read config file {}: {e}", path.display())))
}

impl Cli {
    fn try_parse_from_args(argv: Vec<OsString>) -> Result<Cli, crate::Failure> {
        use clap::Parser;
        Cli::try_parse_from(argv).map_err(crate::Failure::Usage)
    }
}
