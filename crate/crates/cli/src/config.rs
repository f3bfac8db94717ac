//! Config-file layering: values from the TOML file are turned into flags and
//! appended to the command line unless the user already gave that flag, so
//! flags win over the file and the file wins over built-in defaults.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Command, CommandFactory};

use crate::cli::Cli;

pub fn layer_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let root = Cli::command();
    // Required flags may come from the file, so this pre-parse tolerates
    // gaps; the real parse afterwards reports usage errors.
    let Ok(matches) = root.clone().ignore_errors(true).try_get_matches_from(&argv) else {
        return Ok(argv);
    };
    let Some(path) = matches.get_one::<std::path::PathBuf>("config") else {
        return Ok(argv);
    };
    let table = load(path)?;

    let leaf_cmd = leaf_command(&root, &matches);
    let mut leaf = &matches;
    let mut scopes: Vec<(String, &toml::Table)> = vec![(String::from("top level"), &table)];
    let mut current = Some(&table);
    while let Some((name, sub)) = leaf.subcommand() {
        leaf = sub;
        current = match current.and_then(|t| t.get(name)) {
            Some(toml::Value::Table(t)) => {
                scopes.push((format!("[{name}]"), t));
                Some(t)
            }
            Some(_) => bail!("config key {name:?} must be a table of flags for that subcommand"),
            None => None,
        };
    }

    let mut out = argv;
    let mut seen = std::collections::BTreeSet::new();
    // Innermost scope first so subcommand tables override top-level keys.
    for (depth, (scope, t)) in scopes.iter().enumerate().rev() {
        for (key, value) in t.iter() {
            if matches!(value, toml::Value::Table(_)) {
                if subcommand_names(&root).contains(&key.as_str()) {
                    continue;
                }
                bail!("config {scope}: key {key:?} is a table but not a subcommand");
            }
            let long = key.replace('_', "-");
            if long == "config" {
                bail!("config {scope}: a config file cannot name another config file");
            }
            let Some(arg) = leaf_cmd.get_arguments().find(|a| a.get_long() == Some(long.as_str())) else {
                let innermost = depth == scopes.len() - 1 && depth > 0;
                if innermost || !known_anywhere(&root, &long) {
                    bail!("config {scope}: unknown flag {key:?} for `{}`", leaf_cmd.get_name());
                }
                continue;
            };
            if !seen.insert(long.clone()) {
                continue;
            }
            let id = arg.get_id().as_str();
            if leaf.value_source(id) == Some(ValueSource::CommandLine) {
                continue;
            }
            // Conflicts are declared on one side only, so check both.
            let conflicting = leaf_cmd.get_arguments().any(|other| {
                leaf.value_source(other.get_id().as_str()) == Some(ValueSource::CommandLine)
                    && (leaf_cmd
                        .get_arg_conflicts_with(arg)
                        .iter()
                        .any(|c| c.get_id() == other.get_id())
                        || leaf_cmd
                            .get_arg_conflicts_with(other)
                            .iter()
                            .any(|c| c.get_id() == arg.get_id()))
            });
            if conflicting {
                continue;
            }
            match value {
                toml::Value::Boolean(true) => out.push(format!("--{long}").into()),
                toml::Value::Boolean(false) => {}
                other => out.push(
                    format!(
                        "--{long}={}",
                        flag_value(other).with_context(|| format!("config key {key:?}"))?
                    )
                    .into(),
                ),
            }
        }
    }
    Ok(out)
}

fn load(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("config file {} is not valid TOML", path.display()))
}

fn leaf_command(root: &Command, matches: &ArgMatches) -> Command {
    let mut cmd = root.clone();
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        cmd = cmd.find_subcommand(name).expect("parsed subcommand exists").clone();
        m = sub;
    }
    cmd
}

fn subcommand_names(root: &Command) -> Vec<&str> {
    let mut names = Vec::new();
    for sub in root.get_subcommands() {
        names.push(sub.get_name());
        names.extend(sub.get_subcommands().map(Command::get_name));
    }
    names
}

fn known_anywhere(cmd: &Command, long: &str) -> bool {
    cmd.get_arguments().any(|a| a.get_long() == Some(long)) || cmd.get_subcommands().any(|s| known_anywhere(s, long))
}

fn flag_value(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Array(items) => items.iter().map(flag_value).collect::<Result<Vec<_>>>()?.join(","),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Datetime(_) | toml::Value::Table(_) => bail!("unsupported value type"),
    })
}
