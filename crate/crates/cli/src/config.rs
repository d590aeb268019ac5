//! `--config` files: `key = value` lines that preset flags.
//!
//! A key applies to every subcommand that has a flag of that name, or only
//! to one subcommand when written as `command.key`. Presets are spliced in
//! right after the subcommand name, so explicit flags override them.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::CommandFactory;

use embcache::{Error, Result};

use crate::args::Cli;

struct Entry {
    scope: Option<String>,
    key: String,
    value: String,
    line: usize,
}

fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let k = k.trim().replace('_', "-");
        let (scope, key) = match k.split_once('.') {
            Some((s, k)) => (Some(s.to_string()), k.to_string()),
            None => (None, k),
        };
        out.push(Entry {
            scope,
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Value of `--config` in raw arguments, if any.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Index of the subcommand token, skipping `--config` and its value.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Returns `args` with presets from the config file spliced in.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let (Some(path), Some(at)) = (config_path(&args), subcommand_index(&args)) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let entries = parse(&fs::read_to_string(path)?)?;
    let sub_name = args[at].to_string_lossy().into_owned();
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };

    let mut presets: Vec<OsString> = Vec::new();
    for e in entries {
        if e.scope.as_deref().is_some_and(|s| s != sub_name) {
            continue;
        }
        let arg = sub.get_arguments().find(|a| a.get_long() == Some(e.key.as_str()));
        let Some(arg) = arg else {
            if e.scope.is_some() {
                return Err(Error::Parse {
                    line: e.line,
                    msg: format!("`{sub_name}` has no flag --{}", e.key),
                });
            }
            continue;
        };
        if arg.get_action().takes_values() {
            presets.push(format!("--{}", e.key).into());
            presets.push(e.value.into());
        } else {
            match e.value.as_str() {
                "true" | "1" | "yes" => presets.push(format!("--{}", e.key).into()),
                "false" | "0" | "no" => {}
                v => {
                    return Err(Error::Parse {
                        line: e.line,
                        msg: format!("--{} is a switch; expected true or false, got {v:?}", e.key),
                    })
                }
            }
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(presets);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn finds_config_and_subcommand() {
        let a = os(&["bin", "--config", "c.txt", "sweep", "--trace", "t"]);
        assert_eq!(config_path(&a), Some("c.txt".into()));
        assert_eq!(subcommand_index(&a), Some(3));
        let b = os(&["bin", "gen", "--config=x"]);
        assert_eq!(config_path(&b), Some("x".into()));
        assert_eq!(subcommand_index(&b), Some(1));
    }

    #[test]
    fn scoped_and_plain_keys() {
        let e = parse("seed = 3\n# note\ntrain.init_seed=4\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].scope.as_deref(), e[0].key.as_str(), e[0].value.as_str()), (None, "seed", "3"));
        assert_eq!((e[1].scope.as_deref(), e[1].key.as_str()), (Some("train"), "init-seed"));
        assert!(parse("novalue\n").is_err());
    }

    #[test]
    fn presets_precede_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "seed = 3\nout = a.txt\ncapacity = 10%\n").unwrap();
        let a = os(&["bin", "--config", p.to_str().unwrap(), "gen", "--seed", "9"]);
        let got: Vec<String> = expand(a).unwrap().iter().map(|s| s.to_string_lossy().into_owned()).collect();
        let gen_at = got.iter().position(|s| s == "gen").unwrap();
        // capacity is not a gen flag and is skipped
        assert_eq!(&got[gen_at + 1..], &["--seed", "3", "--out", "a.txt", "--seed", "9"]);
    }

    #[test]
    fn scoped_unknown_key_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "gen.bogus = 1\n").unwrap();
        let a = os(&["bin", "--config", p.to_str().unwrap(), "gen", "--out", "x"]);
        assert!(matches!(expand(a), Err(Error::Parse { line: 1, .. })));
    }
}
