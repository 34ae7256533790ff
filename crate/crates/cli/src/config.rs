//! `--config` files: one `key = value` per line, `#` starts a comment.
//! Keys are long option names of the chosen subcommand (with or without
//! the leading dashes, `_` and `-` interchangeable). `true` turns a flag
//! on and `false` leaves it off. The pairs are spliced in right after the
//! subcommand, so options given on the command line override them.

use clap::Parser;

use crate::args::Cli;

#[derive(Debug)]
pub enum ArgsError {
    Clap(clap::Error),
    Config(String),
}

/// Global options that take a value.
const GLOBAL_WITH_VALUE: [&str; 2] = ["--workers", "--config"];

pub fn parse_with_config(argv: &[String]) -> Result<Cli, ArgsError> {
    let Some(path) = config_path(argv) else {
        return Cli::try_parse_from(argv).map_err(ArgsError::Clap);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ArgsError::Config(format!("cannot read config {path}: {e}")))?;
    let extra = config_args(&text).map_err(|e| ArgsError::Config(format!("{path}: {e}")))?;
    let at = subcommand_end(argv);
    let mut merged = argv[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[at..]);
    Cli::try_parse_from(merged).map_err(ArgsError::Clap)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Index just past the subcommand (and the `eval` experiment name).
fn subcommand_end(argv: &[String]) -> usize {
    let mut i = 1;
    let mut names = 0;
    while i < argv.len() {
        let a = argv[i].as_str();
        if GLOBAL_WITH_VALUE.contains(&a) {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        names += 1;
        i += 1;
        if names == 2 || a != "eval" {
            break;
        }
    }
    i.min(argv.len())
}

pub fn config_args(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let key = key.trim().trim_start_matches('-').replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if ["config", "workers", "quiet"].contains(&key.as_str()) {
            return Err(format!(
                "line {}: {key} cannot be set from a config file",
                n + 1
            ));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_pairs() {
        let text = "# defaults\nl = 32\nchannels=power,ipc\ngadf_sin = true\npng = false\n";
        assert_eq!(
            config_args(text).unwrap(),
            ["--l", "32", "--channels", "power,ipc", "--gadf-sin"]
        );
        assert!(config_args("just words").is_err());
        assert!(config_args("workers = 4").is_err());
    }

    #[test]
    fn splice_point() {
        assert_eq!(subcommand_end(&argv("arcode synth --jobs 2")), 2);
        assert_eq!(
            subcommand_end(&argv("arcode --workers 2 eval sweep --l 8")),
            5
        );
        assert_eq!(
            subcommand_end(&argv("arcode -q --config c.txt train --out m")),
            5
        );
    }

    #[test]
    fn command_line_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        std::fs::write(&cfg, "jobs = 7\nseed = 3\nout = from_file\n").unwrap();
        let a = argv(&format!("arcode --config {} synth --jobs 9", cfg.display()));
        let cli = parse_with_config(&a).unwrap();
        let crate::args::Command::Synth(s) = cli.command else {
            panic!("expected synth")
        };
        assert_eq!((s.jobs, s.seed), (9, 3));
        assert_eq!(s.out, std::path::PathBuf::from("from_file"));
    }
}
