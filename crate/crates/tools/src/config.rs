//! Flat `key = value` run files.
//!
//! Keys are flag names without the leading dashes (`tau-prime` or
//! `tau_prime`). Blank lines and lines starting with `#` are ignored. The file
//! is spliced into the argument list ahead of the command-line flags, and a
//! flag given on the command line replaces the file's value.

use crate::error::{Error, Result};
use std::path::Path;

/// Switches: `key = true` becomes `--key`, `key = false` is dropped.
pub const SWITCHES: &[&str] = &["naive", "dates", "timing", "raw"];

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Config(format!("line {}: invalid key {key:?}", i + 1)));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn tokens(pairs: &[(String, String)], user: &[String]) -> Result<Vec<String>> {
    let given = |flag: &str| user.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    // k and tau are mutually exclusive; either one on the command line replaces both.
    let user_level = given("--k") || given("--tau");
    let mut out = Vec::new();
    for (key, value) in pairs {
        if user_level && (key == "k" || key == "tau") {
            continue;
        }
        if SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" | "1" | "yes" => out.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => return Err(Error::Config(format!("{key}: expected true or false, got {other:?}"))),
            }
        } else {
            out.push(format!("--{key}"));
            out.push(value.clone());
        }
    }
    Ok(out)
}

/// Expands `--config FILE` in `args` (program name first, then the command).
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].split_once('=') {
        Some((_, p)) => p.to_string(),
        None => args.get(pos + 1).cloned().ok_or_else(|| Error::Config("--config needs a path".into()))?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(Path::new(&path), e))?;
    let pairs = parse_config(&text)?;
    let mut user = args.clone();
    user.drain(pos..pos + if args[pos].contains('=') { 1 } else { 2 });
    let command = user.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 2).unwrap_or(user.len());
    let injected = tokens(&pairs, &user[command..])?;
    let mut out = user[..command].to_vec();
    out.extend(injected);
    out.extend_from_slice(&user[command..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let p = parse_config("# run\n k = 150\ntau_prime=0.999\n\nnaive = true\n").unwrap();
        assert_eq!(p, [("k".into(), "150".into()), ("tau-prime".into(), "0.999".into()), ("naive".into(), "true".into())]);
        assert!(parse_config("k 150").is_err());
    }

    #[test]
    fn file_values_precede_flags() {
        let pairs = parse_config("alpha = 0.1\nnaive = false\ntiming = true\ntau = 0.9\n").unwrap();
        assert_eq!(tokens(&pairs, &strings(&["--alpha", "0.2"])).unwrap(), strings(&["--alpha", "0.1", "--timing", "--tau", "0.9"]));
        assert_eq!(tokens(&pairs, &strings(&["--k", "10"])).unwrap(), strings(&["--alpha", "0.1", "--timing"]));
    }

    #[test]
    fn splices_after_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "k = 40\nalpha = 0.1\n").unwrap();
        let p = path.to_str().unwrap();
        let got = expand_args(strings(&["bin", "estimate", "--config", p, "--alpha", "0.2"])).unwrap();
        assert_eq!(got, strings(&["bin", "estimate", "--k", "40", "--alpha", "0.1", "--alpha", "0.2"]));
        let got = expand_args(strings(&["bin", &format!("--config={p}"), "test"])).unwrap();
        assert_eq!(got, strings(&["bin", "test", "--k", "40", "--alpha", "0.1"]));
    }
}
