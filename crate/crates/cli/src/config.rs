//! `--config FILE`: `key = value` lines that stand in for flags.
//!
//! Keys are long flag names without the leading dashes (`kmax = 10`,
//! `text-weight = 0.8`). `true` turns a switch on, `false` leaves it off.
//! A flag given on the command line always wins over the file.

use std::ffi::OsString;
use std::path::Path;

use crate::failure::{Failure, EXIT_USAGE};

fn config_path(args: &[OsString]) -> Result<Option<OsString>, Failure> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned().map(Some).ok_or_else(|| Failure::new(EXIT_USAGE, "--config needs a file path"));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(p.into()));
        }
    }
    Ok(None)
}

pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::new(EXIT_USAGE, format!("{}:{}: expected `key = value`", path.display(), i + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Failure::new(EXIT_USAGE, format!("{}:{}: bad key {:?}", path.display(), i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// `args` with the config file's settings appended for every flag not
/// already present.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let path = Path::new(&path).to_path_buf();
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
    let given = |key: &str| {
        let flag = format!("--{key}");
        args.iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&format!("{flag}="))
        })
    };
    let mut extra = Vec::new();
    for (key, value) in parse_pairs(&text, &path)? {
        if given(&key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    let mut args = args;
    args.extend(extra);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "# seeds\nseed = 3\nkmax=4\nverbose = true\nquiet = false\n").unwrap();
        let args = os(&["commentary", "cluster", "--seed", "9", "--config", cfg.to_str().unwrap()]);
        let out = expand(args.clone()).unwrap();
        let mut want = args;
        want.extend(os(&["--kmax", "4", "--verbose"]));
        assert_eq!(out, want);
    }

    #[test]
    fn equals_form_counts_as_given() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c");
        std::fs::write(&cfg, "seed = 3\n").unwrap();
        let arg = format!("--config={}", cfg.display());
        let out = expand(os(&["x", "--seed=1", &arg])).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn malformed_line() {
        assert_eq!(parse_pairs("seed 3", Path::new("c")).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn no_config_is_identity() {
        let args = os(&["x", "synth"]);
        assert_eq!(expand(args.clone()).unwrap(), args);
    }
}
