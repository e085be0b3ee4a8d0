//! Plain-text `key = value` config files. Each key is a long flag name of
//! the chosen subcommand; the pairs are spliced into the argument list
//! ahead of the command-line flags, so flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

/// Parses config text into `--key=value` arguments. Blank lines and lines
/// starting with `#` are skipped; `key = true` becomes a bare `--key` and
/// `key = false` is dropped.
pub fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", n + 1));
        };
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(format!("line {}: invalid key {key:?}", n + 1));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    Ok(out)
}

/// Value of `--config` in `args`, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Inserts the config-file arguments right after the subcommand name, the
/// first argument that is neither a flag nor the value of `--config`.
pub fn splice(args: Vec<OsString>, extra: Vec<String>) -> Vec<OsString> {
    let mut pos = None;
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            pos = Some(i + 1);
            break;
        }
        i += 1;
    }
    let Some(pos) = pos else { return args };
    let mut out = args;
    let tail = out.split_off(pos);
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(tail);
    out
}

/// Reads the config named by `--config`, if any, and splices it into `args`.
pub fn apply(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let extra = parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(splice(args, extra))
}
