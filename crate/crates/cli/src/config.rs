//! Config files hold one `key = value` pair per line. Keys are long flag
//! names without the leading dashes (`_` and `-` are interchangeable),
//! `#` starts a comment, and `true`/`false` switch boolean flags. Values
//! are inserted after the subcommand unless the same flag is already on
//! the command line.

use std::ffi::OsString;
use std::path::Path;

/// Parsed `(flag, value)` pairs in file order; `None` marks a bare switch.
pub fn parse_config(text: &str) -> Result<Vec<(String, Option<String>)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("config line {}: expected key = value", i + 1));
        };
        let key = k.trim().replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(format!("config line {}: bad key '{}'", i + 1, k.trim()));
        }
        if value.is_empty() {
            return Err(format!("config line {}: missing value for '{key}'", i + 1));
        }
        match value.as_str() {
            "true" => out.push((key, None)),
            "false" => {}
            _ => out.push((key, Some(value))),
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>, String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned().map(Some).ok_or_else(|| "--config needs a file".to_string());
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Ok(Some(rest.into()));
        }
    }
    Ok(None)
}

fn has_flag(args: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == long || s.starts_with(&eq)
    })
}

/// Returns `args` with the config file (if any) merged under the flags.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args)? else { return Ok(args) };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let pairs = parse_config(&text)?;
    if args.len() < 2 {
        return Err("a subcommand must precede the flags".into());
    }
    let mut out: Vec<OsString> = args[..2].to_vec();
    for (k, v) in pairs {
        if k == "config" || has_flag(&args, &k) {
            continue;
        }
        out.push(format!("--{k}").into());
        if let Some(v) = v {
            out.push(v.into());
        }
    }
    out.extend_from_slice(&args[2..]);
    Ok(out)
}
