//! `--config FILE` support. Each `key = value` line becomes `--key value`
//! placed right after the subcommand, so flags given on the command line
//! (which come later and override earlier occurrences) take precedence.

use std::path::Path;

use genretag::{Error, Result};

fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key=value, found `{line}`"),
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_owned());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` (or `--config=FILE`) from `argv` and splices the
/// file's settings in after the subcommand name.
pub fn merge_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            match it.next() {
                Some(p) => path = Some(p),
                None => return Err(Error::validation("--config needs a file argument")),
            }
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_owned());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(Path::new(&path), e))?;
    let extra = parse_config(&text)?;
    let Some(sub) = rest.iter().skip(1).position(|a| !a.starts_with('-')) else {
        return Ok(rest);
    };
    let at = sub + 2;
    rest.splice(at..at, extra);
    Ok(rest)
}
