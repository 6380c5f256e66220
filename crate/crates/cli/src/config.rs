//! `--config FILE`: a JSON object whose keys are long flag names. Its
//! entries become flags placed right after the subcommand, so anything
//! given on the command line overrides them.

use std::ffi::OsString;
use std::fs;

use serde_json::Value;

use crate::args::SUBCOMMANDS;
use crate::output::CliError;

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
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

/// Flag tokens for one JSON object.
pub fn config_tokens(value: &Value) -> Result<Vec<String>, CliError> {
    let Value::Object(map) = value else {
        return Err(CliError::Usage("config file must hold a JSON object".into()));
    };
    let mut tokens = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        let scalar = |v: &Value| -> Result<String, CliError> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                Value::Bool(b) => Ok(b.to_string()),
                _ => Err(CliError::Usage(format!("config key {key:?}: unsupported value {v}"))),
            }
        };
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => tokens.push(flag),
            Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
                tokens.push(format!("{flag}={joined}"));
            }
            other => tokens.push(format!("{flag}={}", scalar(other)?)),
        }
    }
    Ok(tokens)
}

pub fn merge_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.to_string_lossy())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.to_string_lossy())))?;
    let tokens = config_tokens(&value)?;
    // Without a subcommand clap reports the usage error itself.
    if let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) {
        argv.splice(pos + 1..pos + 1, tokens.into_iter().map(OsString::from));
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_become_flags() {
        let tokens = config_tokens(&json!({
            "hidden": 8,
            "seeds": [1, 2],
            "whole_log": true,
            "compare-scratch": false,
            "encoder": "one-hot",
        }))
        .unwrap();
        assert_eq!(tokens, ["--encoder=one-hot", "--hidden=8", "--seeds=1,2", "--whole-log"]);
    }

    #[test]
    fn tokens_follow_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"hidden": 4}"#).unwrap();
        let argv: Vec<OsString> = ["procxfer", "--config", path.to_str().unwrap(), "train", "--hidden", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = merge_config(argv).unwrap();
        let merged: Vec<String> = merged.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(merged[3..], ["train", "--hidden=4", "--hidden", "9"]);
    }

    #[test]
    fn non_objects_are_rejected() {
        assert!(config_tokens(&json!([1, 2])).is_err());
        assert!(config_tokens(&json!({"seeds": [[1]]})).is_err());
    }
}
