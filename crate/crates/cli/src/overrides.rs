//! `--key.path value` overrides of RunConfig fields.
//!
//! Any long option that is not a declared flag is taken as an override, so a
//! mistyped flag surfaces as an unknown config key instead of being ignored.

use std::collections::HashSet;
use std::ffi::OsString;

use flowpat_core::{Error, Result};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub raw: String,
}

impl Override {
    pub fn key(&self) -> String {
        self.path.join(".")
    }

    /// Replaces the value at `path`, which must already exist in `root`.
    pub fn apply(&self, root: &mut Value) -> Result<()> {
        let unknown = || Error::Config(format!("unknown config key '{}'", self.key()));
        let mut node = root;
        for seg in &self.path {
            node = match node {
                Value::Object(map) => map.get_mut(seg).ok_or_else(unknown)?,
                Value::Array(items) => {
                    let i: usize = seg.parse().map_err(|_| unknown())?;
                    items.get_mut(i).ok_or_else(unknown)?
                }
                _ => return Err(unknown()),
            };
        }
        *node = coerce(node, &self.raw);
        Ok(())
    }
}

/// JSON when the text parses as JSON, except that string slots keep the raw
/// text unless it is an explicitly quoted string.
fn coerce(current: &Value, raw: &str) -> Value {
    match serde_json::from_str::<Value>(raw) {
        Ok(v @ Value::String(_)) => v,
        Ok(_) if current.is_string() => Value::String(raw.to_string()),
        Ok(v) => v,
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Splits `args` into the arguments clap should see and the overrides.
/// `known` holds the long flag names clap declares.
pub fn extract(args: Vec<OsString>, known: &HashSet<String>) -> Result<(Vec<OsString>, Vec<Override>)> {
    let mut kept = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(text) = arg.to_str() else {
            kept.push(arg);
            continue;
        };
        if text == "--" {
            kept.push(arg);
            kept.extend(iter);
            break;
        }
        let Some(body) = text.strip_prefix("--") else {
            kept.push(arg);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        if known.contains(name) {
            kept.push(arg);
            continue;
        }
        let raw = match inline {
            Some(v) => v,
            None => iter
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| Error::Config(format!("override --{name} needs a value")))?,
        };
        let path: Vec<String> = name.split('.').map(|s| s.replace('-', "_")).collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(Error::Config(format!("malformed override --{name}")));
        }
        overrides.push(Override { path, raw });
    }
    Ok((kept, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    fn known() -> HashSet<String> {
        ["out", "seed", "force"].into_iter().map(String::from).collect()
    }

    #[test]
    fn separates_flags_from_overrides() {
        let (kept, o) = extract(
            os(&["flowpat", "train", "--out", "d", "--models.train.epochs", "3", "--split.protocol=pattern_based", "--force"]),
            &known(),
        )
        .unwrap();
        assert_eq!(kept, os(&["flowpat", "train", "--out", "d", "--force"]));
        assert_eq!(o[0].key(), "models.train.epochs");
        assert_eq!(o[0].raw, "3");
        assert_eq!(o[1].key(), "split.protocol");
        assert_eq!(o[1].raw, "pattern_based");
    }

    #[test]
    fn dashes_map_to_underscores_and_missing_values_fail() {
        let (_, o) = extract(os(&["x", "--n-seeds", "2"]), &known()).unwrap();
        assert_eq!(o[0].key(), "n_seeds");
        assert!(extract(os(&["x", "--n_seeds"]), &known()).is_err());
    }

    #[test]
    fn apply_checks_paths_and_types() {
        let mut v = json!({"a": {"b": 1, "s": "x"}, "list": [1, 2]});
        let o = |k: &str, raw: &str| Override {
            path: k.split('.').map(String::from).collect(),
            raw: raw.into(),
        };
        o("a.b", "2.5").apply(&mut v).unwrap();
        o("a.s", "17").apply(&mut v).unwrap();
        o("list.1", "true").apply(&mut v).unwrap();
        assert_eq!(v, json!({"a": {"b": 2.5, "s": "17"}, "list": [1, true]}));
        assert!(o("a.c", "1").apply(&mut v).is_err());
        assert!(o("list.5", "1").apply(&mut v).is_err());
        assert!(o("a.b.c", "1").apply(&mut v).is_err());
    }
}
