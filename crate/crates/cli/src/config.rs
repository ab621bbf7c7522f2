//! Flat `key=value` run configuration.
//!
//! Values are resolved in order: built-in defaults, then the `--config`
//! file, then command-line flags. The resolved set is written next to the
//! run's outputs and can be fed back through `--config`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::failure::Failure;

#[derive(Debug, Clone)]
pub struct Config {
    command: &'static str,
    values: BTreeMap<String, String>,
}

/// Parse `key=value` lines; `#` starts a comment line.
fn parse_text(text: &str, origin: &Path) -> Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::usage(format!("{}:{}: expected key=value", origin.display(), n + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Config {
    pub fn resolve(
        command: &'static str,
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        flags: Vec<(&str, Option<String>)>,
    ) -> Result<Self, Failure> {
        let mut values: BTreeMap<String, String> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            for (k, v) in parse_text(&text, path)? {
                if !values.contains_key(&k) {
                    return Err(Failure::usage(format!(
                        "{}: unknown key `{k}` for `{command}`",
                        path.display()
                    )));
                }
                values.insert(k, v);
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                debug_assert!(values.contains_key(k), "flag {k} missing from defaults");
                values.insert(k.to_string(), v);
            }
        }
        Ok(Config { command, values })
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn bad(&self, key: &str, what: &str) -> Failure {
        Failure::usage(format!("`{key}`: expected {what}, got `{}`", self.str(key)))
    }

    pub fn required(&self, key: &str) -> Result<&str, Failure> {
        match self.str(key) {
            "" => Err(Failure::usage(format!("`{}` needs `{key}`", self.command))),
            v => Ok(v),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.required(key).map(PathBuf::from)
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        Some(self.str(key)).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    pub fn usize(&self, key: &str) -> Result<usize, Failure> {
        self.str(key).parse().map_err(|_| self.bad(key, "a nonnegative integer"))
    }

    pub fn u64(&self, key: &str) -> Result<u64, Failure> {
        self.str(key).parse().map_err(|_| self.bad(key, "a nonnegative integer"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, Failure> {
        self.str(key)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.bad(key, "a number"))
    }

    pub fn bool(&self, key: &str) -> Result<bool, Failure> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad(key, "true or false")),
        }
    }

    /// Comma-separated numbers, or `default` for the given list.
    pub fn f64_list(&self, key: &str, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>, Failure> {
        let s = self.str(key);
        if s == "default" {
            return Ok(default());
        }
        let v: Option<Vec<f64>> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        v.filter(|v| !v.is_empty())
            .ok_or_else(|| self.bad(key, "a comma-separated list of numbers"))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, Failure> {
        let v: Option<Vec<usize>> = self.str(key).split(',').map(|t| t.trim().parse().ok()).collect();
        v.filter(|v| !v.is_empty())
            .ok_or_else(|| self.bad(key, "a comma-separated list of integers"))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# rcf {}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    /// Write `<dir>/<command>.config`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, Failure> {
        let path = dir.join(format!("{}.config", self.command));
        std::fs::write(&path, self.to_text())
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("a.config");
        std::fs::write(&file, "# c\nk = 5\n\nname=x\n").unwrap();
        let c = Config::resolve(
            "t",
            &[("k", "1"), ("name", ""), ("grid", "default")],
            Some(&file),
            vec![("name", Some("y".into())), ("k", None)],
        )
        .unwrap();
        assert_eq!(c.usize("k").unwrap(), 5);
        assert_eq!(c.str("name"), "y");
        assert_eq!(c.f64_list("grid", || vec![2.0]).unwrap(), vec![2.0]);
        let written = c.write(dir.path()).unwrap();
        let again = Config::resolve("t", &[("k", "1"), ("name", ""), ("grid", "default")], Some(&written), vec![]).unwrap();
        assert_eq!(again.to_text(), c.to_text());

        std::fs::write(&file, "zzz=1\n").unwrap();
        assert_eq!(Config::resolve("t", &[("k", "1")], Some(&file), vec![]).unwrap_err().code, 2);
        std::fs::write(&file, "nonsense\n").unwrap();
        assert_eq!(Config::resolve("t", &[("k", "1")], Some(&file), vec![]).unwrap_err().code, 2);
    }

    #[test]
    fn typed_errors() {
        let c = Config::resolve("t", &[("a", "x"), ("b", ""), ("l", "1,2,z")], None, vec![]).unwrap();
        assert!(c.usize("a").is_err());
        assert!(c.path("b").is_err());
        assert!(c.f64_list("l", Vec::new).is_err());
        assert!(c.bool("a").is_err());
    }
}
