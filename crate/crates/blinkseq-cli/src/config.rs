//! `key=value` run configurations.
//!
//! Config files hold one `key=value` per line; a leading `#` is allowed so
//! that the header of any CSV this tool writes can be fed back as a config.
//! Lines starting with `#` without `=` are comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self { command: command.to_string(), values: BTreeMap::new() }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let commented = line.starts_with('#');
            let body = line.trim_start_matches('#').trim();
            match body.split_once('=') {
                Some((k, v)) => {
                    let (k, v) = (k.trim(), v.trim());
                    if k.is_empty() {
                        return Err(format!("config line {}: empty key", n + 1));
                    }
                    if k == "command" {
                        cfg.command = v.to_string();
                    } else if cfg.values.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(format!("config line {}: duplicate key {k:?}", n + 1));
                    }
                }
                None if commented || body.is_empty() => {}
                None => return Err(format!("config line {}: expected key=value, got {line:?}", n + 1)),
            }
        }
        Ok(cfg)
    }

    /// The config as `# key=value` lines, command first, keys sorted.
    pub fn to_header(&self) -> String {
        let mut out = format!("# command={}\n", self.command);
        for (k, v) in &self.values {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Reads `key`, recording `default` when absent so the emitted header
    /// spells out every value used.
    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, String>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.values.get(key) {
            Some(v) => v.parse().map_err(|e| format!("config key {key}={v:?}: {e}")),
            None => {
                self.set(key, &default);
                Ok(default)
            }
        }
    }

    pub fn required<T>(&self, key: &str) -> Result<T, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        let v = self.values.get(key).ok_or_else(|| format!("config key {key} is required"))?;
        v.parse().map_err(|e| format!("config key {key}={v:?}: {e}"))
    }

    /// Comma-separated list.
    pub fn list<T>(&mut self, key: &str, default: &str) -> Result<Vec<T>, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.values.entry(key.to_string()).or_insert_with(|| default.to_string()).clone();
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| format!("config key {key}: item {s:?}: {e}")))
            .collect()
    }

    pub fn check_command(&self, expected: &str) -> Result<(), String> {
        if !self.command.is_empty() && self.command != expected {
            return Err(format!("config is for command {:?}, not {expected:?}", self.command));
        }
        Ok(())
    }

    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), String> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(format!("unknown config key {k:?} (known: {})", known.join(", "))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips() {
        let mut c = RunConfig::new("simulate");
        c.set("p_b", "0.2,0.1");
        c.set("L", 8);
        c.set("seed", 12345u64);
        assert_eq!(RunConfig::parse(&c.to_header()).unwrap(), c);
    }

    #[test]
    fn comments_bare_lines_and_errors() {
        let c = RunConfig::parse("# a comment\n\nL = 8\n# trials=10\n").unwrap();
        assert_eq!(c.values["L"], "8");
        assert_eq!(c.values["trials"], "10");
        assert!(RunConfig::parse("L=8\nL=9\n").is_err());
        assert!(RunConfig::parse("just words\n").is_err());
        assert!(RunConfig::parse("=3\n").is_err());
    }

    #[test]
    fn defaults_are_recorded() {
        let mut c = RunConfig::new("x");
        assert_eq!(c.get("trials", 7u64).unwrap(), 7);
        assert_eq!(c.values["trials"], "7");
        assert_eq!(c.list::<f64>("p", "0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        c.set("bad", "x");
        assert!(c.get("bad", 1u32).is_err());
        assert!(c.reject_unknown(&["trials", "p"]).is_err());
    }
}
