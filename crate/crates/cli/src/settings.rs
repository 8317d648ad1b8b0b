//! Config-file plus flag resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rpp_core::io::{format_config, read_config, write_text};

use crate::error::{CliError, CliResult};

/// Keys from the config file, overridden by flags that were given.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> CliResult<Self> {
        let values = match config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            values,
            used: BTreeMap::new(),
        })
    }

    pub fn set(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    fn record(&mut self, key: &str, value: String) {
        self.used.insert(key.to_string(), value);
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match self.values.get(key) {
            Some(raw) => parse(key, raw)?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.values.get(key).cloned() {
            Some(raw) => {
                let v: T = parse(key, &raw)?;
                self.record(key, v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn required<T>(&mut self, key: &str) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.optional(key)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn path(&mut self, key: &str) -> CliResult<PathBuf> {
        self.required::<String>(key).map(PathBuf::from)
    }

    pub fn list<T>(&mut self, key: &str, default: &str) -> CliResult<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        let out = raw
            .split(',')
            .map(|s| parse(key, s.trim()))
            .collect::<CliResult<Vec<T>>>()?;
        self.record(key, raw);
        Ok(out)
    }

    /// Prints the settings that were read and writes them to `run.cfg`.
    pub fn echo(&self, command: &str, out: &Path) -> CliResult<()> {
        println!("rpp {command}");
        for (k, v) in &self.used {
            println!("  {k} = {v}");
        }
        let mut all = self.used.clone();
        all.insert("command".into(), command.into());
        write_text(&out.join("run.cfg"), &format_config(&all))?;
        Ok(())
    }
}

fn parse<T>(key: &str, raw: &str) -> CliResult<T>
where
    T: FromStr,
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| CliError::Usage(format!("setting `{key}` = `{raw}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("a.cfg");
        std::fs::write(&p, "seed = 4\nentities=10\n").unwrap();
        let mut s = Settings::load(Some(&p)).unwrap();
        s.set("seed", Some(9u64));
        s.set("entities", None::<u64>);
        assert_eq!(s.get::<u64>("seed", 0).unwrap(), 9);
        assert_eq!(s.get::<usize>("entities", 1).unwrap(), 10);
        assert_eq!(s.get::<f64>("years", 20.0).unwrap(), 20.0);
        assert_eq!(s.list::<u32>("Y", "1,2,4").unwrap(), vec![1, 2, 4]);
        assert!(s.required::<f64>("t_end").is_err());
        s.set("bad", Some("x"));
        assert!(s.get::<f64>("bad", 0.0).is_err());
    }
}
