//! `key=value` config files. Keys are the long flag names without dashes,
//! e.g. `omega=0.2` or `max-iter=500`; `#` starts a comment.

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, known: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key=value", i + 1))?;
            let k = k.trim().replace('_', "-");
            if !known.contains(&k.as_str()) {
                bail!("config line {}: unknown key `{k}`", i + 1);
            }
            values.insert(k, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path, known: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, known).with_context(|| format!("in {}", path.display()))
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("config key `{key}`: cannot parse `{raw}`: {e}")),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|e| anyhow!("config key `{key}`: cannot parse `{raw}`: {e}"))
            })
            .transpose()
    }
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| anyhow!("cannot parse `{s}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let c = ConfigFile::parse(
            "# comment\nomega = 0.5\nmax_iter=9\n",
            &["omega", "max-iter"],
        )
        .unwrap();
        assert_eq!(c.pick(None, "omega", 1.0).unwrap(), 0.5);
        assert_eq!(c.pick(Some(0.2), "omega", 1.0).unwrap(), 0.2);
        assert_eq!(c.pick(None, "max-iter", 1usize).unwrap(), 9);
        assert_eq!(c.pick_opt::<usize>(None, "missing").unwrap_or(None), None);
    }

    #[test]
    fn bad_lines_rejected() {
        assert!(ConfigFile::parse("omega 0.5", &["omega"]).is_err());
        assert!(ConfigFile::parse("speed=3", &["omega"]).is_err());
        let c = ConfigFile::parse("omega=fast", &["omega"]).unwrap();
        assert!(c.pick(None, "omega", 1.0f64).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("1e-8, 1.0").unwrap(), vec![1e-8, 1.0]);
        assert!(parse_list::<f64>("x").is_err());
    }
}
