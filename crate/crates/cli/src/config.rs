//! Flat `key = value` settings: built-in defaults, then a config file, then
//! command-line flags. The resolved set is written next to the outputs and
//! can be fed back through `--config` to reproduce a run.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sbm_deepwalk::{Error, Result};

/// Value meaning "derive from other settings".
pub const AUTO: &str = "auto";

#[derive(Debug, Clone)]
pub struct Settings {
    entries: Vec<(&'static str, Option<String>)>,
}

impl Settings {
    /// Keys in persistence order with their defaults; `None` marks a
    /// required key.
    pub fn new(spec: &[(&'static str, Option<&str>)]) -> Self {
        Settings {
            entries: spec
                .iter()
                .map(|(k, v)| (*k, v.map(str::to_string)))
                .collect(),
        }
    }

    fn slot(&mut self, key: &str) -> Result<&mut Option<String>> {
        self.entries
            .iter_mut()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::InvalidParams(format!("unknown setting `{key}`")))
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> Result<()> {
        *self.slot(key)? = Some(value.to_string());
        Ok(())
    }

    /// Apply an override if the flag was given.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v),
            None => Ok(()),
        }
    }

    pub fn load_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!(
                    "config line {}: expected `key = value`",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        self.load_str(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        let (_, value) = self
            .entries
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| Error::InvalidParams(format!("unknown setting `{key}`")))?;
        value.as_deref().ok_or_else(|| {
            Error::InvalidParams(format!(
                "missing required setting `{key}` (pass --{} or set it in --config)",
                key.replace('_', "-")
            ))
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|e| Error::Parse(format!("setting `{key}` = `{raw}`: {e}")))
    }

    /// `None` for [`AUTO`].
    pub fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        if self.raw(key)? == AUTO {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        parse_list(self.raw(key)?).map_err(|e| Error::Parse(format!("setting `{key}`: {e}")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            if let Some(v) = v {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Comma-separated values; integer ranges `a..b` (end exclusive) expand.
pub fn parse_list<T: FromStr>(raw: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
            let b: u64 = b.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
            for v in a..b {
                out.push(v.to_string().parse().map_err(|e| format!("`{v}`: {e}"))?);
            }
        } else {
            out.push(item.parse().map_err(|e| format!("`{item}`: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> Settings {
        Settings::new(&[("n", Some("600")), ("k", None), ("seeds", Some("0"))])
    }

    #[test]
    fn layering_and_rendering() {
        let mut s = spec();
        s.load_str("# comment\nk = 3\n\nn=100 # trailing\n")
            .unwrap();
        s.set_opt("n", Some(200)).unwrap();
        s.set_opt::<usize>("k", None).unwrap();
        assert_eq!(s.get::<usize>("n").unwrap(), 200);
        assert_eq!(s.get::<usize>("k").unwrap(), 3);
        assert_eq!(s.render(), "n = 200\nk = 3\nseeds = 0\n");
        let mut again = spec();
        again.load_str(&s.render()).unwrap();
        assert_eq!(again.render(), s.render());
    }

    #[test]
    fn errors() {
        let mut s = spec();
        assert!(matches!(s.get::<usize>("k"), Err(Error::InvalidParams(_))));
        assert!(matches!(
            s.load_str("bogus = 1"),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(s.load_str("n 5"), Err(Error::Parse(_))));
        s.set("n", "abc").unwrap();
        assert!(matches!(s.get::<usize>("n"), Err(Error::Parse(_))));
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<u64>("0..3, 7").unwrap(), vec![0, 1, 2, 7]);
        assert_eq!(parse_list::<f64>("0.5,1").unwrap(), vec![0.5, 1.0]);
        assert!(parse_list::<u64>("").is_err());
        assert!(parse_list::<u64>("a").is_err());
    }
}
