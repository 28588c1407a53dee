//! Flat `key=value` run configuration.
//!
//! Values are resolved per key as command-line flag, then config file, then
//! built-in default. The resolved set is written as a `# key=value` header at
//! the top of every output file, and the same lines (with or without the
//! leading `# `) can be fed back through `--config`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Environment variable holding the remote scorer endpoint.
pub const ENDPOINT_ENV: &str = "BEE_SCORER_ENDPOINT";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        // an output file: its table and footer are not configuration
        let header_only = text.lines().map(str::trim).find(|l| !l.is_empty()).is_some_and(|l| l.starts_with('#'));
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if header_only && !line.starts_with('#') && !line.is_empty() && !line.contains('=') {
                break;
            }
            let line = line.strip_prefix('#').map(str::trim).unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                if raw.trim_start().starts_with('#') {
                    continue;
                }
                return Err(CliError::Config(format!(
                    "config line {}: expected key=value, got {raw:?}",
                    lineno + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// The values one command actually ran with, in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved<'a> {
    file: &'a ConfigFile,
    entries: Vec<(String, String)>,
}

impl<'a> Resolved<'a> {
    pub fn new(command: &str, file: &'a ConfigFile) -> Self {
        Self {
            file,
            entries: vec![("command".to_string(), command.to_string())],
        }
    }

    /// Resolves `key` from `flag`, the config file, or `default`, and records it.
    pub fn take<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(text) => text
                    .parse()
                    .map_err(|e| CliError::Config(format!("config key {key}={text:?}: {e}")))?,
                None => default,
            },
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Like [`take`](Self::take) for keys without a default.
    pub fn take_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self
                .file
                .get(key)
                .map(|text| {
                    text.parse()
                        .map_err(|e| CliError::Config(format!("config key {key}={text:?}: {e}")))
                })
                .transpose()?,
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    /// A value used by the run but not written to headers.
    pub fn secret(&self, key: &str, flag: Option<String>, env: Option<String>) -> Option<String> {
        flag.or(env).or_else(|| self.file.get(key).map(str::to_string))
    }

    pub fn record(&mut self, key: &str, value: &impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn header(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }
}

/// Comma-separated list of values.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// A context length that also accepts `e` for Euler's number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint(pub f64);

impl FromStr for GridPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("e") {
            return Ok(GridPoint(std::f64::consts::E));
        }
        s.parse::<f64>()
            .map(GridPoint)
            .map_err(|e| format!("{e} (expected a number or e)"))
    }
}

impl Display for GridPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 == std::f64::consts::E {
            f.write_str("e")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Clip threshold, or `none` to disable clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau(pub Option<f64>);

impl FromStr for Tau {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("off") {
            return Ok(Tau(None));
        }
        s.parse::<f64>().map(|t| Tau(Some(t))).map_err(|e| e.to_string())
    }
}

impl Display for Tau {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("none"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let file = ConfigFile::parse("# comment\nmu = 0.5\nseed=3\n\n").unwrap();
        let mut r = Resolved::new("x", &file);
        assert_eq!(r.take("mu", Some(1.0), 0.0).unwrap(), 1.0);
        assert_eq!(r.take("seed", None, 0u64).unwrap(), 3);
        assert_eq!(r.take("trials", None, 7usize).unwrap(), 7);
        assert_eq!(r.header(), "# command=x\n# mu=1\n# seed=3\n# trials=7\n");
    }

    #[test]
    fn header_reads_back_as_config() {
        let file = ConfigFile::parse("# command=x\n# mu=0.25\n# free text\n").unwrap();
        assert_eq!(file.get("mu"), Some("0.25"));
        let table = ConfigFile::parse("# mu=0.5\nn,mu\n16,0.5\n# final_loss=2\n").unwrap();
        assert_eq!(table.get("mu"), Some("0.5"));
        assert_eq!(table.get("final_loss"), None);
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(ConfigFile::parse("no equals sign").is_err());
        let file = ConfigFile::parse("mu=abc").unwrap();
        let mut r = Resolved::new("x", &file);
        assert!(matches!(r.take("mu", None, 0.0f64), Err(CliError::Config(_))));
    }

    #[test]
    fn grids() {
        let g: List<GridPoint> = "e, 16,64".parse().unwrap();
        assert_eq!(g.0[0].0, std::f64::consts::E);
        assert_eq!(g.to_string(), "e,16,64");
        assert!("1,x".parse::<List<usize>>().is_err());
        assert_eq!("none".parse::<Tau>().unwrap(), Tau(None));
        assert_eq!("5".parse::<Tau>().unwrap().to_string(), "5");
    }

    #[test]
    fn secrets_stay_out_of_the_header() {
        let file = ConfigFile::parse("endpoint=http://file").unwrap();
        let r = Resolved::new("score", &file);
        assert_eq!(r.secret("endpoint", None, Some("http://env".into())).as_deref(), Some("http://env"));
        assert_eq!(r.secret("endpoint", None, None).as_deref(), Some("http://file"));
        assert!(!r.header().contains("endpoint"));
    }
}
