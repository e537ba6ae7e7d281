//! Flat key-value configuration files, merged with command-line flags.
//!
//! A file holds `key = value` lines. Keys before the first `[section]`
//! header apply to every command; keys under `[sweep]`, `[propagate]`, ...
//! apply to that command only and win over the global ones. Keys are the
//! long flag names (`rel-tol` and `rel_tol` are the same key). `#` and `;`
//! start comments.
//!
//! A run manifest (`*.json`) is accepted as well: its `config` object is
//! read as the section of the command it records, so a run can be repeated
//! from its own manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key any command understands.
pub const KNOWN_KEYS: &[&str] = &[
    "a",
    "L",
    "gamma",
    "site",
    "samples",
    "initial",
    "frame",
    "rel-tol",
    "abs-tol",
    "max-step",
    "L-min",
    "L-max",
    "L-count",
    "gamma-min",
    "gamma-max",
    "gamma-count",
    "record-pnonad",
    "record-norms",
    "max-points",
    "threads",
    "checkpoint-dir",
    "resume",
    "boundary",
    "method",
    "pnonad",
    "measure-gamma",
    "n-range",
    "probe-z",
];

/// `rel_tol`, `REL-TOL` and `rel-tol` all name the same key; `l` and
/// `length` are `L`.
pub fn canonical_key(raw: &str) -> String {
    let k = raw.trim().replace('_', "-");
    let lower = k.to_ascii_lowercase();
    match lower.as_str() {
        "l" | "length" => "L".into(),
        "l-min" | "length-min" => "L-min".into(),
        "l-max" | "length-max" => "L-max".into(),
        "l-count" | "length-count" => "L-count".into(),
        _ => lower,
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    pub global: BTreeMap<String, String>,
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = ConfigFile::default();
        let mut section: Option<String> = None;
        for (no, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {}: unterminated section header", no + 1))?;
                section = Some(name.trim().to_ascii_lowercase());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", no + 1))?;
            let key = canonical_key(key);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key '{key}'", no + 1);
            }
            let target = match &section {
                Some(s) => file.sections.entry(s.clone()).or_default(),
                None => &mut file.global,
            };
            if target.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("line {}: duplicate key '{key}'", no + 1);
            }
        }
        Ok(file)
    }

    /// The `config` object of a run manifest, as the section of its command.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).context("manifest is not valid JSON")?;
        let command = v
            .get("command")
            .and_then(|c| c.as_str())
            .ok_or_else(|| anyhow!("manifest has no 'command'"))?;
        let config = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| anyhow!("manifest has no 'config' object"))?;
        let mut section = BTreeMap::new();
        for (k, val) in config {
            let key = canonical_key(k);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("manifest config has unknown key '{key}'");
            }
            let s = match val {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            section.insert(key, s);
        }
        let mut file = ConfigFile::default();
        file.sections.insert(command.to_string(), section);
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_manifest(&text)
        } else {
            Self::parse(&text)
        };
        parsed.with_context(|| format!("in {}", path.display()))
    }
}

/// `Display` text, except that long plain decimals such as `0.000000001`
/// switch to the (equally exact) exponent form.
fn echo_string<T: Display>(v: &T) -> String {
    let s = v.to_string();
    if s.len() > 12 {
        if let Ok(x) = s.parse::<f64>() {
            let e = format!("{x:e}");
            if e.len() < s.len() {
                return e;
            }
        }
    }
    s
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Resolves each setting as flag, then file, then default, and records the
/// outcome for the manifest.
#[derive(Debug)]
pub struct Resolver {
    command: String,
    values: BTreeMap<String, String>,
    section_keys: BTreeSet<String>,
    used: BTreeSet<String>,
    echo: BTreeMap<String, String>,
    pub source: Option<PathBuf>,
}

impl Resolver {
    pub fn new(command: &str, file: Option<ConfigFile>, source: Option<PathBuf>) -> Resolver {
        let file = file.unwrap_or_default();
        let mut values = file.global;
        let mut section_keys = BTreeSet::new();
        if let Some(section) = file.sections.get(command) {
            for (k, v) in section {
                section_keys.insert(k.clone());
                values.insert(k.clone(), v.clone());
            }
        }
        Resolver {
            command: command.into(),
            values,
            section_keys,
            used: BTreeSet::new(),
            echo: BTreeMap::new(),
            source,
        }
    }

    pub fn load(command: &str, path: Option<&Path>) -> Result<Resolver> {
        let file = path.map(ConfigFile::load).transpose()?;
        Ok(Resolver::new(command, file, path.map(Path::to_path_buf)))
    }

    fn from_file<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("config key '{key}' = '{raw}': {e}")),
            None => Ok(None),
        }
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let file = self.from_file::<T>(key)?;
        let v = flag.or(file);
        if let Some(v) = &v {
            self.echo.insert(key.to_string(), echo_string(v));
        }
        Ok(v)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.echo.insert(key.to_string(), echo_string(&v));
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| anyhow!("missing --{key} (give the flag or set '{key}' in the config file)"))
    }

    /// A switch: on if the flag is given or the file says `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool> {
        self.get(key, flag.then_some(true), false)
    }

    /// Fails on keys in this command's own section that it never asked for.
    pub fn finish(&self) -> Result<()> {
        let unused: Vec<_> = self.section_keys.difference(&self.used).cloned().collect();
        if !unused.is_empty() {
            bail!("[{}] section sets keys this command does not use: {}", self.command, unused.join(", "));
        }
        Ok(())
    }

    /// Resolved settings, as strings that parse back to the same values.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.echo
    }
}

/// Comma-separated numbers, e.g. `5,8`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{}': {e}", x.trim())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("empty list".into());
        }
        Ok(FloatList(v))
    }
}

impl Display for FloatList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Inclusive integer range written `lo..hi` (also `lo:hi` or a single `n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntRange(pub i64, pub i64);

impl FromStr for IntRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let parse = |x: &str| x.trim().parse::<i64>().map_err(|e| format!("'{}': {e}", x.trim()));
        let (lo, hi) = if let Some((lo, hi)) = s.split_once("..") {
            (parse(lo)?, parse(hi.trim_start_matches('='))?)
        } else if let Some((lo, hi)) = s.split_once(':') {
            (parse(lo)?, parse(hi)?)
        } else {
            let n = parse(s)?;
            (n, n)
        };
        if lo > hi {
            return Err(format!("empty range {lo}..{hi}"));
        }
        Ok(IntRange(lo, hi))
    }
}

impl Display for IntRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.0, self.1)
    }
}

/// A complex number written `re,im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexArg(pub f64, pub f64);

impl FromStr for ComplexArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (re, im) = s.split_once(',').ok_or_else(|| format!("expected 're,im', got '{s}'"))?;
        let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{}': {e}", x.trim()));
        Ok(ComplexArg(p(re)?, p(im)?))
    }
}

impl Display for ComplexArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}
