//! Run manifests, artifact checksums and key=value config files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::storage::{read_text, write_text};

pub const RUN_MANIFEST_HEADER: &str = "# sla-grader run manifest v1";

/// Lower-case hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    Ok(out)
}

/// Everything needed to re-execute one CLI run and check its outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: Option<u64>,
    /// Arguments after the program name, verbatim.
    pub argv: Vec<String>,
    /// Fully resolved settings: flags over config file over defaults.
    pub config: Vec<(String, String)>,
    pub inputs: Vec<(PathBuf, String)>,
    pub outputs: Vec<(PathBuf, String)>,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{RUN_MANIFEST_HEADER}\n");
        let _ = writeln!(out, "subcommand\t{}", self.subcommand);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed\t{s}");
            }
            None => out.push_str("seed\t-\n"),
        }
        for a in &self.argv {
            let _ = writeln!(out, "argv\t{}", escape(a));
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config\t{}\t{}", escape(k), escape(v));
        }
        for (p, h) in &self.inputs {
            let _ = writeln!(out, "input\t{}\t{h}", escape(&p.to_string_lossy()));
        }
        for (p, h) in &self.outputs {
            let _ = writeln!(out, "output\t{}\t{h}", escape(&p.to_string_lossy()));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, RUN_MANIFEST_HEADER)) => {}
            _ => return Err(Error::parse(path, 1, format!("expected header {RUN_MANIFEST_HEADER:?}"))),
        }
        let mut m = RunManifest::default();
        for (i, line) in lines {
            let n = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            let pair = |fields: &[&str]| -> Result<(String, String)> {
                match fields {
                    [_, a, b] => Ok((unescape(a), unescape(b))),
                    _ => Err(Error::parse(path, n, format!("expected 3 fields, got {}", fields.len()))),
                }
            };
            match fields[0] {
                "subcommand" if fields.len() == 2 => m.subcommand = fields[1].to_string(),
                "seed" if fields.len() == 2 => {
                    m.seed = match fields[1] {
                        "-" => None,
                        s => Some(s.parse().map_err(|_| Error::parse(path, n, format!("bad seed {s:?}")))?),
                    }
                }
                "argv" if fields.len() == 2 => m.argv.push(unescape(fields[1])),
                "config" => m.config.push(pair(&fields)?),
                "input" => {
                    let (p, h) = pair(&fields)?;
                    m.inputs.push((p.into(), h));
                }
                "output" => {
                    let (p, h) = pair(&fields)?;
                    m.outputs.push((p.into(), h));
                }
                other => return Err(Error::parse(path, n, format!("unexpected line kind {other:?}"))),
            }
        }
        if m.subcommand.is_empty() {
            return Err(Error::parse(path, 1, "missing subcommand line"));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }
}

/// Resolves settings as flag, then config file, then default, and keeps
/// a record of every resolved value for the run manifest.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    /// Parses `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn from_config_text(text: &str, path: &Path) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key=value"))?;
            let key = k.trim().replace('_', "-");
            if file.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::parse(path, i + 1, format!("duplicate key {key:?}")));
            }
        }
        Ok(Settings { file, ..Settings::default() })
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::from_config_text(&read_text(path)?, path)
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.file.get(key).cloned();
        if from_file.is_some() {
            self.used.insert(key.to_string());
        }
        match (flag, from_file) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(s)) => s
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("config key {key}: invalid value {s:?}: {e}"))),
            (None, None) => Ok(None),
        }
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.push((key.to_string(), value));
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        self.record(key, v.as_ref().map_or_else(|| "-".to_string(), |v| v.to_string()));
        Ok(v)
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self
            .lookup(key, flag)?
            .ok_or_else(|| Error::Usage(format!("missing required option --{key}")))?;
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        let v: String = self.required(key, flag.map(|p| p.to_string_lossy().into_owned()))?;
        Ok(PathBuf::from(v))
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v: Option<String> = self.optional(key, flag.map(|p| p.to_string_lossy().into_owned()))?;
        Ok(v.map(PathBuf::from))
    }

    /// Errors on config keys that no setting consumed.
    pub fn finish(&self) -> Result<Vec<(String, String)>> {
        if let Some(k) = self.file.keys().find(|k| !self.used.contains(*k)) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        Ok(self.resolved.clone())
    }
}
