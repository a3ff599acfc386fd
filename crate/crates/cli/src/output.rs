//! Failure classification and the run directory writer.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hann_core::Error;
use serde::Serialize;

use crate::{Format, GlobalOpts};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configs or input files. Exit 2.
    Usage(String),
    /// A check the command exists to perform came out negative. Exit 1.
    Check(String),
    /// The run itself failed. Exit 1.
    Runtime(String),
}

impl Failure {
    pub fn usage(m: impl Display) -> Self {
        Failure::Usage(m.to_string())
    }

    pub fn check(m: impl Display) -> Self {
        Failure::Check(m.to_string())
    }

    pub fn runtime(m: impl Display) -> Self {
        Failure::Runtime(m.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Check(_) | Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Check(m) | Failure::Runtime(m) => m,
        }
    }

    /// Errors describing the caller's inputs map to usage failures; the rest
    /// are failures of the run.
    pub fn from_core(context: &str, e: Error) -> Self {
        let m = format!("{context}: {e}");
        match e {
            Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::NonFinite(_)
            | Error::Overflow(_)
            | Error::BudgetExceeded(_)
            | Error::NotRealizable { .. }
            | Error::Corrupt(_)
            | Error::Shape(_)
            | Error::Parse { .. }
            | Error::LabelOutOfRange { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => Failure::Usage(m),
            _ => Failure::Runtime(m),
        }
    }
}

pub fn core<T>(context: &str, r: hann_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::from_core(context, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{what} {} is invalid: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    s.push('\n');
    Ok(s)
}

/// Output directory of one command invocation. Only the formats selected
/// on the command line are written; the resolved config is always written.
pub struct RunDir {
    path: PathBuf,
    formats: BTreeSet<Format>,
    timestamp: Option<String>,
}

impl RunDir {
    pub fn create(g: &GlobalOpts, command: &str) -> Result<Self, Failure> {
        let path = g.out.clone().unwrap_or_else(|| Path::new("hann-out").join(command));
        fs::create_dir_all(&path)
            .map_err(|e| Failure::usage(format!("cannot create run directory {}: {e}", path.display())))?;
        let formats = if g.format.is_empty() {
            [Format::Json, Format::Csv, Format::Svg].into_iter().collect()
        } else {
            g.format.iter().copied().collect()
        };
        let timestamp = (!g.deterministic).then(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            format!("unix:{secs}")
        });
        Ok(RunDir { path, formats, timestamp })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn timestamp(&self) -> Option<&str> {
        self.timestamp.as_deref()
    }

    pub fn write_always(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        let p = self.path.join(name);
        fs::write(&p, contents).map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display())))?;
        log::info!("wrote {}", p.display());
        Ok(())
    }

    pub fn write(&self, f: Format, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        if self.wants(f) {
            self.write_always(name, contents)?;
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        if self.wants(Format::Json) {
            self.write_always(name, to_json(value)?)?;
        }
        Ok(())
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<(), Failure> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(Failure::runtime)?;
        }
        let bytes = w.into_inner().map_err(Failure::runtime)?;
        self.write_always(name, bytes)
    }

    pub fn echo_config<T: Serialize>(&self, config: &T, command: &str) -> Result<(), Failure> {
        self.write_always("resolved_config.json", to_json(&crate::config::echo(config, command)?)?)
    }
}
