//! Run directories, config resolution and exit codes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use uqseg::tensor::{read_json, write_json};
use uqseg::Error;

pub const TOOL: &str = concat!("uqseg ", env!("CARGO_PKG_VERSION"));

/// Error carried to `main`, already classified by exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "missing-input".into(),
            message: message.into(),
        }
    }

    /// The single line printed on stderr.
    pub fn line(&self) -> String {
        let msg = self.message.replace(['\n', '\r'], " ");
        format!(
            "error: code={} kind={} message={}",
            self.code, self.kind, msg
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. }
            | Error::Format(_)
            | Error::Length { .. }
            | Error::Input(_)
            | Error::Manifest(_)
            | Error::Shape(_)
            | Error::Json(_) => 2,
            Error::Config(_) | Error::Parameter(_) => 3,
            Error::EmptyInput(_)
            | Error::DegenerateTask(_)
            | Error::InsufficientSamples { .. }
            | Error::Undefined(_)
            | Error::Training { .. } => 4,
        };
        Failure {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Reads the `--config` file, or the defaults when absent.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    if !path.exists() {
        return Err(Failure::missing(format!(
            "config file {} not found",
            path.display()
        )));
    }
    read_json(path).map_err(|e| match e {
        Error::Json(j) => Error::Config(format!("{}: {j}", path.display())).into(),
        other => other.into(),
    })
}

/// Overwrites `slot` when the flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

pub fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::missing(format!(
            "{what} {} not found",
            path.display()
        )))
    }
}

/// A fresh output directory. An existing `base` is never reused; the first
/// free `base-1`, `base-2`, ... is taken instead.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(base: &Path) -> CliResult<Self> {
        if let Some(parent) = base.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let name = base
            .file_name()
            .ok_or_else(|| Failure::usage(format!("bad output path {}", base.display())))?
            .to_string_lossy()
            .into_owned();
        for n in 0.. {
            let candidate = if n == 0 {
                base.to_path_buf()
            } else {
                base.with_file_name(format!("{name}-{n}"))
            };
            match fs::create_dir(&candidate) {
                Ok(()) => return Ok(RunDir { path: candidate }),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&candidate, e).into()),
            }
        }
        unreachable!()
    }

    pub fn join(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.path.join(rel);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write_config<T: Serialize>(&self, command: &str, config: &T) -> CliResult<()> {
        let doc = serde_json::json!({ "tool": TOOL, "command": command, "config": config });
        Ok(write_json(self.join("resolved-config.json"), &doc)?)
    }

    pub fn write_report<T: Serialize>(&self, command: &str, report: &T) -> CliResult<()> {
        let doc = serde_json::json!({ "tool": TOOL, "command": command, "report": report });
        Ok(write_json(self.join("report.json"), &doc)?)
    }

    pub fn write_text(&self, rel: &str, text: &str) -> CliResult<()> {
        let p = self.join(rel);
        Ok(fs::write(&p, text).map_err(|e| Error::io(&p, e))?)
    }
}
