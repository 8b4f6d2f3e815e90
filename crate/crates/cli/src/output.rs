use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dissprep::dynamics::VERSION;
use dissprep::io::PepsFile;
use dissprep::tensor::PepsSpec;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, OUTPUT_ROOT_ENV};

pub type CliResult<T> = Result<T, CliError>;

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{what} file {}: {e}", path.display())))
}

pub fn read_spec(path: &Path) -> CliResult<PepsSpec> {
    let f: PepsFile = read_json(path, "spec")?;
    Ok(f.into_spec()?)
}

pub fn spec_hash(spec: &PepsSpec) -> String {
    let bytes = serde_json::to_vec(&PepsFile::from(spec)).expect("spec serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct RunDir {
    pub path: PathBuf,
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    version: &'a str,
    command: &'a str,
    /// Seconds since the Unix epoch; the only field that differs between identical runs.
    timestamp: u64,
    config: &'a C,
    result: &'a R,
}

impl RunDir {
    pub fn create(out: Option<PathBuf>, command: &str) -> CliResult<Self> {
        let path = match out {
            Some(p) => p,
            None => {
                let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| "runs".into());
                root.join(command)
            }
        };
        std::fs::create_dir_all(&path).map_err(|e| CliError::Io(format!("output directory {}: {e}", path.display())))?;
        Ok(RunDir { path })
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        s.push('\n');
        self.write_text(name, &s)
    }

    /// Writes `config.json` and `result.json`.
    pub fn finish<C: Serialize, R: Serialize>(&self, command: &str, config: &C, result: &R) -> CliResult<()> {
        #[derive(Serialize)]
        struct Resolved<'a, C: Serialize> {
            version: &'a str,
            command: &'a str,
            config: &'a C,
        }
        self.write_json("config.json", &Resolved { version: VERSION, command, config })?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.write_json("result.json", &Envelope { version: VERSION, command, timestamp, config, result })
    }

    pub fn readme(&self, command: &str, files: &[(&str, &str)]) -> CliResult<()> {
        let mut s = format!("# {command} run\n\nProduced by {VERSION}.\n\n");
        s.push_str("- `config.json`: fully resolved configuration.\n");
        s.push_str("- `result.json`: `version`, `command`, `timestamp`, `config`, `result`.\n");
        for (name, doc) in files {
            s.push_str(&format!("- `{name}`: {doc}\n"));
        }
        self.write_text("README.md", &s)
    }
}
