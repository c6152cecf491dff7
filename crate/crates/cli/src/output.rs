use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    version: &'static str,
    core_version: &'static str,
    config_hash: String,
    topology_sha256: String,
    seeds: &'a [u64],
    files: &'a [String],
    config: &'a C,
}

/// Writes `manifest.json` into `dir`. The config hash covers the full
/// argument set together with the topology file contents.
pub fn write_manifest<C: Serialize>(
    dir: &Path,
    config: &C,
    topology: &str,
    seeds: &[u64],
    files: &[String],
) -> Result<(), CliError> {
    let cfg = serde_json::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
    let mut hashed = cfg.into_bytes();
    hashed.push(0);
    hashed.extend_from_slice(topology.as_bytes());
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        core_version: mwum_net::VERSION,
        config_hash: sha256_hex(&hashed),
        topology_sha256: sha256_hex(topology.as_bytes()),
        seeds,
        files,
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&dir.join("manifest.json"), text + "\n")
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// CSV writer that keeps the file name for the manifest.
pub struct Table {
    pub name: String,
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(dir: &Path, name: &str, header: &[String]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).map_err(csv_err)?;
        Ok(Table { name: name.to_string(), path: dir.join(name), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(csv_err)
    }

    pub fn finish(self) -> Result<String, CliError> {
        let bytes = self.writer.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        write_file(&self.path, bytes)?;
        Ok(self.name)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(e.to_string())
}

pub fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn parse_item<T: std::str::FromStr>(s: &str, flag: &str) -> Result<T, CliError> {
    s.trim().parse().map_err(|_| CliError::Config(format!("--{flag}: cannot parse {s:?}")))
}

/// Comma-separated reals.
pub fn parse_reals(s: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s.split(',').filter(|x| !x.trim().is_empty()).map(|x| parse_item(x, flag)).collect::<Result<_, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Config(format!("--{flag}: values must be finite")));
    }
    Ok(v)
}

/// Comma-separated seeds; `a..b` expands to the half-open range.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|x| !x.trim().is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (u64, u64) = (parse_item(a, "seeds")?, parse_item(b, "seeds")?);
            if b <= a {
                return Err(CliError::Config(format!("--seeds: empty range {item:?}")));
            }
            out.extend(a..b);
        } else {
            out.push(parse_item(item, "seeds")?);
        }
    }
    Ok(out)
}

/// State vector of length `len` from a flag value, or `default` repeated.
pub fn state_vector(arg: Option<&String>, flag: &str, len: usize, default: f64) -> Result<Vec<f64>, CliError> {
    let Some(s) = arg else { return Ok(vec![default; len]) };
    let mut v = parse_reals(s, flag)?;
    if v.len() == 1 && len > 1 {
        v = vec![v[0]; len];
    }
    if v.len() != len {
        return Err(CliError::Config(format!("--{flag}: expected {len} values, got {}", v.len())));
    }
    if v.iter().any(|&x| x < 0.0) {
        return Err(CliError::Config(format!("--{flag}: values must be nonnegative")));
    }
    Ok(v)
}
