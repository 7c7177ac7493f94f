//! Artifact rendering and all-or-nothing writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::{CliError, RunConfig, VERSION};

/// A named output file rendered in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn header(cfg: &RunConfig) -> String {
    format!("# tangle {VERSION} config-sha256={}\n", cfg.hash())
}

/// CSV with the version/hash comment line, then `columns`, then `rows`.
pub fn csv<R, I>(cfg: &RunConfig, name: &str, columns: &[&str], rows: I) -> Result<Artifact, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut bytes = header(cfg).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        let io = |e: csv::Error| CliError::Io { path: name.into(), source: e.into() };
        w.write_record(columns).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io { path: name.into(), source: e })?;
    }
    Ok(Artifact { name: name.into(), bytes })
}

/// JSON object with a leading `meta` entry and the fields of `body`.
pub fn json<T: Serialize>(cfg: &RunConfig, name: &str, body: &T) -> Result<Artifact, CliError> {
    let meta = json!({
        "tool": "tangle",
        "version": VERSION,
        "command": cfg.command.as_str(),
        "config_sha256": cfg.hash(),
    });
    let body = serde_json::to_value(body).map_err(|e| CliError::Numeric(format!("serialising {name}: {e}")))?;
    let doc = match body {
        Value::Object(mut m) => {
            m.insert("meta".into(), meta);
            Value::Object(m)
        }
        other => json!({ "meta": meta, "data": other }),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Numeric(e.to_string()))?;
    bytes.push(b'\n');
    Ok(Artifact { name: name.into(), bytes })
}

/// The effective configuration, re-runnable as a config file.
pub fn config_echo(cfg: &RunConfig) -> Artifact {
    let text = format!("{}{}", header(cfg), cfg.canonical_text());
    Artifact { name: format!("{}.config", cfg.command.stem()), bytes: text.into_bytes() }
}

/// Writes every artifact to a temporary file first and renames them into
/// place only when all writes succeeded.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for a in artifacts {
        let target = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp-{}", a.name, std::process::id()));
        let res = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(&a.bytes)?;
            f.sync_all()
        });
        staged.push((tmp.clone(), target));
        if let Err(e) = res {
            cleanup(&staged);
            return Err(io(&tmp)(e));
        }
    }
    for (i, (tmp, target)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged[i..]);
            return Err(io(target)(e));
        }
    }
    Ok(())
}

/// Shortest round-trip text of a float (byte-stable across runs).
pub fn num(x: f64) -> String {
    format!("{x}")
}
