use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

pub const SCHEMA: &str = "parindex/1";

/// Output directory plus the provenance stamped on every file.
pub struct Out {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Out {
    pub fn new(dir: &Path, hash: String, seed: u64) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        Ok(Out { dir: dir.to_path_buf(), hash, seed })
    }

    pub fn stamp(&self, body: Value) -> Value {
        let mut m = Map::new();
        m.insert("schema".into(), json!(SCHEMA));
        m.insert("configHash".into(), json!(self.hash));
        m.insert("seed".into(), json!(self.seed));
        match body {
            Value::Object(o) => m.extend(o),
            other => {
                m.insert("data".into(), other);
            }
        }
        Value::Object(m)
    }

    pub fn json(&self, name: &str, body: Value) -> Result<PathBuf, String> {
        let mut text = serde_json::to_string_pretty(&self.stamp(body)).map_err(|e| e.to_string())?;
        text.push('\n');
        self.atomic(name, text.as_bytes())
    }

    /// RFC 4180 table plus a `<stem>.json` sidecar carrying the provenance.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>], sidecar: Value) -> Result<PathBuf, String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        let bytes = w.into_inner().map_err(|e| e.to_string())?;
        let path = self.atomic(name, &bytes)?;
        let stem = Path::new(name).with_extension("json");
        let mut side = json!({"table": name, "columns": header});
        if let (Value::Object(a), Value::Object(b)) = (&mut side, sidecar) {
            a.extend(b);
        }
        self.json(&stem.to_string_lossy(), side)?;
        Ok(path)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<PathBuf, String> {
        self.atomic(name, text.as_bytes())
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Write to a temporary sibling, then rename over the target.
    fn atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, String> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp{}", std::process::id()));
        let err = |e: std::io::Error| format!("{}: {e}", path.display());
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(err)?;
        Ok(path)
    }
}

/// Shortest round-trip text for a float; empty for NaN and None.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
