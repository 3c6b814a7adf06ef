//! Run manifests: what was asked for, what was written, and how it went.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

/// SHA-256 of the compact JSON text of `config` with object keys sorted.
pub fn config_hash(config: &Value) -> String {
    let canonical = canonicalize(config);
    let text = serde_json::to_string(&canonical).expect("JSON values always serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, Value> = map.iter().map(|(k, v)| (k, canonicalize(v))).collect();
            Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        other => other.clone(),
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
    pub exit_code: Option<i32>,
    pub config: Value,
    pub outputs: Vec<OutputFile>,
    pub criteria: BTreeMap<String, bool>,
    #[serde(skip)]
    dir: PathBuf,
}

impl RunManifest {
    /// Creates `dir` and writes the manifest in its `running` state.
    pub fn begin(command: &str, config: Value, dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let manifest = Self {
            command: command.to_string(),
            config_hash: config_hash(&config),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            status: "running".into(),
            exit_code: None,
            config,
            outputs: Vec::new(),
            criteria: BTreeMap::new(),
            dir: dir.to_path_buf(),
        };
        manifest.store()?;
        Ok(manifest)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `contents` under the run directory and records it.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputFile {
            path: name.to_string(),
            bytes: contents.len() as u64,
            sha256: hex::encode(Sha256::digest(contents)),
        });
        Ok(path)
    }

    pub fn criterion(&mut self, name: &str, pass: bool) {
        self.criteria.insert(name.to_string(), pass);
    }

    pub fn finish(mut self, exit_code: i32) -> std::io::Result<()> {
        self.finished_unix = Some(unix_now());
        self.status = if exit_code == 0 { "completed".into() } else { "failed".into() };
        self.exit_code = Some(exit_code);
        self.store()
    }

    fn store(&self) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(self.dir.join(MANIFEST_NAME), text + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"delta": 0.6, "potential": {"kind": "zero"}, "velocities": [8, 16]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"velocities": [8, 16], "potential": {"kind": "zero"}, "delta": 0.6}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = json!({"delta": 0.61, "potential": {"kind": "zero"}, "velocities": [8, 16]});
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn hash_is_hex_sha256() {
        let h = config_hash(&json!({}));
        assert_eq!(h, "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a");
    }

    proptest! {
        #[test]
        fn hash_invariant_under_insertion_order(
            entries in proptest::collection::btree_map("[a-z]{1,6}", -1e6f64..1e6, 1..8),
            rotate in 0usize..8,
        ) {
            let pairs: Vec<(String, f64)> = entries.into_iter().collect();
            let mut shuffled = pairs.clone();
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let text = |p: &[(String, f64)]| {
                let body: Vec<String> = p.iter().map(|(k, v)| format!("\"{k}\": {v:?}")).collect();
                format!("{{\"outer\": {{{}}}, \"n\": 1}}", body.join(", "))
            };
            let a: Value = serde_json::from_str(&text(&pairs)).unwrap();
            let b: Value = serde_json::from_str(&text(&shuffled)).unwrap();
            prop_assert_eq!(config_hash(&a), config_hash(&b));
        }
    }

    #[test]
    fn manifest_lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut m = RunManifest::begin("simulate", json!({"a": 1}), &out).unwrap();
        let first: Value = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(first["status"], "running");
        m.write("x.csv", b"t\n0\n").unwrap();
        m.criterion("ok", true);
        m.finish(0).unwrap();
        let done: Value = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(done["status"], "completed");
        assert_eq!(done["outputs"][0]["path"], "x.csv");
        assert_eq!(done["outputs"][0]["bytes"], 4);
        assert_eq!(done["criteria"]["ok"], true);
    }
}
