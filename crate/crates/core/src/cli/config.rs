//! Flat dotted-key run configuration and the per-run manifest.
//!
//! Values resolve as command-line flag, then config file, then built-in
//! default. Every key is typed; unknown keys and ill-typed values are
//! configuration errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::bench::CostModelConfig;
use crate::error::{Error, Result};
use crate::model::checkpoint::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Str,
    Bool,
    IntList,
    FloatList,
}

/// Every accepted key, its type and its default (`None`: unset unless
/// given).
fn schema() -> Vec<(&'static str, Kind, Option<Value>)> {
    use serde_json::json;
    use Kind::*;
    let cost = CostModelConfig::default();
    vec![
        ("seed", Int, Some(json!(0))),
        ("out", Str, Some(json!("runs/latest"))),
        ("precision", Str, Some(json!("f32"))),
        ("quantize", Bool, Some(json!(false))),
        ("train.items", Int, None),
        ("train.epochs", Int, None),
        ("train.peak_lr", Float, None),
        ("train.pack_len", Int, None),
        ("train.warmup_fraction", Float, None),
        ("train.aux_loss_weight", Float, None),
        ("eval.trials", Int, Some(json!(40))),
        ("eval.frames", IntList, Some(json!([2, 4, 8, 16]))),
        ("eval.depths", FloatList, Some(json!([0.0, 0.25, 0.5, 0.75, 1.0]))),
        ("eval.shots", IntList, Some(json!([0, 1, 2, 4, 5]))),
        ("eval.relation", Str, Some(json!("same_shape"))),
        ("eval.video_len", Int, Some(json!(64))),
        ("eval.budgets", IntList, Some(json!([4, 8, 16, 32, 64]))),
        ("bench.ladder", IntList, Some(json!([128, 256, 512, 1024]))),
        ("bench.decode_tokens", Int, Some(json!(64))),
        ("bench.d_model", Int, Some(json!(16))),
        ("bench.warmups", Int, Some(json!(3))),
        ("bench.trials", Int, Some(json!(5))),
        ("bench.budgets", IntList, Some(json!([36, 144, 576]))),
        ("bench.images", Int, Some(json!(2))),
        ("cost.total_params", Float, Some(json!(cost.total_params))),
        ("cost.active_params", Float, Some(json!(cost.active_params))),
        ("cost.n_attn_layers", Int, Some(json!(cost.n_attn_layers))),
        ("cost.n_kv_heads", Int, Some(json!(cost.n_kv_heads))),
        ("cost.head_dim", Int, Some(json!(cost.head_dim))),
        ("cost.bytes_per_scalar", Int, Some(json!(cost.bytes_per_scalar))),
        ("cost.tokens_per_image", Int, Some(json!(cost.tokens_per_image))),
        ("cost.kappa", Int, Some(json!(cost.kappa))),
    ]
}

fn kind_of(key: &str) -> Option<Kind> {
    schema().into_iter().find(|(k, _, _)| *k == key).map(|(_, kind, _)| kind)
}

fn conforms(kind: Kind, v: &Value) -> bool {
    match kind {
        Kind::Int => v.as_u64().is_some(),
        Kind::Float => v.as_f64().is_some(),
        Kind::Str => v.is_string(),
        Kind::Bool => v.is_boolean(),
        Kind::IntList => v.as_array().is_some_and(|a| a.iter().all(|x| x.as_u64().is_some())),
        Kind::FloatList => v.as_array().is_some_and(|a| a.iter().all(|x| x.as_f64().is_some())),
    }
}

/// Parses a command-line string as a value of `kind`.
fn parse_flag(kind: Kind, raw: &str) -> Option<Value> {
    fn list(raw: &str) -> Vec<&str> {
        raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    }
    match kind {
        Kind::Int => raw.parse::<u64>().ok().map(Value::from),
        Kind::Float => raw.parse::<f64>().ok().map(Value::from),
        Kind::Str => Some(Value::from(raw)),
        Kind::Bool => raw.parse::<bool>().ok().map(Value::from),
        Kind::IntList => list(raw)
            .into_iter()
            .map(|s| s.parse::<u64>().ok().map(Value::from))
            .collect::<Option<Vec<_>>>()
            .map(Value::from),
        Kind::FloatList => list(raw)
            .into_iter()
            .map(|s| s.parse::<f64>().ok().map(Value::from))
            .collect::<Option<Vec<_>>>()
            .map(Value::from),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Default,
    File,
    Flag,
}

/// Resolved configuration.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Settings {
    values: BTreeMap<String, (Value, Origin)>,
}

impl Settings {
    /// Defaults overlaid with the `file` contents, then with `flags`
    /// (`key`, raw string) pairs.
    pub fn resolve(file: Option<&str>, flags: &[(String, String)]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, _, d) in schema() {
            if let Some(v) = d {
                values.insert(k.to_string(), (v, Origin::Default));
            }
        }
        let mut errs = Vec::new();
        if let Some(text) = file {
            match text.parse::<toml::Table>() {
                Ok(table) => {
                    let mut flat = Vec::new();
                    flatten("", &table, &mut flat);
                    for (k, v) in flat {
                        let json = serde_json::to_value(&v).map_err(Error::from)?;
                        match kind_of(&k) {
                            None => errs.push(format!("unknown key {k}")),
                            Some(kind) if !conforms(kind, &json) => errs.push(format!("key {k}: expected {kind:?}, got {v}")),
                            Some(_) => {
                                values.insert(k, (json, Origin::File));
                            }
                        }
                    }
                }
                Err(e) => errs.push(format!("config file: {}", e.message())),
            }
        }
        for (k, raw) in flags {
            match kind_of(k) {
                None => errs.push(format!("unknown key {k}")),
                Some(kind) => match parse_flag(kind, raw) {
                    Some(v) => {
                        values.insert(k.clone(), (v, Origin::Flag));
                    }
                    None => errs.push(format!("key {k}: cannot parse {raw:?} as {kind:?}")),
                },
            }
        }
        if errs.is_empty() {
            Ok(Self { values })
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub fn origin(&self, key: &str) -> Option<Origin> {
        self.values.get(key).map(|(_, o)| *o)
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key).map(|(v, _)| v)
    }

    pub fn usize(&self, key: &str) -> Option<usize> {
        self.get(key).and_then(Value::as_u64).map(|v| v as usize)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_f64)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(Value::as_bool)
    }

    pub fn usizes(&self, key: &str) -> Vec<usize> {
        self.get(key)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect())
            .unwrap_or_default()
    }

    pub fn f64s(&self, key: &str) -> Vec<f64> {
        self.get(key)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default()
    }

    pub fn seed(&self) -> u64 {
        self.get("seed").and_then(Value::as_u64).unwrap_or(0)
    }

    pub fn out(&self) -> PathBuf {
        PathBuf::from(self.str("out").unwrap_or("runs/latest"))
    }

    pub fn cost_model(&self) -> Result<CostModelConfig> {
        let d = CostModelConfig::default();
        let c = CostModelConfig {
            total_params: self.f64("cost.total_params").unwrap_or(d.total_params),
            active_params: self.f64("cost.active_params").unwrap_or(d.active_params),
            n_attn_layers: self.usize("cost.n_attn_layers").unwrap_or(d.n_attn_layers),
            n_kv_heads: self.usize("cost.n_kv_heads").unwrap_or(d.n_kv_heads),
            head_dim: self.usize("cost.head_dim").unwrap_or(d.head_dim),
            bytes_per_scalar: self.usize("cost.bytes_per_scalar").unwrap_or(d.bytes_per_scalar),
            tokens_per_image: self.usize("cost.tokens_per_image").unwrap_or(d.tokens_per_image),
            kappa: self.usize("cost.kappa").unwrap_or(d.kappa as usize) as u32,
        };
        c.validate()?;
        Ok(c)
    }

    /// `key = value` lines in key order.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.values
                .iter()
                .map(|(k, (v, o))| (k.clone(), serde_json::json!({ "value": v, "origin": o })))
                .collect(),
        )
    }
}

/// Record written beside every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: Value,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// SHA-256 over the canonical config and the input digests.
    pub content_hash: String,
}

impl Manifest {
    pub fn new(command: &str, settings: &Settings, inputs: &[&Path]) -> Result<Self> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            let bytes = std::fs::read(p).map_err(|e| Error::io(*p, e))?;
            digests.insert(p.display().to_string(), sha256_hex(&bytes));
        }
        let mut material = format!("command = {command}\n{}", settings.canonical());
        for (k, v) in &digests {
            material.push_str(&format!("input {k} = {v}\n"));
        }
        Ok(Self {
            command: command.into(),
            config: settings.to_json(),
            inputs: digests,
            outputs: Vec::new(),
            content_hash: sha256_hex(material.as_bytes()),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let file = "seed = 3\n[eval]\ntrials = 7\n";
        let s = Settings::resolve(Some(file), &[("seed".into(), "9".into())]).unwrap();
        assert_eq!(s.seed(), 9);
        assert_eq!(s.origin("seed"), Some(Origin::Flag));
        assert_eq!(s.usize("eval.trials"), Some(7));
        assert_eq!(s.origin("eval.trials"), Some(Origin::File));
        assert_eq!(s.usizes("bench.budgets"), vec![36, 144, 576]);
        assert_eq!(s.origin("bench.budgets"), Some(Origin::Default));
    }

    #[test]
    fn dotted_keys_and_lists() {
        let s = Settings::resolve(Some("train.peak_lr = 0.002\neval.depths = [0, 0.5]\n"), &[]).unwrap();
        assert_eq!(s.f64("train.peak_lr"), Some(0.002));
        assert_eq!(s.f64s("eval.depths"), vec![0.0, 0.5]);
        let s = Settings::resolve(None, &[("eval.frames".into(), "1, 2,3".into())]).unwrap();
        assert_eq!(s.usizes("eval.frames"), vec![1, 2, 3]);
    }

    #[test]
    fn bad_keys_and_types_are_config_errors() {
        match Settings::resolve(Some("nope = 1\nseed = \"x\"\n"), &[("eval.trials".into(), "-1".into())]) {
            Err(Error::InvalidConfig(e)) => assert_eq!(e.len(), 3),
            other => panic!("{other:?}"),
        }
        assert!(Settings::resolve(Some("seed = "), &[]).is_err());
    }

    #[test]
    fn manifest_hash_tracks_config() {
        let a = Settings::resolve(None, &[]).unwrap();
        let b = Settings::resolve(None, &[("seed".into(), "1".into())]).unwrap();
        let ha = Manifest::new("costmodel", &a, &[]).unwrap().content_hash;
        assert_eq!(ha, Manifest::new("costmodel", &a, &[]).unwrap().content_hash);
        assert_ne!(ha, Manifest::new("costmodel", &b, &[]).unwrap().content_hash);
    }
}
