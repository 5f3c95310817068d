//! Run configuration: a TOML file with `[env]`, `[trainer]` and `[experiment]`
//! sections plus top-level `name`, `variant` and `seed`, adjusted by
//! `--override key=value`.
//!
//! `[env]` may name a `preset` (`desk`, `full_scale` or `qos`) whose values
//! fill every key not given explicitly. `desk` and `full_scale` still require
//! `n_subnetworks` and `n_channels`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use subnet_core::baselines::PolicyVariant;
use subnet_core::eval::{qos_config, ExperimentSpec, SweepKind};
use subnet_core::masac::TrainerConfig;
use subnet_core::simcore::EnvConfig;

use crate::error::{CliError, CliResult};

const SECTIONS: [&str; 3] = ["trainer", "env", "experiment"];
const TOP_LEVEL: [&str; 3] = ["name", "variant", "seed"];

/// Everything a command needs, after presets and overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub name: String,
    pub variant: Option<PolicyVariant>,
    pub seed: Option<u64>,
    pub env: EnvConfig,
    pub trainer: Option<TrainerConfig>,
    pub experiment: Option<ExperimentSpec>,
}

fn field_names(v: Value) -> Vec<String> {
    match v {
        Value::Object(m) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn known_fields(section: &str) -> Vec<String> {
    match section {
        "trainer" => field_names(serde_json::to_value(TrainerConfig::new(1)).expect("serialisable")),
        "env" => {
            let mut f = field_names(serde_json::to_value(EnvConfig::desk(1, 1)).expect("serialisable"));
            f.push("preset".into());
            f
        }
        "experiment" => field_names(
            serde_json::to_value(ExperimentSpec::new("x", SweepKind::None, vec![], vec![], 1, vec![])).expect("serialisable"),
        ),
        _ => Vec::new(),
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back to a bare string.
pub fn parse_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").and_then(|v| serde_json::to_value(v).ok()).unwrap_or(Value::Null),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn resolve_key(root: &Map<String, Value>, key: &str) -> CliResult<Vec<String>> {
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::validation(format!("malformed override key `{key}`")));
    }
    if key.contains('.') {
        return Ok(key.split('.').map(String::from).collect());
    }
    if TOP_LEVEL.contains(&key) {
        return Ok(vec![key.to_string()]);
    }
    // sections present in the file win over absent ones
    let present = SECTIONS.iter().filter(|s| root.contains_key(**s));
    let absent = SECTIONS.iter().filter(|s| !root.contains_key(**s));
    for section in present.chain(absent) {
        if known_fields(section).iter().any(|f| f == key) {
            return Ok(vec![section.to_string(), key.to_string()]);
        }
    }
    Err(CliError::validation(format!("override key `{key}` matches no configuration field")))
}

/// Applies `key=value` to the raw configuration tree.
pub fn apply_override(root: &mut Map<String, Value>, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override `{spec}` is not of the form key=value")))?;
    let path = resolve_key(root, key.trim())?;
    let mut node = root;
    for part in &path[..path.len() - 1] {
        let entry = node.entry(part.clone()).or_insert_with(|| Value::Object(Map::new()));
        node = entry
            .as_object_mut()
            .ok_or_else(|| CliError::validation(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(path[path.len() - 1].clone(), parse_value(raw.trim()));
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn resolve_env(mut table: Map<String, Value>) -> Result<EnvConfig, String> {
    let preset = table.remove("preset");
    let mut base = match preset.as_ref().map(|p| p.as_str().ok_or("preset must be a string")).transpose()? {
        None => Value::Object(Map::new()),
        Some("qos") => serde_json::to_value(qos_config()).expect("serialisable"),
        Some(p @ ("desk" | "full_scale")) => {
            let cfg = if p == "desk" { EnvConfig::desk(1, 1) } else { EnvConfig::full_scale(1, 1) };
            let mut v = serde_json::to_value(cfg).expect("serialisable");
            let m = v.as_object_mut().expect("object");
            m.remove("n_subnetworks");
            m.remove("n_channels");
            v
        }
        Some(other) => return Err(format!("unknown preset `{other}` (expected desk, full_scale or qos)")),
    };
    merge(&mut base, Value::Object(table));
    serde_json::from_value(base).map_err(|e| e.to_string())
}

fn section<T: serde::de::DeserializeOwned>(root: &mut Map<String, Value>, name: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = root.remove(name)?;
    match serde_json::from_value(v) {
        Ok(t) => Some(t),
        Err(e) => {
            errs.push(format!("[{name}]: {e}"));
            None
        }
    }
}

/// Resolves a raw tree into typed sections, reporting every problem at once.
pub fn resolve(mut root: Map<String, Value>, default_name: &str) -> CliResult<ResolvedConfig> {
    let mut errs = Vec::new();
    for key in root.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) && !SECTIONS.contains(&key.as_str()) {
            errs.push(format!("unknown top-level key `{key}`"));
        }
    }
    let name = match root.remove("name") {
        None => default_name.to_string(),
        Some(Value::String(s)) if !s.is_empty() && !s.contains(['/', '\\']) => s,
        Some(_) => {
            errs.push("name must be a non-empty string without path separators".into());
            String::new()
        }
    };
    let variant = section::<PolicyVariant>(&mut root, "variant", &mut errs);
    let seed = section::<u64>(&mut root, "seed", &mut errs);
    let env = match root.remove("env") {
        None => {
            errs.push("missing section [env]".into());
            None
        }
        Some(Value::Object(t)) => match resolve_env(t) {
            Ok(e) => Some(e),
            Err(e) => {
                errs.push(format!("[env]: {e}"));
                None
            }
        },
        Some(_) => {
            errs.push("[env] must be a table".into());
            None
        }
    };
    let trainer: Option<TrainerConfig> = section(&mut root, "trainer", &mut errs);
    let experiment: Option<ExperimentSpec> = section(&mut root, "experiment", &mut errs);
    if let Some(e) = &env {
        if let Err(err) = e.validate() {
            errs.push(format!("[env]: {err}"));
        }
    }
    if let Some(t) = &trainer {
        if let Err(err) = t.validate() {
            errs.push(format!("[trainer]: {err}"));
        }
    }
    if let Some(x) = &experiment {
        if let Err(err) = x.validate() {
            errs.push(format!("[experiment]: {err}"));
        }
    }
    match env {
        Some(env) if errs.is_empty() => Ok(ResolvedConfig { name, variant, seed, env, trainer, experiment }),
        _ => Err(CliError::Validation(errs.join("\n"))),
    }
}

/// Reads, overrides and resolves a configuration file.
pub fn load(path: &Path, overrides: &[String]) -> CliResult<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut root = match serde_json::to_value(table) {
        Ok(Value::Object(m)) => m,
        _ => return Err(CliError::validation(format!("{}: not a table", path.display()))),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    resolve(root, &stem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(text: &str) -> Map<String, Value> {
        match serde_json::to_value(toml::from_str::<toml::Table>(text).unwrap()).unwrap() {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn values_parse_as_toml() {
        assert_eq!(parse_value("3"), Value::from(3));
        assert_eq!(parse_value("0.5"), Value::from(0.5));
        assert_eq!(parse_value("true"), Value::from(true));
        assert_eq!(parse_value("[1, 2]"), serde_json::json!([1, 2]));
        assert_eq!(parse_value("ganet_full"), Value::from("ganet_full"));
    }

    #[test]
    fn bare_keys_prefer_present_sections() {
        let mut root = tree("[env]\npreset='desk'\nn_subnetworks=2\nn_channels=2\n[trainer]\nepisodes=5\n");
        apply_override(&mut root, "episodes=1").unwrap();
        assert_eq!(root["trainer"]["episodes"], Value::from(1));
        apply_override(&mut root, "env.turn_probs.left=0.5").unwrap();
        assert_eq!(root["env"]["turn_probs"]["left"], Value::from(0.5));
        assert!(apply_override(&mut root, "nonsense=1").is_err());
        assert!(apply_override(&mut root, "episodes").is_err());
    }

    #[test]
    fn presets_fill_missing_keys() {
        let cfg = resolve(tree("[env]\npreset='desk'\nn_subnetworks=3\nn_channels=2\nepisode_ttis=7\n"), "x").unwrap();
        let mut want = EnvConfig::desk(3, 2);
        want.episode_ttis = 7;
        assert_eq!(cfg.env, want);
        assert_eq!(cfg.name, "x");
        let q = resolve(tree("[env]\npreset='qos'\n"), "x").unwrap();
        assert_eq!(q.env, qos_config());
    }

    #[test]
    fn every_problem_is_reported() {
        let err = resolve(tree("colour=1\n[env]\npreset='desk'\nn_channels=0\n[trainer]\ngamma=2.0\n"), "x").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("colour"), "{msg}");
        assert!(msg.contains("n_subnetworks"), "{msg}");
        assert!(msg.contains("episodes"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }
}
